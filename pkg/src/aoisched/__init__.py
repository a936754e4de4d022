"""Age-of-information scheduling for terminals sharing a collision uplink."""

__version__ = "0.1.0"
