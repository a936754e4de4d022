"""Flat ``key = value`` configuration files.

One assignment per line; ``#`` starts a comment.  Lists are comma
separated.  Unknown keys are rejected, and each subcommand accepts only the
keys it uses.  :func:`dump` writes the canonical form, so a manifest can be
fed back in as a config file.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError


def _int(s):
    return int(s)


def _float(s):
    return float(s)


def _floats(s):
    return tuple(float(x) for x in s.split(",") if x.strip())


def _ints(s):
    return tuple(int(x) for x in s.split(",") if x.strip())


def _str(s):
    return s


@dataclass(frozen=True)
class Key:
    parse: object
    default: object = None
    help: str = ""


KEYS = {
    "n_terminals": Key(_int, None, "number of terminals; inferred from arrival_rates when omitted"),
    "arrival_rates": Key(_floats, None, "per-slot arrival probability per terminal"),
    "buffer": Key(_str, "one_packet", "one_packet or fcfs"),
    "horizon": Key(_int, 100_000, "slots per run"),
    "warmup": Key(_int, None, "slots discarded before measuring (default horizon // 10)"),
    "seed": Key(_int, 0, "master seed"),
    "mode": Key(_str, "normal", "normal, a0 or a1"),
    "policy": Key(_str, "rr_one", "scheduling policy"),
    "beta": Key(_floats, None, "rr_lambda service rates (solved from the rate allocation problem when omitted)"),
    "sequence": Key(_ints, None, "fixed_sequence order, 1-based terminal ids"),
    "replications": Key(_int, 5, "independent runs per point"),
    "h_max": Key(_int, 60, "initial AoI cap of the MDP state space"),
    "tolerance": Key(_float, None, "solver tolerance"),
    "j_max": Key(_int, None, "last AoI value listed in distribution output"),
    "sweep": Key(_floats, None, "x values of a figure sweep"),
    "fixed_rate": Key(_float, 0.5, "fig6: rate of terminal 2"),
    "epsilon": Key(_float, 0.1, "fig8: slack 1 - sum of rates"),
    "jobs": Key(_int, 1, "worker processes for sweep points"),
}

SUBCOMMAND_KEYS = {
    "simulate": {"n_terminals", "arrival_rates", "buffer", "horizon", "warmup", "seed", "mode",
                 "policy", "beta", "sequence", "replications"},
    "analyze": {"n_terminals", "arrival_rates", "j_max"},
    "solve-p2": {"n_terminals", "arrival_rates", "tolerance"},
    "mdp-optimal": {"n_terminals", "arrival_rates", "h_max", "tolerance"},
    "drr-demo": {"n_terminals", "arrival_rates", "horizon", "warmup", "seed"},
    "reproduce": {"horizon", "seed", "replications", "h_max", "sweep", "fixed_rate", "epsilon",
                  "jobs", "j_max", "arrival_rates", "n_terminals"},
}


def parse_text(text: str, source: str = "<config>") -> dict:
    """Raw ``{key: value-string}`` from config text."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def parse_overrides(items) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = (p.strip() for p in item.split("=", 1))
        out[key] = value
    return out


def resolve(raw: dict, subcommand: str) -> dict:
    """Check keys against the subcommand and convert values; missing keys get defaults."""
    allowed = SUBCOMMAND_KEYS[subcommand]
    unknown = sorted(k for k in raw if k not in allowed)
    if unknown:
        known = ", ".join(sorted(allowed))
        raise ConfigError(f"unknown key(s) for {subcommand}: {', '.join(unknown)} (accepted: {known})")
    out = {}
    for key in sorted(allowed):
        spec = KEYS[key]
        if key in raw:
            try:
                out[key] = spec.parse(raw[key])
            except ValueError:
                raise ConfigError(f"bad value for {key}: {raw[key]!r}") from None
        else:
            out[key] = spec.default
    rates = out.get("arrival_rates")
    if "n_terminals" in out and rates is not None:
        if out["n_terminals"] is None:
            out["n_terminals"] = len(rates)
        elif out["n_terminals"] != len(rates):
            raise ConfigError(f"n_terminals={out['n_terminals']} but {len(rates)} arrival rates given")
    return out


def format_value(value) -> str:
    if isinstance(value, (tuple, list)):
        return ",".join(format_value(v) for v in value)
    if isinstance(value, float):
        # shortest exact form, so a manifest reruns with the very same inputs
        return repr(value)
    return str(value)


def dump(values: dict) -> str:
    """Canonical text for the explicitly set (non-None) values, keys sorted."""
    lines = [f"{k} = {format_value(v)}" for k, v in sorted(values.items()) if v is not None]
    return "\n".join(lines) + "\n"


def load(path, overrides=None, subcommand: str = "simulate", seed=None) -> dict:
    raw = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = parse_text(fh.read(), source=str(path))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    raw.update(parse_overrides(overrides))
    if seed is not None and "seed" in SUBCOMMAND_KEYS[subcommand]:
        raw["seed"] = str(seed)
    return resolve(raw, subcommand)
