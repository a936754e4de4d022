"""Compiled slot loop used by :mod:`aoisched.sim`.

It mirrors :func:`aoisched.core.advance_slot` for single-terminal decisions
and is checked against that reference trace-for-trace in the test suite.
Packets are stored as arrival slots in per-terminal ring buffers; a packet
born in slot ``b`` has end-of-slot age ``t - b + 1`` in slot ``t``.
"""

import numba as nb
import numpy as np

RR_ONE, UN_ONE, AGE_GREEDY, MYOPIC_GSI, RR_LAMBDA, FIXED_SEQUENCE = range(6)
NORMAL, A0, A1 = range(3)


@nb.njit(cache=True)
def run_block(policy, mode, one_packet, lam, rates, sequence, u, s,
              t0, warmup, aoi, since, qbuf, qhead, qlen, deficits,
              aoi_sum, hist, paoi_sum, paoi_cnt, delivered, stats, trace):
    k, n = u.shape
    cap = qbuf.shape[1]
    hcap = hist.shape[1]
    for step in range(k):
        t = t0 + step + 1

        # decision, from end-of-previous-slot observables
        choice = -1
        if policy == RR_ONE:
            best = -1
            for i in range(n):
                if since[i] > best:
                    best = since[i]
                    choice = i
        elif policy == UN_ONE:
            choice = min(int(s[step] * n), n - 1)
        elif policy == AGE_GREEDY:
            best = -1
            for i in range(n):
                if aoi[i] > best:
                    best = aoi[i]
                    choice = i
        elif policy == MYOPIC_GSI:
            bestg = -np.inf
            for i in range(n):
                if qlen[i] > 0:
                    a = t - qbuf[i, qhead[i]]
                    g = lam[i] * aoi[i] + (1.0 - lam[i]) * (aoi[i] - a)
                else:
                    g = lam[i] * aoi[i]
                if g > bestg:
                    bestg = g
                    choice = i
        elif policy == RR_LAMBDA:
            bestd = -np.inf
            for i in range(n):
                deficits[i] += rates[i]
                if deficits[i] > bestd:
                    bestd = deficits[i]
            # ties within rounding noise go to the smaller index
            for i in range(n):
                if deficits[i] >= bestd - 1e-9:
                    choice = i
                    break
            if bestd <= 1e-9:
                choice = -1
            else:
                deficits[choice] -= 1.0
        else:
            choice = sequence[(t - 1) % sequence.shape[0]]

        # arrivals
        for i in range(n):
            if u[step, i] < lam[i]:
                if one_packet:
                    qhead[i] = 0
                    qlen[i] = 1
                    qbuf[i, 0] = t
                else:
                    qbuf[i, (qhead[i] + qlen[i]) % cap] = t
                    qlen[i] += 1

        # transmission
        prev = -1
        birth = 0
        got = False
        if choice >= 0:
            prev = aoi[choice]
            if qlen[choice] > 0:
                birth = qbuf[choice, qhead[choice]]
                qhead[choice] = (qhead[choice] + 1) % cap
                qlen[choice] -= 1
                got = True
        for i in range(n):
            aoi[i] += 1
            since[i] += 1
        if choice >= 0:
            since[choice] = 0
            if mode == A0:
                aoi[choice] = 1
            elif got:
                aoi[choice] = t - birth + 1

        if trace.shape[0] > 0:
            total = 0.0
            for i in range(n):
                total += aoi[i]
            trace[step] = total / n
        if t > warmup:
            for i in range(n):
                aoi_sum[i] += aoi[i]
                j = aoi[i] - 1
                if j >= hcap:
                    j = hcap - 1
                hist[i, j] += 1
            if choice >= 0:
                if got:
                    delivered[choice] += 1
                    paoi_sum[choice] += prev
                    paoi_cnt[choice] += 1
                else:
                    stats[1] += 1
    return 0
