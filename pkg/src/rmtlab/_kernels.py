"""Compiled inner loops for the eigenvalue flows."""

import math

import numba
import numpy as np


@numba.njit(cache=True)
def _dbm_drift(x, beta, out):
    N = x.size
    for i in range(N):
        out[i] = 0.0
    for i in range(N):
        for j in range(i + 1, N):
            r = 1.0 / (x[i] - x[j])
            out[i] += r
            out[j] -= r
    c = 0.5 * beta / N
    for i in range(N):
        out[i] = c * out[i] - 0.25 * beta * x[i]


@numba.njit(cache=True)
def _relaxation_extra(x, beta, eta, gamma, lo_idx, hi_idx, slope, curv, w, out):
    # adds -(beta/2) W_i'(x_i) - (beta/2N) sum_far sgn/(|d| + eta)
    N = x.size
    for i in range(N):
        xi = x[i]
        lo = gamma[lo_idx[i]]
        hi = gamma[hi_idx[i]]
        if xi < lo:
            wd = slope[0, i] + curv[0, i] * (xi - lo)
        elif xi > hi:
            wd = slope[1, i] + curv[1, i] * (xi - hi)
        else:
            wd = 0.0
            for k in range(0, i - w + 1):
                wd -= 1.0 / (xi - gamma[k] + eta)
            for k in range(i + w, N):
                wd += 1.0 / (gamma[k] - xi + eta)
            wd /= N
        far = 0.0
        for k in range(N):
            if abs(k - i) >= w:
                d = xi - x[k]
                if d > 0:
                    far += 1.0 / (d + eta)
                elif d < 0:
                    far -= 1.0 / (eta - d)
        out[i] -= 0.5 * beta * (wd + far / N)


@numba.njit(cache=True)
def evolve(x, t, t_end, beta, dt_max, safety, rng, max_halvings, shrink, floor,
           mode, eta, gamma, lo_idx, hi_idx, slope, curv):
    """Adaptive Euler-Maruyama loop, in place on ``x``.

    Returns ``(t, status, min_gap)``; status 1 means the halvings ran out.
    """
    N = x.size
    w = int(math.ceil(N * eta - 1e-12)) if mode == 1 else 0
    f = np.empty(N)
    y = np.empty(N)
    g = np.empty(N - 1)
    while t < t_end - 1e-15:
        gmin = np.inf
        for i in range(N - 1):
            g[i] = x[i + 1] - x[i]
            if g[i] < gmin:
                gmin = g[i]
        ge = max(gmin, floor)
        dt = min(dt_max, safety * N * ge * ge, t_end - t)
        _dbm_drift(x, beta, f)
        if mode == 1:
            _relaxation_extra(x, beta, eta, gamma, lo_idx, hi_idx, slope, curv, w, f)
        accepted = False
        for _ in range(max_halvings + 1):
            z = rng.standard_normal(N)
            s = math.sqrt(dt / N)
            for i in range(N):
                y[i] = x[i] + f[i] * dt + s * z[i]
            ok = True
            for i in range(N - 1):
                if not (y[i + 1] - y[i] > shrink * g[i]):
                    ok = False
                    break
            if ok:
                accepted = True
                break
            dt *= 0.5
        if not accepted:
            return t, 1, gmin
        for i in range(N):
            x[i] = y[i]
        t += dt
    return t, 0, 0.0
