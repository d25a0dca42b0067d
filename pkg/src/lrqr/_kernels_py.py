"""Pure-numpy kernels. Reference implementation and import fallback.

Signatures match the compiled ``_ckernels`` module exactly.
"""

from __future__ import annotations

import numpy as np


def pinball_value_grad(phi, s, gamma, alpha):
    """Mean pinball loss of ``h = phi @ gamma`` and its closed-indicator subgradient."""
    h = phi @ gamma
    diff = s - h
    loss = np.where(diff >= 0, (1.0 - alpha) * diff, -alpha * diff).mean()
    w = (s <= h).astype(float) - (1.0 - alpha)
    return float(loss), (w @ phi) / phi.shape[0]


def projected_subgradient(phi, s, sigma, mu2, gamma0, alpha, lam, beta,
                          radius, step0, n_iter):
    """Projected subgradient on the fixed-beta objective in gamma.

    Steps are ``step0 / sqrt(t)``; the iterate is projected onto the
    ``radius`` ball after every step. Returns ``(average, last)``.
    """
    gamma = np.array(gamma0, dtype=float, copy=True)
    avg = np.zeros_like(gamma)
    n = phi.shape[0]
    lin = 2.0 * lam * beta * mu2
    quad = 2.0 * lam * beta * beta * sigma
    for t in range(1, n_iter + 1):
        h = phi @ gamma
        w = (s <= h).astype(float) - (1.0 - alpha)
        g = (w @ phi) / n + quad @ gamma - lin
        gamma -= (step0 / np.sqrt(t)) * g
        nrm = np.sqrt(gamma @ gamma)
        if nrm > radius:
            gamma *= radius / nrm
        avg += (gamma - avg) / t
    return avg, gamma


def line_search(r, v, sign, slope0, curv, alpha, n):
    """Exact minimiser over ``t >= 0`` of a convex piecewise quadratic.

    The function is ``(1/n) sum_i rho(r_i - t v_i) + slope0 t + curv t^2 / 2``
    where ``rho`` is the pinball residual loss and ``sign[i]`` is the side
    (+1 score above threshold, -1 below) point ``i`` starts on. Entries with
    ``sign == 0`` are held fixed (already tied).

    Returns ``(t, order, n_crossed, n_hit)``: ``order`` lists the points
    whose residual reaches zero, sorted by crossing time; the first
    ``n_crossed`` are strictly passed and the next ``n_hit`` become tied at
    ``t``. ``t`` is ``inf`` if the function is unbounded below.
    """
    up = sign > 0
    down = sign < 0
    a = slope0 + (-(1.0 - alpha) * v[up].sum() + alpha * v[down].sum()) / n
    empty = np.empty(0, dtype=np.intp)
    if a >= 0:
        return 0.0, empty, 0, 0
    crossing = (up & (v > 0)) | (down & (v < 0))
    idx = np.flatnonzero(crossing)
    times = np.maximum(r[idx] / v[idx], 0.0)
    order = np.argsort(times, kind="stable")
    idx = idx[order]
    times = times[order]
    jumps = np.abs(v[idx]) / n
    m = idx.shape[0]
    k = 0
    while k < m:
        tk = times[k]
        if curv > 0 and a + curv * tk > 0:
            t = -a / curv
            return t, idx, k, 0
        # gather every breakpoint at this exact time
        e = k
        while e < m and times[e] == tk:
            a += jumps[e]
            e += 1
        if a + curv * tk >= 0:
            return float(tk), idx, k, e - k
        k = e
    if curv > 0:
        return -a / curv, idx, m, 0
    return float("inf"), idx, m, 0
