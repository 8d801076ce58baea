"""Pure-numpy fallback for the grid operator hot loop.

Mirrors the compiled kernel in ``_gridcore``: one call evaluates the DP
operator on a single warped-time slice, running a bracket-per-node golden
section over the traded proportion with endpoint and warm-start candidates.
"""

from __future__ import annotations

import math

import numpy as np

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
INV_PHI_SQ = (3.0 - math.sqrt(5.0)) / 2.0

BACKEND = "python"


def golden_iterations(tol: float) -> int:
    return max(1, int(math.ceil(math.log(tol) / math.log(INV_PHI))))


def slice_objective(pi, W, gross, wq, lx, kind, gamma):
    """Operator integrand summed over the quadrature, per wealth node.

    pi: (N,) proportion per wealth node; W: (I, N) time-interpolated value
    slice on the wealth grid; gross: (I, Q) gross return nodes; wq: (I, Q)
    combined quadrature weights.  Returns (N,) objective values.  Off-grid
    wealth uses the boundary value shifted by the utility difference, which
    is exact for log utility and stays inside the value sandwich.
    """
    n_x = len(lx)
    lx0, dlx = lx[0], lx[1] - lx[0]
    lev = 1.0 - pi[:, None, None] + pi[:, None, None] * gross[None, :, :]  # (N, I, Q)
    with np.errstate(divide="ignore"):
        llev = np.log(lev)
    lnxp = lx[:, None, None] + llev
    pos = (lnxp - lx0) / dlx
    cell = np.clip(np.floor(pos).astype(np.int64), 0, n_x - 2)
    fr = pos - cell
    ii = np.arange(W.shape[0])[None, :, None]
    vals = W[ii, cell] * (1.0 - fr) + W[ii, cell + 1] * fr
    if kind == 0:  # log
        u_xp = lnxp
        u_lo, u_hi = lx[0], lx[-1]
    else:
        u_xp = np.exp(gamma * lnxp) / gamma
        u_lo = math.exp(gamma * lx[0]) / gamma
        u_hi = math.exp(gamma * lx[-1]) / gamma
    below = pos < 0.0
    above = pos > n_x - 1.0
    if below.any():
        vals = np.where(below, W[ii, 0] + u_xp - u_lo, vals)
    if above.any():
        vals = np.where(above, W[ii, n_x - 1] + u_xp - u_hi, vals)
    return np.einsum("niq,iq->n", vals, wq)


def apply_slice(W, gross, wq, lx, kind, gamma, prev_pi, pi_tol):
    """Maximize the slice objective over pi in [0, 1] per wealth node.

    Returns (values, argmax).  Candidates: golden-section result, both
    endpoints, and the previous iteration's argmax; the last guarantees
    exact pointwise monotonicity of the value iteration.  Ties resolve to
    the smallest proportion.
    """
    n_x = len(lx)
    obj = lambda p: slice_objective(p, W, gross, wq, lx, kind, gamma)

    a = np.zeros(n_x)
    b = np.ones(n_x)
    dist = b - a
    c = a + INV_PHI_SQ * dist
    d = a + INV_PHI * dist
    yc, yd = obj(c), obj(d)
    for _ in range(golden_iterations(pi_tol) - 1):
        left = yc >= yd  # maximum in [a, d]; ties keep the left bracket
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        dist *= INV_PHI
        d_new = np.where(left, c, a + INV_PHI * dist)
        c_new = np.where(left, a + INV_PHI_SQ * dist, d)
        y_new = obj(np.where(left, c_new, d_new))
        yc, yd = np.where(left, y_new, yd), np.where(left, yc, y_new)
        c, d = c_new, d_new

    candidates = [np.zeros(n_x), 0.5 * (a + b), np.ones(n_x)]
    if prev_pi is not None:
        candidates.append(np.asarray(prev_pi, dtype=float))
    pis = np.stack(candidates)
    vals = np.stack([obj(p) for p in candidates])
    order = np.argsort(pis, axis=0, kind="stable")
    pis = np.take_along_axis(pis, order, axis=0)
    vals = np.take_along_axis(vals, order, axis=0)
    best = np.argmax(vals, axis=0)  # first maximum in pi-ascending order
    idx = np.arange(n_x)
    return vals[best, idx], pis[best, idx]
