"""Numpy fallback for the simplex hot kernels (same contracts as _kernels.pyx)."""

from __future__ import annotations

import numpy as np

COMPILED = False


def choose_entering(d: np.ndarray, eligibility: np.ndarray, tol: float, bland: bool) -> int:
    """Index of the entering variable, or -1 when none is eligible.

    eligibility: 0 = nonbasic at lower bound, 1 = nonbasic at upper bound,
    2 = ineligible.  At a lower bound the variable enters on d < -tol, at an
    upper bound on d > tol.  Dantzig rule scores by |d|; Bland picks the
    lowest eligible index.
    """
    at_lb = (eligibility == 0) & (d < -tol)
    at_ub = (eligibility == 1) & (d > tol)
    eligible = at_lb | at_ub
    if not eligible.any():
        return -1
    idx = np.flatnonzero(eligible)
    if bland:
        return int(idx[0])
    scores = np.abs(d[idx])
    return int(idx[np.argmax(scores)])  # argmax takes the first max: lowest index tie-break


def ratio_test(
    col: np.ndarray,
    xB: np.ndarray,
    lbB: np.ndarray,
    ubB: np.ndarray,
    sigma: float,
    limit: float,
    tol: float,
) -> tuple[int, float]:
    """Blocking basic position and step length for the entering direction.

    The entering variable moves by ``t >= 0`` (toward the other bound when
    ``limit`` is finite); basic variable i changes by ``-sigma * col[i] * t``.
    Returns (-1, limit) when the entering variable's own bound blocks first
    (a bound flip).  Exact ties prefer the larger pivot magnitude, then the
    lower index, which keeps runs deterministic.
    """
    v = sigma * col
    step = limit
    leave = -1
    pivot_mag = 0.0
    decreasing = v > tol
    increasing = v < -tol
    m = col.shape[0]
    for i in range(m):
        if decreasing[i]:
            t = (xB[i] - lbB[i]) / v[i]
        elif increasing[i]:
            t = (ubB[i] - xB[i]) / (-v[i])
        else:
            continue
        if t < step - 1e-12:
            step = t
            leave = i
            pivot_mag = abs(v[i])
        elif leave >= 0 and t < step + 1e-12 and abs(v[i]) > pivot_mag:
            leave = i
            pivot_mag = abs(v[i])
    if step < 0.0:
        step = 0.0
    return leave, float(step)


def update_binv(binv: np.ndarray, col: np.ndarray, r: int) -> None:
    """Rank-1 basis inverse update after pivoting on basic position r."""
    pivot = col[r]
    factor = col / pivot
    factor[r] = 0.0
    binv -= np.outer(factor, binv[r])
    binv[r] /= pivot
