"""Greedy weighted maximum coverage, used for warm starts only."""

from __future__ import annotations

import numpy as np


def greedy_max_coverage(C, w, k: int, start=()) -> np.ndarray:
    """Pick ``k`` columns of ``C`` (rows = grids) by largest uncovered weight.

    Parameters
    ----------
    C : (m, n) 0/1 array; ``C[j, i]`` is 1 when column ``i`` covers grid ``j``.
    w : (m,) non-negative weights.
    k : number of columns to select, ``k <= n``.
    start : columns already chosen; they count towards ``k``.

    Returns
    -------
    (n,) 0/1 int array. Ties go to the lowest column index.
    """
    C = np.asarray(C).astype(bool)
    w = np.asarray(w, dtype=float)
    m, n = C.shape
    if k > n:
        raise ValueError(f"cannot pick {k} of {n} columns")
    x = np.zeros(n, dtype=np.int8)
    covered = np.zeros(m, dtype=bool)
    for i in start:
        x[i] = 1
        covered |= C[:, i]
    while x.sum() < k:
        gain = w[~covered] @ C[~covered]
        gain[x == 1] = -1.0
        i = int(np.argmax(gain))
        x[i] = 1
        covered |= C[:, i]
    return x
