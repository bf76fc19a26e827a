"""Fixed smooth profiles used for cutoffs, packets and Littlewood-Paley pieces."""

from math import comb

import numpy as np


def smoothstep(u, order: int = 5):
    """Polynomial smoothstep of odd degree ``order`` clamped to [0, 1].

    Satisfies S(u) + S(1 - u) = 1, S(0) = 0, S(1) = 1 and has
    (order - 1) / 2 vanishing derivatives at both ends.
    """
    if order < 1 or order % 2 == 0:
        raise ValueError("order must be a positive odd integer")
    n = (order - 1) // 2
    x = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    acc = np.zeros_like(x)
    for k in range(n + 1):
        acc += comb(n + k, k) * comb(2 * n + 1, n - k) * (-x) ** k
    return x ** (n + 1) * acc


def plateau_bump(u, plateau: float = 0.4, support: float = 0.6):
    """Even bump equal to 1 on |u| <= plateau and 0 for |u| >= support.

    The transition is cos(pi/2 * S) with S a quintic smoothstep. When
    ``plateau + support == 1`` the integer translates satisfy
    sum_n bump(u - n)**2 == 1 for every u.
    """
    a = np.abs(np.asarray(u, dtype=float))
    s = smoothstep((a - plateau) / (support - plateau), 5)
    return np.cos(0.5 * np.pi * s)


def lp_profile(r):
    """Radial profile for Littlewood-Paley pieces: 1 on [0, 1], 0 on [2, inf)."""
    r = np.asarray(r, dtype=float)
    return 1.0 - smoothstep(r - 1.0, 7)


def exp_bump(u):
    """Nonnegative C-infinity bump supported in the closed unit ball, peak 1 at 0.

    ``u`` has the vector components on its last axis.
    """
    u = np.asarray(u, dtype=float)
    r2 = np.sum(u * u, axis=-1)
    out = np.zeros_like(r2)
    inside = r2 < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
    return out
