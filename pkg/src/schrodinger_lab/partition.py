"""Polynomial partitioning of weighted point sets in space-time R^3.

Polynomials live on an m-dimensional subspace Pi and are pulled back through
the orthogonal projection, P(z) = P_Pi(pi(z)). An equal-split polynomial is
found by a smoothed Gauss-Newton search on the coefficient sphere followed
by exact coordinate line searches on the discrete sign balance.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from math import comb
from typing import List, Optional, Sequence

import numpy as np

from .errors import DomainError

ETA = 1e-9


def monomial_exponents(m: int, D: int) -> np.ndarray:
    """All exponents of total degree <= D in m variables, graded order."""
    out = [a for d in range(D + 1) for a in itertools.product(range(d + 1), repeat=m) if sum(a) == d]
    return np.array(sorted(out, key=lambda a: (sum(a), tuple(-x for x in a))), dtype=int).reshape(-1, m)


@dataclass(frozen=True)
class ProjectedPolySpace:
    """Polynomials of degree <= D on span(basis), in normalised coordinates u = (pi(z) - shift) / scale."""

    basis: np.ndarray
    D: int
    shift: np.ndarray = None
    scale: float = 1.0

    def __post_init__(self):
        b = np.atleast_2d(np.asarray(self.basis, dtype=float))
        if b.shape[1] != 3 or not 1 <= b.shape[0] <= 3:
            raise DomainError("basis must be (m, 3) with m in {1, 2, 3}")
        if np.abs(b @ b.T - np.eye(b.shape[0])).max() > 1e-10:
            raise DomainError("basis must be orthonormal")
        if self.D < 1:
            raise DomainError("degree bound must be >= 1")
        object.__setattr__(self, "basis", b)
        sh = np.zeros(b.shape[0]) if self.shift is None else np.asarray(self.shift, dtype=float)
        object.__setattr__(self, "shift", sh)

    @property
    def m(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return comb(self.D + self.m, self.m)

    @staticmethod
    def full(D: int) -> "ProjectedPolySpace":
        return ProjectedPolySpace(np.eye(3), D)

    @staticmethod
    def coordinate(axes: Sequence[int], D: int) -> "ProjectedPolySpace":
        return ProjectedPolySpace(np.eye(3)[list(axes)], D)

    def fitted(self, points: np.ndarray, D: Optional[int] = None) -> "ProjectedPolySpace":
        """Same subspace with shift/scale centring ``points`` in [-1, 1]^m."""
        u = np.asarray(points) @ self.basis.T
        lo, hi = u.min(axis=0), u.max(axis=0)
        scale = float(max((hi - lo).max() / 2, 1e-300))
        return ProjectedPolySpace(self.basis, self.D if D is None else D, (lo + hi) / 2, scale)

    def coords(self, z) -> np.ndarray:
        return (np.asarray(z, dtype=float) @ self.basis.T - self.shift) / self.scale


@dataclass(frozen=True)
class Polynomial:
    space: ProjectedPolySpace
    exponents: np.ndarray
    coeffs: np.ndarray

    @staticmethod
    def from_coeffs(space: ProjectedPolySpace, coeffs, D: Optional[int] = None) -> "Polynomial":
        ex = monomial_exponents(space.m, space.D if D is None else D)
        c = np.asarray(coeffs, dtype=float)
        if c.shape != (len(ex),):
            raise DomainError("coefficient count does not match the monomial basis")
        return Polynomial(space, ex, c)

    @staticmethod
    def from_terms(terms: dict) -> "Polynomial":
        """Polynomial in (x1, x2, t) from {(a, b, c): coeff}."""
        ex = np.array(list(terms.keys()), dtype=int).reshape(-1, 3)
        deg = int(ex.sum(axis=1).max()) if len(ex) else 1
        return Polynomial(ProjectedPolySpace.full(max(deg, 1)), ex, np.array(list(terms.values()), dtype=float))

    @property
    def degree(self) -> int:
        nz = self.coeffs != 0
        return int(self.exponents[nz].sum(axis=1).max()) if nz.any() else 0

    def _powers(self, u: np.ndarray) -> np.ndarray:
        return np.prod(u[..., None, :] ** self.exponents, axis=-1)

    def __call__(self, z) -> np.ndarray:
        return self._powers(self.space.coords(z)) @ self.coeffs

    def gradient(self, z) -> np.ndarray:
        """Gradient in R^3."""
        u = self.space.coords(z)
        gu = np.empty(u.shape[:-1] + (self.space.m,))
        for k in range(self.space.m):
            ek = self.exponents[:, k]
            dex = self.exponents.copy()
            dex[:, k] = np.maximum(dex[:, k] - 1, 0)
            gu[..., k] = np.prod(u[..., None, :] ** dex, axis=-1) @ (self.coeffs * ek)
        return gu @ self.space.basis / self.space.scale

    def terms3d(self) -> dict:
        """Expansion in monomials of (x1, x2, t)."""
        lin = []
        for k in range(self.space.m):
            d = {(1, 0, 0): self.space.basis[k, 0] / self.space.scale,
                 (0, 1, 0): self.space.basis[k, 1] / self.space.scale,
                 (0, 0, 1): self.space.basis[k, 2] / self.space.scale,
                 (0, 0, 0): -self.space.shift[k] / self.space.scale}
            lin.append(d)
        out: dict = {}
        for a, c in zip(self.exponents, self.coeffs):
            if c == 0:
                continue
            term = {(0, 0, 0): float(c)}
            for k, e in enumerate(a):
                for _ in range(int(e)):
                    term = _mul(term, lin[k])
            for key, v in term.items():
                out[key] = out.get(key, 0.0) + v
        return {k: v for k, v in out.items() if v != 0.0}

    def to_json(self) -> list:
        return [{"exponents": list(k), "coeff": v} for k, v in sorted(self.terms3d().items())]

    @staticmethod
    def from_json(items: list) -> "Polynomial":
        return Polynomial.from_terms({tuple(it["exponents"]): float(it["coeff"]) for it in items})


def _mul(a: dict, b: dict) -> dict:
    out: dict = {}
    for ka, va in a.items():
        for kb, vb in b.items():
            k = (ka[0] + kb[0], ka[1] + kb[1], ka[2] + kb[2])
            out[k] = out.get(k, 0.0) + va * vb
    return out


# Equal splitting --------------------------------------------------------------

@dataclass
class SplitResult:
    poly: Polynomial
    residuals: np.ndarray
    converged: bool
    tol: float

    def to_dict(self) -> dict:
        return {"residuals": [float(r) for r in self.residuals], "converged": self.converged,
                "tol": self.tol, "poly": self.poly.to_json()}


def sign_balance(values: np.ndarray, weights: np.ndarray, labels: np.ndarray, n: int) -> np.ndarray:
    """G_j = (mass(P > 0) - mass(P < 0)) / mass_j for each label j."""
    s = np.sign(values) * weights
    tot = np.bincount(labels, weights, minlength=n)
    return np.bincount(labels, s, minlength=n) / np.where(tot > 0, tot, 1.0)


def _line_search(base, phi, w, labels, n, tot):
    """Exact minimiser over delta of max_j |G_j(base + delta phi)|."""
    ok = phi != 0
    bp = -base[ok] / phi[ok]
    if bp.size == 0:
        return 0.0, None
    cand = np.unique(bp)
    mids = np.concatenate([[cand[0] - 1.0], (cand[:-1] + cand[1:]) / 2, [cand[-1] + 1.0]])
    # restrict to a window around 0 to bound the cost
    if mids.size > 4001:
        k = np.searchsorted(mids, 0.0)
        mids = mids[max(k - 2000, 0):k + 2000]
    G = np.zeros((n, mids.size))
    # points with phi = 0 keep their sign
    z = ~ok
    if z.any():
        G += (np.bincount(labels[z], np.sign(base[z]) * w[z], minlength=n) / tot)[:, None]
    for sgn in (1, -1):
        sel = ok & (np.sign(phi) == sgn)
        if not sel.any():
            continue
        b = -base[sel] / phi[sel]
        order = np.argsort(b)
        bs, ws, ls = b[order], w[sel][order], labels[sel][order]
        for j in range(n):
            mj = ls == j
            if not mj.any():
                continue
            bj, wj = bs[mj], ws[mj]
            cw = np.concatenate([[0.0], np.cumsum(wj)])
            below = cw[np.searchsorted(bj, mids)]  # mass with breakpoint < delta
            total = cw[-1]
            pos = below if sgn == 1 else total - below
            G[j] += (2 * pos - total) / tot[j]
    obj = np.abs(G).max(axis=0)
    k = int(np.argmin(obj))
    return float(mids[k]), float(obj[k])


def equal_split_polynomial(points: np.ndarray, weights: np.ndarray, labels: np.ndarray, space: ProjectedPolySpace,
                           rng: Optional[np.random.Generator] = None, tol: float = 1e-3,
                           n_random: int = 256, sweeps: int = 20) -> SplitResult:
    """Polynomial in ``space`` splitting every labelled mass in half.

    ``labels`` assigns each point to one of N masses, N <= dim(space) - 1.
    Soft failure: the best polynomial found is returned with its residuals.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    labels = np.asarray(labels, dtype=int)
    n = int(labels.max()) + 1 if labels.size else 0
    if n > space.dim - 1:
        raise DomainError(f"{n} masses need more than {space.dim} coefficients")
    w = np.asarray(weights, dtype=float)
    ex = monomial_exponents(space.m, space.D)
    Phi = np.prod(space.coords(points)[:, None, :] ** ex, axis=-1)
    Phi /= np.maximum(np.sqrt(np.mean(Phi**2, axis=0)), 1e-300)
    tot = np.bincount(labels, w, minlength=n)
    tot = np.where(tot > 0, tot, 1.0)

    def discrete(c):
        return sign_balance(Phi @ c, w, labels, n)

    C = rng.standard_normal((n_random, Phi.shape[1]))
    C /= np.linalg.norm(C, axis=1, keepdims=True)
    scores = [np.abs(discrete(c)).max() for c in C]
    c = C[int(np.argmin(scores))]
    best_c, best = c.copy(), float(min(scores))

    # smoothed Gauss-Newton with decreasing width
    for sigma in np.geomspace(0.5, 1e-4, 24):
        for _ in range(4):
            v = Phi @ c
            s = sigma * max(np.median(np.abs(v)), 1e-12)
            th = np.tanh(v / s)
            G = np.bincount(labels, w * th, minlength=n) / tot
            dth = w * (1 - th**2) / s
            J = np.zeros((n, Phi.shape[1]))
            for j in range(n):
                mj = labels == j
                J[j] = dth[mj] @ Phi[mj] / tot[j]
            J -= np.outer(J @ c, c)  # tangent to the sphere
            dc = -np.linalg.lstsq(J, G, rcond=None)[0]
            c = c + dc
            c /= np.linalg.norm(c)
            r = float(np.abs(discrete(c)).max())
            if r < best:
                best, best_c = r, c.copy()
    c = best_c.copy()

    # exact coordinate polish on the discrete objective
    for _ in range(sweeps):
        if best <= tol:
            break
        improved = False
        for i in rng.permutation(Phi.shape[1]):
            d, obj = _line_search(Phi @ c, Phi[:, i], w, labels, n, tot)
            if obj is not None and obj < best:
                c = c.copy()
                c[i] += d
                c /= np.linalg.norm(c)
                best = float(np.abs(discrete(c)).max())
                improved = True
                if best <= tol:
                    break
        if not improved:
            break

    # undo the column normalisation so coefficients refer to plain monomials
    raw = np.prod(space.coords(points)[:, None, :] ** ex, axis=-1)
    norms = np.maximum(np.sqrt(np.mean(raw**2, axis=0)), 1e-300)
    coef = c / norms
    coef /= np.linalg.norm(coef)
    poly = Polynomial(space, ex, coef)
    res = np.abs(sign_balance(poly(points), w, labels, n))
    return SplitResult(poly, res, bool(res.max(initial=0.0) <= tol), tol)


# Sign-cell decomposition ------------------------------------------------------

def round_degree(m: int, n_masses: int) -> int:
    """Least d with C(d + m, m) - 1 >= n_masses."""
    d = 1
    while comb(d + m, m) - 1 < n_masses:
        d += 1
    return d


@dataclass
class SignCellDecomposition:
    factors: List[Polynomial]
    wall_width: float
    labels: np.ndarray
    cell_mass: dict
    residuals: List[List[float]]
    degenerate: List[int] = field(default_factory=list)

    @property
    def s(self) -> int:
        return len(self.factors)

    @property
    def degree(self) -> int:
        return sum(q.degree for q in self.factors)

    def sign_vector(self, z) -> np.ndarray:
        """Integer label sum_l [Q_l(z) > 0] 2^l."""
        z = np.asarray(z, dtype=float)
        lab = np.zeros(z.shape[:-1], dtype=np.int64)
        for l, q in enumerate(self.factors):
            lab |= (q(z) > 0).astype(np.int64) << l
        return lab

    def product(self, z) -> np.ndarray:
        out = np.ones(np.asarray(z).shape[:-1])
        for q in self.factors:
            out = out * q(z)
        return out

    def max_cell_ratio(self) -> float:
        total = sum(self.cell_mass.values())
        return max(self.cell_mass.values()) / (total / 2**self.s) if total > 0 else 0.0

    def to_json(self) -> dict:
        return {"factors": [q.to_json() for q in self.factors],
                "sign_cells": {str(k): v for k, v in sorted(self.cell_mass.items())},
                "wall_width": self.wall_width, "degree": self.degree,
                "residuals": self.residuals, "degenerate_cells": self.degenerate}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def build_partition(points: np.ndarray, weights: np.ndarray, space: ProjectedPolySpace, D: int,
                    wall_width: float = 0.0, rng: Optional[np.random.Generator] = None,
                    tol: float = 1e-3) -> SignCellDecomposition:
    """s = floor(m log2 D) rounds; each round bisects every current cell with one polynomial.

    Round degrees are the least degree with enough coefficients for the
    current number of cells, so deg P is reported rather than capped at D.
    Cells whose points all coincide cannot be split and are flagged.
    """
    if D < 2:
        raise DomainError("degree bound must be >= 2")
    rng = np.random.default_rng(0) if rng is None else rng
    pts = np.asarray(points, dtype=float)
    w = np.asarray(weights, dtype=float)
    s = int(np.floor(space.m * np.log2(D) + 1e-12))
    labels = np.zeros(len(pts), dtype=np.int64)
    factors, residuals, degenerate = [], [], []
    for l in range(s):
        cells = np.unique(labels[w > 0])
        live, idx = [], np.zeros(len(pts), dtype=int) - 1
        for c in cells:
            sel = labels == c
            u = space.coords(pts[sel])
            if np.ptp(u, axis=0).max() == 0:
                if int(c) not in degenerate:
                    degenerate.append(int(c))
                continue
            idx[sel] = len(live)
            live.append(c)
        if not live:
            break
        use = idx >= 0
        d = round_degree(space.m, len(live))
        sp = space.fitted(pts[use], d)
        res = equal_split_polynomial(pts[use], w[use], idx[use], sp, rng, tol)
        factors.append(res.poly)
        residuals.append([float(r) for r in res.residuals])
        labels |= (res.poly(pts) > 0).astype(np.int64) << l
    mass = {}
    for k in np.unique(labels):
        mass[int(k)] = float(w[labels == k].sum())
    return SignCellDecomposition(factors, wall_width, labels, mass, residuals, degenerate)


# Walls ------------------------------------------------------------------------

def distance_proxy(q: Polynomial, z) -> np.ndarray:
    """|Q(z)| / max(|grad Q(z)|, eta)."""
    return np.abs(q(z)) / np.maximum(np.linalg.norm(q.gradient(z), axis=-1), ETA)


def wall_neighborhood(decomp: SignCellDecomposition, w: float):
    """Predicates (in_wall(z), in_cell(z, label)) for W and O_i minus W."""
    if w <= 0:
        raise DomainError("wall width must be positive")

    def in_wall(z):
        z = np.asarray(z, dtype=float)
        if not decomp.factors:
            return np.zeros(z.shape[:-1], dtype=bool)
        d = np.min([distance_proxy(q, z) for q in decomp.factors], axis=0)
        return d <= w

    def in_cell(z, label):
        return (decomp.sign_vector(z) == label) & ~in_wall(z)

    return in_wall, in_cell


def project_to_zero_set(polys: Sequence[Polynomial], z0: np.ndarray, iters: int = 80) -> np.ndarray:
    """Minimum-norm Newton iteration onto {P_1 = ... = P_k = 0} from each seed row."""
    z = np.array(z0, dtype=float, copy=True)
    for _ in range(iters):
        F = np.stack([p(z) for p in polys], axis=-1)
        J = np.stack([p.gradient(z) for p in polys], axis=-2)
        step = (np.linalg.pinv(J) @ F[..., None])[..., 0]
        bad = ~np.isfinite(step).all(axis=1)
        step[bad] = 0.0
        z = z - step
    return z


def true_distance(q: Polynomial, z: np.ndarray, starts: int = 16, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Dense local search for dist(z, Z(q)): Newton projections from jittered seeds."""
    rng = np.random.default_rng(0) if rng is None else rng
    z = np.atleast_2d(z)
    out = np.full(len(z), np.inf)
    d0 = distance_proxy(q, z)
    for k in range(starts):
        jitter = rng.standard_normal(z.shape) * (d0[:, None] * (0.5 * k / starts))
        y = project_to_zero_set([q], z + jitter)
        ok = np.abs(q(y)) <= 1e-10 * max(1.0, np.abs(q.coeffs).max())
        dist = np.where(ok, np.linalg.norm(y - z, axis=1), np.inf)
        out = np.minimum(out, dist)
    return out


# Transverse complete intersections --------------------------------------------

@dataclass
class TCIReport:
    min_wedge_norm: float
    gradient_scale: float
    n_points: int
    passed: bool
    vacuous: bool

    def to_dict(self) -> dict:
        return {"min_wedge_norm": self.min_wedge_norm, "gradient_scale": self.gradient_scale,
                "n_points": self.n_points, "pass": self.passed, "vacuous": self.vacuous}


def wedge_norm(grads: np.ndarray) -> np.ndarray:
    """|g_1 ^ ... ^ g_k| via the Gram determinant; grads has shape (..., k, 3)."""
    G = grads @ np.swapaxes(grads, -1, -2)
    return np.sqrt(np.maximum(np.linalg.det(G), 0.0))


def tci_check(polys: Sequence[Polynomial], sample_budget: int = 64, box: float = 1.0,
              rng: Optional[np.random.Generator] = None) -> TCIReport:
    """Locate zero-set points in [-box, box]^3 by Newton projection and check the gradient wedge."""
    rng = np.random.default_rng(0) if rng is None else rng
    seeds = rng.uniform(-box, box, (4 * sample_budget, 3))
    z = project_to_zero_set(polys, seeds)
    F = np.stack([p(z) for p in polys], axis=-1)
    ok = np.all(np.isfinite(z), axis=1) & (np.abs(z).max(axis=1) <= box) & (np.abs(F).max(axis=1) <= 1e-12)
    probe = rng.uniform(-box, box, (256, 3))
    scale = float(np.median(wedge_norm(np.stack([p.gradient(probe) for p in polys], axis=-2))))
    scale = scale if scale > 0 else 1.0
    zs = z[ok][:sample_budget]
    if len(zs) == 0:
        return TCIReport(float("inf"), scale, 0, True, True)
    wn = wedge_norm(np.stack([p.gradient(zs) for p in polys], axis=-2))
    mn = float(wn.min())
    return TCIReport(mn, scale, len(zs), bool(mn >= 1e-6 * scale), False)


# Tube-cell incidence ----------------------------------------------------------

@dataclass
class IncidenceReport:
    max_cells_per_tube: int
    dense_max_cells_per_tube: int
    bound: int
    counts: List[int]
    passed: bool

    def to_dict(self) -> dict:
        return {"max_cells_per_tube": self.max_cells_per_tube, "dense_max": self.dense_max_cells_per_tube,
                "bound": self.bound, "pass": self.passed}


def _cells_met(decomp, in_wall, a, b, n):
    s = np.linspace(0.0, 1.0, n)
    z = a[None, :] + s[:, None] * (b - a)[None, :]
    keep = ~in_wall(z) if in_wall is not None else np.ones(n, bool)
    return len(np.unique(decomp.sign_vector(z[keep])))


def cell_tube_incidence(decomp: SignCellDecomposition, segments: Sequence[tuple], wall_width: Optional[float] = None) -> IncidenceReport:
    """Distinct cells met by each core segment (a, b) in R^3, outside the wall when a width is given.

    Sampling uses 4 deg(P) + 8 points and is cross-checked at 64 deg(P) points.
    """
    D = max(decomp.degree, 1)
    in_wall = wall_neighborhood(decomp, wall_width)[0] if wall_width else None
    counts, dense = [], []
    for a, b in segments:
        a, b = np.asarray(a, float), np.asarray(b, float)
        counts.append(_cells_met(decomp, in_wall, a, b, 4 * D + 8))
        dense.append(_cells_met(decomp, in_wall, a, b, 64 * D))
    mx = max(counts, default=0)
    dmx = max(dense, default=0)
    return IncidenceReport(mx, dmx, decomp.degree + 1, counts, bool(max(mx, dmx) <= decomp.degree + 1))


def tube_segment(tube) -> tuple:
    """Core segment of a wavepacket tube as two space-time points."""
    R = tube.tile.R
    c0, c1 = tube.core(0.0), tube.core(R)
    return (np.array([c0[0], c0[1], 0.0]), np.array([c1[0], c1[1], R]))
