"""Caps, K-cells, local broad mass and broad norms of e^{itH} f psi2.

Caps tau are disjoint half-open squares of side 2 (KM)^-1 covering the
support ball B(xi0, M^-1). A cap belongs to a line V when some sampled
normal (-2 xi, 1)/|.| over the cap is within angle (KM)^-1 of V. On a cell
B_K x I_K^j the broad mass is

    mu = min over V_1..V_A of max over caps not in any V_a of int |e^{itH} f_tau|^p psi2^p,

with the minimum taken over an explicit finite direction set (cap normals
plus 32 spread directions) and max over an empty family equal to 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .errors import DomainError, RangeError
from .field_core import Cube, FrequencySupport, SampledField
from .propagator import CurveParams, TimeCutoffs, _phase


@dataclass(frozen=True)
class BroadParams:
    K: int
    A: int
    p: float
    q: float
    M: float = 1.0
    k: int = 2

    def __post_init__(self):
        if self.K < 1 or int(self.K) != self.K:
            raise DomainError("K must be a positive integer")
        if self.A < 0 or int(self.A) != self.A:
            raise DomainError("A must be a nonnegative integer")
        if not 1 <= self.p <= 16:
            raise DomainError("p must lie in [1, 16]")
        if not self.q >= 1:
            raise DomainError("q must be >= 1")
        if self.M < 1:
            raise DomainError("M must be >= 1")
        if self.k != 2:
            raise DomainError("only broadness parameter k = 2 is supported")

    def with_(self, **kw) -> "BroadParams":
        d = dict(K=self.K, A=self.A, p=self.p, q=self.q, M=self.M, k=self.k)
        d.update(kw)
        return BroadParams(**d)


@dataclass(frozen=True)
class Cap:
    center: tuple
    half_side: float

    def cube(self) -> Cube:
        return Cube(self.center, 2 * self.half_side)

    def sample_points(self) -> np.ndarray:
        """Center, four corners and four edge midpoints."""
        h = self.half_side
        off = np.array([(0, 0), (-h, -h), (-h, h), (h, -h), (h, h), (-h, 0), (h, 0), (0, -h), (0, h)], dtype=float)
        return np.asarray(self.center)[None, :] + off


def normal(xi) -> np.ndarray:
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    v = np.concatenate([-2 * xi, np.ones((len(xi), 1))], axis=1)
    return v / np.linalg.norm(v, axis=1, keepdims=True)


@dataclass(frozen=True)
class Subspace1D:
    direction: tuple

    def __post_init__(self):
        v = np.asarray(self.direction, dtype=float)
        n = np.linalg.norm(v)
        if v.shape != (3,) or n == 0:
            raise DomainError("direction must be a nonzero vector in R^3")
        object.__setattr__(self, "direction", tuple(float(a) for a in v / n))


def line_angle(vectors, v) -> np.ndarray:
    """Angle between each unit row of ``vectors`` and the line spanned by v."""
    c = np.abs(np.asarray(vectors) @ np.asarray(v, dtype=float))
    return np.arccos(np.clip(c, 0.0, 1.0))


def cap_decompose(support: FrequencySupport, K: int, min_step: Optional[float] = None) -> List[Cap]:
    """Squares of side 2 (KM)^-1 in a K x K block centred on xi0, kept if they meet the ball."""
    if support.kind != "ball":
        raise DomainError("caps are defined for ball supports")
    r = support.radius
    h = r / K
    if min_step is not None and 2 * h < min_step:
        raise RangeError("cap side below the frequency resolution")
    c0 = np.asarray(support.center)
    caps = []
    for i in range(K):
        for j in range(K):
            c = c0 + 2 * h * (np.array([i, j]) - 0.5 * (K - 1))
            d = np.maximum(np.abs(c - c0) - h, 0.0)
            if np.hypot(*d) <= r:
                caps.append(Cap((float(c[0]), float(c[1])), h))
    return caps


def cap_in_subspace(cap: Cap, V: Subspace1D, K: int, M: float) -> bool:
    ang = line_angle(normal(cap.sample_points()), V.direction)
    return bool(ang.min() <= 1.0 / (K * M) + 1e-12)


def spread_directions(n: int = 32) -> np.ndarray:
    """Fibonacci points on the upper unit hemisphere."""
    i = np.arange(n) + 0.5
    z = 1.0 - i / n
    phi = np.pi * (1 + 5**0.5) * i
    s = np.sqrt(1 - z * z)
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)


def candidate_directions(caps: Sequence[Cap], extra: int = 32) -> np.ndarray:
    if not caps:
        return spread_directions(extra)
    return np.concatenate([normal([c.center for c in caps]), spread_directions(extra)], axis=0)


def absorption_matrix(caps: Sequence[Cap], dirs: np.ndarray, K: int, M: float) -> np.ndarray:
    """Boolean (n_dirs, n_caps): cap belongs to the line of each direction."""
    out = np.zeros((len(dirs), len(caps)), dtype=bool)
    tol = 1.0 / (K * M) + 1e-12
    for j, c in enumerate(caps):
        nv = normal(c.sample_points())
        out[:, j] = np.arccos(np.clip(np.abs(nv @ dirs.T), 0, 1)).min(axis=0) <= tol
    return out


def reachable_unions(absorb: np.ndarray, A: int) -> dict:
    """Map from absorbed-cap bitmask to a direction tuple realising it with <= A lines."""
    masks = {}
    for d, row in enumerate(absorb):
        m = int(sum(1 << int(i) for i in np.flatnonzero(row)))
        if m and m not in masks:
            masks[m] = d
    # drop directions whose absorbed set sits inside another's
    keys = sorted(masks, key=lambda m: (-bin(m).count("1"), m))
    kept = []
    for m in keys:
        if not any((m | k) == k for k in kept):
            kept.append(m)
    level = {0: ()}
    reach = dict(level)
    for _ in range(A):
        nxt = {}
        for m, combo in sorted(level.items()):
            for k in kept:
                u = m | k
                if u not in reach and u not in nxt:
                    nxt[u] = combo + (masks[k],)
        if not nxt:
            break
        reach.update(nxt)
        level = nxt
    return reach


def minimax(integrals: np.ndarray, absorb: np.ndarray, A: int):
    """Broad mass for each cell column of ``integrals`` (n_caps, n_cells).

    Returns (values, direction tuples). The search covers every union of
    at most A absorbed sets, so it is the exact minimum over the direction set.
    """
    n_caps = integrals.shape[0]
    flat = integrals.reshape(n_caps, -1)
    if n_caps == 0:
        return np.zeros(flat.shape[1]), [()] * flat.shape[1]
    reach = reachable_unions(absorb, A)
    keys = sorted(reach)
    comp = np.array([[not (m >> i) & 1 for i in range(n_caps)] for m in keys], dtype=bool)
    vals = np.where(comp[:, :, None], flat[None, :, :], 0.0).max(axis=1)
    best = vals.argmin(axis=0)
    values = vals[best, np.arange(flat.shape[1])]
    dirs = [reach[keys[b]] for b in best]
    return values.reshape(integrals.shape[1:]), dirs


@dataclass(frozen=True)
class CellGrid:
    """Squares of side K on [x_lo, x_lo + nb K)^2 and intervals of length K on [0, nj K)."""

    K: float
    x_lo: float
    n_balls: int
    n_intervals: int
    sub: int = 4

    def points(self):
        """Quadrature nodes: spatial 1-D coordinates and times, spacing K/sub, cell-centred."""
        h = self.K / self.sub
        xs = self.x_lo + (np.arange(self.n_balls * self.sub) + 0.5) * h
        ts = (np.arange(self.n_intervals * self.sub) + 0.5) * h
        return xs, ts

    @property
    def cell_volume(self) -> float:
        return float(self.K**3)

    def cell_of(self, x, y, t):
        return (np.floor((np.asarray(x) - self.x_lo) / self.K).astype(int),
                np.floor((np.asarray(y) - self.x_lo) / self.K).astype(int),
                np.floor(np.asarray(t) / self.K).astype(int))

    def weights(self, region: Callable) -> np.ndarray:
        """|U intersect cell| / |cell| by the node count, shape (nb, nb, nj)."""
        xs, ts = self.points()
        X, Y, T = np.meshgrid(xs, xs, ts, indexing="ij")
        inside = np.asarray(region(X, Y, T), dtype=float)
        s = self.sub
        nb, nj = self.n_balls, self.n_intervals
        return inside.reshape(nb, s, nb, s, nj, s).mean(axis=(1, 3, 5))


@dataclass
class LocalBroadMass:
    cell: tuple
    value: float
    directions: list


class BroadSetup:
    """Per-cap evolutions of a field sampled on the cell quadrature nodes.

    The samples are computed once and reused for every p, A, region and for
    sums of fields sharing the cap decomposition.
    """

    def __init__(self, f: SampledField, support: FrequencySupport, cells: CellGrid, K: int,
                 R: Optional[float] = None, curve: CurveParams = CurveParams(), eps: float = 0.1,
                 samples: Optional[np.ndarray] = None):
        self.support = support
        self.cells = cells
        self.K = K
        self.M = 1.0 / support.radius
        self.curve = curve
        self.R = float(R if R is not None else cells.n_intervals * cells.K)
        self.cutoffs = TimeCutoffs(self.R, eps)
        self.caps = cap_decompose(support, K)
        self.dirs = candidate_directions(self.caps)
        self.absorb = absorption_matrix(self.caps, self.dirs, K, self.M)
        self.samples = self._sample(f) if samples is None else samples

    def _sample(self, f: SampledField) -> np.ndarray:
        F = f.as_frequency()
        kx, ky = F.true_frequencies()
        nz = np.abs(F.values) > 0
        xs, ts = self.cells.points()
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        pts = np.stack([X.ravel(), Y.ravel()], axis=1)
        n_caps = len(self.caps)
        kxn, kyn = kx[nz], ky[nz]
        W = np.zeros((kxn.size, n_caps), dtype=complex)
        for j, c in enumerate(self.caps):
            m = c.cube().contains(kxn, kyn)
            W[m, j] = F.values[nz][m]
        E = np.exp(1j * (np.outer(pts[:, 0], kxn) + np.outer(pts[:, 1], kyn)))
        scale = F.grid.dxi**2 / (2 * np.pi)
        out = np.empty((n_caps, len(ts), len(pts)), dtype=complex)
        for i, t in enumerate(ts):
            ph = np.exp(1j * _phase(kxn, kyn, t, self.curve))[:, None]
            out[:, i, :] = (E @ (W * ph)).T * scale
        return out

    def combined(self, other: "BroadSetup", a: complex = 1.0, b: complex = 1.0) -> "BroadSetup":
        """Setup for a f + b g from two setups sharing caps and cells."""
        new = object.__new__(BroadSetup)
        new.__dict__.update(self.__dict__)
        new.samples = a * self.samples + b * other.samples
        return new

    def integrals(self, p: float) -> np.ndarray:
        """Cell integrals of |e^{itH} f_tau|^p psi2^p, shape (n_caps, nb, nb, nj)."""
        xs, ts = self.cells.points()
        s = self.cells.sub
        nb, nj = self.cells.n_balls, self.cells.n_intervals
        w = self.cutoffs.psi2(ts) ** p
        vals = np.abs(self.samples) ** p * w[None, :, None]
        vals = vals.reshape(len(self.caps), nj, s, nb, s, nb, s)
        h3 = (self.cells.K / s) ** 3
        return vals.sum(axis=(2, 4, 6)).transpose(0, 2, 3, 1) * h3

    def mu(self, p: float, A: int):
        I = self.integrals(p)
        return minimax(I, self.absorb, A)


def local_broad_mass(setup: BroadSetup, cell: tuple, params: BroadParams) -> LocalBroadMass:
    """Broad mass on cell (bx, by, j)."""
    I = setup.integrals(params.p)[:, cell[0], cell[1], cell[2]][:, None]
    vals, dirs = minimax(I, setup.absorb, params.A)
    return LocalBroadMass(tuple(cell), float(vals[0]), [tuple(setup.dirs[d]) for d in dirs[0]])


def broad_norm_from_mu(mu: np.ndarray, weights: np.ndarray, p: float, q: float) -> float:
    """(sum_B [sum_j (w mu)^q]^(1/q))^(1/p), or sup over j when q is infinite."""
    wm = weights * mu
    if np.isinf(q):
        per_ball = wm.max(axis=2)
    else:
        per_ball = np.sum(wm**q, axis=2) ** (1.0 / q)
    return float(np.sum(per_ball) ** (1.0 / p))


def broad_norm(setup: BroadSetup, weights: np.ndarray, params: BroadParams) -> float:
    mu, _ = setup.mu(params.p, params.A)
    return broad_norm_from_mu(mu, weights, params.p, params.q)


def broad_table(setup: BroadSetup, params: BroadParams) -> list:
    """Rows (BK_x, BK_y, IK_j, mu_value, argmin direction components...)."""
    mu, dirs = setup.mu(params.p, params.A)
    nb, nj = setup.cells.n_balls, setup.cells.n_intervals
    rows = []
    flat = 0
    for bx in range(nb):
        for by in range(nb):
            for j in range(nj):
                d = dirs[flat]
                flat += 1
                comps = [float(c) for idx in d for c in setup.dirs[idx]]
                rows.append([bx, by, j, float(mu[bx, by, j])] + comps)
    return rows


@dataclass
class BroadInequalityReport:
    subadditive_margin: float
    quasi_triangle_ratio: float
    holder_ratio: float
    monotone_in_A: bool
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"subadditive_margin": self.subadditive_margin, "quasi_triangle_ratio": self.quasi_triangle_ratio,
                "holder_ratio": self.holder_ratio, "monotone_in_A": self.monotone_in_A, "pass": self.passed,
                **self.details}


def region_extent(cells: CellGrid, weights: np.ndarray):
    """(|S_U|, |I_U|): measures of the unions of spatial squares and intervals meeting U."""
    active = weights > 0
    n_b = int(np.any(active, axis=2).sum())
    n_j = int(np.any(active, axis=(0, 1)).sum())
    return n_b * cells.K**2, n_j * cells.K


def broad_norm_inequalities(f: BroadSetup, g: BroadSetup, U1: Callable, U2: Callable, params: BroadParams,
                  A1: int, A2: int, r: float, C_K: float = 2.0, tol: float = 1e-9) -> BroadInequalityReport:
    """Evaluate the three broad-norm inequalities and monotonicity in A on one instance.

    (1) ||f||^p over U1 u U2 <= ||f||^p_U1 + ||f||^p_U2.
    (2) ||f + g||^p_{A1+A2} <= 2^(p-1) (||f||^p_{A1} + ||g||^p_{A2}) on U1 u U2.
    (3) ||f||_{BL^p L^q(U)} <= C_K (|S_U| |I_U|^(1/q))^(1/p - 1/r) ||f||_{BL^r L^q(U)} on U1 u U2.

    ``f`` and ``g`` must share caps and cells. Ratios are lhs / rhs.
    """
    p, q, A = params.p, params.q, params.A
    if np.isinf(q):
        raise DomainError("the suite runs in L^q mode with finite q")
    cells = f.cells
    w1, w2 = cells.weights(U1), cells.weights(U2)
    wu = cells.weights(lambda x, y, t: np.asarray(U1(x, y, t), bool) | np.asarray(U2(x, y, t), bool))

    mu_f, _ = f.mu(p, A)
    n1 = broad_norm_from_mu(mu_f, w1, p, q) ** p
    n2 = broad_norm_from_mu(mu_f, w2, p, q) ** p
    nu = broad_norm_from_mu(mu_f, wu, p, q) ** p
    margin = (n1 + n2) - nu

    fg = f.combined(g)
    lhs2 = broad_norm_from_mu(fg.mu(p, A1 + A2)[0], wu, p, q) ** p
    rhs2 = 2 ** (p - 1) * (broad_norm_from_mu(f.mu(p, A1)[0], wu, p, q) ** p
                           + broad_norm_from_mu(g.mu(p, A2)[0], wu, p, q) ** p)
    ratio2 = lhs2 / rhs2 if rhs2 > 0 else (0.0 if lhs2 == 0 else np.inf)

    S, I = region_extent(cells, wu)
    lhs3 = broad_norm_from_mu(mu_f, wu, p, q)
    nr = broad_norm_from_mu(f.mu(r, A)[0], wu, r, q)
    rhs3 = C_K * (S * I ** (1.0 / q)) ** (1.0 / p - 1.0 / r) * nr if S > 0 else 0.0
    ratio3 = lhs3 / rhs3 if rhs3 > 0 else (0.0 if lhs3 == 0 else np.inf)

    I_p = f.integrals(p)
    prev = None
    mono = True
    for a in range(0, len(f.caps) + 2):
        cur = minimax(I_p, f.absorb, a)[0]
        if prev is not None and np.any(cur > prev):
            mono = False
        prev = cur

    passed = bool(margin >= -tol * max(1.0, nu) and ratio2 <= 1 + 1e-12 and ratio3 <= 1 + 1e-12 and mono)
    return BroadInequalityReport(float(margin), float(ratio2), float(ratio3), mono, passed,
                         {"p": p, "q": q, "r": r, "A1": A1, "A2": A2, "S_U": S, "I_U": I})


def random_box_region(rng: np.random.Generator, lo: float, hi: float, t_hi: float, n_boxes: int = 2) -> Callable:
    """Union of random axis-aligned space-time boxes."""
    boxes = []
    for _ in range(n_boxes):
        a = np.sort(rng.uniform(lo, hi, 2))
        b = np.sort(rng.uniform(lo, hi, 2))
        c = np.sort(rng.uniform(0, t_hi, 2))
        boxes.append((a, b, c))

    def region(x, y, t):
        m = np.zeros(np.broadcast(x, y, t).shape, dtype=bool)
        for a, b, c in boxes:
            m |= (x >= a[0]) & (x < a[1]) & (y >= b[0]) & (y < b[1]) & (t >= c[0]) & (t < c[1])
        return m

    return region
