"""Tangent spaces of varieties, tube classification, translate families and
the localisation checks for band-limited fields and evolved packets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.signal import fftconvolve

from .errors import ContractError, DegeneracyError, DomainError
from .field_core import GridSpec, SampledField, l2_norm, synthesize
from .partition import Polynomial, project_to_zero_set, wedge_norm
from .propagator import CurveParams, TimeCutoffs, _phase
from .wavepacket import Tile, Tube, packet_grid, packet_spectrum


@dataclass(frozen=True)
class Variety:
    polys: tuple

    def __post_init__(self):
        if not 1 <= len(self.polys) <= 2:
            raise DomainError("a variety here has one or two defining equations")
        object.__setattr__(self, "polys", tuple(self.polys))

    @property
    def dim(self) -> int:
        return 3 - len(self.polys)

    def project(self, z) -> np.ndarray:
        return project_to_zero_set(self.polys, np.atleast_2d(np.asarray(z, dtype=float)))

    def distance(self, z) -> np.ndarray:
        """Distance to the zero set via Newton projection."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return np.linalg.norm(self.project(z) - z, axis=1)

    @staticmethod
    def plane(normal, offset: float = 0.0) -> "Variety":
        n = np.asarray(normal, dtype=float)
        n = n / np.linalg.norm(n)
        terms = {(1, 0, 0): n[0], (0, 1, 0): n[1], (0, 0, 1): n[2], (0, 0, 0): -offset}
        return Variety((Polynomial.from_terms({k: v for k, v in terms.items() if v != 0} or {(0, 0, 0): 0.0}),))


@dataclass(frozen=True)
class TangentSpace:
    z: np.ndarray
    basis: np.ndarray


def tangent_space(variety: Variety, z) -> TangentSpace:
    """Orthonormal complement of the defining gradients at the projection of z."""
    z = np.asarray(z, dtype=float)
    zp = variety.project(z)[0]
    if np.linalg.norm(zp - z) > 1e-3:
        raise DomainError("point is not within 1e-3 of the zero set")
    J = np.stack([p.gradient(zp) for p in variety.polys])
    scale = max(float(np.linalg.norm(J, axis=1).max()), 1e-300)
    if wedge_norm(J / scale) < 1e-8 or scale < 1e-8:
        raise DegeneracyError("defining gradients are dependent at this point")
    _, _, Vt = np.linalg.svd(J)
    return TangentSpace(zp, Vt[len(variety.polys):])


def _angles_to_tangent(variety: Variety, zp: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Angle of v with T_zZ at each zero-set point; pi/2 where the gradients degenerate."""
    J = np.stack([p.gradient(zp) for p in variety.polys], axis=1)  # (n, k, 3)
    scale = np.maximum(np.linalg.norm(J, axis=2).max(axis=1), 1e-300)
    bad = (wedge_norm(J / scale[:, None, None]) < 1e-8) | (scale < 1e-8)
    _, _, Vt = np.linalg.svd(J)
    T = Vt[:, len(variety.polys):, :]
    proj = np.linalg.norm(T @ v, axis=1)
    ang = np.arccos(np.clip(proj / np.linalg.norm(v), 0.0, 1.0))
    return np.where(bad, np.pi / 2, ang)


def angle_to_subspace(v, basis) -> float:
    v = np.asarray(v, dtype=float)
    proj = np.linalg.norm(np.asarray(basis) @ v)
    return float(np.arccos(np.clip(proj / np.linalg.norm(v), 0.0, 1.0)))


@dataclass(frozen=True)
class TangencyScales:
    """Scales tied by rho^(1/2 + delta2) = R^(1/2 + delta), or rho^(1/2 + delta1) = R^(1/2 + delta2)."""

    R: float
    delta: float = 0.1
    delta2: float = 0.15
    delta1: float = 0.2
    variant: str = "tangent"

    def __post_init__(self):
        if self.variant not in ("tangent", "nested"):
            raise DomainError("variant must be 'tangent' or 'nested'")
        lhs, rhs = self._identity()
        if abs(lhs - rhs) > 1e-9 * rhs:
            raise DomainError("scale identity violated")

    @property
    def rho(self) -> float:
        if self.variant == "tangent":
            return self.R ** ((0.5 + self.delta) / (0.5 + self.delta2))
        return self.R ** ((0.5 + self.delta2) / (0.5 + self.delta1))

    def _identity(self):
        if self.variant == "tangent":
            return self.rho ** (0.5 + self.delta2), self.R ** (0.5 + self.delta)
        return self.rho ** (0.5 + self.delta1), self.R ** (0.5 + self.delta2)

    @property
    def wall(self) -> float:
        return self.R ** (0.5 + self.delta)

    @property
    def angle_bound(self) -> float:
        return self.rho ** (-0.5 + self.delta2)


@dataclass
class Classification:
    label: str
    max_distance: float
    max_angle: float
    n_core: int

    def to_dict(self) -> dict:
        return {"label": self.label, "max_distance": self.max_distance, "max_angle": self.max_angle, "n_core": self.n_core}


def core_samples(tube: Tube, n: int = 64) -> np.ndarray:
    t = np.linspace(0.0, tube.tile.R, n)
    c = tube.core(t)
    return np.column_stack([c, t])


def classify_tube(tube: Tube, variety: Variety, ball_center, ball_radius: float, scales: TangencyScales,
                  C: float = 1.0, n: int = 64) -> Classification:
    """Tangent iff the core inside 2B stays within R^(1/2+delta) of Z and
    G(theta) makes angle <= C rho^(-1/2+delta2) with T_zZ at the projected points."""
    pts = core_samples(tube, n)
    inside = np.linalg.norm(pts - np.asarray(ball_center, dtype=float), axis=1) <= 2 * ball_radius
    if not inside.any():
        return Classification("transverse", float("inf"), float("nan"), 0)
    pts = pts[inside]
    proj = variety.project(pts)
    dist = np.linalg.norm(proj - pts, axis=1)
    G = np.asarray(tube.direction, dtype=float)
    angles = _angles_to_tangent(variety, proj, G)
    amax = float(max(angles))
    dmax = float(dist.max())
    ok = dmax <= scales.wall and amax <= C * scales.angle_bound
    return Classification("tangent" if ok else "transverse", dmax, amax, int(inside.sum()))


def angle_triangle(parent_dir, child_dir, tangent_basis) -> tuple:
    """(Angle(child, T), Angle(child, parent) + Angle(parent, T)) for the triangle bound."""
    from .wavepacket import direction_angle

    lhs = angle_to_subspace(child_dir, tangent_basis)
    rhs = direction_angle(child_dir, parent_dir) + angle_to_subspace(parent_dir, tangent_basis)
    return lhs, rhs


# Translates --------------------------------------------------------------------

def ball_volume(r: float) -> float:
    return 4.0 / 3.0 * np.pi * r**3


def _ball_samples(center, radius, n_side=16):
    g = (np.arange(n_side) + 0.5) / n_side * 2 - 1
    X, Y, T = np.meshgrid(g, g, g, indexing="ij")
    u = np.stack([X.ravel(), Y.ravel(), T.ravel()], axis=1)
    u = u[np.linalg.norm(u, axis=1) <= 1]
    return np.asarray(center, dtype=float) + radius * u


@dataclass
class TranslateFamily:
    variety: Variety
    offsets: np.ndarray
    dyadic_class: int
    volumes: List[float]
    classes: List[int]
    selected: List[int]
    coverage: List[float]
    width: float

    def to_dict(self) -> dict:
        return {"dyadic_class": self.dyadic_class, "family_size": int(len(self.offsets)),
                "volumes": self.volumes, "classes": self.classes, "selected": self.selected,
                "coverage": self.coverage, "width": self.width}


def translate_and_pigeonhole(variety: Variety, balls: Sequence[tuple], scales: TangencyScales,
                             rng_seed: int = 0, n_side: int = 16) -> TranslateFamily:
    """Dyadic classes of |B cap N_w(Z)| with w = rho^(1/2+delta2); offsets drawn in B(0, R^(1/2+delta2)).

    Volumes and coverage are node counts on a cubic lattice in each ball.
    """
    w = scales.rho ** (0.5 + scales.delta2)
    vols, classes, samples = [], [], []
    for c, r in balls:
        s = _ball_samples(c, r, n_side)
        frac = float(np.mean(variety.distance(s) <= w))
        v = frac * ball_volume(r)
        vols.append(v)
        classes.append(int(np.floor(np.log2(v))) if v > 0 else -(10**9))
        samples.append(s)
    vals, counts = np.unique(classes, return_counts=True)
    best = int(vals[np.lexsort((vals, counts))[-1]])
    selected = [i for i, k in enumerate(classes) if k == best]
    rb = scales.R ** (0.5 + scales.delta2)
    size = max(int(round(ball_volume(rb) / 2.0**best)), 1) if best > -(10**9) else 0
    rng = np.random.default_rng(rng_seed)
    dirs = rng.standard_normal((size, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    offsets = dirs * (rb * rng.uniform(0, 1, (size, 1)) ** (1 / 3))
    coverage = []
    for i in selected:
        s = samples[i]
        hit = np.zeros(len(s), dtype=bool)
        for b in offsets:
            hit |= variety.distance(s - b) <= w
        coverage.append(float(hit.mean()))
    return TranslateFamily(variety, offsets, best, vols, classes, selected, coverage, w)


def slab_translates_disjoint(normal, offsets, w: float) -> bool:
    """Neighbourhoods N_w of translates of the plane normal.z = 0 are disjoint."""
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    h = np.sort(np.asarray(offsets, dtype=float) @ n)
    return bool(np.all(np.diff(h) > 2 * w))


# Uncertainty principle ----------------------------------------------------------

@dataclass
class CheckReport:
    check_name: str
    params: dict
    measured: float
    bound: float
    passed: bool
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"check_name": self.check_name, "params": self.params, "measured": self.measured,
                "bound": self.bound, "pass": self.passed, **self.extra}


def _disk(grid: GridSpec, radius: float) -> np.ndarray:
    k = int(np.floor(radius / grid.dx))
    i = np.arange(-k, k + 1) * grid.dx
    X, Y = np.meshgrid(i, i, indexing="ij")
    return (X**2 + Y**2 <= radius**2).astype(float)


def _periodic_ball_sums(a: np.ndarray, disk: np.ndarray) -> np.ndarray:
    k = disk.shape[0] // 2
    n = a.shape[0]
    pad = np.pad(a, k, mode="wrap") if k < n else np.tile(a, (3, 3))
    out = fftconvolve(pad, disk, mode="valid")
    return out[:n, :n]


def uncertainty_check(G: SampledField, xi0, r: float, rho: float, C: float = 10.0, stride: int = 1) -> CheckReport:
    """Worst ratio of int_{B_rho}|G|^2 to (|B_rho|/|B_{1/r}|) int_{B_{1/r}}|G|^2 over ball centres.

    Ball measures are grid-point counts, so a constant-modulus G gives
    ratio 1 exactly. Centres run over the grid with ``stride``.
    """
    if rho > 1.0 / r * (1 + 1e-12):
        raise DomainError("need rho <= 1/r")
    F = G.as_frequency()
    kx, ky = F.true_frequencies()
    outside = (kx - xi0[0]) ** 2 + (ky - xi0[1]) ** 2 > r**2 * (1 + 1e-12)
    tot = float(np.sum(np.abs(F.values) ** 2))
    if tot == 0:
        return CheckReport("uncertainty", {"r": r, "rho": rho}, 0.0, C, True, {"vacuous": True})
    if np.sum(np.abs(F.values[outside]) ** 2) > 1e-8 * tot:
        raise ContractError("spectrum leaks outside the declared ball")
    a = np.abs(G.as_physical().values) ** 2
    d_small, d_big = _disk(F.grid, rho), _disk(F.grid, 1.0 / r)
    small = _periodic_ball_sums(a, d_small)[::stride, ::stride]
    big = _periodic_ball_sums(a, d_big)[::stride, ::stride]
    frac = d_small.sum() / d_big.sum()
    ok = big > 1e-300 * a.max()
    ratio = float(np.max(small[ok] / (frac * big[ok])))
    # relative slack for rounding in the constant-modulus case
    return CheckReport("uncertainty", {"r": r, "rho": rho, "C": C}, ratio, C, bool(ratio <= C * (1 + 1e-9)))


def uncertainty_corpus(seed: int = 0, n: int = 256, L: float = 256.0) -> list:
    """Ten band-limited kernels paired with eight (r, rho) choices.

    Returns (name, field, xi0, r, rho) tuples.
    """
    grid = GridSpec(L, n)
    kx, ky = grid.freq_mesh()
    pairs = [(0.5, 1.0), (0.5, 2.0), (0.25, 1.0), (0.25, 2.0), (0.25, 4.0), (0.125, 2.0), (0.125, 4.0), (0.125, 8.0)]
    rng = np.random.default_rng(seed)
    dk = grid.dxi
    out = []
    for r, rho in pairs:
        xi0 = (round(0.3 / dk) * dk, round(-0.2 / dk) * dk)
        dist2 = (kx - xi0[0]) ** 2 + (ky - xi0[1]) ** 2
        ball = dist2 <= r**2
        rad = np.sqrt(dist2) / r
        kernels = {}
        kernels["plane_wave"] = (dist2 == dist2.min()).astype(complex)
        kernels["dirichlet"] = ball.astype(complex)
        kernels["smooth_bump"] = np.where(ball, np.cos(np.pi / 2 * np.minimum(rad, 1)) ** 2, 0).astype(complex)
        kernels["gaussian_taper"] = np.where(ball, np.exp(-4 * rad**2), 0).astype(complex)
        for s in range(3):
            kernels[f"random_{s}"] = np.where(ball, rng.standard_normal(kx.shape) + 1j * rng.standard_normal(kx.shape), 0)
        idx = np.argwhere(ball)
        pick = idx[rng.choice(len(idx), 2, replace=False)]
        two = np.zeros(kx.shape, complex)
        two[tuple(pick[0])] = 1.0
        two[tuple(pick[1])] = 0.7j
        kernels["two_waves"] = two
        kernels["edge_ring"] = np.where(ball & (rad >= 0.7), 1.0, 0).astype(complex)
        kernels["chirp_phase"] = np.where(ball, np.exp(1j * 40 * rad**2), 0)
        for name, spec in kernels.items():
            out.append((name, SampledField(grid, spec, "frequency"), xi0, r, rho))
    return out


# Localised mass of evolved data -------------------------------------------------

def _time_nodes(lo: float, hi: float, n: int):
    ts = np.linspace(lo, hi, n)
    w = np.full(n, (hi - lo) / (n - 1))
    w[[0, -1]] *= 0.5
    return ts, w


def space_time_masses(f: SampledField, times, weights, masks_fn, cutoffs: TimeCutoffs, curve: CurveParams) -> np.ndarray:
    """sum over times of w psi2^2 int_{mask} |e^{itH} f|^2 dx for each mask from masks_fn(X, Y, t)."""
    F = f.as_frequency()
    grid = F.grid
    kx, ky = F.true_frequencies()
    X, Y = grid.mesh()
    acc = None
    for t, wt in zip(times, weights):
        p2 = float(cutoffs.psi2(t)) ** 2
        if p2 == 0:
            continue
        u2 = np.abs(synthesize(grid, F.values * np.exp(1j * _phase(kx, ky, t, curve)))) ** 2
        m = np.array([u2[mk].sum() for mk in masks_fn(X, Y, t)]) * grid.dx**2 * wt * p2
        acc = m if acc is None else acc + m
    return acc


def _periodic(d, L):
    return d - L * np.round(d / L)


@dataclass
class EquidistributionReport:
    rhos: List[float]
    ratios: List[float]
    slope: float
    threshold: float
    passed: bool
    vacuous: bool = False

    def to_dict(self) -> dict:
        return {"check_name": "equidistribution", "rho": self.rhos, "ratio": self.ratios,
                "slope": self.slope, "bound": self.threshold, "pass": self.passed, "vacuous": self.vacuous}

    def csv_rows(self) -> list:
        return [(r, q) for r, q in zip(self.rhos, self.ratios)]


def tangent_plane_datum(R: float, grid: GridSpec, t0: float, n_packets: int = 12, seed: int = 0,
                        curve: CurveParams = CurveParams((0.0, 1.0))) -> tuple:
    """Sum of packets with c(theta)_1 = 0, |c(theta)_2| <= 1/2 and nu_1 = 0 whose tubes pass
    x_2 = 0 at time t0; all tangent to the plane {x_1 = 0}. Returns (field, tiles)."""
    rng = np.random.default_rng(seed)
    s = R**-0.5
    spec = np.zeros((grid.n, grid.n), dtype=complex)
    tiles = []
    for k in range(n_packets):
        c2 = float(rng.uniform(-0.5, 0.5))
        c2 = round(c2 / (grid.dxi)) * grid.dxi
        nu2 = 2 * t0 * c2 + float(rng.uniform(-0.5, 0.5)) * R**0.5 - np.sqrt(t0) * curve.mu[1]
        tile = Tile((0.0, c2), (0.0, nu2), R)
        tiles.append(tile)
        spec += np.exp(2j * np.pi * rng.uniform()) * packet_spectrum(tile, grid)
    f = SampledField(grid, spec, "frequency")
    return f.scale(1.0 / l2_norm(f)), tiles


def equidistribution_check(f: SampledField, normal_axis: int, R: float, ball_radius: float, t0: float,
                           rhos: Sequence[float], delta2: float = 0.15, n_times: int = 97,
                           curve: CurveParams = CurveParams((0.0, 1.0)), eps: float = 0.1,
                           threshold: float = -0.4) -> EquidistributionReport:
    """Mass share of B cap N_{rho^(1/2+delta2)}(Z) in 2B for Z = {x_axis = 0}, B centred at (0, t0).

    The slope of log ratio against log(R / rho) is fitted by least squares.
    """
    if l2_norm(f) == 0:
        return EquidistributionReport(list(rhos), [], 0.0, threshold, True, True)
    L = f.grid.side_length
    widths = [rho ** (0.5 + delta2) for rho in rhos]
    ts, w = _time_nodes(t0 - 2 * ball_radius, t0 + 2 * ball_radius, n_times)

    def masks(X, Y, t):
        r2 = _periodic(X, L) ** 2 + _periodic(Y, L) ** 2 + (t - t0) ** 2
        in_b = r2 <= ball_radius**2
        coord = _periodic(X if normal_axis == 0 else Y, L)
        return [r2 <= (2 * ball_radius) ** 2] + [in_b & (np.abs(coord) <= wd) for wd in widths]

    m = space_time_masses(f, ts, w, masks, TimeCutoffs(R, eps), curve)
    ratios = [float(v / m[0]) for v in m[1:]]
    x = np.log(R / np.asarray(rhos, dtype=float))
    y = np.log(np.maximum(ratios, 1e-300))
    slope = float(np.polyfit(x, y, 1)[0])
    return EquidistributionReport([float(r) for r in rhos], ratios, slope, threshold, bool(slope <= threshold))


def packet_ball_mass_check(f: SampledField, tiles: Sequence[Tile], z, t0: float, r: float, R: float,
                           n_times: int = 257, curve: CurveParams = CurveParams(), eps: float = 0.1,
                           delta: float = 0.1) -> CheckReport:
    """r/2 <= int_{B((z, t0), 10 r)} |e^{itH} f psi2|^2 / ||f||^2 <= 20 r.

    Every tile's tube core must pass within r of (z, t0).
    """
    norm2 = l2_norm(f) ** 2
    params = {"r": r, "R": R, "t0": t0}
    if norm2 == 0:
        return CheckReport("packet_ball_mass", params, 0.0, 20 * r, True, {"vacuous": True, "lower": r / 2})
    cen = np.array([z[0], z[1], t0], dtype=float)
    for tile in tiles:
        pts = core_samples(Tube(tile, delta), 512)
        if np.linalg.norm(pts - cen, axis=1).min() > r:
            raise ContractError("a contributing tube misses B(z, r)")
    L = f.grid.side_length
    cut = TimeCutoffs(R, eps)
    lo = max(t0 - 10 * r, cut.split - cut.width)
    hi = min(t0 + 10 * r, R + cut.width)
    ts, w = _time_nodes(lo, hi, n_times)

    def masks(X, Y, t):
        r2 = _periodic(X - z[0], L) ** 2 + _periodic(Y - z[1], L) ** 2 + (t - t0) ** 2
        return [r2 <= (10 * r) ** 2]

    m = space_time_masses(f, ts, w, masks, cut, curve)
    ratio = float(m[0] / norm2)
    ok = r / 2 <= ratio <= 20 * r
    return CheckReport("packet_ball_mass", params, ratio, 20 * r, bool(ok), {"lower": r / 2, "mass": float(m[0])})
