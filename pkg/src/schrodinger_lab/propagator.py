"""Curve-shifted Schrodinger evolution, maximal functions and the basic identities.

The evolution of a field f along the curve x - sqrt(t) mu is

    e^{itH} f(x) = (2 pi)^-1 int exp(i (x.xi - sqrt(t) mu.xi + t |xi|^2)) f_hat(xi) dxi,

evaluated on the grid by one inverse FFT per time, or pointwise by direct
summation over the nonzero spectrum.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate

from .bumps import exp_bump, smoothstep
from .errors import ContractError, DomainError, RangeError
from .field_core import (
    FrequencySupport,
    GridSpec,
    SampledField,
    l2_norm,
    synthesize,
)


@dataclass(frozen=True)
class CurveParams:
    """Unit direction mu of the square-root curve."""

    mu: tuple = (1.0, 0.0)

    def __post_init__(self):
        m = np.asarray(self.mu, dtype=float)
        if m.shape != (2,) or abs(np.hypot(*m) - 1.0) > 1e-12:
            raise DomainError("mu must be a unit vector in R^2")
        object.__setattr__(self, "mu", (float(m[0]), float(m[1])))

    def reflected(self) -> "CurveParams":
        return CurveParams((-self.mu[0], -self.mu[1]))


@dataclass(frozen=True)
class TimeWindow:
    """Sampled time interval [t_min, t_max] with linear or geometric spacing."""

    t_min: float
    t_max: float
    samples: int
    spacing: str = "geometric"

    def __post_init__(self):
        if not (0 <= self.t_min < self.t_max):
            raise DomainError("need 0 <= t_min < t_max")
        if self.samples < 2:
            raise DomainError("need at least two samples")
        if self.spacing not in ("geometric", "linear"):
            raise DomainError("spacing must be 'geometric' or 'linear'")
        if self.spacing == "geometric" and self.t_min <= 0:
            raise DomainError("geometric spacing needs t_min > 0")

    @staticmethod
    def dyadic(t_max: float, blocks: int = 10, per_block: int = 64) -> "TimeWindow":
        """Geometric grid on [t_max 2^-blocks, t_max] with ``per_block`` steps per octave."""
        return TimeWindow(t_max * 2.0**-blocks, t_max, blocks * per_block + 1, "geometric")

    def times(self) -> np.ndarray:
        if self.spacing == "geometric":
            return np.geomspace(self.t_min, self.t_max, self.samples)
        return np.linspace(self.t_min, self.t_max, self.samples)

    def refined(self) -> "TimeWindow":
        """Window whose sample set contains this one's."""
        return TimeWindow(self.t_min, self.t_max, 2 * self.samples - 1, self.spacing)


@dataclass(frozen=True)
class TimeCutoffs:
    """Plateau cutoffs in physical time at scale R.

    psi1 is 1 on [0, R^eps] and psi2 is 1 on [R^eps, R]; both fall to zero
    through a quintic smoothstep over a width ``width_frac * R^eps``.
    """

    R: float
    eps: float = 0.1
    width_frac: float = 0.05

    @property
    def split(self) -> float:
        return self.R**self.eps

    @property
    def width(self) -> float:
        return self.width_frac * self.split

    def _up(self, t, a):
        return smoothstep((np.asarray(t, dtype=float) - (a - self.width)) / self.width, 5)

    def _down(self, t, b):
        return 1.0 - smoothstep((np.asarray(t, dtype=float) - b) / self.width, 5)

    def psi1(self, t):
        return self._up(t, 0.0) * self._down(t, self.split)

    def psi2(self, t):
        return self._up(t, self.split) * self._down(t, self.R)


def curve_position(x, t: float, curve: CurveParams) -> np.ndarray:
    """Point x - sqrt(t) mu."""
    if t < 0:
        raise DomainError("time must be nonnegative")
    return np.asarray(x, dtype=float) - np.sqrt(t) * np.asarray(curve.mu)


def _phase(kx, ky, t: float, curve: CurveParams):
    return -np.sqrt(t) * (curve.mu[0] * kx + curve.mu[1] * ky) + t * (kx**2 + ky**2)


def evolution_multiplier(f: SampledField, t: float, curve: CurveParams) -> np.ndarray:
    kx, ky = f.true_frequencies()
    return np.exp(1j * _phase(kx, ky, t, curve))


def evolve(f: SampledField, t: float, curve: CurveParams) -> SampledField:
    """Physical samples of e^{itH} f (the envelope, when f has a carrier)."""
    if t < 0:
        raise DomainError("time must be nonnegative")
    F = f.as_frequency()
    vals = synthesize(F.grid, F.values * evolution_multiplier(F, t, curve))
    return SampledField(F.grid, vals, "physical", F.support, F.carrier)


def evolve_many(f: SampledField, times, curve: CurveParams, points: Optional[tuple] = None) -> np.ndarray:
    """Stack of evolved physical samples for each time.

    ``points`` optionally selects grid indices ``(ix, iy)`` to keep, which
    bounds memory for long time lists.
    """
    F = f.as_frequency()
    kx, ky = F.true_frequencies()
    out = []
    for t in np.asarray(times, dtype=float):
        if t < 0:
            raise DomainError("time must be nonnegative")
        u = synthesize(F.grid, F.values * np.exp(1j * _phase(kx, ky, t, curve)))
        out.append(u if points is None else u[points])
    return np.array(out)


def evolve_at(f: SampledField, points, t: float, curve: CurveParams, chunk: int = 4096) -> np.ndarray:
    """True value of e^{itH} f at arbitrary physical points by direct summation."""
    if t < 0:
        raise DomainError("time must be nonnegative")
    F = f.as_frequency()
    kx, ky = F.true_frequencies()
    nz = F.values != 0
    kx, ky, v = kx[nz], ky[nz], F.values[nz]
    w = v * np.exp(1j * _phase(kx, ky, t, curve)) * F.grid.dxi**2 / (2 * np.pi)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty(len(pts), dtype=complex)
    for s in range(0, len(pts), chunk):
        p = pts[s:s + chunk]
        out[s:s + chunk] = np.exp(1j * (np.outer(p[:, 0], kx) + np.outer(p[:, 1], ky))) @ w
    return out


def maximal_function(f: SampledField, window: TimeWindow, curve: CurveParams) -> SampledField:
    """Pointwise max over the window's time samples of |e^{itH} f|."""
    if window.samples < 16:
        raise DomainError("maximal_function needs at least 16 time samples")
    F = f.as_frequency()
    kx, ky = F.true_frequencies()
    best = np.zeros((F.grid.n, F.grid.n))
    for t in window.times():
        u = synthesize(F.grid, F.values * np.exp(1j * _phase(kx, ky, t, curve)))
        np.maximum(best, np.abs(u), out=best)
    return SampledField(F.grid, best, "physical", F.support, F.carrier)


@dataclass(frozen=True)
class BoundReport:
    lhs: float
    rhs: float
    ratio: float
    passed: bool
    analytic_sup: float
    n: int
    side_length: float

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "ratio": self.ratio, "pass": self.passed,
                "analytic_sup": self.analytic_sup, "grid": {"N": self.n, "L": self.side_length}}


def base_bound_check(f: SampledField, times=None, curve: CurveParams = CurveParams(), c0: float = np.sqrt(np.pi)) -> BoundReport:
    """Check sup_{x,t} |e^{itH} f| <= c0 M^-1 ||f||_2 for a ball-supported datum.

    The sup is taken over the grid and ``times`` (default: 33 linear samples
    of [0, 1] plus the t = 0 slice). ``analytic_sup`` is the quadrature of
    (2 pi)^-1 int |f_hat|, an upper bound for every (x, t).
    """
    if f.support is None or f.support.kind != "ball":
        raise ContractError("base_bound_check needs a declared ball support")
    F = f.as_frequency()
    kx, ky = F.true_frequencies()
    if np.any((F.values != 0) & ~f.support.contains(kx, ky)):
        raise ContractError("spectrum escapes the declared ball")
    radius = f.support.radius
    norm = l2_norm(F)
    ts = np.linspace(0.0, 1.0, 33) if times is None else np.asarray(times, dtype=float)
    lhs = 0.0
    for t in ts:
        lhs = max(lhs, float(np.abs(evolve(F, t, curve).values).max()))
    rhs = c0 * radius * norm
    analytic = float(np.sum(np.abs(F.values)) * F.grid.dxi**2 / (2 * np.pi))
    ratio = lhs / (radius * norm) if norm > 0 else 0.0
    return BoundReport(lhs, rhs, ratio, bool(lhs <= rhs * (1 + 1e-12)), analytic, F.grid.n, F.grid.side_length)


def parabolic_rescale(g: SampledField, R: float, max_frequency: Optional[float] = None) -> SampledField:
    """Field g1 with g1_hat(eta) = g_hat(eta / R), on the grid shrunk by R.

    Matched points satisfy e^{itH} g(R y) = R^-2 e^{isH} g1(y) with t = R^2 s,
    and ||g1||_2 = R ||g||_2. ``max_frequency`` bounds the rescaled support.
    """
    if R < 1:
        raise DomainError("rescaling factor must be >= 1")
    F = g.as_frequency()
    if max_frequency is not None:
        kx, ky = F.true_frequencies()
        nz = F.values != 0
        top = float(np.hypot(kx[nz], ky[nz]).max()) if nz.any() else 0.0
        if R * top > max_frequency:
            raise RangeError(f"rescaled support radius {R * top} exceeds {max_frequency}")
    support = None
    if F.support is not None and F.support.kind == "annulus":
        support = FrequencySupport.annulus(F.support.scale * R)
    grid = F.grid.scaled(R)
    return SampledField(grid, F.values.copy(), "frequency", support, (F.carrier[0] * R, F.carrier[1] * R))


def counterexample_bump_norm() -> float:
    """L^2 norm of the fixed bump exp(1 - 1/(1 - |u|^2)) on the unit disk."""
    val, _ = integrate.quad(lambda r: np.exp(2.0 - 2.0 / (1.0 - r * r)) * r if r < 1 else 0.0, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13)
    return float(np.sqrt(2 * np.pi * val))


def counterexample_grid(lam: float, n: int = 512) -> GridSpec:
    """Baseband grid for the counterexample datum at frequency scale ``lam``.

    Spatial step lam^-1/2 / 4 resolves the concentration strip; the box side
    128 lam^-1/2 (for n = 512) keeps the travelled distance well inside it.
    """
    return GridSpec(n * 0.25 / np.sqrt(lam), n)


def counterexample_datum(lam: float, curve: CurveParams = CurveParams(), grid: Optional[GridSpec] = None) -> SampledField:
    """Datum with f_hat(xi) = psi((xi - lam mu) / lam^(1/2)) for the exp bump psi.

    Stored in baseband: the carrier is lam mu, so the grid only needs to
    resolve frequencies of size lam^(1/2).
    """
    if lam < 4:
        raise RangeError("lambda must be >= 4")
    grid = counterexample_grid(lam) if grid is None else grid
    if np.sqrt(lam) > grid.frequency_extent:
        raise RangeError("bump radius lambda^(1/2) exceeds the grid frequency range")
    kx, ky = grid.freq_mesh()
    vals = exp_bump(np.stack([kx, ky], axis=-1) / np.sqrt(lam))
    carrier = (lam * curve.mu[0], lam * curve.mu[1])
    return SampledField(grid, vals, "frequency", None, carrier)
