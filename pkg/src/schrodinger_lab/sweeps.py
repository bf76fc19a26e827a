"""Exponent sweeps for the maximal estimate and the rescaling bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .errors import ContractError, DomainError
from .field_core import (
    Ball,
    FrequencySupport,
    GridSpec,
    SampledField,
    l2_norm,
    lp_norm_on_region,
    sobolev_norm,
)
from .propagator import (
    CurveParams,
    TimeWindow,
    evolve_at,
    maximal_function,
    parabolic_rescale,
    counterexample_datum,
)


@dataclass
class SweepConfig:
    R_list: List[float] = field(default_factory=lambda: [16.0, 32.0, 64.0, 128.0])
    lambda_list: List[float] = field(default_factory=lambda: [16.0, 32.0, 64.0, 128.0, 256.0])
    p: float = 3.2
    s: float = 0.0
    family: str = "random_bandlimited"
    seed: int = 0
    out: Optional[str] = None

    def __post_init__(self):
        if self.family not in ("random_bandlimited", "counterexample", "single_packet", "cap_sum"):
            raise DomainError(f"unknown data family {self.family!r}")


@dataclass
class ExponentFit:
    samples: List[tuple]
    slope: float
    intercept: float
    residual: float

    @staticmethod
    def fit(scales: Sequence[float], values: Sequence[float]) -> "ExponentFit":
        x = np.log(np.asarray(scales, dtype=float))
        y = np.log(np.asarray(values, dtype=float))
        if len(x) < 2:
            raise DomainError("need at least two samples to fit")
        slope, icpt = np.polyfit(x, y, 1)
        res = float(np.sqrt(np.mean((y - (slope * x + icpt)) ** 2)))
        return ExponentFit([(float(a), float(b)) for a, b in zip(x, y)], float(slope), float(icpt), res)

    def pairwise(self) -> List[float]:
        s = self.samples
        return [(s[i + 1][1] - s[i][1]) / (s[i + 1][0] - s[i][0]) for i in range(len(s) - 1)]

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "residual": self.residual,
                "samples": [list(p) for p in self.samples], "pairwise": self.pairwise()}


def maximal_ratio(f: SampledField, p: float, s: float, window: TimeWindow, curve: CurveParams = CurveParams()) -> float:
    """||sup_t |e^{itH} f| ||_{L^p(B(0,1))} / ||f||_{H^s}."""
    den = sobolev_norm(f, s)
    if den == 0:
        raise ContractError("zero datum")
    M = maximal_function(f, window, curve)
    return lp_norm_on_region(M, p, Ball((0.0, 0.0), 1.0)) / den


def counterexample_exponent(p: float) -> float:
    """Growth exponent 1 - 1/(2p) - 1/2 of the counterexample ratio."""
    return 1.0 - 1.0 / (2.0 * p) - 0.5


def counterexample_window(lam: float) -> TimeWindow:
    return TimeWindow.dyadic(2.0 / lam, 10, 64)


def counterexample_sweep(lambda_list: Sequence[float], p: float = 3.2, s: float = 0.0,
                  curve: CurveParams = CurveParams(), amplitude: float = 1.0) -> ExponentFit:
    """Fit log maximal_ratio against log lambda for the counterexample data."""
    lams = [float(l) for l in lambda_list]
    if len(lams) < 2:
        raise DomainError("need at least two lambda values")
    ratios = []
    for lam in lams:
        f = counterexample_datum(lam, curve)
        if amplitude != 1.0:
            f = f.scale(amplitude)
        ratios.append(maximal_ratio(f, p, s, counterexample_window(lam), curve))
    return ExponentFit.fit(lams, ratios)


def band_grid(R: float, side: float = 8.0) -> GridSpec:
    """Box of the given side whose Nyquist frequency covers |xi| <= 2R."""
    n = 32
    while np.pi * n / side < 2.2 * R:
        n *= 2
    return GridSpec(side, n)


def annulus_datum(R: float, rng: np.random.Generator, grid: Optional[GridSpec] = None) -> SampledField:
    """Unit-mass random phases on the lattice points of {R/2 <= |xi| <= 2R}."""
    grid = band_grid(R) if grid is None else grid
    kx, ky = grid.freq_mesh()
    sup = FrequencySupport.annulus(R)
    mask = sup.contains(kx, ky)
    vals = np.zeros(kx.shape, dtype=complex)
    vals[mask] = np.exp(2j * np.pi * rng.uniform(size=int(mask.sum())))
    f = SampledField(grid, vals, "frequency", sup)
    return f.scale(1.0 / l2_norm(f))


@dataclass
class MaximalSweepReport:
    p: float
    fit: ExponentFit
    reference: float
    ratios: List[float]
    scales: List[float]

    def to_dict(self) -> dict:
        return {"p": self.p, "fit": self.fit.to_dict(), "reference_exponent": self.reference,
                "scales": self.scales, "ratios": self.ratios, "gated": False}


def maximal_sweep(R_list: Sequence[float], p: float, seed: int = 0, samples_per_R: int = 8,
                  curve: CurveParams = CurveParams()) -> MaximalSweepReport:
    """Descriptive growth of ||sup_{0<t<=1}|e^{itH} f| ||_{L^p(B(0,1))} / ||f||_2 for annulus data at scale R.

    The evolution runs on a periodic box of side 8, and the sup uses
    ``samples_per_R * R`` linear times. The slope is set beside 2/p - 5/8.
    Nothing is gated on it.
    """
    rng = np.random.default_rng(seed)
    ratios = []
    for R in R_list:
        f = annulus_datum(R, rng)
        win = TimeWindow(0.0, 1.0, int(samples_per_R * R) + 1, "linear")
        ratios.append(maximal_ratio(f, p, 0.0, win, curve))
    fit = ExponentFit.fit(R_list, ratios)
    return MaximalSweepReport(p, fit, 2.0 / p - 5.0 / 8.0, [float(r) for r in ratios], [float(r) for r in R_list])


@dataclass
class ChainReport:
    R: float
    rescale_rel_error: float
    norm_rel_error: float
    threshold: float
    series_partial_sums: List[float]
    passed: bool

    def to_dict(self) -> dict:
        return {"R": self.R, "rescale_rel_error": self.rescale_rel_error, "norm_rel_error": self.norm_rel_error,
                "s_threshold": self.threshold, "series_partial_sums": self.series_partial_sums, "pass": self.passed}


def threshold_exponent(p: float, eps: float = 0.0) -> float:
    """s* = 1 - 2/p + 2 eps, above which sum_k 2^{k(1 - 2/p + 2 eps)} 2^{-ks} converges."""
    return 1.0 - 2.0 / p + 2.0 * eps


def rescaling_errors(g: SampledField, R: float, rng: np.random.Generator, n_points: int = 20,
                     curve: CurveParams = CurveParams()) -> tuple:
    """Max relative mismatch of e^{itH}g(Ry) against R^-2 e^{isH}g1(y) at random matched
    points, and relative error of ||g||_2 = R^-1 ||g1||_2."""
    g1 = parabolic_rescale(g, R)
    errs = []
    for _ in range(n_points):
        y = rng.uniform(-0.5, 0.5, 2) * g1.grid.side_length * 0.5
        s = float(rng.uniform(0, 1.0 / R**2))
        lhs = evolve_at(g, [R * y], R**2 * s, curve)[0]
        rhs = evolve_at(g1, [y], s, curve)[0] / R**2
        errs.append(abs(lhs - rhs) / max(abs(lhs), 1e-300))
    n0, n1 = l2_norm(g), l2_norm(g1)
    return float(max(errs)), float(abs(n0 - n1 / R) / n0)


def reduction_chain_check(g: SampledField, R: float, p: float = 3.2, s: float = 0.4, eps: float = 0.0,
                          seed: int = 0, curve: CurveParams = CurveParams(), tol: float = 1e-6) -> ChainReport:
    """Rescaling and norm identities for annulus data, plus the geometric series bookkeeping."""
    if g.support is None or g.support.kind != "annulus" or g.support.scale != 1:
        raise ContractError("datum must declare the unit annulus support")
    rng = np.random.default_rng(seed)
    e1, e2 = rescaling_errors(g, R, rng, curve=curve)
    th = threshold_exponent(p, eps)
    ks = np.arange(1, 41)
    partial = np.cumsum(2.0 ** (ks * (th - s)))
    sums = [float(partial[i]) for i in (9, 19, 39)]
    ok = e1 <= tol and e2 <= tol
    return ChainReport(float(R), e1, e2, th, sums, bool(ok))
