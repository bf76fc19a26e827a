"""Sampled complex fields on a periodic square box and their Fourier transforms.

Conventions
-----------
The continuous transform is the unitary one,

    f_hat(xi) = (2 pi)^-1 int exp(-i x.xi) f(x) dx,
    f(x)      = (2 pi)^-1 int exp( i x.xi) f_hat(xi) dxi,

so ``||f||_2 == ||f_hat||_2``. A box of side L carries N x N samples at
``x_j = -L/2 + j L/N``; frequencies live on the lattice ``2 pi k / L`` and are
stored in FFT order. A field may carry a ``carrier`` frequency c: the stored
spectrum V represents ``f_hat(xi) = V(xi - c)`` and the stored physical samples
are the envelope ``exp(-i x.c) f(x)``. Moduli, L^2 norms and L^p norms are
unaffected by the carrier; frequency weights use the true frequency.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
import scipy.fft as sfft

from .bumps import lp_profile
from .errors import ContractError, DomainError, InvalidGridError

_FFT_WORKERS = 1


def set_fft_workers(n: int) -> None:
    """Set the worker count used by every FFT in the package."""
    global _FFT_WORKERS
    _FFT_WORKERS = max(1, int(n))


def fft_workers() -> int:
    return _FFT_WORKERS


def fft2(a, axes=(-2, -1)):
    return sfft.fft2(a, axes=axes, workers=_FFT_WORKERS)


def ifft2(a, axes=(-2, -1)):
    return sfft.ifft2(a, axes=axes, workers=_FFT_WORKERS)


@dataclass(frozen=True)
class GridSpec:
    """Periodic square grid.

    Parameters
    ----------
    side_length : float
        Physical box side L.
    points_per_side : int
        Sample count N per axis, a power of two, at least 32.
    frequency_extent : float, optional
        Largest |xi| the grid is declared to represent. Defaults to the
        Nyquist frequency pi N / L and may not exceed it.
    """

    side_length: float
    points_per_side: int
    frequency_extent: Optional[float] = None

    def __post_init__(self):
        n = int(self.points_per_side)
        if n != self.points_per_side or n < 32 or n & (n - 1):
            raise InvalidGridError(f"points_per_side must be a power of two >= 32, got {self.points_per_side}")
        if not self.side_length > 0:
            raise InvalidGridError("side_length must be positive")
        nyq = np.pi * n / self.side_length
        if self.frequency_extent is None:
            object.__setattr__(self, "frequency_extent", float(nyq))
        elif self.frequency_extent > nyq * (1 + 1e-12) or self.frequency_extent <= 0:
            raise InvalidGridError(f"frequency_extent {self.frequency_extent} exceeds Nyquist {nyq}")

    @property
    def n(self) -> int:
        return self.points_per_side

    @property
    def dx(self) -> float:
        return self.side_length / self.points_per_side

    @property
    def dxi(self) -> float:
        return 2 * np.pi / self.side_length

    @property
    def nyquist(self) -> float:
        return np.pi * self.points_per_side / self.side_length

    def coords(self) -> np.ndarray:
        return -0.5 * self.side_length + self.dx * np.arange(self.n)

    def mesh(self):
        x = self.coords()
        return np.meshgrid(x, x, indexing="ij")

    def frequencies(self) -> np.ndarray:
        return 2 * np.pi * sfft.fftfreq(self.n, d=self.dx)

    def freq_mesh(self):
        k = self.frequencies()
        return np.meshgrid(k, k, indexing="ij")

    def scaled(self, factor: float) -> "GridSpec":
        """Grid with side L / factor; frequencies are multiplied by ``factor``."""
        return GridSpec(self.side_length / factor, self.n, self.frequency_extent * factor)


@dataclass(frozen=True)
class Ball:
    """Closed Euclidean ball in the plane (physical or frequency side)."""

    center: tuple
    radius: float

    def contains(self, px, py):
        return (px - self.center[0]) ** 2 + (py - self.center[1]) ** 2 <= self.radius**2


@dataclass(frozen=True)
class Cube:
    """Half-open axis-parallel square [c - s/2, c + s/2)^2."""

    center: tuple
    side: float

    def contains(self, px, py):
        h = 0.5 * self.side
        cx, cy = self.center
        return (px >= cx - h) & (px < cx + h) & (py >= cy - h) & (py < cy + h)


@dataclass(frozen=True)
class FrequencySupport:
    """Declared frequency support.

    ``kind`` is one of ``"ball"`` (center, radius in (0, 1]), ``"annulus"``
    ({scale/2 <= |xi| <= 2 scale}, scale >= 1) or ``"unit_ball"``.
    """

    kind: str
    center: tuple = (0.0, 0.0)
    radius: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind == "ball":
            if not 0 < self.radius <= 1:
                raise DomainError("ball support radius must lie in (0, 1]")
        elif self.kind == "annulus":
            if self.scale < 1:
                raise DomainError("annulus scale must be >= 1")
        elif self.kind != "unit_ball":
            raise DomainError(f"unknown support kind {self.kind!r}")

    @staticmethod
    def ball(center, radius) -> "FrequencySupport":
        return FrequencySupport("ball", center=(float(center[0]), float(center[1])), radius=float(radius))

    @staticmethod
    def annulus(scale) -> "FrequencySupport":
        return FrequencySupport("annulus", scale=float(scale))

    @staticmethod
    def unit_ball() -> "FrequencySupport":
        return FrequencySupport("unit_ball")

    def contains(self, kx, ky):
        if self.kind == "ball":
            return (kx - self.center[0]) ** 2 + (ky - self.center[1]) ** 2 <= self.radius**2
        r = np.hypot(kx, ky)
        if self.kind == "annulus":
            return (r >= 0.5 * self.scale) & (r <= 2.0 * self.scale)
        return r <= 1.0

    def bounding_radius(self) -> float:
        if self.kind == "ball":
            return float(np.hypot(*self.center) + self.radius)
        if self.kind == "annulus":
            return 2.0 * self.scale
        return 1.0


@dataclass(frozen=True)
class SampledField:
    """Immutable complex samples on a grid, on one side of the transform."""

    grid: GridSpec
    values: np.ndarray
    side: str = "physical"
    support: Optional[FrequencySupport] = None
    carrier: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.side not in ("physical", "frequency"):
            raise DomainError(f"side must be 'physical' or 'frequency', got {self.side!r}")
        v = np.array(self.values, dtype=complex)
        if v.shape != (self.grid.n, self.grid.n):
            raise InvalidGridError(f"values shape {v.shape} does not match grid {self.grid.n}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "carrier", (float(self.carrier[0]), float(self.carrier[1])))

    def with_values(self, values, side: Optional[str] = None) -> "SampledField":
        return SampledField(self.grid, values, side or self.side, self.support, self.carrier)

    def as_frequency(self) -> "SampledField":
        return self if self.side == "frequency" else forward_transform(self)

    def as_physical(self) -> "SampledField":
        return self if self.side == "physical" else inverse_transform(self)

    def true_frequencies(self):
        kx, ky = self.grid.freq_mesh()
        return kx + self.carrier[0], ky + self.carrier[1]

    def __add__(self, other: "SampledField") -> "SampledField":
        _check_compatible(self, other)
        b = other if other.side == self.side else (other.as_physical() if self.side == "physical" else other.as_frequency())
        return self.with_values(self.values + b.values)

    def scale(self, a: complex) -> "SampledField":
        return self.with_values(a * self.values)


def _check_compatible(a: SampledField, b: SampledField) -> None:
    if a.grid.n != b.grid.n or not np.isclose(a.grid.side_length, b.grid.side_length, rtol=1e-14, atol=0):
        raise InvalidGridError("fields live on different grids")
    if a.carrier != b.carrier:
        raise InvalidGridError("fields have different carriers")


def _shift_phase(grid: GridSpec) -> np.ndarray:
    # exp(-i x_0 xi_k) with x_0 = -L/2, separable in the two axes
    k = grid.frequencies()
    p = np.exp(0.5j * grid.side_length * k)
    return np.outer(p, p)


def forward_transform(f: SampledField) -> SampledField:
    """Unitary transform physical -> frequency (FFT order)."""
    if f.side != "physical":
        raise InvalidGridError("forward_transform expects a physical-side field")
    g = f.grid
    spec = fft2(f.values) * _shift_phase(g) * (g.dx**2 / (2 * np.pi))
    return SampledField(g, spec, "frequency", f.support, f.carrier)


def inverse_transform(F: SampledField) -> SampledField:
    """Unitary transform frequency -> physical; inverse of :func:`forward_transform`."""
    if F.side != "frequency":
        raise InvalidGridError("inverse_transform expects a frequency-side field")
    g = F.grid
    phys = ifft2(F.values * np.conj(_shift_phase(g))) * (g.n**2 * g.dxi**2 / (2 * np.pi))
    return SampledField(g, phys, "physical", F.support, F.carrier)


def synthesize(grid: GridSpec, spectrum: np.ndarray) -> np.ndarray:
    """Physical samples of the field with frequency samples ``spectrum``."""
    return ifft2(spectrum * np.conj(_shift_phase(grid))) * (grid.n**2 * grid.dxi**2 / (2 * np.pi))


def l2_norm(f: SampledField) -> float:
    """L^2 norm by the Riemann sum on whichever side the field is stored."""
    h2 = f.grid.dx**2 if f.side == "physical" else f.grid.dxi**2
    return float(np.sqrt(np.sum(np.abs(f.values) ** 2) * h2))


def sobolev_norm(f: SampledField, s: float) -> float:
    """(sum (1 + |xi|^2)^s |f_hat(xi)|^2 dxi^2)^(1/2) over grid frequencies, s in [-2, 2]."""
    if not -2 <= s <= 2:
        raise DomainError("sobolev exponent must lie in [-2, 2]")
    F = f.as_frequency()
    kx, ky = F.true_frequencies()
    w = (1.0 + kx**2 + ky**2) ** s
    return float(np.sqrt(np.sum(w * np.abs(F.values) ** 2) * F.grid.dxi**2))


def region_mask(grid: GridSpec, region: Ball) -> np.ndarray:
    X, Y = grid.mesh()
    return region.contains(X, Y)


def lp_norm_on_region(f: SampledField, p: float, region: Ball) -> float:
    """Riemann-sum L^p norm of |f| over a physical ball; p in [1, 16] or inf."""
    if not (p == np.inf or 1 <= p <= 16):
        raise DomainError("p must lie in [1, 16] or be infinite")
    phys = f.as_physical()
    mask = region_mask(f.grid, region)
    if not mask.any():
        return 0.0
    a = np.abs(phys.values[mask])
    if p == np.inf:
        return float(a.max())
    return float((np.sum(a**p) * f.grid.dx**2) ** (1.0 / p))


def littlewood_paley_weight(kx, ky, k: int) -> np.ndarray:
    """Smooth multiplier of the k-th piece; the weights over k >= 0 sum to 1."""
    r = np.hypot(kx, ky)
    if k < 0:
        raise DomainError("Littlewood-Paley index must be nonnegative")
    if k == 0:
        return lp_profile(r)
    return lp_profile(r / 2.0**k) - lp_profile(r / 2.0 ** (k - 1))


def littlewood_paley_max_index(grid: GridSpec, carrier=(0.0, 0.0)) -> int:
    """Smallest K such that pieces 0..K reconstruct every field on ``grid``."""
    rmax = np.sqrt(2.0) * grid.nyquist + np.hypot(*carrier)
    return max(0, int(np.ceil(np.log2(max(rmax, 1.0)))))


def littlewood_paley_project(f: SampledField, k: int) -> SampledField:
    """Piece f_k: frequency support in {|xi| <= 2} for k = 0, in {2^(k-1) <= |xi| <= 2^(k+1)} for k >= 1."""
    F = f.as_frequency()
    kx, ky = F.true_frequencies()
    w = littlewood_paley_weight(kx, ky, k)
    out = F.with_values(F.values * w)
    return out if f.side == "frequency" else out.as_physical()


def littlewood_paley_decompose(f: SampledField) -> list:
    kmax = littlewood_paley_max_index(f.grid, f.carrier)
    return [littlewood_paley_project(f, k) for k in range(kmax + 1)]


def frequency_restrict(f: SampledField, cap: Union[Ball, Cube]) -> SampledField:
    """Sharp restriction of f_hat to a frequency cap."""
    F = f.as_frequency()
    kx, ky = F.true_frequencies()
    mask = cap.contains(kx, ky)
    out = F.with_values(np.where(mask, F.values, 0.0))
    return out if f.side == "frequency" else out.as_physical()


def field_from_spectrum(grid: GridSpec, fn, support=None, carrier=(0.0, 0.0)) -> SampledField:
    """Frequency-side field with samples fn(kx, ky) at the true frequencies."""
    kx, ky = grid.freq_mesh()
    vals = fn(kx + carrier[0], ky + carrier[1])
    return SampledField(grid, vals, "frequency", support, carrier)


def random_bandlimited(grid: GridSpec, support: FrequencySupport, rng: np.random.Generator, unit: bool = True) -> SampledField:
    """Independent uniform phases and Rayleigh moduli on the lattice points of ``support``."""
    kx, ky = grid.freq_mesh()
    mask = support.contains(kx, ky)
    if not mask.any():
        raise ContractError("support contains no lattice frequency")
    vals = np.zeros(kx.shape, dtype=complex)
    m = int(mask.sum())
    vals[mask] = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    f = SampledField(grid, vals, "frequency", support)
    if unit:
        f = f.scale(1.0 / l2_norm(f))
    return f


# Binary record ---------------------------------------------------------------

_MAGIC = b"SLF1"
_HEADER = struct.Struct("<4sIddBB6xddddd")
_SUPPORT_CODES = {None: 0, "ball": 1, "annulus": 2, "unit_ball": 3}


def to_bytes(f: SampledField) -> bytes:
    """Serialize a field: 72-byte little-endian header then row-major complex64 samples.

    Header layout: magic ``SLF1``, uint32 N, float64 L, float64 frequency
    extent, uint8 side (0 physical, 1 frequency), uint8 support kind
    (0 none, 1 ball, 2 annulus, 3 unit ball), 6 pad bytes, float64 support
    center x, center y, radius-or-scale, float64 carrier x, carrier y.
    """
    s = f.support
    code = _SUPPORT_CODES[s.kind if s is not None else None]
    cx, cy = s.center if s is not None else (0.0, 0.0)
    rs = 0.0 if s is None else (s.scale if s.kind == "annulus" else s.radius)
    head = _HEADER.pack(_MAGIC, f.grid.n, f.grid.side_length, f.grid.frequency_extent,
                        0 if f.side == "physical" else 1, code, cx, cy, rs, *f.carrier)
    body = np.ascontiguousarray(f.values, dtype="<c8").tobytes()
    return head + body


def from_bytes(buf: bytes) -> SampledField:
    if len(buf) < _HEADER.size:
        raise InvalidGridError("record shorter than header")
    magic, n, L, ext, side, code, cx, cy, rs, c0, c1 = _HEADER.unpack_from(buf)
    if magic != _MAGIC:
        raise InvalidGridError("bad magic")
    grid = GridSpec(L, n, ext)
    count = n * n
    body = np.frombuffer(buf, dtype="<c8", count=count, offset=_HEADER.size)
    support = None
    if code == 1:
        support = FrequencySupport.ball((cx, cy), rs)
    elif code == 2:
        support = FrequencySupport.annulus(rs)
    elif code == 3:
        support = FrequencySupport.unit_ball()
    return SampledField(grid, body.reshape(n, n).astype(complex), "physical" if side == 0 else "frequency", support, (c0, c1))
