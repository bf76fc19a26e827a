"""Wave-packet tiles, analysis/synthesis, tubes and recentered packets.

Frequency tiles theta are squares of side R^-1/2 on the lattice R^-1/2 Z^2;
physical tiles nu have spacing a = L / n with n = round(L / R^1/2), so
a = R^1/2 up to the rounding needed to tile the periodic box. The packet
profile is the tensor product of ``plateau_bump`` whose squared translates
sum to one, so the family

    kappa * phi_{theta,nu},   kappa = a |theta| / (2 pi),

is a Parseval frame on the box: analysis followed by synthesis is the
identity and the coefficient energy equals ||f||^2, up to rounding.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence

import numpy as np

from .bumps import plateau_bump
from .errors import ContractError, DomainError, RangeError
from .field_core import FrequencySupport, GridSpec, SampledField, l2_norm, synthesize
from .propagator import CurveParams, TimeCutoffs, _phase

PLATEAU = 0.4
SUPPORT = 0.6


def profile(u):
    return plateau_bump(u, PLATEAU, SUPPORT)


@dataclass(frozen=True)
class Tile:
    theta_center: tuple
    nu_center: tuple
    R: float

    def __post_init__(self):
        if self.R < 1:
            raise DomainError("tile scale must be >= 1")
        object.__setattr__(self, "theta_center", (float(self.theta_center[0]), float(self.theta_center[1])))
        object.__setattr__(self, "nu_center", (float(self.nu_center[0]), float(self.nu_center[1])))

    @property
    def theta_side(self) -> float:
        return self.R**-0.5

    @property
    def direction(self) -> np.ndarray:
        return np.array([-2 * self.theta_center[0], -2 * self.theta_center[1], 1.0])


def packet_grid(R: float, radius: float = 1.0, oversample: int = 4) -> GridSpec:
    """Box of side 2 pi * oversample * R^1/2 on which tiles of scale R sample exactly.

    The frequency step is then |theta| / oversample, so packets have unit
    norm to rounding; N is the smallest power of two resolving ``radius``.
    """
    L = 2 * np.pi * oversample * np.sqrt(R)
    need = (radius + 0.6 * R**-0.5) * L / np.pi * 1.1
    n = 32
    while n < need:
        n *= 2
    return GridSpec(L, n)


def _support_meets_square(support: FrequencySupport, cx, cy, h):
    # squares [c-h, c+h]^2 against the support set
    dx = np.maximum(np.abs(cx) - h, 0.0)
    dy = np.maximum(np.abs(cy) - h, 0.0)
    near0 = np.hypot(dx, dy)
    far0 = np.hypot(np.abs(cx) + h, np.abs(cy) + h)
    if support.kind == "ball":
        ex = np.maximum(np.abs(cx - support.center[0]) - h, 0.0)
        ey = np.maximum(np.abs(cy - support.center[1]) - h, 0.0)
        return np.hypot(ex, ey) <= support.radius
    if support.kind == "annulus":
        return (near0 <= 2 * support.scale) & (far0 >= 0.5 * support.scale)
    return near0 <= 1.0


@dataclass(frozen=True)
class TileLattice:
    """Product lattice of frequency tiles and physical tiles on one grid."""

    R: float
    grid: GridSpec
    thetas: np.ndarray
    nu_axis: np.ndarray
    support: FrequencySupport

    @property
    def theta_side(self) -> float:
        return self.R**-0.5

    @property
    def nu_spacing(self) -> float:
        return self.grid.side_length / len(self.nu_axis)

    @property
    def frame_constant(self) -> float:
        return self.nu_spacing * self.theta_side / (2 * np.pi)

    @property
    def n_theta(self) -> int:
        return len(self.thetas)

    @property
    def n_nu(self) -> int:
        return len(self.nu_axis) ** 2

    def __len__(self) -> int:
        return self.n_theta * self.n_nu

    def tiles(self) -> Iterator[Tile]:
        for c in self.thetas:
            for vx in self.nu_axis:
                for vy in self.nu_axis:
                    yield Tile(tuple(c), (vx, vy), self.R)

    def window(self) -> int:
        return int(np.ceil(2 * SUPPORT * self.theta_side / self.grid.dxi)) + 2

    def coverage(self) -> np.ndarray:
        """sum_theta phi_theta^2 / R on the grid; 1 wherever the lattice is complete."""
        kx, ky = self.grid.freq_mesh()
        acc = np.zeros(kx.shape)
        for c in self.thetas:
            acc += (profile((kx - c[0]) / self.theta_side) * profile((ky - c[1]) / self.theta_side)) ** 2
        return acc


def build_tile_lattice(R: float, support: FrequencySupport, box: GridSpec) -> TileLattice:
    """Tiles (theta, nu) whose packet spectra meet ``support``, times all nu in the box."""
    if R < 4:
        raise DomainError("tile scale must be >= 4")
    side = R**-0.5
    if box.dxi > 0.5 * side:
        raise RangeError("frequency step too coarse for tiles of this scale")
    rmax = support.bounding_radius() + SUPPORT * side
    if rmax > box.frequency_extent:
        raise RangeError("tile support exceeds the grid frequency range")
    kmax = int(np.ceil(rmax / side)) + 1
    ii = np.arange(-kmax, kmax + 1) * side
    cx, cy = np.meshgrid(ii, ii, indexing="ij")
    keep = _support_meets_square(support, cx, cy, SUPPORT * side)
    thetas = np.stack([cx[keep], cy[keep]], axis=1)
    n_nu = max(1, int(round(box.side_length / np.sqrt(R))))
    a = box.side_length / n_nu
    nu_axis = -0.5 * box.side_length + (np.arange(n_nu) + 0.5) * a
    lat = TileLattice(float(R), box, thetas, nu_axis, support)
    if lat.window() > n_nu or 2 * SUPPORT * side >= 2 * np.pi / a:
        raise RangeError("box too small: physical tiles alias the packet spectra")
    return lat


def packet_spectrum(tile: Tile, grid: GridSpec) -> np.ndarray:
    kx, ky = grid.freq_mesh()
    s = tile.theta_side
    amp = profile((kx - tile.theta_center[0]) / s) * profile((ky - tile.theta_center[1]) / s) / s
    return amp * np.exp(-1j * (tile.nu_center[0] * kx + tile.nu_center[1] * ky))


def packet_function(tile: Tile, grid: GridSpec) -> SampledField:
    """Frequency-side samples of the unit-norm packet phi_{theta,nu}."""
    return SampledField(grid, packet_spectrum(tile, grid), "frequency")


@dataclass
class PacketCoefficients:
    """Coefficients kappa <f, phi_{theta,nu}>, shape (n_theta, n_nu_x, n_nu_y)."""

    lattice: TileLattice
    values: np.ndarray

    def energy(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2))

    def __iter__(self):
        lat = self.lattice
        for a, c in enumerate(lat.thetas):
            for i, vx in enumerate(lat.nu_axis):
                for j, vy in enumerate(lat.nu_axis):
                    yield Tile(tuple(c), (vx, vy), lat.R), complex(self.values[a, i, j])

    def to_csv(self, drop_below: float = 0.0) -> str:
        """CSV text with header theta_x,theta_y,nu_x,nu_y,re,im; rows with |value| < drop_below omitted."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["theta_x", "theta_y", "nu_x", "nu_y", "re", "im"])
        for tile, v in self:
            if abs(v) < drop_below or v == 0:
                continue
            w.writerow([repr(tile.theta_center[0]), repr(tile.theta_center[1]), repr(tile.nu_center[0]),
                        repr(tile.nu_center[1]), repr(v.real), repr(v.imag)])
        return buf.getvalue()


def _windows(lat: TileLattice):
    g = lat.grid
    w = lat.window()
    s = lat.theta_side
    start = np.floor((lat.thetas - SUPPORT * s) / g.dxi).astype(int)
    ks = start[:, :, None] + np.arange(w)[None, None, :]
    return ks, ks * g.dxi


def _check_field(f: SampledField, lat: TileLattice) -> SampledField:
    if f.grid != lat.grid:
        raise ContractError("field and lattice live on different grids")
    if f.carrier != (0.0, 0.0):
        raise ContractError("packet decomposition needs a field without carrier")
    F = f.as_frequency()
    cov = lat.coverage()
    # ignore FFT roundoff when testing support
    live = np.abs(F.values) > 1e-12 * np.abs(F.values).max(initial=0.0)
    if np.any(live & (cov < 1 - 1e-9)):
        raise ContractError("spectrum reaches frequencies the lattice does not cover")
    return F


def _analysis(spectrum: np.ndarray, lat: TileLattice) -> np.ndarray:
    g = lat.grid
    ks, xis = _windows(lat)
    s = lat.theta_side
    idx = np.mod(ks, g.n)
    px = profile((xis[:, 0, :] - lat.thetas[:, 0:1]) / s)
    py = profile((xis[:, 1, :] - lat.thetas[:, 1:2]) / s)
    W = spectrum[idx[:, 0, :, None], idx[:, 1, None, :]] * (px[:, :, None] * py[:, None, :]) / s
    Ex = np.exp(1j * lat.nu_axis[None, :, None] * xis[:, 0, None, :])
    Ey = np.exp(1j * lat.nu_axis[None, :, None] * xis[:, 1, None, :])
    C = np.einsum("amk,akl,anl->amn", Ex, W, Ey, optimize=True)
    return C * (lat.frame_constant * g.dxi**2)


def decompose(f: SampledField, lattice: TileLattice) -> PacketCoefficients:
    """Frame coefficients kappa <f, phi_{theta,nu}> for every tile of ``lattice``."""
    F = _check_field(f, lattice)
    return PacketCoefficients(lattice, _analysis(F.values, lattice))


def _synthesis(C: np.ndarray, lat: TileLattice) -> np.ndarray:
    g = lat.grid
    ks, xis = _windows(lat)
    s = lat.theta_side
    idx = np.mod(ks, g.n)
    px = profile((xis[:, 0, :] - lat.thetas[:, 0:1]) / s)
    py = profile((xis[:, 1, :] - lat.thetas[:, 1:2]) / s)
    Ex = np.exp(-1j * lat.nu_axis[None, :, None] * xis[:, 0, None, :])
    Ey = np.exp(-1j * lat.nu_axis[None, :, None] * xis[:, 1, None, :])
    loc = np.einsum("amk,amn,anl->akl", Ex, C, Ey, optimize=True)
    loc *= (px[:, :, None] * py[:, None, :]) * (lat.frame_constant / s)
    out = np.zeros((g.n, g.n), dtype=complex)
    w = idx.shape[-1]
    ix = np.broadcast_to(idx[:, 0, :, None], (len(idx), w, w))
    iy = np.broadcast_to(idx[:, 1, None, :], (len(idx), w, w))
    np.add.at(out, (ix.ravel(), iy.ravel()), loc.ravel())
    return out


def reconstruct(coeffs: PacketCoefficients, drop_below: Optional[float] = None) -> SampledField:
    """Synthesis sum kappa sum c_{theta,nu} phi_{theta,nu}.

    ``drop_below`` zeroes coefficients of smaller modulus first; a partial
    lattice simply yields the partial sum.
    """
    C = coeffs.values
    if drop_below is not None:
        C = np.where(np.abs(C) < drop_below, 0.0, C)
    return SampledField(coeffs.lattice.grid, _synthesis(C, coeffs.lattice), "frequency")


@dataclass(frozen=True)
class Tube:
    """Slab {0 <= t <= R, |x - c(nu) + 2 t c(theta)| <= R^(1/2 + delta)}."""

    tile: Tile
    delta: float

    def __post_init__(self):
        if not 0 < self.delta <= 0.2:
            raise DomainError("delta must lie in (0, 0.2]")

    @property
    def direction(self) -> np.ndarray:
        return self.tile.direction

    @property
    def radius(self) -> float:
        return self.tile.R ** (0.5 + self.delta)

    def core(self, t):
        t = np.asarray(t, dtype=float)
        c = np.asarray(self.tile.theta_center)
        v = np.asarray(self.tile.nu_center)
        return v[None, :] - 2.0 * t[..., None] * c[None, :] if t.ndim else v - 2.0 * t * c

    def offset(self, x, y, t, period: Optional[float] = None):
        """Distance from (x, y) to the core point at time t; minimal image if periodic."""
        cx = self.tile.nu_center[0] - 2 * t * self.tile.theta_center[0]
        cy = self.tile.nu_center[1] - 2 * t * self.tile.theta_center[1]
        dx, dy = x - cx, y - cy
        if period is not None:
            dx = dx - period * np.round(dx / period)
            dy = dy - period * np.round(dy / period)
        return np.hypot(dx, dy)

    def contains(self, x, y, t, dilation: float = 1.0, period: Optional[float] = None):
        t = np.asarray(t, dtype=float)
        ok_t = (t >= 0) & (t <= self.tile.R)
        return ok_t & (self.offset(x, y, t, period) <= dilation * self.radius)


def tube_of(tile: Tile, delta: float = 0.1) -> Tube:
    return Tube(tile, delta)


@dataclass(frozen=True)
class TubeMassReport:
    fraction: float
    outside_sup: float
    outside_sup_scaled: float
    n_times: int

    def to_dict(self) -> dict:
        return {"fraction": self.fraction, "outside_sup": self.outside_sup,
                "outside_sup_times_sqrtR": self.outside_sup_scaled, "n_times": self.n_times}


def tube_mass_fraction(tile: Tile, grid: GridSpec, delta: float = 0.1, n_times: int = 129,
                       curve: CurveParams = CurveParams(), eps: float = 0.1) -> TubeMassReport:
    """Share of the psi2-weighted space-time L^2 mass of e^{itH} phi inside the tube.

    Times are linear on the support of psi2; distances use the minimal image
    on the periodic box. Also returns the sup of |e^{itH} phi| outside the
    twice-dilated tube, raw and multiplied by R^1/2.
    """
    tube = Tube(tile, delta)
    cut = TimeCutoffs(tile.R, eps)
    ts = np.linspace(max(cut.split - cut.width, 0.0), tile.R + cut.width, n_times)
    w = cut.psi2(ts) ** 2
    X, Y = grid.mesh()
    kx, ky = grid.freq_mesh()
    spec = packet_spectrum(tile, grid)
    inside = total = 0.0
    outside = 0.0
    for t, wt in zip(ts, w):
        u = synthesize(grid, spec * np.exp(1j * _phase(kx, ky, t, curve)))
        a2 = np.abs(u) ** 2
        m = tube.contains(X, Y, t, period=grid.side_length)
        inside += wt * a2[m].sum()
        total += wt * a2.sum()
        far = ~tube.contains(X, Y, t, 2.0, period=grid.side_length)
        if t <= tile.R and far.any():
            outside = max(outside, float(np.sqrt(a2[far].max())))
    frac = float(inside / total) if total > 0 else 0.0
    return TubeMassReport(min(frac, 1.0), outside, outside * np.sqrt(tile.R), n_times)


# Recentered packets ----------------------------------------------------------

@dataclass(frozen=True)
class RecenteredBasis:
    """Packets at scale rho modulated so their tubes start at (x0, t0)."""

    x0: tuple
    t0: float
    rho: float
    lattice: TileLattice
    curve: CurveParams = CurveParams()

    def modulation(self) -> np.ndarray:
        kx, ky = self.lattice.grid.freq_mesh()
        m = self.curve.mu
        ph = -(self.x0[0] * kx + self.x0[1] * ky) + np.sqrt(self.t0) * (m[0] * kx + m[1] * ky) - self.t0 * (kx**2 + ky**2)
        return np.exp(1j * ph)

    def packet(self, tile: Tile) -> SampledField:
        return SampledField(self.lattice.grid, packet_spectrum(tile, self.lattice.grid) * self.modulation(), "frequency")

    def decompose(self, f: SampledField) -> PacketCoefficients:
        F = _check_field(f, self.lattice)
        return PacketCoefficients(self.lattice, _analysis(F.values * np.conj(self.modulation()), self.lattice))

    def reconstruct(self, coeffs: PacketCoefficients) -> SampledField:
        vals = _synthesis(coeffs.values, self.lattice) * self.modulation()
        return SampledField(self.lattice.grid, vals, "frequency")

    def tube_offset(self, tile: Tile, x, y, t):
        cx = self.x0[0] + tile.nu_center[0] - 2 * tile.theta_center[0] * (t - self.t0)
        cy = self.x0[1] + tile.nu_center[1] - 2 * tile.theta_center[1] * (t - self.t0)
        return np.hypot(x - cx, y - cy)


def recenter_packets(center, rho: float, support: FrequencySupport, box: GridSpec,
                     curve: CurveParams = CurveParams()) -> RecenteredBasis:
    x0, t0 = center
    lat = build_tile_lattice(rho, support, box)
    return RecenteredBasis((float(x0[0]), float(x0[1])), float(t0), float(rho), lat, curve)


def packet_compatibility(parent: Tile, child: Tile, center, delta: float = 0.1) -> bool:
    """Both inequalities linking a child tile at scale rho to a parent at scale R."""
    x0, t0 = center
    if child.R > parent.R:
        raise DomainError("child scale must not exceed parent scale")
    ct = np.asarray(parent.theta_center)
    cb = np.asarray(child.theta_center)
    if np.hypot(*(ct - cb)) > 2 * child.R**-0.5:
        return False
    d = np.asarray(parent.nu_center) - np.asarray(child.nu_center) - np.asarray(x0) - 2 * t0 * ct
    return bool(np.hypot(*d) <= parent.R ** (0.5 + delta))


def direction_angle(u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    c = np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v))
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def child_tube_excess(parent: Tile, child: Tile, center, delta: float = 0.1) -> float:
    """Largest distance from the child tube to the parent tube, in units of R^(1/2+delta).

    The child tube is {|x - x0 - c(nu') + 2 c(theta')(t - t0)| <= rho^(1/2+delta),
    |t - t0| <= rho} clipped to [0, R]; both tubes are compared slice by slice,
    which bounds the space-time distance from above. The slice excess is
    convex in t, so the two end slices give the exact maximum.
    """
    x0, t0 = center
    R, rho = parent.R, child.R
    lo, hi = max(0.0, t0 - rho), min(R, t0 + rho)
    if lo > hi:
        return 0.0
    ct = np.asarray(parent.theta_center)
    cb = np.asarray(child.theta_center)
    worst = 0.0
    for t in (lo, hi):
        core_child = np.asarray(x0) + np.asarray(child.nu_center) - 2 * cb * (t - t0)
        core_parent = np.asarray(parent.nu_center) - 2 * ct * t
        excess = np.hypot(*(core_child - core_parent)) + rho ** (0.5 + delta) - R ** (0.5 + delta)
        worst = max(worst, excess)
    return float(worst / R ** (0.5 + delta))
