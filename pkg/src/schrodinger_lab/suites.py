"""Registered invariant suites with fixed seeds.

Each suite takes a seed and returns a list of verdict dicts with keys
``invariant``, ``pass``, ``measured`` and ``bound``.
"""

from __future__ import annotations

from typing import Callable, Dict, List

import numpy as np

from . import broadnorm as bn
from . import partition as pt
from . import tube_geometry as tg
from .field_core import FrequencySupport, GridSpec, SampledField, l2_norm, random_bandlimited
from .propagator import CurveParams, base_bound_check
from .sweeps import rescaling_errors
from .wavepacket import (
    Tile,
    Tube,
    build_tile_lattice,
    decompose,
    packet_grid,
    packet_spectrum,
    reconstruct,
    tube_mass_fraction,
)


def _v(name, ok, measured, bound, **extra) -> dict:
    d = {"invariant": name, "pass": bool(ok), "measured": measured, "bound": bound}
    d.update(extra)
    return d


# individual suites ------------------------------------------------------------

def broad_norm_instances(seed: int, n: int = 50, subadditive_tol: float = 1e-9) -> List[bn.BroadInequalityReport]:
    rng = np.random.default_rng(seed)
    grid = GridSpec(64.0, 64)
    cells = bn.CellGrid(4, -16.0, 8, 8)
    out = []
    for _ in range(n):
        c = rng.uniform(-0.5, 0.5, 2)
        sup = FrequencySupport.ball(c, 1.0)
        f = random_bandlimited(grid, sup, rng)
        g = random_bandlimited(grid, sup, rng)
        sf, sg = bn.BroadSetup(f, sup, cells, 4), bn.BroadSetup(g, sup, cells, 4)
        p = float(rng.uniform(2.0, 3.2))
        q = float(rng.choice([1.0, 2.0, 4.0]))
        r = float(rng.uniform(p, 16.0))
        A1, A2 = int(rng.integers(0, 3)), int(rng.integers(0, 3))
        U1 = bn.random_box_region(rng, -16, 16, 32)
        U2 = bn.random_box_region(rng, -16, 16, 32)
        out.append(bn.broad_norm_inequalities(sf, sg, U1, U2, bn.BroadParams(4, A1 + A2, p, q), A1, A2, r, tol=subadditive_tol))
    return out


def suite_broad_norm(seed: int) -> List[dict]:
    reps = broad_norm_instances(seed)
    margin = min(r.subadditive_margin for r in reps)
    q2 = max(r.quasi_triangle_ratio for r in reps)
    q3 = max(r.holder_ratio for r in reps)
    mono = all(r.monotone_in_A for r in reps)
    return [
        _v("broadnorm.subadditivity", margin >= -1e-9, margin, -1e-9, instances=len(reps)),
        _v("broadnorm.quasi_triangle", q2 <= 1.0, q2, 1.0, constant="2^(p-1)"),
        _v("broadnorm.holder", q3 <= 1.0, q3, 1.0, constant="C_K=2"),
        _v("broadnorm.monotone_in_A", mono, float(mono), 1.0),
    ]


def suite_forced_failure(seed: int) -> List[dict]:
    """Subadditivity with a corrupted (negative) tolerance; must fail."""
    rep = broad_norm_instances(seed, n=1, subadditive_tol=-1.0)[0]
    return [_v("fixture.corrupted_tolerance", rep.passed, rep.subadditive_margin, "corrupted")]


def suite_uncertainty(seed: int) -> List[dict]:
    worst, plane = 0.0, 0.0
    for name, G, xi0, r, rho in tg.uncertainty_corpus(seed):
        m = tg.uncertainty_check(G, xi0, r, rho).measured
        worst = max(worst, m)
        if name == "plane_wave":
            plane = max(plane, m)
    return [_v("uncertainty.corpus_C10", worst <= 10.0, worst, 10.0),
            _v("uncertainty.plane_wave_C1", plane <= 1.0 + 1e-9, plane, 1.0)]


def suite_equidistribution(seed: int) -> List[dict]:
    R = 1024.0
    grid = GridSpec(2 * np.pi * 8 * 32, 1024)
    f, _ = tg.tangent_plane_datum(R, grid, R / 2, seed=seed)
    rep = tg.equidistribution_check(f, 0, R, R**0.65, R / 2, [R / 2**i for i in range(1, 5)])
    return [_v("equidistribution.slope", rep.passed, rep.slope, rep.threshold, ratios=rep.ratios)]


def packet_mass_fixtures(seed: int):
    R = 256.0
    grid = packet_grid(R)
    r = R**0.65
    t0 = 128.0
    rng = np.random.default_rng(seed)
    single = Tile((0.0, 0.0), (0.0, 0.0), R)
    tiles = [single]
    for _ in range(2):
        c = rng.uniform(-0.3, 0.3, 2)
        c = np.round(c * np.sqrt(R)) / np.sqrt(R)
        tiles.append(Tile(tuple(c), tuple(2 * t0 * c), R))
    fields = [SampledField(grid, packet_spectrum(t, grid), "frequency") for t in tiles]
    return R, r, t0, tiles, fields


def suite_packet_mass(seed: int) -> List[dict]:
    R, r, t0, tiles, fields = packet_mass_fixtures(seed)
    out = []
    a = tg.packet_ball_mass_check(fields[0], tiles[:1], (0, 0), t0, r, R)
    out.append(_v("packet_mass.single", a.passed, a.measured, [r / 2, 20 * r]))
    multi = fields[0] + fields[1] + fields[2]
    b = tg.packet_ball_mass_check(multi, tiles, (0, 0), t0, r, R)
    out.append(_v("packet_mass.multi", b.passed, b.measured, [r / 2, 20 * r]))
    parts = [tg.packet_ball_mass_check(fields[i], tiles[i:i + 1], (0, 0), t0, r, R).extra["mass"] for i in (0, 1)]
    pair = tg.packet_ball_mass_check(fields[0] + fields[1], tiles[:2], (0, 0), t0, r, R).extra["mass"]
    dev = abs(pair - sum(parts)) / sum(parts)
    out.append(_v("packet_mass.additivity", dev <= 0.05, dev, 0.05))
    return out


def central_tiles(R: float = 256.0, n_theta: int = 2, n_side: int = 5):
    grid = packet_grid(R)
    lat = build_tile_lattice(R, FrequencySupport.unit_ball(), grid)
    order = np.lexsort((lat.thetas[:, 1], lat.thetas[:, 0], np.hypot(*lat.thetas.T)))
    mid = len(lat.nu_axis) // 2
    nus = lat.nu_axis[mid - n_side // 2: mid - n_side // 2 + n_side]
    tiles = [Tile(tuple(lat.thetas[a]), (vx, vy), R) for a in order[:n_theta] for vx in nus for vy in nus]
    return grid, tiles


def suite_tube_localization(seed: int) -> List[dict]:
    grid, tiles = central_tiles()
    fr = [tube_mass_fraction(t, grid, 0.1).fraction for t in tiles]
    worst = float(min(fr))
    return [_v("tube_localization.mass_fraction", worst >= 0.99, worst, 0.99, tiles=len(tiles))]


def uniform_mass(seed: int, n: int):
    rng = np.random.default_rng(seed)
    return rng.uniform(-1, 1, (n, 3)), np.ones(n)


def suite_partition(seed: int, n_points: int = 100_000) -> List[dict]:
    pts, w = uniform_mass(seed, n_points)
    rng = np.random.default_rng(seed + 1)
    out = []
    for D in (2, 4):
        for m in (1, 2, 3):
            Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
            dec = pt.build_partition(pts, w, pt.ProjectedPolySpace(Q[:m], D), D, rng=np.random.default_rng(seed))
            res = max(max(r) for r in dec.residuals)
            out.append(_v(f"partition.residual_D{D}_m{m}", res <= 1e-3, res, 1e-3))
            out.append(_v(f"partition.max_cell_D{D}_m{m}", dec.max_cell_ratio() <= 1.05, dec.max_cell_ratio(), 1.05,
                          cells=len(dec.cell_mass), degree=dec.degree))
    return out


def suite_incidence(seed: int) -> List[dict]:
    pts, w = uniform_mass(seed, 50_000)
    dec = pt.build_partition(pts, w, pt.ProjectedPolySpace.full(4), 4, rng=np.random.default_rng(seed))
    rng = np.random.default_rng(seed + 2)
    segs = [(rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3)) for _ in range(200)]
    rep = pt.cell_tube_incidence(dec, segs)
    P = pt.Polynomial.from_terms
    tci_plane = pt.tci_check([P({(1, 0, 0): 1.0})])
    tci_sq = pt.tci_check([P({(2, 0, 0): 1.0})])
    return [_v("incidence.max_cells", rep.passed, max(rep.max_cells_per_tube, rep.dense_max_cells_per_tube), rep.bound),
            _v("tci.plane_passes", tci_plane.passed, tci_plane.min_wedge_norm, 1e-6),
            _v("tci.square_fails", not tci_sq.passed, tci_sq.min_wedge_norm, 1e-6)]


def suite_frame(seed: int) -> List[dict]:
    rng = np.random.default_rng(seed)
    out = []
    for R in (64.0,):
        grid = packet_grid(R)
        lat = build_tile_lattice(R, FrequencySupport.unit_ball(), grid)
        worst_p = worst_r = 0.0
        for _ in range(5):
            f = random_bandlimited(grid, FrequencySupport.unit_ball(), rng)
            c = decompose(f, lat)
            worst_p = max(worst_p, abs(c.energy() - l2_norm(f) ** 2) / l2_norm(f) ** 2)
            g = reconstruct(c)
            worst_r = max(worst_r, l2_norm(g + f.scale(-1.0)) / l2_norm(f))
        out.append(_v(f"frame.parseval_R{int(R)}", worst_p <= 1e-3, worst_p, 1e-3))
        out.append(_v(f"frame.roundtrip_R{int(R)}", worst_r <= 1e-3, worst_r, 1e-3))
    return out


def suite_identities(seed: int) -> List[dict]:
    rng = np.random.default_rng(seed)
    g = random_bandlimited(GridSpec(64.0, 64), FrequencySupport.annulus(1.0), rng)
    e1, e2 = rescaling_errors(g, 64.0, rng)
    fails = 0
    worst = 0.0
    for M in (1, 2, 4, 8):
        for _ in range(3):
            f = random_bandlimited(GridSpec(64.0, 64), FrequencySupport.ball(rng.uniform(-0.5, 0.5, 2), 1.0 / M), rng)
            rep = base_bound_check(f)
            fails += not rep.passed
            worst = max(worst, rep.ratio)
    return [_v("rescaling.pointwise", e1 <= 1e-6, e1, 1e-6), _v("rescaling.norm", e2 <= 1e-10, e2, 1e-10),
            _v("base_bound.failures", fails == 0, fails, 0, worst_ratio=worst)]


SUITES: Dict[str, Callable[[int], List[dict]]] = {
    "identities": suite_identities,
    "frame": suite_frame,
    "tube_localization": suite_tube_localization,
    "broad_norm": suite_broad_norm,
    "partition": suite_partition,
    "incidence": suite_incidence,
    "uncertainty": suite_uncertainty,
    "packet_mass": suite_packet_mass,
    "equidistribution": suite_equidistribution,
}


def run_suites(names, seed: int, force_failure: bool = False) -> List[dict]:
    table = dict(SUITES)
    if force_failure:
        table["forced_failure"] = suite_forced_failure
        names = list(names) + ["forced_failure"]
    out = []
    for name in names:
        for v in table[name](seed):
            v["suite"] = name
            out.append(v)
    return out
