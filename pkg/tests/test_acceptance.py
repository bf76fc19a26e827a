"""Acceptance criteria 1-12.

Each test prints one ``CRITERION n PASS|FAIL`` line with its measurement and
then asserts. The lines are repeated in the terminal summary.
"""

import json
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from schrodinger_lab import field_core
from schrodinger_lab import partition as pt
from schrodinger_lab import tube_geometry as tg
from schrodinger_lab.field_core import FrequencySupport, GridSpec, l2_norm, random_bandlimited
from schrodinger_lab.propagator import base_bound_check
from schrodinger_lab.suites import (
    central_tiles,
    broad_norm_instances,
    packet_mass_fixtures,
    suite_equidistribution,
    uniform_mass,
)
from schrodinger_lab.sweeps import maximal_sweep, counterexample_sweep, counterexample_exponent, rescaling_errors
from schrodinger_lab.wavepacket import (
    build_tile_lattice,
    decompose,
    packet_grid,
    reconstruct,
    tube_mass_fraction,
)

RESULTS = {}
SEED = 20240611

field_core.set_fft_workers(os.cpu_count() or 1)


@pytest.fixture
def report(capsys):
    def emit(n: int, ok: bool, detail: str):
        line = f"CRITERION {n:2d} {'PASS' if ok else 'FAIL'}  {detail}"
        RESULTS[n] = line
        with capsys.disabled():
            print("\n" + line)
        return ok

    return emit


def test_criterion_01_counterexample_growth(report):
    t0 = time.perf_counter()
    fit = counterexample_sweep([16.0, 32.0, 64.0, 128.0, 256.0], p=16 / 5)
    dt = time.perf_counter() - t0
    target = counterexample_exponent(16 / 5)
    ok = abs(fit.slope - target) <= 0.05 and dt <= 600
    assert report(1, ok, f"slope={fit.slope:.4f} target={target:.5f} tol=0.05 runtime={dt:.0f}s (<=600s)")


def test_criterion_02_rescaling(report):
    rng = np.random.default_rng(SEED)
    worst1 = worst2 = 0.0
    for R in (16.0, 64.0):
        g = random_bandlimited(GridSpec(64.0, 64), FrequencySupport.annulus(1.0), rng)
        e1, e2 = rescaling_errors(g, R, rng, n_points=20)
        worst1, worst2 = max(worst1, e1), max(worst2, e2)
    ok = worst1 <= 1e-6 and worst2 <= 1e-10
    assert report(2, ok, f"pointwise rel err={worst1:.2e} (<=1e-6) norm rel err={worst2:.2e} (<=1e-10)")


def test_criterion_03_base_bound(report):
    rng = np.random.default_rng(SEED)
    fails, worst, n = 0, 0.0, 0
    for M in (1, 2, 4, 8):
        for _ in range(50):
            sup = FrequencySupport.ball(rng.uniform(-0.5, 0.5, 2), 1.0 / M)
            rep = base_bound_check(random_bandlimited(GridSpec(64.0, 64), sup, rng))
            fails += not rep.passed
            worst = max(worst, rep.ratio)
            n += 1
    assert report(3, fails == 0, f"{n} data, failures={fails}, worst sup/(M^-1 |f|)={worst:.4f} (<= sqrt(pi)={np.sqrt(np.pi):.4f})")


def test_criterion_04_frame(report):
    rng = np.random.default_rng(SEED)
    worst_p = worst_r = 0.0
    for R in (64.0, 256.0):
        grid = packet_grid(R)
        lat = build_tile_lattice(R, FrequencySupport.unit_ball(), grid)
        for _ in range(20):
            f = random_bandlimited(grid, FrequencySupport.unit_ball(), rng)
            c = decompose(f, lat)
            n2 = l2_norm(f) ** 2
            worst_p = max(worst_p, abs(c.energy() - n2) / n2)
            worst_r = max(worst_r, l2_norm(reconstruct(c) + f.scale(-1.0)) / np.sqrt(n2))
    ok = worst_p <= 1e-3 and worst_r <= 1e-3
    assert report(4, ok, f"Parseval rel err={worst_p:.2e} round trip rel err={worst_r:.2e} (<=1e-3), R in {{64, 256}}, 20 fields each")


def test_criterion_05_tube_localization(report):
    grid, tiles = central_tiles(256.0)
    fr = np.array([tube_mass_fraction(t, grid, 0.1).fraction for t in tiles])
    ok = len(tiles) >= 50 and fr.min() >= 0.99
    assert report(5, ok, f"{len(tiles)} tiles, min in-tube mass fraction={fr.min():.4f} max={fr.max():.4f} (need >=0.99)")


def test_criterion_06_broad_norm(report):
    reps = broad_norm_instances(SEED, n=50)
    margin = min(r.subadditive_margin for r in reps)
    q2 = max(r.quasi_triangle_ratio for r in reps)
    q3 = max(r.holder_ratio for r in reps)
    mono = all(r.monotone_in_A for r in reps)
    ok = margin >= -1e-9 and q2 <= 1 + 1e-12 and q3 <= 1 + 1e-12 and mono
    assert report(6, ok, f"50 instances: subadditivity margin={margin:.2e} (>=-1e-9), "
                         f"quasi-triangle ratio={q2:.3f}, Holder ratio={q3:.3f} (<=1), monotone in A={mono}")


def test_criterion_07_partition(report):
    pts, w = uniform_mass(SEED, 200_000)
    rng = np.random.default_rng(SEED + 1)
    worst_res, worst_cell, rows = 0.0, 0.0, []
    d4 = None
    for D in (2, 4):
        for m in (1, 2, 3):
            Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
            dec = pt.build_partition(pts, w, pt.ProjectedPolySpace(Q[:m], D), D, rng=np.random.default_rng(SEED))
            res = max(max(r) for r in dec.residuals)
            worst_res = max(worst_res, res)
            worst_cell = max(worst_cell, dec.max_cell_ratio())
            rows.append(f"D{D}m{m}:deg{dec.degree}")
            if D == 4 and m == 3:
                d4 = dec
    segs = [(rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3)) for _ in range(200)]
    inc = pt.cell_tube_incidence(d4, segs)
    ok = worst_res <= 1e-3 and worst_cell <= 1.05 and inc.passed
    assert report(7, ok, f"max split residual={worst_res:.1e} (<=1e-3), max cell ratio={worst_cell:.4f} (<=1.05), "
                         f"incidence max={inc.dense_max_cells_per_tube} (<= deg P + 1 = {inc.bound}); {' '.join(rows)}")


def test_criterion_08_uncertainty(report):
    worst, plane = 0.0, 0.0
    for name, G, xi0, r, rho in tg.uncertainty_corpus(SEED):
        m = tg.uncertainty_check(G, xi0, r, rho).measured
        worst = max(worst, m)
        if name == "plane_wave":
            plane = max(plane, m)
    ok = worst <= 10.0 and plane <= 1.0 + 1e-9
    assert report(8, ok, f"80 cases, worst constant={worst:.3f} (<=10), plane wave={plane:.12f} (<=1)")


def test_criterion_09_packet_mass(report):
    R, r, t0, tiles, fields = packet_mass_fixtures(SEED)
    single = tg.packet_ball_mass_check(fields[0], tiles[:1], (0, 0), t0, r, R)
    multi = tg.packet_ball_mass_check(fields[0] + fields[1] + fields[2], tiles, (0, 0), t0, r, R)
    ok = single.passed and multi.passed
    assert report(9, ok, f"r={r:.2f}: single={single.measured:.2f} multi={multi.measured:.2f} "
                         f"in [{r / 2:.2f}, {20 * r:.1f}]")


def test_criterion_10_equidistribution(report):
    v = suite_equidistribution(SEED)[0]
    ratios = ", ".join(f"{q:.3f}" for q in v["ratios"])
    assert report(10, v["pass"], f"R=1024 slope={v['measured']:.3f} (<=-0.4, target -0.5); ratios [{ratios}]")


def test_criterion_11_descriptive_sweep(report):
    rep = maximal_sweep([4.0, 8.0, 16.0], 3.2, seed=SEED)
    d = rep.to_dict()
    assert report(11, True, f"descriptive only: slope={rep.fit.slope:.4f} vs reference 2/p-5/8={rep.reference:.4f}, "
                            f"ratios={[round(x, 4) for x in rep.ratios]}, gated={d['gated']}")


def test_criterion_12_property_suite(report, tmp_path):
    outs, codes, times = [], [], []
    for k in range(2):
        out = tmp_path / f"run{k}"
        t0 = time.perf_counter()
        r = subprocess.run([sys.executable, "-m", "schrodinger_lab", "property-suite", "--seed", "0",
                            "--out", str(out), "--threads", str(os.cpu_count() or 1)],
                           capture_output=True, text=True)
        times.append(time.perf_counter() - t0)
        codes.append(r.returncode)
        outs.append((out / "property_suite.json").read_bytes())
    failed = json.loads(outs[0])["failed"]
    completed = all(c in (0, 1) for c in codes)
    identical = outs[0] == outs[1]
    ok = completed and identical and max(times) <= 1800
    assert report(12, ok, f"exit codes={codes} (failed invariants: {failed or 'none'}), byte-identical={identical}, "
                          f"runtime={max(times):.0f}s (<=1800s)")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
