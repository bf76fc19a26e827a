import numpy as np
import pytest

from schrodinger_lab import tube_geometry as tg
from schrodinger_lab.errors import ContractError, DegeneracyError, DomainError
from schrodinger_lab.field_core import GridSpec, SampledField
from schrodinger_lab.partition import Polynomial
from schrodinger_lab.suites import packet_mass_fixtures
from schrodinger_lab.wavepacket import Tile, Tube, direction_angle, packet_grid

P = Polynomial.from_terms
R = 256.0
SC = tg.TangencyScales(R)


def test_scales():
    assert SC.rho ** 0.65 == pytest.approx(R**0.6)
    assert SC.wall == pytest.approx(R**0.6)
    assert SC.angle_bound == pytest.approx(SC.rho**-0.35)
    nested = tg.TangencyScales(R, variant="nested")
    assert nested.rho ** 0.7 == pytest.approx(R**0.65)
    with pytest.raises(DomainError):
        tg.TangencyScales(R, variant="other")


def test_tangent_space_examples():
    ts = tg.tangent_space(tg.Variety.plane((0, 0, 1)), (0.3, -2.0, 0.0))
    assert np.allclose(np.abs(ts.basis @ ts.basis.T), np.eye(2))
    assert np.allclose(ts.basis[:, 2], 0)
    line = tg.Variety((P({(1, 0, 0): 1.0}), P({(0, 1, 0): 1.0})))
    tl = tg.tangent_space(line, (0.0, 0.0, 5.0))
    assert np.allclose(np.abs(tl.basis), [[0, 0, 1]])
    sphere = tg.Variety((P({(2, 0, 0): 1.0, (0, 2, 0): 1.0, (0, 0, 2): 1.0, (0, 0, 0): -4.0}),))
    tsph = tg.tangent_space(sphere, (2.0, 0.0, 0.0))
    assert np.abs(tsph.basis @ [1, 0, 0]).max() <= 1e-12
    with pytest.raises(DegeneracyError):
        tg.tangent_space(tg.Variety((P({(2, 0, 0): 1.0}),)), (0.0, 0.3, 0.1))


def test_classify_examples():
    ball = ((0.0, 0.0, R / 2), R**0.65)
    vertical = Tube(Tile((0.0, 0.0), (0.0, 0.0), R), 0.1)
    c = tg.classify_tube(vertical, tg.Variety.plane((0, 0, 1), R / 2), *ball, SC)
    assert c.label == "transverse" and c.max_angle == pytest.approx(np.pi / 2)
    tilted = Tube(Tile((0.0, 0.3), (0.0, 0.6 * R / 2), R), 0.1)
    c = tg.classify_tube(tilted, tg.Variety.plane((1, 0, 0)), *ball, SC)
    assert c.label == "tangent" and c.max_distance <= 1e-9 and c.max_angle <= 1e-7
    far = Tube(Tile((0.0, 0.0), (5000.0, 0.0), R), 0.1)
    assert tg.classify_tube(far, tg.Variety.plane((1, 0, 0)), *ball, SC).n_core == 0


def _dense_plane_label(tube, normal, ball_center, ball_radius, C=1.0):
    n = np.asarray(normal, float) / np.linalg.norm(normal)
    pts = tg.core_samples(tube, 64)
    inside = np.linalg.norm(pts - ball_center, axis=1) <= 2 * ball_radius
    if not inside.any():
        return "transverse"
    G = tube.direction / np.linalg.norm(tube.direction)
    ang = np.arcsin(min(abs(G @ n), 1.0))
    dist = np.abs(pts[inside] @ n).max()
    return "tangent" if dist <= SC.wall and ang <= C * SC.angle_bound else "transverse"


@pytest.fixture(scope="module")
def random_tubes():
    rng = np.random.default_rng(17)
    out = []
    for _ in range(100):
        c = (float(rng.uniform(-0.2, 0.2)), float(rng.uniform(-0.5, 0.5)))
        nu = (float(rng.uniform(-1, 1) * 2 * SC.wall + 2 * (R / 2) * c[0]), float(rng.uniform(-40, 40)))
        out.append(Tube(Tile(c, nu, R), 0.1))
    return out


def test_classification_matches_plane_oracle(random_tubes):
    center = np.array([0.0, 0.0, R / 2])
    plane = tg.Variety.plane((1, 0, 0))
    labels = []
    for tube in random_tubes:
        got = tg.classify_tube(tube, plane, center, R**0.65, SC).label
        assert got == _dense_plane_label(tube, (1, 0, 0), center, R**0.65)
        labels.append(got)
    assert 5 <= labels.count("tangent") <= 95


def test_classification_monotone_in_threshold(random_tubes):
    center = (0.0, 0.0, R / 2)
    plane = tg.Variety.plane((1, 0, 0))
    for tube in random_tubes[:40]:
        if tg.classify_tube(tube, plane, center, R**0.65, SC, C=1.0).label == "tangent":
            assert tg.classify_tube(tube, plane, center, R**0.65, SC, C=2.0).label == "tangent"


def test_angle_triangle(rng):
    ts = tg.tangent_space(tg.Variety.plane((1, 0, 0)), (0.0, 0.0, 0.0))
    for _ in range(200):
        a = Tile(tuple(rng.uniform(-0.5, 0.5, 2)), (0.0, 0.0), R).direction
        b = Tile(tuple(rng.uniform(-0.5, 0.5, 2)), (0.0, 0.0), R).direction
        lhs, rhs = tg.angle_triangle(a, b, ts.basis)
        assert lhs <= rhs + 1e-12
    assert direction_angle(a, a) == pytest.approx(0.0, abs=1e-7)


def test_translates_of_a_plane():
    plane = tg.Variety.plane((1, 0, 0))
    balls = [((0.0, y, t), 40.0) for y in (-100.0, 0.0, 150.0) for t in (50.0, 200.0)]
    fam = tg.translate_and_pigeonhole(plane, balls, SC, rng_seed=1)
    assert len(set(fam.classes)) == 1
    assert fam.selected == list(range(len(balls)))
    rb = R ** 0.65
    assert len(fam.offsets) == max(round(tg.ball_volume(rb) / 2.0**fam.dyadic_class), 1)
    assert min(fam.coverage) >= 0.25
    w = fam.width
    assert tg.slab_translates_disjoint((1, 0, 0), [[0, 0, 0], [2.01 * w, 5, 0], [-2.5 * w, 0, 9]], w)
    assert not tg.slab_translates_disjoint((1, 0, 0), [[0, 0, 0], [1.5 * w, 0, 0]], w)


GRID = GridSpec(128.0, 128)


def _spectrum(mask):
    return SampledField(GRID, mask.astype(complex), "frequency")


def test_uncertainty_examples():
    kx, ky = GRID.freq_mesh()
    xi0 = (0.25, 0.0)
    d2 = (kx - xi0[0]) ** 2 + (ky - xi0[1]) ** 2
    plane = tg.uncertainty_check(_spectrum(d2 == d2.min()), xi0, 0.25, 2.0, C=1.0)
    assert plane.measured == pytest.approx(1.0, abs=1e-9) and plane.passed
    dirichlet = tg.uncertainty_check(_spectrum(d2 <= 0.25**2), xi0, 0.25, 1.0)
    assert dirichlet.passed
    full = tg.uncertainty_check(_spectrum(d2 <= 0.25**2), xi0, 0.25, 4.0)
    assert full.measured == pytest.approx(1.0, abs=1e-9)
    zero = tg.uncertainty_check(_spectrum(d2 < 0), xi0, 0.25, 1.0)
    assert zero.passed and zero.extra["vacuous"]
    with pytest.raises(ContractError):
        tg.uncertainty_check(_spectrum(d2 <= 0.5**2), xi0, 0.25, 1.0)
    with pytest.raises(DomainError):
        tg.uncertainty_check(_spectrum(d2 <= 0.25**2), xi0, 0.25, 5.0)


def test_uncertainty_corpus_shape():
    corpus = tg.uncertainty_corpus(0)
    assert len(corpus) == 80
    assert len({c[0] for c in corpus}) == 10
    assert len({(c[3], c[4]) for c in corpus}) == 8


@pytest.fixture(scope="module")
def equi_small():
    Rs = 256.0
    grid = GridSpec(2 * np.pi * 8 * 16, 512)
    f, tiles = tg.tangent_plane_datum(Rs, grid, Rs / 2, n_packets=1, seed=3)
    return Rs, f


def test_equidistribution_single_packet_and_swallow(equi_small):
    Rs, f = equi_small
    br = Rs**0.65
    rep = tg.equidistribution_check(f, 0, Rs, br, Rs / 2, [Rs, Rs / 2, Rs / 4], n_times=33)
    assert all(0 <= q <= 1 for q in rep.ratios)
    assert rep.ratios[0] >= rep.ratios[1] >= rep.ratios[2]
    # at rho = R the width R^(1/2+delta2) equals the ball radius, so the slab holds all of B
    wide = tg.equidistribution_check(f, 0, Rs, br, Rs / 2, [Rs, Rs * 4.0], n_times=33)
    assert wide.ratios[0] == pytest.approx(wide.ratios[1], rel=1e-12)
    zero = tg.equidistribution_check(f.scale(0.0), 0, Rs, br, Rs / 2, [Rs])
    assert zero.vacuous and zero.passed


def test_packet_ball_mass_single():
    Rp, r, t0, tiles, fields = packet_mass_fixtures(0)
    rep = tg.packet_ball_mass_check(fields[0], tiles[:1], (0, 0), t0, r, Rp, n_times=65)
    assert rep.passed
    assert r / 2 <= rep.measured <= 20 * r
    zero = tg.packet_ball_mass_check(fields[0].scale(0.0), tiles[:1], (0, 0), t0, r, Rp)
    assert zero.passed and zero.extra["vacuous"]
    with pytest.raises(ContractError):
        tg.packet_ball_mass_check(fields[0], [Tile((0.0, 0.0), (100.0, 0.0), Rp)], (0, 0), t0, r, Rp)
