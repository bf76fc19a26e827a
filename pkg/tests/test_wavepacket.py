import numpy as np
import pytest

from schrodinger_lab.errors import ContractError
from schrodinger_lab.field_core import FrequencySupport, SampledField, l2_norm, random_bandlimited
from schrodinger_lab.propagator import CurveParams, evolve
from schrodinger_lab.wavepacket import (
    PacketCoefficients,
    Tile,
    Tube,
    build_tile_lattice,
    child_tube_excess,
    decompose,
    direction_angle,
    packet_compatibility,
    packet_function,
    packet_grid,
    packet_spectrum,
    recenter_packets,
    reconstruct,
    tube_mass_fraction,
    tube_of,
)

UNIT = FrequencySupport.unit_ball()


@pytest.fixture(scope="module")
def lat64():
    return build_tile_lattice(64.0, UNIT, packet_grid(64.0))


def test_lattice_counts(lat64):
    # frozen enumeration: every tile whose 1.2|theta| packet square meets the unit disk
    assert lat64.n_theta == 241
    assert len(lat64.nu_axis) == 25
    assert lat64.frame_constant == pytest.approx(0.16, rel=1e-12)


def test_lattice_single_theta_cube():
    R = 64.0
    lat = build_tile_lattice(R, FrequencySupport.ball((0.25, -0.125), 0.05 * R**-0.5), packet_grid(R))
    assert lat.n_theta == 1
    assert np.allclose(lat.thetas[0], (0.25, -0.125))


def test_lattice_density_scales_with_R():
    counts = {}
    for R in (64.0, 256.0):
        lat = build_tile_lattice(R, UNIT, packet_grid(R))
        counts[R] = lat.n_theta * lat.theta_side**2
    # both approximate the area of the unit disk enlarged by the packet overhang
    for v in counts.values():
        assert np.pi <= v <= 1.3 * np.pi
    assert counts[256.0] < counts[64.0]


def test_packet_normalisation_and_translation(lat64):
    g = lat64.grid
    tile = Tile((0.125, -0.25), (0.0, 0.0), 64.0)
    p = packet_function(tile, g)
    assert l2_norm(p) == pytest.approx(1.0, abs=1e-6)
    k = 10
    moved = packet_function(Tile(tile.theta_center, (k * g.dx, 0.0), 64.0), g).as_physical().values
    shifted = np.roll(p.as_physical().values, k, axis=0)
    assert np.abs(moved - shifted).max() <= 1e-12


def _overlap(R, k):
    g = packet_grid(R)
    a = packet_spectrum(Tile((0.0, 0.0), (0.0, 0.0), R), g)
    b = packet_spectrum(Tile((0.0, 0.0), (k * R**0.5, 0.0), R), g)
    return abs(np.vdot(a, b)) / (np.linalg.norm(a) * np.linalg.norm(b))


def test_packet_overlap_profile_is_scale_free():
    # overlap is the transform of |profile|^2 at k |theta| R^{1/2}; frozen values
    for R in (64.0, 256.0):
        assert _overlap(R, 2) == pytest.approx(0.8238668574, abs=1e-8)
        assert _overlap(R, 4) == pytest.approx(0.4161144438, abs=1e-8)
        assert _overlap(R, 12) == pytest.approx(0.0049536766, abs=1e-8)


@pytest.mark.xfail(strict=True, reason="4 R^{1/2} lies inside the main lobe of the overlap; measured 0.416")
def test_far_packets_almost_orthogonal_literal():
    assert _overlap(64.0, 4) <= 1e-3


def test_decompose_single_packet(lat64):
    g = lat64.grid
    i = int(np.argmin(np.hypot(*(lat64.thetas - (0.3, -0.2)).T)))
    th = lat64.thetas[i]
    nu = (lat64.nu_axis[12], lat64.nu_axis[7])
    f = packet_function(Tile(tuple(th), nu, 64.0), g)
    c = decompose(f, lat64)
    own = abs(c.values[i, 12, 7])
    assert own / lat64.frame_constant >= 0.95
    far = np.abs(c.values).copy()
    dist = np.hypot(*(lat64.thetas - th).T)
    far[dist <= 2.5 * lat64.theta_side] = 0.0
    assert far.max() <= 1e-3


def test_zero_field(lat64):
    z = SampledField(lat64.grid, np.zeros((lat64.grid.n,) * 2, complex), "frequency")
    c = decompose(z, lat64)
    assert np.all(c.values == 0)
    assert c.to_csv().strip() == "theta_x,theta_y,nu_x,nu_y,re,im"


def test_frame_identity_and_round_trip(lat64, rng):
    for _ in range(3):
        f = random_bandlimited(lat64.grid, UNIT, rng)
        c = decompose(f, lat64)
        assert c.energy() == pytest.approx(l2_norm(f) ** 2, rel=1e-10)
        g = reconstruct(c)
        assert l2_norm(g + f.scale(-1.0)) <= 1e-10 * l2_norm(f)


def test_single_coefficient_and_linearity(lat64, rng):
    C = np.zeros_like(decompose(random_bandlimited(lat64.grid, UNIT, rng), lat64).values)
    C[5, 3, 4] = 1.0
    g = reconstruct(PacketCoefficients(lat64, C))
    tile = Tile(tuple(lat64.thetas[5]), (lat64.nu_axis[3], lat64.nu_axis[4]), 64.0)
    expect = lat64.frame_constant * packet_spectrum(tile, lat64.grid)
    assert np.abs(g.values - expect).max() <= 1e-12 * np.abs(expect).max()
    A = rng.standard_normal(C.shape) + 1j * rng.standard_normal(C.shape)
    B = rng.standard_normal(C.shape)
    lhs = reconstruct(PacketCoefficients(lat64, 2 * A - 1j * B)).values
    rhs = 2 * reconstruct(PacketCoefficients(lat64, A)).values - 1j * reconstruct(PacketCoefficients(lat64, B)).values
    assert np.abs(lhs - rhs).max() <= 1e-12 * np.abs(rhs).max()


def test_decompose_rejects_uncovered_spectrum(lat64):
    v = np.zeros((lat64.grid.n,) * 2, complex)
    v[40, 0] = 1.0  # |xi| well above 1
    with pytest.raises(ContractError):
        decompose(SampledField(lat64.grid, v, "frequency"), lat64)


def test_tube_membership():
    tile = Tile((0.1, -0.2), (3.0, 4.0), 256.0)
    tube = tube_of(tile, 0.1)
    assert np.allclose(tube.direction, (-0.2, 0.4, 1.0))
    assert tube.contains(3.0, 4.0, 0.0)
    t = 100.0
    cx, cy = 3.0 - 2 * t * 0.1, 4.0 + 2 * t * 0.2
    assert not tube.contains(cx + 2 * tube.radius, cy, t)
    assert tube.contains(cx + 0.99 * tube.radius, cy, t)
    assert not tube.contains(cx, cy, 257.0)
    vert = Tube(Tile((0.0, 0.0), (1.0, 1.0), 256.0), 0.1)
    assert np.allclose(vert.direction, (0, 0, 1))
    assert vert.contains(1.0 + 0.5 * vert.radius, 1.0, 200.0)


@pytest.fixture(scope="module")
def central_report():
    R = 256.0
    return tube_mass_fraction(Tile((0.0, 0.0), (0.0, 0.0), R), packet_grid(R), 0.1)


def test_tube_mass_fraction_is_a_fraction(central_report):
    assert 0.0 <= central_report.fraction <= 1.0


def test_tube_mass_concentrates_in_a_dilated_tube():
    """Measured profile: about 0.29 inside the tube, 0.99 inside the 10x dilation."""
    R = 256.0
    tile = Tile((0.0, 0.0), (0.0, 0.0), R)
    from schrodinger_lab.propagator import TimeCutoffs, _phase
    from schrodinger_lab.field_core import synthesize

    g = packet_grid(R)
    tube = Tube(tile, 0.1)
    cut = TimeCutoffs(R)
    X, Y = g.mesh()
    kx, ky = g.freq_mesh()
    spec = packet_spectrum(tile, g)
    inside = total = 0.0
    for t in np.linspace(cut.split, R, 33):
        a2 = np.abs(synthesize(g, spec * np.exp(1j * _phase(kx, ky, t, CurveParams())))) ** 2
        inside += a2[tube.contains(X, Y, t, 10.0, g.side_length)].sum()
        total += a2.sum()
    assert inside / total >= 0.985


@pytest.mark.xfail(strict=True, reason="packet footprint exceeds R^(1/2+delta) at R=256; measured ~0.29")
def test_tube_mass_fraction_literal(central_report):
    assert central_report.fraction >= 0.99


@pytest.mark.xfail(strict=True, reason="algebraic tails of the compact profile; measured ~0.13 R^-1/2")
def test_amplitude_outside_double_tube_literal(central_report):
    assert central_report.outside_sup_scaled <= 0.01


def test_recentered_basis(rng):
    R, rho = 256.0, 64.0
    g = packet_grid(R)
    zero = recenter_packets(((0.0, 0.0), 0.0), rho, UNIT, g)
    tile = Tile(tuple(zero.lattice.thetas[10]), (0.0, 0.0), rho)
    assert np.array_equal(zero.packet(tile).values, packet_spectrum(tile, g))

    k = 12
    x0, t0 = (k * g.dx, -5 * g.dx), 37.0
    basis = recenter_packets((x0, t0), rho, UNIT, g, CurveParams((0.6, 0.8)))
    moved = evolve(basis.packet(tile), t0, CurveParams((0.6, 0.8))).values
    plain = np.roll(packet_function(tile, g).as_physical().values, (k, -5), axis=(0, 1))
    assert np.abs(moved - plain).max() <= 1e-10 * np.abs(plain).max()

    f = random_bandlimited(g, UNIT, rng)
    c = basis.decompose(f)
    assert c.energy() == pytest.approx(l2_norm(f) ** 2, rel=1e-3)
    assert l2_norm(basis.reconstruct(c) + f.scale(-1.0)) <= 1e-3 * l2_norm(f)


def test_compatibility_examples():
    R, rho = 256.0, 64.0
    parent = Tile((0.0, 0.0), (0.0, 0.0), R)
    assert packet_compatibility(parent, Tile((0.0, 0.0), (0.0, 0.0), rho), ((0.0, 0.0), 0.0))
    far = Tile((3 * rho**-0.5, 0.0), (0.0, 0.0), rho)
    assert not packet_compatibility(parent, far, ((0.0, 0.0), 0.0))


def test_compatible_pairs_geometry(rng):
    R, rho, delta = 256.0, 64.0, 0.1
    n = 0
    while n < 100:
        ct = rng.uniform(-0.5, 0.5, 2)
        cb = ct + rng.uniform(-1, 1, 2) * rho**-0.5
        t0 = rng.uniform(0, R)
        x0 = rng.uniform(-20, 20, 2)
        nu = rng.uniform(-40, 40, 2)
        parent = Tile(tuple(ct), tuple(nu), R)
        d = rng.uniform(-1, 1, 2) * 0.5 * R ** (0.5 + delta)
        child = Tile(tuple(cb), tuple(nu - x0 - 2 * t0 * ct - d), rho)
        if not packet_compatibility(parent, child, (x0, t0), delta):
            continue
        n += 1
        assert direction_angle(parent.direction, child.direction) <= 4 * rho**-0.5
        assert child_tube_excess(parent, child, (x0, t0), delta) <= 4.0
