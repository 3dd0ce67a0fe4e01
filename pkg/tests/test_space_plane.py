"""Disk-model geometry: isometries, arcs, cocycles, weights, orbit cache."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from boundaryrep.plane import (
    ArcSet,
    CacheExhaustedError,
    CirclePoint,
    MobiusIsometry,
    OrbitCache,
    PlaneModel,
    build_group,
)
from boundaryrep.space import GeometryError

TWO_PI = 2.0 * math.pi

angles = st.floats(min_value=0.0, max_value=TWO_PI, exclude_max=True)
radii = st.floats(min_value=0.0, max_value=0.98)


def interior(r, th):
    return r * complex(math.cos(th), math.sin(th))


# ---------------------------------------------------------------------------
# Moebius isometries
# ---------------------------------------------------------------------------


def test_identity_fixes_everything():
    e = MobiusIsometry.identity()
    assert e.act(0.3 + 0.4j) == 0.3 + 0.4j
    assert e.is_identity()
    assert e.displacement() == 0.0


def test_non_unimodular_matrix_rejected():
    with pytest.raises(GeometryError):
        MobiusIsometry(2.0, 0.0, 0.0, 2.0)


def test_real_matrix_and_disk_pair_round_trip():
    rng = np.random.default_rng(0)
    for _ in range(100):
        beta = complex(rng.normal(), rng.normal())
        u = rng.uniform(0, TWO_PI)
        alpha = math.sqrt(1.0 + abs(beta) ** 2) * complex(math.cos(u),
                                                          math.sin(u))
        g = MobiusIsometry.from_disk_pair(alpha, beta)
        assert abs(g.det - 1.0) < 1e-12
        again = MobiusIsometry(g.a, g.b, g.c, g.d)
        assert g.residual_to(again) < 1e-12


def test_group_axioms_and_isometric_action():
    rng = np.random.default_rng(1)
    for _ in range(50):
        b1 = complex(rng.normal(), rng.normal()) * 0.7
        b2 = complex(rng.normal(), rng.normal()) * 0.7
        g = MobiusIsometry.from_disk_pair(math.sqrt(1 + abs(b1) ** 2), b1)
        h = MobiusIsometry.from_disk_pair(math.sqrt(1 + abs(b2) ** 2), b2)
        assert (g * g.inverse()).is_identity(1e-10)
        z, w = 0.25 - 0.55j, -0.1 + 0.62j
        gh = g * h
        assert abs(gh.act(z) - g.act(h.act(z))) < 1e-12
        from boundaryrep.plane import _disk_dist
        assert abs(_disk_dist(g.act(z), g.act(w)) - _disk_dist(z, w)) < 1e-9


def test_translation_moves_origin_by_its_length():
    tr = MobiusIsometry.disk_translation(0.6)
    from boundaryrep.plane import _disk_dist
    d = _disk_dist(0.0, 0.6)
    assert abs(tr.act(0.0) - 0.6) < 1e-15
    assert abs(tr.displacement() - d) < 1e-12
    assert abs(tr.translation_length() - d) < 1e-12


def test_rotation_fixes_center_and_has_zero_translation_length():
    rot = MobiusIsometry.disk_rotation(0.2 + 0.1j, 1.0)
    assert abs(rot.act(0.2 + 0.1j) - (0.2 + 0.1j)) < 1e-12
    assert rot.translation_length() == 0.0
    assert rot.displacement() > 0.0


def test_boundary_action_matches_interior_limit():
    g = MobiusIsometry.from_disk_pair(math.sqrt(2.0), 0.6 + 0.8j)
    for th in np.linspace(0.1, 6.1, 13):
        image = g.act_boundary(CirclePoint(th))
        near = g.act(0.9999999 * complex(math.cos(th), math.sin(th)))
        gap = math.remainder(math.atan2(near.imag, near.real) - image.angle,
                             TWO_PI)
        assert abs(gap) < 1e-5


# ---------------------------------------------------------------------------
# arc sets
# ---------------------------------------------------------------------------


def test_arcset_parse_measure_and_complement():
    U = ArcSet.from_text("0:0.25,0.5:0.75")
    assert abs(U.measure() - 0.5) < 1e-15
    V = U.complement()
    assert abs(V.measure() - 0.5) < 1e-15
    assert U.union(V).is_full
    assert U.intersect(V).is_empty
    assert ArcSet.from_text("!0:0.25,0.5:0.75") == V
    assert ArcSet.from_text("*").is_full
    assert ArcSet.from_text("all").is_full


def test_arcset_rejects_malformed_text():
    with pytest.raises(GeometryError):
        ArcSet.from_text("0.25")
    with pytest.raises(GeometryError):
        ArcSet.from_text("0.5:0.25")


def test_arcset_wraps_across_the_seam():
    W = ArcSet([(0.9 * TWO_PI, 1.1 * TWO_PI)])
    assert abs(W.measure() - 0.2) < 1e-14
    assert len(W.arcs) == 2
    assert W.contains(CirclePoint(0.05 * TWO_PI))
    assert W.contains(CirclePoint(0.95 * TWO_PI))
    assert not W.contains(CirclePoint(0.5 * TWO_PI))
    assert len(W.complement().arcs) == 1


def test_arcset_intersection_of_overlapping_arcs():
    A = ArcSet([(0.0, 2.0)])
    B = ArcSet([(1.0, 3.0)])
    AB = A.intersect(B)
    assert len(AB.arcs) == 1
    lo, hi = AB.arcs[0]
    assert abs(lo - 1.0) < 1e-14 and abs(hi - 2.0) < 1e-14


@given(st.lists(st.tuples(angles, st.floats(min_value=1e-6, max_value=2.0)),
                min_size=0, max_size=5))
@settings(max_examples=60, deadline=None)
def test_arcset_complement_laws(spans):
    U = ArcSet([(lo, lo + w) for lo, w in spans])
    assert abs(U.measure() + U.complement().measure() - 1.0) < 1e-12
    assert U.complement().complement() == U
    assert U.intersect(U) == U
    assert U.union(U) == U


@given(angles, st.floats(min_value=1e-6, max_value=3.0), angles)
@settings(max_examples=60, deadline=None)
def test_arcset_membership_respects_complement(lo, width, probe):
    U = ArcSet([(lo, lo + width)])
    b = CirclePoint(probe)
    assert U.contains(b) != U.complement().contains(b)


def test_vectorized_membership_matches_scalar():
    W = ArcSet([(0.9 * TWO_PI, 1.1 * TWO_PI), (2.0, 2.5)])
    rng = np.random.default_rng(1)
    thetas = rng.uniform(0.0, TWO_PI, 500)
    mask = W.contains_angles(thetas)
    for i in range(500):
        assert bool(mask[i]) == W.contains(CirclePoint(thetas[i]))


def test_thicken_adds_the_arcsine_collar():
    m = PlaneModel("genus2")
    one = ArcSet([(1.0, 2.0)])
    grown = m.thicken(one, 2.0)
    collar = 2.0 * math.asin(math.exp(-2.0))
    assert abs(grown.measure() - (one.measure() + 2 * collar / TWO_PI)) < 1e-14
    assert m.thicken(ArcSet.full(), 1.0).is_full
    with pytest.raises(GeometryError):
        m.thicken(one, 0.0)


# ---------------------------------------------------------------------------
# group presets
# ---------------------------------------------------------------------------


def test_octagon_group_satisfies_the_commutator_relation():
    m = PlaneModel("genus2")
    assert m.relation_residual < 1e-11
    a, b, c, d = m.base_generators
    relator = (a * b * a.inverse() * b.inverse()
               * c * d * c.inverse() * d.inverse())
    assert relator.residual_to(MobiusIsometry.identity()) < 1e-11


def test_octagon_generators_displace_by_twice_the_inradius():
    m = PlaneModel("genus2")
    expected = 2.0 * math.acosh(1.0 + math.sqrt(2.0))
    for g in m.base_generators:
        assert abs(g.displacement() - expected) < 1e-12
        assert abs(abs(g.trace) - (2.0 + math.sqrt(2.0))) < 1e-12
    assert abs(m.systole_estimate - expected) < 1e-12
    assert abs(m.quotient_radius
               - math.acosh(3.0 + 2.0 * math.sqrt(2.0))) < 1e-12


def test_triangle_rotations_have_the_advertised_orders():
    m = PlaneModel("triangle237")
    assert m.relation_residual < 1e-12
    x, y, z = m.base_generators
    for g, order in ((x, 2), (y, 3), (z, 7)):
        p = MobiusIsometry.identity()
        for _ in range(order):
            p = p * g
        assert p.residual_to(MobiusIsometry.identity()) < 1e-12
        assert g.translation_length() == 0.0
    assert abs(m.quotient_radius - 0.5603498368300728) < 1e-12
    assert abs(m.systole_estimate - 0.3235381633692139) < 1e-10


def test_build_group_returns_generators_with_inverses():
    gens = build_group("genus2")
    assert len(gens) == 8
    for i in range(4):
        assert (gens[i] * gens[i + 4]).is_identity(1e-10)
    assert len(build_group("triangle-2-3-7")) == 6
    with pytest.raises(GeometryError):
        build_group("nope")


# ---------------------------------------------------------------------------
# distances, cocycles, products
# ---------------------------------------------------------------------------


def test_distance_formula_against_known_values():
    m = PlaneModel("genus2")
    assert m.dist(0.0, 0.5) == 2.0 * math.atanh(0.5)
    with pytest.raises(GeometryError):
        m.dist(0.0, 1.0)
    with pytest.raises(GeometryError):
        m.dist(CirclePoint(0.0), 0.0)


def test_busemann_equals_finite_ray_limit():
    m = PlaneModel("genus2")
    rng = np.random.default_rng(42)
    for _ in range(25):
        b = m.random_boundary(rng)
        x = m.random_interior(rng, 3.0)
        y = m.random_interior(rng, 3.0)
        z = m.ray_point(b, 25.0)
        approx = m.dist(y, z) - m.dist(x, z)
        assert abs(m.busemann_disk(b, x, y) - approx) < 1e-9


def test_busemann_along_its_own_ray_is_arclength():
    m = PlaneModel("genus2")
    b = CirclePoint(1.0)
    for s in (0.5, 1.0, 3.0, 7.0):
        q = m.ray_point(b, s)
        assert abs(m.busemann_from_root(b, q) + s) < 1e-12


@given(angles, radii, angles, radii, angles, radii, angles)
@settings(max_examples=80, deadline=None)
def test_busemann_cocycle_additivity(r1, t1, r2, t2, r3, t3, bth):
    m = PlaneModel("genus2")
    x, y, z = interior(t1, r1), interior(t2, r2), interior(t3, r3)
    b = CirclePoint(bth)
    total = (m.busemann_disk(b, x, y) + m.busemann_disk(b, y, z)
             + m.busemann_disk(b, z, x))
    assert abs(total) < 1e-9


def test_cocycle_agrees_with_gromov_identity():
    m = PlaneModel("genus2")
    rng = np.random.default_rng(7)
    for _ in range(60):
        b = m.random_boundary(rng)
        x = m.random_interior(rng, 3.0)
        y = m.random_interior(rng, 3.0)
        lhs = m.busemann_disk(b, x, y)
        rhs = m.dist(x, y) - 2.0 * m.gromov(y, b, x)
        assert abs(lhs - rhs) < 1e-9


def test_gromov_products_match_finite_ray_approximations():
    m = PlaneModel("genus2")
    rng = np.random.default_rng(11)
    for _ in range(20):
        b, c = m.random_boundary(rng), m.random_boundary(rng)
        if b.angular_distance(c) < 0.05:
            continue
        x = m.random_interior(rng, 2.0)
        zb, zc = m.ray_point(b, 22.0), m.ray_point(c, 22.0)
        two_ray = 0.5 * (m.dist(zb, x) + m.dist(zc, x) - m.dist(zb, zc))
        assert abs(m.gromov(b, c, x) - two_ray) < 1e-6
        q = m.random_interior(rng, 3.0)
        mixed = 0.5 * (m.dist(q, x) + m.dist(zb, x) - m.dist(q, zb))
        assert abs(m.gromov(q, b, x) - mixed) < 1e-6


def test_coincident_boundary_points_have_infinite_product():
    m = PlaneModel("genus2")
    b = CirclePoint(2.0)
    assert m.gromov(b, CirclePoint(2.0), 0.0j) == math.inf


def test_visual_distance_is_sine_of_half_gap():
    m = PlaneModel("genus2")
    rng = np.random.default_rng(3)
    for _ in range(40):
        b, c = m.random_boundary(rng), m.random_boundary(rng)
        if b == c:
            continue
        sigma = math.exp(-m.gromov(b, c, 0.0j))
        assert abs(sigma - math.sin(b.angular_distance(c) / 2.0)) < 1e-12


def test_gromov_product_is_isometry_invariant():
    m = PlaneModel("genus2")
    rng = np.random.default_rng(5)
    g = m.generators[0] * m.generators[2]
    for _ in range(30):
        b, c = m.random_boundary(rng), m.random_boundary(rng)
        x = m.random_interior(rng, 3.0)
        before = m.gromov(b, c, x)
        after = m.gromov(g.act_boundary(b), g.act_boundary(c), g.act(x))
        if math.isinf(before):
            assert math.isinf(after)
        else:
            assert abs(before - after) < 1e-9


def test_ray_point_distance_and_direction():
    m = PlaneModel("genus2")
    b = CirclePoint(0.8)
    q = m.ray_point(b, 4.0)
    assert abs(m.dist(0.0j, q) - 4.0) < 1e-12
    assert m.direction(q) == b
    with pytest.raises(GeometryError):
        m.direction(0.0j)
    with pytest.raises(GeometryError):
        m.ray_point(b, -1.0)


def test_four_point_hyperbolicity_defect_stays_under_log_two():
    m = PlaneModel("genus2")
    worst = m.hyperbolicity_audit(n_samples=800, seed=7, max_dist=8.0)
    assert worst <= math.log(2.0) + 1e-9
    assert worst > 0.5  # the bound is essentially attained, not slack


# ---------------------------------------------------------------------------
# boundary weights and integrals
# ---------------------------------------------------------------------------


def test_weight_at_origin_is_one():
    m = PlaneModel("genus2")
    assert m.weight_l1(0.0j) == 1.0
    assert m.visual_weight(0.0j, CirclePoint(1.2)) == 1.0


def test_weight_l1_closed_form_matches_quadrature():
    m = PlaneModel("genus2")
    for q in (0.3 + 0.1j, -0.62 + 0.4j, 0.95j, 0.999):
        closed = m.weight_l1(q)
        num, _ = quad(lambda th: m.visual_weight(q, CirclePoint(th)),
                      0.0, TWO_PI, limit=400)
        assert abs(closed - num / TWO_PI) < 1e-9


def test_weight_arc_integral_matches_quadrature_and_is_additive():
    m = PlaneModel("genus2")
    q = 0.3 - 0.62j
    U = ArcSet([(0.5, 2.5), (4.0, 5.0)])
    closed = m.weight_integral(q, U)
    num = sum(quad(lambda th: m.visual_weight(q, CirclePoint(th)),
                   lo, hi, limit=400)[0] for lo, hi in U.arcs)
    assert abs(closed - num / TWO_PI) < 1e-9
    comp = m.weight_integral(q, U.complement())
    assert abs(closed + comp - m.weight_l1(q)) < 1e-12
    assert abs(m.weight_integral(q, ArcSet.full()) - m.weight_l1(q)) < 1e-12
    assert m.weight_integral(q, ArcSet.empty()) == 0.0


def test_weight_vector_form_matches_scalar():
    m = PlaneModel("genus2")
    q = -0.44 + 0.21j
    thetas = np.linspace(0.0, TWO_PI, 37, endpoint=False)
    vec = m.visual_weight_at_angles(q, thetas)
    for i, th in enumerate(thetas):
        assert abs(vec[i] - m.visual_weight(q, CirclePoint(th))) < 1e-14
    many = m.weight_l1_many(np.array([0.0j, q, 0.5 + 0.5j]))
    assert many[0] == 1.0
    assert abs(many[1] - m.weight_l1(q)) < 1e-14


def test_poisson_kernel_mean_value_is_one():
    # weight^2 is the Poisson kernel; its boundary mean is exactly one
    m = PlaneModel("genus2")
    q = 0.57 - 0.21j
    num, _ = quad(lambda th: m.visual_weight(q, CirclePoint(th)) ** 2,
                  0.0, TWO_PI, limit=400)
    assert abs(num / TWO_PI - 1.0) < 1e-10


def test_monte_carlo_integral_of_one_is_exactly_one():
    m = PlaneModel("genus2")
    mean, stderr = m.mc_boundary_integral(lambda th: np.ones_like(th),
                                          4096, seed=3)
    assert mean == 1.0
    assert stderr == 0.0


def test_monte_carlo_agrees_with_closed_form_weight():
    m = PlaneModel("genus2")
    q = 0.55 + 0.2j
    mean, stderr = m.mc_boundary_integral(
        lambda th: m.visual_weight_at_angles(q, th), 100000, seed=5)
    assert stderr > 0.0
    assert abs(mean - m.weight_l1(q)) < 5.0 * stderr


def test_monte_carlo_is_reproducible_per_seed():
    m = PlaneModel("genus2")
    f = lambda th: np.sin(th) ** 2
    a = m.mc_boundary_integral(f, 2000, seed=11)
    b = m.mc_boundary_integral(f, 2000, seed=11)
    c = m.mc_boundary_integral(f, 2000, seed=12)
    assert a == b
    assert a != c


def test_boundary_translation_is_the_change_of_variables():
    m = PlaneModel("genus2")
    g = m.generators[0] * m.generators[1]
    U = ArcSet([(0.3, 1.1), (2.0, 2.4)])
    gU = m.translate_boundary(g, U)

    def derivative(th):
        gb = g.act_boundary(CirclePoint(th))
        return math.exp(m.busemann_from_root(gb, g.orbit_point()))

    total = sum(quad(derivative, lo, hi, limit=800)[0] for lo, hi in U.arcs)
    assert abs(gU.measure() - total / TWO_PI) < 1e-8
    for th in np.linspace(0.31, 1.09, 7):
        assert gU.contains(g.act_boundary(CirclePoint(th)))


def test_measure_transport_under_group_elements():
    # nu(g^-1 V) equals the integral over V of the squared visual weight
    # of g . origin -- the unitarity identity for the boundary action.
    m = PlaneModel("genus2")
    g = m.generators[0] * m.generators[1]
    V = ArcSet([(1.2, 2.9)])
    ginvV = m.translate_boundary(g.inverse(), V)

    def transport(th):
        return m.visual_weight(g.orbit_point(), CirclePoint(th)) ** 2

    total = sum(quad(transport, lo, hi, limit=800)[0] for lo, hi in V.arcs)
    assert abs(ginvV.measure() - total / TWO_PI) < 1e-8


def test_ball_measure_closed_form():
    m = PlaneModel("genus2")
    b = CirclePoint(0.3)
    assert m.ball_measure(b, 1.5) == 1.0
    assert m.ball_measure(b, 0.0) == 0.0
    r = 0.4
    assert abs(m.ball_measure(b, r) - 2.0 * math.asin(r) / math.pi) < 1e-15
    # matches the thickened-point arc measure at radius e^{-a}
    a = 1.3
    collar = ArcSet([(b.angle, b.angle + 1e-12)]).thicken(a)
    assert abs(m.ball_measure(b, math.exp(-a)) - collar.measure()) < 1e-9


# ---------------------------------------------------------------------------
# orbit cache
# ---------------------------------------------------------------------------


def test_orbit_counts_match_the_octagon_tiling(genus2):
    # 793 tile centers within distance 8 -- cross-checked against an
    # independent enumeration with a different generating set.
    assert genus2.orbit_count_within(8.0) == 793
    assert genus2.orbit_count_within(0.5) == 1
    frozen = {9.0: 2057, 10.0: 5433, 11.0: 15337, 12.0: 40905}
    for t, n in frozen.items():
        assert genus2.orbit_count_within(t) == n
        # lattice growth tracks e^t / 4 within a few percent at this depth
        assert abs(n / (math.exp(t) / 4.0) - 1.0) < 0.07


def test_orbit_cache_is_sorted_and_deduplicated(genus2):
    orb = genus2.orbit()
    assert (np.diff(orb.dists) >= 0.0).all()
    assert orb.words[0] == ""
    assert orb.dists[0] == 0.0
    audit = orb.audit
    assert audit["sampled_min_separation"] > genus2.merge_tol
    assert audit["max_merged_distance"] < 1e-9
    assert audit["stopped_quiet"]


def test_orbit_words_reproduce_their_matrices(genus2):
    orb = genus2.orbit()
    rng = np.random.default_rng(0)
    for i in rng.choice(len(orb), size=25, replace=False):
        g = genus2.element_from_word(orb.words[i])
        rel = g.residual_to(orb.element(i)) / (1.0 + abs(g.alpha))
        assert rel < 1e-10
        assert abs(g.displacement() - orb.dists[i]) < 1e-9
        point = orb.points[i]
        assert abs(g.orbit_point() - point) < 1e-9


def test_annulus_window_is_open_and_double_sided(genus2):
    R = genus2.quotient_radius
    idx = genus2.enumerate_annulus_numeric(9.0)
    d = genus2.orbit().dists[idx]
    assert len(idx) == 23024
    assert (d > 9.0 - R).all()
    assert (d < 9.0 + R).all()
    # neighbors just outside the window are excluded
    below = genus2.orbit().dists < 9.0 - R
    assert below.sum() + len(idx) <= len(genus2.orbit())


def test_annulus_requires_t_larger_than_R(genus2):
    with pytest.raises(GeometryError):
        genus2.enumerate_annulus_numeric(2.0)


def test_exhausted_cache_raises(genus2):
    with pytest.raises(CacheExhaustedError, match="cache exhausted"):
        genus2.enumerate_annulus_numeric(12.0)
    with pytest.raises(CacheExhaustedError, match="cache exhausted"):
        genus2.orbit_count_within(14.0)


def test_orbit_cache_round_trips_through_disk(genus2, orbit_cache_dir):
    orb = genus2.orbit()
    loaded = OrbitCache.load(orbit_cache_dir, preset=genus2.preset,
                             radius=genus2.cache_radius,
                             margin=genus2.prune_margin,
                             merge_tol=genus2.merge_tol)
    assert loaded is not None
    assert loaded.words == orb.words
    assert np.array_equal(loaded.alphas, orb.alphas)
    assert np.array_equal(loaded.dists, orb.dists)
    assert np.array_equal(loaded.angles, orb.angles)
    # mismatched parameters refuse to load
    assert OrbitCache.load(orbit_cache_dir, preset=genus2.preset,
                           radius=genus2.cache_radius + 1.0,
                           margin=genus2.prune_margin,
                           merge_tol=genus2.merge_tol) is None


def test_triangle_orbit_growth_and_separation(triangle):
    orb = triangle.orbit()
    assert orb.audit["sampled_min_separation"] > triangle.merge_tol
    frozen = {6.0: 8460, 7.0: 23030, 8.0: 62593}
    for t, n in frozen.items():
        assert triangle.orbit_count_within(t) == n
    # growth constant approximately 21 e^t for this presentation
    assert abs(triangle.orbit_count_within(8.0) / math.exp(8.0) - 21.0) < 0.5
    assert len(triangle.enumerate_annulus_numeric(4.0)) == 1351


def test_annulus_directions_lie_in_their_shadows(genus2):
    # the direction of an annulus point q is within e^{-(t-R)} visual
    # distance of any boundary point of the cone over q's ball
    orb = genus2.orbit()
    idx = genus2.enumerate_annulus_numeric(9.0)[:50]
    for i in idx:
        q = orb.points[i]
        b = genus2.direction(q)
        assert abs(b.angle - orb.angles[i]) < 1e-12


def test_unknown_preset_rejected():
    with pytest.raises(GeometryError):
        PlaneModel("genus3")
