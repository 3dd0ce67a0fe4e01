"""Tests for regularity certificates, shell-integral brackets, and sampling sets."""

import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boundaryrep import (
    CacheExhaustedError,
    CirclePoint,
    FreeGroupModel,
    GeometryError,
    RegularityCertificate,
    SamplingSet,
    annulus_weight_average,
    build_sampling_set,
    certify_regularity,
    decreasing_integral_bounds,
    default_certificate,
    int_as_log_bounds,
    sampled_integral,
    sampling_weight_bound,
    tree_level_weight_sum,
    visual_distance,
)
from boundaryrep.words import alphabet, canonical_extension, iter_reduced_words

TREE = FreeGroupModel(2)
AAA = canonical_extension((1,), 2)  # the ray a, a, a, ...


def random_reduced_letters(rng, length):
    letters = []
    for _ in range(length):
        opts = [l for l in alphabet(2) if not letters or l != -letters[-1]]
        letters.append(opts[int(rng.integers(len(opts)))])
    return tuple(letters)


# -- ball measures on the tree ---------------------------------------------------


class TestTreeBallMeasure:
    def test_frozen_values(self):
        # Open ball {sigma < r}: depth floor(-log r) + 1 cylinders.
        for r, want in [(1.0, Fraction(1, 4)), (0.9, Fraction(1, 4)),
                        (1.5, Fraction(1)), (math.exp(-1) * 0.999, Fraction(1, 12)),
                        (math.exp(-1) * 1.001, Fraction(1, 4)),
                        (math.exp(-3) * 1.001, Fraction(1, 36)),
                        (math.exp(-3) * 0.999, Fraction(1, 108))]:
            assert TREE.ball_measure(AAA, r).as_fraction() == want

    def test_nonpositive_radius_rejected(self):
        with pytest.raises(GeometryError):
            TREE.ball_measure(AAA, 0.0)
        with pytest.raises(GeometryError):
            TREE.ball_measure(AAA, -0.25)

    @given(st.floats(min_value=1e-4, max_value=1.0))
    def test_ratio_stays_in_exact_interval(self, r):
        eta = TREE.critical_exponent
        ratio = float(TREE.ball_measure(AAA, r)) / r ** eta
        assert 0.25 - 1e-12 <= ratio <= 0.75 + 1e-9


# -- regularity certificates -----------------------------------------------------


class TestRegularityCertificate:
    def test_invariant_rejects_bad_constants(self):
        with pytest.raises(GeometryError):
            RegularityCertificate(1.0, 2.0, 1.0, 0, "", 2.0, 1.0)
        with pytest.raises(GeometryError):
            RegularityCertificate(1.0, 0.0, 1.0, 0, "", 0.0, 1.0)

    def test_json_fields(self):
        cert = RegularityCertificate(1.0, 0.5, 2.0, 7, "grid", 0.5, 2.0)
        data = json.loads(cert.to_json())
        assert set(data) == {"eta", "k", "kprime", "samples",
                             "worst_ratio_low", "worst_ratio_high"}
        assert data["k"] == 0.5 and data["kprime"] == 2.0 and data["samples"] == 7

    def test_tree_default_is_exact_quarter_three_quarters(self):
        cert = certify_regularity(TREE)
        assert cert.k == 0.25
        assert cert.kprime == 0.75
        assert cert.eta == pytest.approx(math.log(3), rel=1e-15)
        assert cert.samples == 160
        assert cert.worst_ratio_low == pytest.approx(0.25, abs=1e-12)
        assert 0.749 < cert.worst_ratio_high < 0.75

    def test_plane_default_matches_arc_ratio_range(self, genus2):
        cert = certify_regularity(genus2)
        assert 0.2 < cert.k <= cert.kprime < 5.0
        assert cert.k == pytest.approx(2.0 / math.pi, abs=1e-4)
        assert 0.85 < cert.kprime <= 1.0 + 1e-12
        assert cert.samples == 1000

    def test_closed_form_default_certificates(self, genus2):
        ct = default_certificate(TREE)
        assert (ct.k, ct.kprime) == (0.25, 0.75)
        cp = default_certificate(genus2)
        assert cp.k == pytest.approx(2.0 / math.pi, rel=1e-15)
        assert cp.kprime == 1.0

    def test_degenerate_single_ball_grid(self):
        cert = certify_regularity(TREE, radius_grid=[0.2], center_samples=[AAA])
        assert cert.k == cert.kprime == cert.worst_ratio_low
        assert cert.samples == 1

    def test_generator_grids_are_materialized(self):
        cert = certify_regularity(TREE, radius_grid=(r for r in (0.5, 0.1)),
                                  center_samples=(c for c in (AAA,)))
        assert cert.samples == 2

    def test_empty_grids_rejected(self):
        with pytest.raises(GeometryError, match="radius grid"):
            certify_regularity(TREE, radius_grid=[], center_samples=[AAA])
        with pytest.raises(GeometryError, match="center sample"):
            certify_regularity(TREE, radius_grid=[0.5], center_samples=[])

    def test_non_power_law_measure_rejected(self):
        class Stub:
            critical_exponent = 1.0

            def ball_measure(self, b, r):
                return math.exp(-1.0 / float(r))

        with pytest.raises(GeometryError, match="spread"):
            certify_regularity(Stub(), radius_grid=np.geomspace(1e-3, 1.0, 12),
                               center_samples=[0.0])


# -- decreasing-function shell integrals ------------------------------------------


class TestDecreasingIntegralBounds:
    def test_tree_inverse_integrand(self):
        # Open-ball difference {e^-4 <= sigma < 1}: four shells of 1/2 each.
        lower, upper, actual = decreasing_integral_bounds(
            TREE, lambda u: 1.0 / u, AAA, math.exp(-4), 1.0)
        assert actual == pytest.approx(2.0, abs=1e-12)
        integral = 4.0 * math.log(3)
        assert lower == pytest.approx(0.25 * integral - 0.5 * 81.0, rel=1e-9)
        assert upper == pytest.approx(0.75 * integral + 0.5, rel=1e-9)

    def test_tree_constant_integrand_exact(self):
        c = 2.5
        lower, upper, actual = decreasing_integral_bounds(
            TREE, lambda u: c, AAA, math.exp(-3), 1.0)
        shells = sum(Fraction(1, 2) * Fraction(1, 3) ** j for j in (1, 2, 3))
        assert actual == pytest.approx(c * float(shells), abs=1e-14)
        assert lower <= actual <= upper

    def test_tree_slowly_decreasing_integrand(self):
        # Nearly-constant decreasing functions are the tightest case for the
        # upper bound; the bracket must still hold.
        lower, upper, actual = decreasing_integral_bounds(
            TREE, lambda u: u ** -0.1, AAA, math.exp(-3), 1.0)
        assert lower <= actual <= upper

    def test_empty_shell_window(self):
        _, _, actual = decreasing_integral_bounds(
            TREE, lambda u: 1.0 / u, AAA, math.exp(-3.6), math.exp(-3.4))
        assert actual == 0.0

    def test_non_monotone_integrand_rejected(self):
        with pytest.raises(GeometryError, match="non-monotone"):
            decreasing_integral_bounds(TREE, lambda u: u, AAA, 0.01, 1.0)

    def test_nonpositive_integrand_rejected(self):
        with pytest.raises(GeometryError, match="positive"):
            decreasing_integral_bounds(TREE, lambda u: -1.0, AAA, 0.01, 1.0)

    def test_window_domain_errors(self):
        for s, t in [(0.5, 0.5), (0.7, 0.2), (0.0, 0.5), (-0.1, 0.5), (0.1, 1.5)]:
            with pytest.raises(GeometryError):
                decreasing_integral_bounds(TREE, lambda u: 1.0 / u, AAA, s, t)

    @given(st.floats(min_value=0.0, max_value=1.0),
           st.floats(min_value=1e-3, max_value=0.3),
           st.floats(min_value=0.35, max_value=1.0))
    @settings(max_examples=40, deadline=None)
    def test_tree_bracket_property(self, p, s, t):
        # Power-law integrands across random windows: the function raises on
        # any bracket violation, so a clean return is the assertion.
        _, _, actual = decreasing_integral_bounds(
            TREE, lambda u: u ** -p, AAA, s, t)
        assert actual >= 0.0

    def test_plane_monte_carlo_matches_closed_form(self, genus2):
        b = CirclePoint(0.7)
        s = math.exp(-2)
        lower, upper, actual = decreasing_integral_bounds(
            genus2, lambda u: 1.0 / u, b, s, 1.0)
        closed = -(2.0 / math.pi) * math.log(math.tan(math.asin(s) / 2.0))
        assert actual == pytest.approx(closed, abs=0.02)
        assert lower < actual < upper

    def test_plane_constant_tight_upper_end(self, genus2):
        # Constant integrands sit within 0.1% of the upper bound on the
        # circle; the 3-sigma Monte Carlo slack must absorb the noise.
        b = CirclePoint(2.1)
        s = math.exp(-2)
        lower, upper, actual = decreasing_integral_bounds(
            genus2, lambda u: 3.0, b, s, 1.0)
        expected = 3.0 * (1.0 - 2.0 * math.asin(s) / math.pi)
        assert actual == pytest.approx(expected, abs=0.02)


class TestIntAsLogBounds:
    def test_tree_frozen_example(self):
        lower, upper, actual = int_as_log_bounds(TREE, AAA, math.exp(-4))
        assert (lower, upper) == (0.5, 3.5)
        assert actual == pytest.approx(2.75, abs=1e-12)

    def test_tree_complement_formula_all_depths(self):
        # Complement of the open s-ball at s = e^-n: the outermost shell
        # contributes 3/4 and each deeper shell exactly 1/2.
        for n in range(1, 13):
            lower, upper, actual = int_as_log_bounds(TREE, AAA, math.exp(-n))
            assert actual == pytest.approx(0.75 + n / 2.0, rel=1e-12)
            assert lower == pytest.approx(0.25 * n - 0.5, rel=1e-12)
            assert upper == pytest.approx(0.75 * n + 0.5, rel=1e-12)
            assert lower <= actual <= upper

    def test_plane_closed_form_inside_bracket(self, genus2):
        b = CirclePoint(0.0)
        for s in (math.exp(-1), 1e-2, 1e-5, 1e-8):
            lower, upper, actual = int_as_log_bounds(genus2, b, s)
            want = -(2.0 / math.pi) * math.log(math.tan(math.asin(s) / 2.0))
            assert actual == pytest.approx(want, rel=1e-12)
            assert lower <= actual <= upper

    def test_plane_closed_form_against_monte_carlo(self, genus2):
        b = CirclePoint(1.3)
        s = math.exp(-2)
        _, _, actual = int_as_log_bounds(genus2, b, s)

        def integrand(angles):
            sigma = np.abs(np.sin((angles - b.angle) / 2.0))
            out = np.zeros_like(sigma)
            mask = sigma >= s
            out[mask] = 1.0 / sigma[mask]
            return out

        mean, stderr = genus2.mc_boundary_integral(integrand, 40000, 5)
        assert abs(actual - mean) < 4.0 * stderr + 1e-6

    def test_domain_errors(self):
        for s in (0.5, 0.0, -1.0, 1.2):
            with pytest.raises(GeometryError):
                int_as_log_bounds(TREE, AAA, s)

    def test_custom_certificate_changes_bracket(self):
        cert = RegularityCertificate(TREE.critical_exponent, 0.1, 0.9, 0, "", 0.1, 0.9)
        lower, upper, actual = int_as_log_bounds(TREE, AAA, math.exp(-4), certificate=cert)
        assert lower == pytest.approx(0.1 * 4 - 0.8, rel=1e-12)
        assert upper == pytest.approx(0.9 * 4 + 0.8, rel=1e-12)
        assert actual == pytest.approx(2.75, abs=1e-12)


# -- sampling sets ----------------------------------------------------------------


class TestBuildSamplingSet:
    def test_tree_level_three(self):
        S = build_sampling_set(TREE, 3)
        assert len(S) == 36
        assert S.radius == pytest.approx(math.exp(-2.5), rel=1e-12)
        assert S.multiplicity == 5
        words = {w.letters for w in S.elements}
        assert words == {ls for ls in iter_reduced_words(2, 3)}
        for w, d in zip(S.elements, S.directions):
            assert d.letters_to(3) == w.letters

    def test_tree_covering_via_visual_distance(self):
        S = build_sampling_set(TREE, 3)
        rng = np.random.default_rng(11)
        for _ in range(20):
            b = TREE.random_boundary(rng)
            nearest = min(visual_distance(TREE, b, d) for d in S.directions)
            assert nearest < S.radius

    def test_tree_multiplicity_is_sharp_on_balls(self):
        # At t=3 the prediction is exactly one direction per radius ball.
        S = build_sampling_set(TREE, 3)
        rng = np.random.default_rng(7)
        for _ in range(10):
            b = TREE.random_boundary(rng)
            inside = sum(1 for d in S.directions
                         if visual_distance(TREE, b, d) < S.radius)
            assert 1 <= inside <= S.multiplicity

    def test_tree_just_above_threshold(self):
        S = build_sampling_set(TREE, 0.6)
        assert len(S) == 4
        assert S.radius == pytest.approx(math.exp(-0.1), rel=1e-12)

    def test_tree_large_annulus_branch(self):
        S = build_sampling_set(TREE, 10)
        assert len(S) == 4 * 3 ** 9
        assert S.multiplicity == 5
        assert S.radius == pytest.approx(math.exp(-9.5), rel=1e-12)

    def test_threshold_domain_error(self):
        with pytest.raises(GeometryError, match="t > R"):
            build_sampling_set(TREE, 0.5)

    def test_tree_half_integer_window_rejected(self):
        with pytest.raises(GeometryError, match="vertex sphere"):
            build_sampling_set(TREE, 2.5)

    def test_plane_genus2_frozen(self, genus2):
        S = build_sampling_set(genus2, 5.0)
        assert len(S) == 440
        want_r = math.exp(-(5.0 - genus2.quotient_radius - 2.0 * float(genus2.delta)))
        assert S.radius == pytest.approx(want_r, rel=1e-12)
        assert S.multiplicity == 5945
        for g, d in zip(S.elements[:20], S.directions[:20]):
            assert genus2.direction(g.orbit_point()).angular_distance(d) < 1e-9

    def test_plane_triangle_frozen(self, triangle):
        S = build_sampling_set(triangle, 4.0)
        assert len(S) == 1351
        assert S.multiplicity == 1750

    def test_plane_threshold_and_cache_errors(self, genus2):
        with pytest.raises(GeometryError, match="t > R"):
            build_sampling_set(genus2, 3.0)
        with pytest.raises(CacheExhaustedError):
            build_sampling_set(genus2, 11.0)


# -- sampled integrals -------------------------------------------------------------


class TestSampledIntegral:
    def test_constant_function_tree(self):
        S = build_sampling_set(TREE, 3)
        estimate, c_l = sampled_integral(TREE, lambda c: 1.0, S, 0.5,
                                         true_integral=1.0)
        assert estimate == 1.0
        assert c_l == pytest.approx(5 * (0.5 * math.exp(0.5) + 1.0) * 3.0, rel=1e-12)

    def test_tree_weight_sandwich_exact(self):
        # The level-4 average of the visual weight of a 2-letter vertex
        # equals its full integral exactly; both sides are exact sums.
        S = build_sampling_set(TREE, 4)
        q = (1, 2)
        L = math.log(3)
        true = float(TREE.weight_l1(q))
        estimate, c_l = sampled_integral(
            TREE, lambda c: TREE.visual_weight(q, c), S, L, true_integral=true)
        assert estimate == pytest.approx(2.0 / 3.0, rel=1e-15)
        assert true == pytest.approx(2.0 / 3.0, rel=1e-15)
        assert c_l == pytest.approx(5 * (math.log(3) * 3.0 + 1.0) * 3.0, rel=1e-12)

    def test_deep_weight_rejected_by_continuity_audit(self):
        S = build_sampling_set(TREE, 4)
        q = (1, 2, 1, 2, 1, 2)  # |q| = t + 2: the flip ratio exceeds L
        probe = canonical_extension(q, 2)
        with pytest.raises(GeometryError, match="almost-continuity"):
            sampled_integral(TREE, lambda c: TREE.visual_weight(q, c), S,
                             math.log(3), probe_points=[probe])

    def test_boundary_window_weight_passes_audit(self):
        # |q| = t + 1 sits at the edge: the extremal flip ratio equals L
        # exactly and the sandwich still holds.
        S = build_sampling_set(TREE, 4)
        q = (1, 2, 1, 2, 1)
        probe = canonical_extension(q, 2)
        estimate, c_l = sampled_integral(
            TREE, lambda c: TREE.visual_weight(q, c), S, math.log(3),
            probe_points=[probe], true_integral=float(TREE.weight_l1(q)))
        assert estimate > 0.0

    def test_plane_constant_function(self, genus2):
        S = build_sampling_set(genus2, 5.0)
        estimate, c_l = sampled_integral(genus2, lambda c: 1.0, S, 0.25,
                                         true_integral=1.0)
        assert estimate == 1.0
        assert c_l >= 1.0

    def test_plane_weight_average_near_integral(self, genus2):
        S = build_sampling_set(genus2, 5.0)
        q = 0.45 * np.exp(0.9j)
        L = genus2.critical_exponent * (
            2.0 * genus2.quotient_radius + 3.0 * float(genus2.delta))
        true = genus2.weight_l1(q)
        estimate, c_l = sampled_integral(
            genus2, lambda c: genus2.visual_weight(q, c), S, L,
            probe_points=[genus2.direction(q)], true_integral=true)
        assert estimate == pytest.approx(true, abs=1e-3)

    def test_empty_set_rejected(self):
        S = SamplingSet(t=3.0, elements=(), directions=(), radius=0.1, multiplicity=5)
        with pytest.raises(GeometryError, match="empty"):
            sampled_integral(TREE, lambda c: 1.0, S, 0.5)

    def test_negative_continuity_constant_rejected(self):
        S = build_sampling_set(TREE, 3)
        with pytest.raises(GeometryError, match=">= 0"):
            sampled_integral(TREE, lambda c: 1.0, S, -0.5)

    def test_nonpositive_function_rejected(self):
        S = build_sampling_set(TREE, 3)
        with pytest.raises(GeometryError, match="positive"):
            sampled_integral(TREE, lambda c: -1.0, S, 0.5)

    def test_sandwich_failure_raises(self):
        S = build_sampling_set(TREE, 3)
        with pytest.raises(GeometryError, match="sandwich"):
            sampled_integral(TREE, lambda c: 1.0, S, 0.5, true_integral=1e9)


# -- exact level sums and the sampling bound ----------------------------------------


class TestLevelWeightSums:
    def test_matches_brute_enumeration(self):
        rng = np.random.default_rng(3)
        for n in range(0, 5):
            for mq in range(0, 6):
                q = random_reduced_letters(rng, mq)
                exact = tree_level_weight_sum(TREE, q, n)
                brute = TREE.scalar(0)
                for ls in iter_reduced_words(2, n):
                    brute = brute + TREE.visual_weight(q, canonical_extension(ls, 2))
                assert exact == brute

    def test_empty_vertex_gives_sphere_size(self):
        assert tree_level_weight_sum(TREE, (), 4).as_fraction() == 4 * 27

    def test_level_zero_follows_canonical_ray(self):
        # The single root direction is the canonical ray a, a, a, ...
        assert tree_level_weight_sum(TREE, (1, 1), 0) == TREE.half_power(2)
        assert tree_level_weight_sum(TREE, (2, 1), 0) == TREE.half_power(-2)

    def test_negative_level_rejected(self):
        with pytest.raises(GeometryError):
            tree_level_weight_sum(TREE, (1,), -1)

    def test_annulus_average_matches_integral_beyond_vertex(self):
        # Once the level exceeds |q| the average equals the full integral.
        for t in (3, 5, 8):
            for q in ((1, 2), (1,), (2, -1, 2)):
                avg = annulus_weight_average(TREE, q, t)
                assert avg == TREE.weight_l1(q)

    def test_plane_annulus_average_approaches_integral(self, genus2):
        q = 0.45 * np.exp(0.9j)
        far = annulus_weight_average(genus2, q, 8.5)
        assert far == pytest.approx(genus2.weight_l1(q), abs=2e-5)


class TestSamplingWeightBound:
    def test_exhaustive_inside_window(self):
        # Every vertex |q| <= 10 against every level t <= 10 satisfying the
        # window hypothesis |q| <= t + R (on the unit-edge tree: t >= |q|,
        # where the annulus average equals the integral exactly, so the
        # average depends on |q| alone).  Word-independence of the level sum
        # is covered by the brute-enumeration test; each (t, |q|) class is
        # verified exactly once, all sums exact.
        for mq in range(0, 11):
            q = tuple([1, 2] * 6)[:mq]
            for t in range(max(1, mq), 11):
                rep = sampling_weight_bound(TREE, q, t)
                assert rep["satisfied"], (q, t, rep)
                assert rep["estimate"] == pytest.approx(rep["l1"], rel=1e-15)

    def test_slightly_outside_window_still_within_slack(self):
        # One letter beyond the window the estimate overshoots the integral
        # but stays within the generous sandwich constant.
        for t in (2, 4, 6):
            q = tuple([1, 2] * 5)[:t + 1]
            rep = sampling_weight_bound(TREE, q, t)
            assert rep["satisfied"]
            assert rep["estimate"] > rep["l1"]

    def test_window_hypothesis_is_necessary(self):
        # Negative control: a vertex seven letters deep against the level-1
        # annulus concentrates all weight on one direction and genuinely
        # breaks the bound -- the window hypothesis is not an artifact.
        q = (1,) * 7
        rep = sampling_weight_bound(TREE, q, 1)
        assert not rep["satisfied"]
        assert rep["estimate"] > rep["c_l"] * rep["l1"]
        # The sampled-integral route refuses the same input up front: its
        # almost-continuity audit rejects with the witness pair.
        S = build_sampling_set(TREE, 1)
        probe = canonical_extension(q, 2)
        with pytest.raises(GeometryError, match="almost-continuity"):
            sampled_integral(TREE, lambda c: TREE.visual_weight(q, c), S,
                             math.log(3), probe_points=[probe])

    def test_constant_parts_of_report(self):
        rep = sampling_weight_bound(TREE, (1, 2, 1), 4)
        assert rep["L"] == pytest.approx(math.log(3), rel=1e-12)
        assert rep["multiplicity"] == 5
        assert rep["c_l"] == pytest.approx(5 * (math.log(3) * 3 + 1) * 3, rel=1e-12)

    def test_plane_weight_bound(self, genus2):
        q = 0.3 * np.exp(1.7j)
        rep = sampling_weight_bound(genus2, q, 5.0)
        assert rep["satisfied"]
        assert rep["multiplicity"] == 5945
