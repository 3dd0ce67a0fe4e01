"""Boundary-measure audits shared by both models.

Four pieces, all generic over the tree and disk models:

* power-law regularity certificates for the visual measure (ball measure
  versus radius-to-the-exponent, with certified two-sided constants),
* two-sided bounds for integrals of decreasing functions of the visual
  distance over shells, with the exact logarithmic special case,
* boundary sampling sets built from orbit annuli (directions, radius,
  multiplicity bound, covering audit),
* sampled boundary integrals with an explicit sandwich constant and an
  almost-continuity audit.

Tree quantities are exact cylinder-shell sums; the disk model uses closed
forms where available and seeded Monte Carlo otherwise, with standard
errors folded into the assertion tolerances.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.integrate import quad

from .exact import ExactScalar
from .plane import CirclePoint
from .space import GeometryError
from .tree import FreeGroupModel
from .words import BoundaryWord, ReducedWord, alphabet, canonical_extension

__all__ = [
    "RegularityCertificate",
    "SamplingSet",
    "annulus_weight_average",
    "build_sampling_set",
    "certify_regularity",
    "decreasing_integral_bounds",
    "default_certificate",
    "int_as_log_bounds",
    "sampled_integral",
    "sampling_weight_bound",
    "tree_level_weight_sum",
]

_SPREAD_LIMIT = 1.0e6


# -- regularity certificates ---------------------------------------------------------


@dataclass(frozen=True)
class RegularityCertificate:
    """Two-sided power-law control of ball measures.

    Certifies k * r**eta <= nu(B(b, r)) <= kprime * r**eta over the audited
    family of balls; `samples` counts the ball evaluations behind it and the
    worst ratios record the observed extremes of nu(B)/r**eta.
    """

    eta: float
    k: float
    kprime: float
    samples: int
    description: str
    worst_ratio_low: float
    worst_ratio_high: float

    def __post_init__(self):
        if not (0.0 < self.k <= self.kprime):
            raise GeometryError(
                f"regularity constants need 0 < k <= k'; got k={self.k}, "
                f"k'={self.kprime}")

    @property
    def spread(self) -> float:
        return self.kprime / self.k

    def to_json(self) -> str:
        return json.dumps({
            "eta": self.eta,
            "k": self.k,
            "kprime": self.kprime,
            "samples": self.samples,
            "worst_ratio_low": self.worst_ratio_low,
            "worst_ratio_high": self.worst_ratio_high,
        })


def _ball_measure(model, center, radius: float) -> float:
    return float(model.ball_measure(center, radius))


def default_certificate(model) -> RegularityCertificate:
    """Closed-form certificate: exact ratio range of ball measure to radius.

    Tree: balls are cylinders, nu = (1/2k) m^(1-depth) while r**eta sweeps
    one m-adic gap, so the ratio lies in [1/(2k), m/(2k)] with the upper end
    the supremum.  Disk: the ratio 2*asin(r)/(pi*r) increases from 2/pi at
    r -> 0 to 1 at r = 1.
    """
    eta = float(model.critical_exponent)
    if isinstance(model, FreeGroupModel):
        k2 = 2 * model.rank
        return RegularityCertificate(
            eta=eta, k=float(Fraction(1, k2)), kprime=float(Fraction(model.m, k2)),
            samples=0, description="closed-form cylinder-shell ratio range",
            worst_ratio_low=float(Fraction(1, k2)),
            worst_ratio_high=float(Fraction(model.m, k2)))
    return RegularityCertificate(
        eta=eta, k=2.0 / math.pi, kprime=1.0,
        samples=0, description="closed-form arc-length ratio range",
        worst_ratio_low=2.0 / math.pi, worst_ratio_high=1.0)


def certify_regularity(model, radius_grid=None, center_samples=None, *,
                       seed: int = 0) -> RegularityCertificate:
    """Audit ball measures against the power law and certify (k, k').

    With explicit grids, certifies the observed ratio extremes over all
    (center, radius) pairs.  With defaults: the tree is audited exhaustively
    over ball depths <= 10 (each depth's exact ratio interval is
    [1/(2k), m/(2k)), so the certified constants are the interval closure);
    the disk gets 10**3 seeded random balls.  A ratio spread beyond 10**6
    aborts: the measure is then not power-law regular over the grid.
    """
    eta = float(model.critical_exponent)
    rng = np.random.default_rng(seed)
    tree = isinstance(model, FreeGroupModel)

    if radius_grid is not None or center_samples is not None:
        radii = [float(r) for r in radius_grid] if radius_grid is not None else []
        centers = list(center_samples) if center_samples is not None else []
        if not radii:
            raise GeometryError("regularity audit needs a nonempty radius grid")
        if not centers:
            raise GeometryError("regularity audit needs a nonempty center sample")
        ratios = [_ball_measure(model, b, r) / r ** eta
                  for b in centers for r in radii]
        lo, hi = min(ratios), max(ratios)
        if lo <= 0.0 or hi / lo > _SPREAD_LIMIT:
            raise GeometryError(
                f"measure regularity audit failed: ratio spread over the grid "
                f"exceeds {_SPREAD_LIMIT:.0e} (observed ratios in [{lo}, {hi}])")
        return RegularityCertificate(
            eta=eta, k=lo, kprime=hi, samples=len(ratios),
            description=f"user grid: {len(centers)} centers x {len(radii)} radii",
            worst_ratio_low=lo, worst_ratio_high=hi)

    if tree:
        ell = float(model.edge_length)
        centers = [model.random_boundary(rng) for _ in range(8)]
        ratios = []
        for depth in range(1, 11):
            # Top of the depth bucket (ratio minimal) and just inside the
            # bottom (ratio near the supremum m/(2k)).
            for r in (math.exp(-ell * (depth - 1)),
                      math.exp(-ell * depth) * (1.0 + 1e-9)):
                for b in centers:
                    ratios.append(_ball_measure(model, b, r) / r ** eta)
        lo, hi = min(ratios), max(ratios)
        k2 = 2 * model.rank
        k_exact, kp_exact = Fraction(1, k2), Fraction(model.m, k2)
        if not (float(k_exact) - 1e-9 <= lo and hi <= float(kp_exact) + 1e-9):
            raise GeometryError(
                f"tree ball measures left the exact ratio interval "
                f"[{k_exact}, {kp_exact}]: observed [{lo}, {hi}]")
        return RegularityCertificate(
            eta=eta, k=float(k_exact), kprime=float(kp_exact),
            samples=len(ratios),
            description="exhaustive ball depths 1..10, exact ratio interval",
            worst_ratio_low=lo, worst_ratio_high=hi)

    ratios = []
    for _ in range(1000):
        center = model.random_boundary(rng)
        r = math.exp(rng.uniform(math.log(1e-3), 0.0))
        ratios.append(_ball_measure(model, center, r) / r ** eta)
    lo, hi = min(ratios), max(ratios)
    if lo <= 0.0 or hi / lo > _SPREAD_LIMIT:
        raise GeometryError(
            f"measure regularity audit failed: ratio spread over the sampled "
            f"balls exceeds {_SPREAD_LIMIT:.0e} (observed [{lo}, {hi}])")
    return RegularityCertificate(
        eta=eta, k=lo, kprime=hi, samples=len(ratios),
        description="10^3 random balls, radii log-uniform in [1e-3, 1]",
        worst_ratio_low=lo, worst_ratio_high=hi)


# -- decreasing-function shell integrals ---------------------------------------------


def _monotone_audit(f, lo: float, hi: float, grid: int) -> None:
    """Spot-check that f is positive and non-increasing on [lo, hi]."""
    us = np.geomspace(lo, hi, grid)
    vals = [float(f(u)) for u in us]
    for u, v in zip(us, vals):
        if not (math.isfinite(v) and v > 0.0):
            raise GeometryError(f"integrand must be positive and finite; "
                                f"f({u}) = {v}")
    for i in range(len(us) - 1):
        if vals[i + 1] > vals[i] * (1.0 + 1e-12):
            raise GeometryError(
                f"non-monotone integrand: f({us[i]}) = {vals[i]} but "
                f"f({us[i + 1]}) = {vals[i + 1]}")


def _tree_shell_sum(model, f, b: BoundaryWord, js) -> float:
    """Exact-measure sum of f(sigma^eta) over the match shells indexed by js."""
    js = list(js)
    if not js:
        return 0.0
    b.letters_to(js[-1])  # depth check: the shells must be resolvable
    eta = float(model.critical_exponent)
    ell = float(model.edge_length)
    total = 0.0
    for j in js:
        total += float(model.shell_measure(j, j + 1)) * float(f(math.exp(-eta * ell * j)))
    return total


def _tree_ball_difference_shells(model, s: float, t: float) -> range:
    """Indices j with s <= exp(-edge_length*j) < t: the open-ball difference."""
    ell = float(model.edge_length)
    j_min = max(0, math.floor(-math.log(t) / ell + 1e-12) + 1)
    j_max = math.floor(-math.log(s) / ell + 1e-12)
    return range(j_min, j_max + 1)


def _tree_complement_shells(model, s: float) -> range:
    """Indices j with exp(-edge_length*j) >= s: complement of the open s-ball."""
    ell = float(model.edge_length)
    return range(0, math.floor(-math.log(s) / ell + 1e-12) + 1)


def decreasing_integral_bounds(model, f, b, s, t, *, certificate=None,
                               grid: int = 64, mc_samples: int = 200_000,
                               seed: int = 0):
    """Bracket the shell integral of a decreasing function of visual distance.

    Computes actual = integral of f(sigma(b, c)**eta) over the open-ball
    difference B(b, t) \\ B(b, s) = {c : s <= sigma(b, c) < t} (exact on the
    tree, Monte Carlo on the disk) and the regularity-based bracket

        lower = k * I - (k' - k) * f(s**eta)
        upper = k' * I + (k' - k) * s**eta * f(s**eta),    I = int_{s^eta}^{t^eta} f,

    raising if the bracket fails (with 3-sigma slack on the Monte Carlo
    side).  f must be positive and non-increasing on [s**eta, t**eta]; this
    is spot-checked on a geometric grid and violations raise with a witness
    pair.  Returns (lower, upper, actual).
    """
    s, t = float(s), float(t)
    if not (0.0 < s < t <= float(model.boundary_diameter)):
        raise GeometryError(
            f"shell window needs 0 < s < t <= diameter; got s={s}, t={t}")
    cert = certificate if certificate is not None else default_certificate(model)
    eta = cert.eta
    lo_u, hi_u = s ** eta, t ** eta
    _monotone_audit(f, lo_u, hi_u, grid)

    integral = quad(lambda u: float(f(u)), lo_u, hi_u, limit=200)[0]
    f_s = float(f(lo_u))
    lower = cert.k * integral - (cert.kprime - cert.k) * f_s
    upper = cert.kprime * integral + (cert.kprime - cert.k) * lo_u * f_s

    if isinstance(model, FreeGroupModel):
        actual = _tree_shell_sum(model, f, b, _tree_ball_difference_shells(model, s, t))
        slack = 1e-9 * (1.0 + abs(lower) + abs(upper))
    else:
        rng = np.random.default_rng(seed)
        theta = rng.uniform(0.0, 2.0 * math.pi, mc_samples)
        sigma = np.abs(np.sin((theta - b.angle) / 2.0))
        mask = (sigma >= s) & (sigma < t)
        vals = np.zeros(mc_samples)
        vals[mask] = np.fromiter((float(f(u)) for u in sigma[mask] ** eta),
                                 dtype=float, count=int(mask.sum()))
        actual = float(vals.mean())
        stderr = float(vals.std()) / math.sqrt(mc_samples)
        slack = 3.0 * stderr + 1e-9 * (1.0 + abs(lower) + abs(upper))
    if not (lower - slack <= actual <= upper + slack):
        raise GeometryError(
            f"shell-integral bracket failed: actual {actual} outside "
            f"[{lower}, {upper}] with slack {slack}")
    return lower, upper, actual


def _plane_log_shell_integral(s: float) -> float:
    """Closed form of the integral of 1/sigma over {sigma >= s} on the circle."""
    return -(2.0 / math.pi) * math.log(math.tan(math.asin(s) / 2.0))


def int_as_log_bounds(model, b, s, *, certificate=None):
    """Logarithmic bracket for the integral of sigma(b, .)**(-eta) over {sigma >= s}.

    On a diameter-one boundary the integral of the inverse eta-th power of
    the visual distance over the complement of the open s-ball obeys

        -k * log(s) - (k' - k)  <=  actual  <=  -k' * log(s) + (k' - k),

    valid once -log(s) >= 1; requires s <= 1/e.  Unlike the ball-difference
    bracket, the domain here includes the outermost shell at the diameter.
    The integral is an exact shell sum on the tree and a closed form on the
    disk.  Returns (lower, upper, actual) and raises if the bracket fails.
    """
    s = float(s)
    if not 0.0 < s <= math.exp(-1.0):
        raise GeometryError(
            f"logarithmic bracket needs 0 < s <= 1/e; got s={s}")
    cert = certificate if certificate is not None else default_certificate(model)
    lower = -cert.k * math.log(s) - (cert.kprime - cert.k)
    upper = -cert.kprime * math.log(s) + (cert.kprime - cert.k)
    if isinstance(model, FreeGroupModel):
        actual = _tree_shell_sum(model, lambda u: 1.0 / u, b,
                                 _tree_complement_shells(model, s))
    else:
        actual = _plane_log_shell_integral(s)
    if not (lower - 1e-9 <= actual <= upper + 1e-9):
        raise GeometryError(
            f"logarithmic bracket failed: actual {actual} outside "
            f"[{lower}, {upper}] at s={s}")
    return lower, upper, actual


# -- sampling sets -------------------------------------------------------------------


@dataclass(frozen=True)
class SamplingSet:
    """Boundary directions of an orbit annulus, with covering data.

    `directions[i]` is the boundary direction of orbit element `elements[i]`;
    the direction balls of the stated radius cover the boundary, and every
    ball of that radius holds at most `multiplicity` directions.
    """

    t: float
    elements: tuple
    directions: tuple
    radius: float
    multiplicity: int

    def __len__(self) -> int:
        return len(self.elements)


def _multiplicity_bound(model) -> int:
    """|{group elements within distance 3R + 4*delta of the basepoint}| (strict)."""
    if isinstance(model, FreeGroupModel):
        threshold = 3 * model.quotient_radius + 4 * model.delta
        n_max = math.ceil(threshold / model.edge_length) - 1
        return model.ball_vertex_count(n_max * model.edge_length)
    threshold = 3.0 * model.quotient_radius + 4.0 * float(model.delta)
    cache = model.orbit()
    if threshold > model.cache_radius + 1e-12:
        raise GeometryError(
            f"multiplicity bound needs orbit radius {threshold}, cache holds "
            f"{model.cache_radius}")
    return int(np.searchsorted(cache.dists, threshold, side="left"))


def _open_ball_depth(radius: float, ell: float) -> int:
    """Smallest depth d with exp(-ell*d) < radius."""
    return math.floor(-math.log(radius) / ell) + 1


def build_sampling_set(model, t, *, audit_samples: int = 256,
                       seed: int = 0) -> SamplingSet:
    """Directions of the orbit annulus at t as a boundary sampling set.

    The radius is exp(-(t - R - 2*delta)) where R is the quotient radius;
    requires t > R + 2*delta.  The multiplicity bound is the number of orbit
    points strictly inside distance 3R + 4*delta of the basepoint.  Covering
    and multiplicity are verified on a seeded boundary sample (exactly, via
    prefix counts, on the tree; numerically on the disk) and violations
    raise with the witness point.
    """
    t = float(t)
    R = float(model.quotient_radius)
    delta = float(model.delta)
    if t <= R + 2.0 * delta:
        raise GeometryError(
            f"sampling set needs t > R + 2*delta = {R + 2.0 * delta}; got t={t}")
    radius = math.exp(-(t - R - 2.0 * delta))
    m = _multiplicity_bound(model)
    rng = np.random.default_rng(seed)

    if isinstance(model, FreeGroupModel):
        words = model.enumerate_annulus(t)
        directions = tuple(model.direction(w) for w in words)
        n = len(words[0].letters)
        ell = float(model.edge_length)
        d0 = _open_ball_depth(radius, ell)
        if d0 > n:
            raise GeometryError(
                f"annulus directions cannot cover at radius {radius}: "
                f"ball depth {d0} exceeds annulus level {n}")
        exact_count = model.m ** (n - d0)
        if exact_count > m:
            raise GeometryError(
                f"multiplicity audit failed: {exact_count} directions per "
                f"ball exceeds bound {m}")
        samples = [model.random_boundary(rng) for _ in range(min(audit_samples, 64))]
        if len(words) <= 2048:
            # Small annuli: brute-force the per-ball counts against the
            # prefix-count prediction and confirm covering directly.
            for b in samples:
                prefix = b.letters_to(d0)
                hits = sum(1 for d in directions if d.letters_to(d0) == prefix)
                if hits != exact_count:
                    raise GeometryError(
                        f"multiplicity audit failed at {b}: {hits} directions "
                        f"in the ball, predicted {exact_count}")
        else:
            for b in samples:
                b.letters_to(d0)  # covering reduces to resolvability
    else:
        idx = model.enumerate_annulus_numeric(t)
        cache = model.orbit()
        elements = tuple(cache.element(int(i)) for i in idx)
        angles = cache.angles[idx]
        directions = tuple(CirclePoint(float(a)) for a in angles)
        for _ in range(audit_samples):
            theta = rng.uniform(0.0, 2.0 * math.pi)
            sigma = np.abs(np.sin((angles - theta) / 2.0))
            inside = int((sigma < radius).sum())
            if inside == 0:
                raise GeometryError(
                    f"covering audit failed: no direction within {radius} of "
                    f"boundary angle {theta}")
            if inside > m:
                raise GeometryError(
                    f"multiplicity audit failed at boundary angle {theta}: "
                    f"{inside} directions exceed bound {m}")
        return SamplingSet(t=t, elements=elements, directions=directions,
                           radius=radius, multiplicity=m)

    return SamplingSet(t=t, elements=tuple(words), directions=directions,
                       radius=radius, multiplicity=m)


# -- sampled integrals ---------------------------------------------------------------


def _flip_partner(model, b: BoundaryWord, depth: int) -> BoundaryWord:
    """A boundary word agreeing with b to exactly `depth` letters."""
    letters = b.letters_to(depth + 1)
    banned = {letters[depth]}
    if depth >= 1:
        banned.add(-letters[depth - 1])
    alt = next(l for l in alphabet(model.rank) if l not in banned)
    return canonical_extension(letters[:depth] + (alt,), model.rank)


def _continuity_partner(model, b, radius: float):
    """A boundary point at visual distance <= radius from b (extremal flip)."""
    if isinstance(model, FreeGroupModel):
        ell = float(model.edge_length)
        depth = max(1, math.ceil(-math.log(radius) / ell - 1e-9))
        return _flip_partner(model, b, depth)
    gap = 2.0 * math.asin(min(1.0, radius * (1.0 - 1e-12)))
    return CirclePoint(b.angle + gap)


def sampled_integral(model, f, S: SamplingSet, L: float, *, probe_points=(),
                     true_integral=None, certificate=None,
                     audit_samples: int = 64, seed: int = 0):
    """Average f over the sampling directions, with the sandwich constant.

    estimate = (1/|S|) sum f(direction); C_L = m (L e^L + 1) k'/k.  For f
    positive and (radius, L)-almost continuous, the true integral lies in
    [estimate / C_L, estimate * C_L].  Almost-continuity is audited on a
    seeded direction subsample plus `probe_points` (supply points where f
    swings hardest), pairing each base point with the extremal flip at the
    sampling radius; audit failures raise with the witness pair.  When
    `true_integral` is given the sandwich is asserted (3-sigma slack is the
    caller's job on Monte Carlo inputs).  Returns (estimate, C_L).
    """
    if L < 0.0:
        raise GeometryError(f"almost-continuity constant must be >= 0; got {L}")
    if len(S) == 0:
        raise GeometryError("empty sampling set")
    cert = certificate if certificate is not None else default_certificate(model)

    rng = np.random.default_rng(seed)
    picks = rng.choice(len(S), size=min(audit_samples, len(S)), replace=False)
    bases = [S.directions[int(i)] for i in picks] + list(probe_points)
    for x in bases:
        y = _continuity_partner(model, x, S.radius)
        fx, fy = float(f(x)), float(f(y))
        if fx <= 0.0 or fy <= 0.0:
            raise GeometryError(
                f"sampled integrand must be positive; f({x}) = {fx}, "
                f"f({y}) = {fy}")
        jump = abs(math.log(fx) - math.log(fy))
        if jump > L + 1e-9:
            raise GeometryError(
                f"almost-continuity audit failed: |log f(x) - log f(y)| = "
                f"{jump} > L = {L} at witness pair x={x}, y={y}")

    vals = [f(d) for d in S.directions]
    if all(isinstance(v, ExactScalar) for v in vals):
        total = vals[0]
        for v in vals[1:]:
            total = total + v
        estimate = float(total) / len(S)
    else:
        estimate = float(np.mean([float(v) for v in vals]))
    c_l = S.multiplicity * (L * math.exp(L) + 1.0) * cert.kprime / cert.k

    if true_integral is not None:
        target = float(true_integral)
        pad = 1e-9 * (1.0 + abs(target))
        if not (estimate / c_l - pad <= target <= estimate * c_l + pad):
            raise GeometryError(
                f"sampling sandwich failed: integral {target} outside "
                f"[{estimate / c_l}, {estimate * c_l}]")
    return estimate, c_l


# -- exact level sums of visual weights (tree) ---------------------------------------


def tree_level_weight_sum(model: FreeGroupModel, q_letters, level: int) -> ExactScalar:
    """Exact sum of the visual weight of q over all level-`level` directions.

    Sums (2k-1)**((2*match - |q|)/2) over the canonical directions of all
    reduced words of the given length, by prefix-match class: the match is
    determined by the word except for the one word that is a prefix of q,
    whose canonical extension is followed letter by letter.
    """
    q = tuple(q_letters)
    n, mq = int(level), len(q)
    if n < 0:
        raise GeometryError("level must be nonnegative")
    if n == 0:
        j = canonical_extension((), model.rank).match_letters(q)
        return model.half_power(2 * j - mq)
    if mq == 0:
        return model.scalar(2 * model.rank * model.m ** (n - 1))
    m = model.m
    k2 = 2 * model.rank
    total = model.scalar(0)
    for j in range(min(n, mq)):
        if j == 0:
            count = (k2 - 1) * m ** (n - 1)
        else:
            count = (k2 - 2) * m ** (n - j - 1)
        total = total + model.scalar(count) * model.half_power(2 * j - mq)
    if n >= mq:
        total = total + model.scalar(m ** (n - mq)) * model.half_power(mq)
    else:
        j_star = canonical_extension(q[:n], model.rank).match_letters(q)
        total = total + model.half_power(2 * j_star - mq)
    return total


def annulus_weight_average(model, q, t):
    """Average visual weight of q over the annulus directions at t.

    Exact on the tree (returns ExactScalar); numerical mean over cached
    orbit directions on the disk.
    """
    if isinstance(model, FreeGroupModel):
        letters = q.letters if isinstance(q, ReducedWord) else tuple(q)
        n = model.annulus_length(t)
        total = tree_level_weight_sum(model, letters, n)
        return total / model.scalar(model.annulus_size(t))
    idx = model.enumerate_annulus_numeric(t)
    angles = model.orbit().angles[idx]
    weights = model.visual_weight_at_angles(q, angles)
    return float(np.mean(weights))


def sampling_weight_bound(model, q, t, *, certificate=None) -> dict:
    """Check that the annulus average of a visual weight obeys the sampling bound.

    With L = eta * (2R + 3*delta), the average of the visual weight of q
    over the annulus directions at t must not exceed C_L times its full
    boundary integral.  Returns the pieces and the verdict.
    """
    cert = certificate if certificate is not None else default_certificate(model)
    eta = float(model.critical_exponent)
    L = eta * (2.0 * float(model.quotient_radius) + 3.0 * float(model.delta))
    m = _multiplicity_bound(model)
    c_l = m * (L * math.exp(L) + 1.0) * cert.kprime / cert.k
    estimate = annulus_weight_average(model, q, t)
    if isinstance(model, FreeGroupModel):
        letters = q.letters if isinstance(q, ReducedWord) else tuple(q)
        l1 = model.weight_l1(letters)
        satisfied = float(estimate) <= c_l * float(l1) * (1.0 + 1e-12)
    else:
        l1 = model.weight_l1(q)
        satisfied = float(estimate) <= c_l * float(l1) * (1.0 + 1e-9)
    return {
        "estimate": float(estimate),
        "l1": float(l1),
        "c_l": c_l,
        "L": L,
        "multiplicity": m,
        "satisfied": bool(satisfied),
    }
