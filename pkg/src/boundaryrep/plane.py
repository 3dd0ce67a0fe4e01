"""Hyperbolic-disk model acted on by a cocompact Fuchsian group.

Two presets are built in:

``genus2-octagon``
    The surface group of genus two realized on the regular hyperbolic
    octagon (all vertices identified), generated by four side-pairing
    translations satisfying the single commutator relation
    ``[a,b][c,d] = +-identity``.

``triangle-2-3-7``
    The orientation-preserving (2,3,7) triangle group, generated by
    rotations of orders 2, 3 and 7 about the vertices of the associated
    right triangle, conjugated so the basepoint (the disk origin) has a
    trivial stabilizer.

Everything is floating point.  The basepoint sits at the origin, so the
conformal boundary density is exactly the normalized angle (Lebesgue)
measure on the circle and the visual metric has the closed form
``sigma(b, c) = sin(angular_distance / 2)``.

Boundary-weight integrals (the ``e^{-eta/2 * busemann}`` kernels and
their arc integrals) have closed forms in complete/incomplete elliptic
integrals; Monte Carlo integration is provided as an independent
cross-check route, never as the only route.
"""

from __future__ import annotations

import json
import hashlib
import math
import os
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import ellipk, ellipkinc

from .space import GeometryError, InfiniteProductError

TWO_PI = 2.0 * math.pi

CACHE_ENV_VAR = "BOUNDARYREP_CACHE_DIR"

_CACHE_FORMAT_VERSION = 1


class CacheExhaustedError(GeometryError):
    """The orbit cache is shallower than the requested annulus."""


# ---------------------------------------------------------------------------
# boundary points and arc sets
# ---------------------------------------------------------------------------


def _norm_angle(theta: float) -> float:
    t = math.fmod(float(theta), TWO_PI)
    if t < 0.0:
        t += TWO_PI
    if t >= TWO_PI:  # fmod artifacts at the seam
        t -= TWO_PI
    return t


class CirclePoint:
    """A boundary point of the disk, stored as an angle in [0, 2*pi)."""

    __slots__ = ("angle",)

    def __init__(self, angle: float):
        object.__setattr__(self, "angle", _norm_angle(angle))

    def __setattr__(self, *a):
        raise AttributeError("CirclePoint is immutable")

    @property
    def point(self) -> complex:
        return complex(math.cos(self.angle), math.sin(self.angle))

    def angular_distance(self, other: "CirclePoint") -> float:
        d = abs(self.angle - other.angle)
        return min(d, TWO_PI - d)

    def __eq__(self, other):
        return isinstance(other, CirclePoint) and self.angle == other.angle

    def __hash__(self):
        return hash(("CirclePoint", self.angle))

    def __repr__(self):
        return f"CirclePoint({self.angle:.12g})"


def _merge_intervals(ivals):
    """Merge a list of (lo, hi) with 0 <= lo < hi <= 2*pi into a canonical tuple."""
    ivals = sorted((float(lo), float(hi)) for lo, hi in ivals if hi > lo)
    out = []
    for lo, hi in ivals:
        if out and lo <= out[-1][1] + 1e-15:
            out[-1] = (out[-1][0], max(out[-1][1], hi))
        else:
            out.append((lo, hi))
    # merge across the 0/2*pi seam
    if len(out) >= 2 and out[0][0] <= 1e-15 and out[-1][1] >= TWO_PI - 1e-15:
        first = out.pop(0)
        last = out.pop()
        out.append((last[0], TWO_PI))
        out.insert(0, (0.0, first[1]))
        if len(out) == 1:
            return ((0.0, TWO_PI),)
    if out and out[0][0] <= 0.0 and out[0][1] >= TWO_PI:
        return ((0.0, TWO_PI),)
    return tuple(out)


class ArcSet:
    """A finite union of half-open arcs [lo, hi) on the circle.

    Canonical form: arcs sorted by left endpoint, pairwise disjoint,
    each contained in [0, 2*pi] (arcs crossing the seam are split).
    The full circle is ((0, 2*pi),); the empty set is ().
    """

    __slots__ = ("arcs",)

    def __init__(self, arcs: Iterable[tuple]):
        pieces = []
        for lo, hi in arcs:
            lo = float(lo)
            hi = float(hi)
            if hi <= lo:
                continue
            if hi - lo >= TWO_PI:
                pieces = [(0.0, TWO_PI)]
                break
            if 0.0 <= lo and hi <= TWO_PI:
                pieces.append((lo, hi))  # already in range: keep exactly
                continue
            lo_n = _norm_angle(lo)
            hi_n = lo_n + (hi - lo)
            if hi_n <= TWO_PI:
                pieces.append((lo_n, hi_n))
            else:
                pieces.append((lo_n, TWO_PI))
                pieces.append((0.0, hi_n - TWO_PI))
        object.__setattr__(self, "arcs", _merge_intervals(pieces))

    def __setattr__(self, *a):
        raise AttributeError("ArcSet is immutable")

    # -- constructors -----------------------------------------------------
    @staticmethod
    def full() -> "ArcSet":
        return ArcSet([(0.0, TWO_PI)])

    @staticmethod
    def empty() -> "ArcSet":
        return ArcSet([])

    @staticmethod
    def from_text(text: str) -> "ArcSet":
        """Parse angle intervals given in turns: "0:0.25,0.5:0.75".

        A leading "!" complements the set; "*", "all" and "" denote the
        full circle.
        """
        text = text.strip()
        if text in ("*", "all", ""):
            return ArcSet.full()
        complement = text.startswith("!")
        if complement:
            text = text[1:].strip()
        arcs = []
        for chunk in text.split(","):
            chunk = chunk.strip()
            if not chunk:
                continue
            lo_s, _, hi_s = chunk.partition(":")
            if not _:
                raise GeometryError(f"arc interval needs lo:hi in turns, got {chunk!r}")
            lo, hi = float(lo_s), float(hi_s)
            if hi < lo:
                raise GeometryError(f"arc interval has hi < lo: {chunk!r}")
            arcs.append((lo * TWO_PI, hi * TWO_PI))
        out = ArcSet(arcs)
        return out.complement() if complement else out

    # -- set algebra -------------------------------------------------------
    @property
    def is_empty(self) -> bool:
        return not self.arcs

    @property
    def is_full(self) -> bool:
        return self.arcs == ((0.0, TWO_PI),)

    def measure(self) -> float:
        """Normalized angle measure (total mass 1 on the full circle)."""
        return sum(hi - lo for lo, hi in self.arcs) / TWO_PI

    def contains(self, b) -> bool:
        theta = b.angle if isinstance(b, CirclePoint) else _norm_angle(b)
        for lo, hi in self.arcs:
            if lo <= theta < hi:
                return True
        return False

    def contains_angles(self, thetas: np.ndarray) -> np.ndarray:
        """Vectorized membership for an array of angles already in [0, 2*pi)."""
        mask = np.zeros(thetas.shape, dtype=bool)
        for lo, hi in self.arcs:
            mask |= (thetas >= lo) & (thetas < hi)
        return mask

    def union(self, other: "ArcSet") -> "ArcSet":
        return ArcSet(self.arcs + other.arcs)

    def complement(self) -> "ArcSet":
        if self.is_empty:
            return ArcSet.full()
        pts = [0.0]
        for lo, hi in self.arcs:
            pts.extend((lo, hi))
        pts.append(TWO_PI)
        out = []
        # self.arcs is sorted & disjoint: complement gaps are consecutive pairs
        prev = 0.0
        for lo, hi in self.arcs:
            if lo > prev:
                out.append((prev, lo))
            prev = hi
        if prev < TWO_PI:
            out.append((prev, TWO_PI))
        return ArcSet(out)

    def intersect(self, other: "ArcSet") -> "ArcSet":
        return self.complement().union(other.complement()).complement()

    def thicken(self, a: float) -> "ArcSet":
        """Open visual neighborhood {b : sigma(b, self) < e^{-a}} for a > 0."""
        if a <= 0:
            raise GeometryError("thickening scale must be positive")
        r = math.exp(-float(a))
        if self.is_empty:
            return self
        half = 2.0 * math.asin(min(1.0, r))
        return ArcSet([(lo - half, hi + half) for lo, hi in self.arcs])

    def __eq__(self, other):
        return isinstance(other, ArcSet) and self.arcs == other.arcs

    def __hash__(self):
        return hash(("ArcSet", self.arcs))

    def __repr__(self):
        if self.is_full:
            return "ArcSet.full()"
        body = ", ".join(f"({lo:.6g}, {hi:.6g})" for lo, hi in self.arcs)
        return f"ArcSet([{body}])"


# ---------------------------------------------------------------------------
# Moebius isometries
# ---------------------------------------------------------------------------


class MobiusIsometry:
    """An orientation-preserving isometry of the hyperbolic plane.

    Stored as a real 2x2 matrix (a, b; c, d) of determinant one,
    identified up to overall sign.  The action on the unit-disk model is
    the fractional-linear action conjugated by the half-plane-to-disk
    Cayley transform; the conjugated matrix has the (alpha, beta) form
    with ``|alpha|^2 - |beta|^2 = 1`` and acts by

        z  |->  (alpha*z + beta) / (conj(beta)*z + conj(alpha)).
    """

    __slots__ = ("a", "b", "c", "d", "alpha", "beta")

    def __init__(self, a: float, b: float, c: float, d: float):
        det = a * d - b * c
        if abs(det - 1.0) > 1e-9:
            raise GeometryError(f"matrix determinant {det!r} is not 1")
        s = 1.0 / math.sqrt(det)
        a *= s
        b *= s
        c *= s
        d *= s
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "alpha", complex((a + d) / 2.0, (b - c) / 2.0))
        object.__setattr__(self, "beta", complex((a - d) / 2.0, -(b + c) / 2.0))

    def __setattr__(self, *args):
        raise AttributeError("MobiusIsometry is immutable")

    # -- constructors ------------------------------------------------------
    @staticmethod
    def from_disk_pair(alpha: complex, beta: complex) -> "MobiusIsometry":
        a = alpha.real + beta.real
        d = alpha.real - beta.real
        b = alpha.imag - beta.imag
        c = -(alpha.imag + beta.imag)
        return MobiusIsometry(a, b, c, d)

    @staticmethod
    def identity() -> "MobiusIsometry":
        return MobiusIsometry(1.0, 0.0, 0.0, 1.0)

    @staticmethod
    def disk_translation(w: complex) -> "MobiusIsometry":
        """The hyperbolic translation taking the origin to w (|w| < 1)."""
        w = complex(w)
        if abs(w) >= 1.0:
            raise GeometryError("translation target must lie inside the disk")
        s = 1.0 / math.sqrt(1.0 - abs(w) ** 2)
        return MobiusIsometry.from_disk_pair(complex(s, 0.0), s * w)

    @staticmethod
    def disk_rotation(center: complex, theta: float) -> "MobiusIsometry":
        """Rotation by theta about an interior point of the disk."""
        t = MobiusIsometry.disk_translation(center)
        half = complex(math.cos(theta / 2.0), math.sin(theta / 2.0))
        rot = MobiusIsometry.from_disk_pair(half, 0.0)
        return t * rot * t.inverse()

    # -- group structure ---------------------------------------------------
    def __mul__(self, other: "MobiusIsometry") -> "MobiusIsometry":
        a1, b1 = self.alpha, self.beta
        a2, b2 = other.alpha, other.beta
        return MobiusIsometry.from_disk_pair(
            a1 * a2 + b1 * b2.conjugate(), a1 * b2 + b1 * a2.conjugate()
        )

    def inverse(self) -> "MobiusIsometry":
        return MobiusIsometry.from_disk_pair(self.alpha.conjugate(), -self.beta)

    @property
    def trace(self) -> float:
        return self.a + self.d

    @property
    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    # -- action ------------------------------------------------------------
    def act(self, z: complex) -> complex:
        z = complex(z)
        return (self.alpha * z + self.beta) / (
            self.beta.conjugate() * z + self.alpha.conjugate()
        )

    def act_boundary(self, b: CirclePoint) -> CirclePoint:
        w = self.act(b.point)
        return CirclePoint(math.atan2(w.imag, w.real))

    def orbit_point(self) -> complex:
        """The image of the origin."""
        return self.beta / self.alpha.conjugate()

    def displacement(self) -> float:
        """d(0, g . 0)."""
        c = abs(self.alpha) ** 2 + abs(self.beta) ** 2
        return math.acosh(max(1.0, c))

    def translation_length(self) -> float:
        """2*arccosh(|tr|/2) for hyperbolic elements, 0 otherwise."""
        t = abs(self.trace) / 2.0
        if t <= 1.0:
            return 0.0
        return 2.0 * math.acosh(t)

    def is_identity(self, tol: float = 1e-9) -> bool:
        r_plus = abs(self.alpha - 1.0) ** 2 + abs(self.beta) ** 2
        r_minus = abs(self.alpha + 1.0) ** 2 + abs(self.beta) ** 2
        return min(r_plus, r_minus) <= tol * tol

    def residual_to(self, other: "MobiusIsometry") -> float:
        """Distance to +-other in the flat matrix norm (sign-insensitive)."""
        da = self.alpha - other.alpha
        db = self.beta - other.beta
        sa = self.alpha + other.alpha
        sb = self.beta + other.beta
        return math.sqrt(
            min(abs(da) ** 2 + abs(db) ** 2, abs(sa) ** 2 + abs(sb) ** 2)
        )

    def __eq__(self, other):
        if not isinstance(other, MobiusIsometry):
            return NotImplemented
        return self.residual_to(other) < 1e-12

    def __repr__(self):
        return (
            f"MobiusIsometry({self.a:.12g}, {self.b:.12g}, "
            f"{self.c:.12g}, {self.d:.12g})"
        )


# ---------------------------------------------------------------------------
# group presets
# ---------------------------------------------------------------------------

_PRESET_ALIASES = {
    "genus2": "genus2-octagon",
    "genus2-octagon": "genus2-octagon",
    "triangle237": "triangle-2-3-7",
    "triangle-2-3-7": "triangle-2-3-7",
}


def _octagon_generators():
    """Side-pairing translations of the regular octagon, commutator form.

    The regular hyperbolic octagon with all eight vertices identified to
    a single point has vertex angle pi/4 and inradius arccosh(cot(pi/8)).
    Pairing edge k+2 onto edge k (counterclockwise labels, reversing the
    edge) gives a translation; the four pairings below, with two of them
    inverted to straighten the relation, satisfy [a,b][c,d] = +-identity.
    """
    r_in = math.acosh(1.0 / math.tan(math.pi / 8.0))
    rho = math.tanh(r_in / 2.0)

    def pairmap(k: int) -> MobiusIsometry:
        mid = rho * complex(
            math.cos((2 * k + 1) * math.pi / 8.0), math.sin((2 * k + 1) * math.pi / 8.0)
        )
        flip = MobiusIsometry.disk_rotation(mid, math.pi)
        quarter = MobiusIsometry.from_disk_pair(
            complex(math.cos(math.pi / 4.0), -math.sin(math.pi / 4.0)), 0.0
        )
        return flip * quarter

    gens = [pairmap(0), pairmap(1).inverse(), pairmap(4), pairmap(5).inverse()]
    circumradius = math.acosh((1.0 + math.sqrt(2.0)) ** 2)
    return gens, "abcd", circumradius


def _triangle_generators():
    """Rotation generators of the (2,3,7) triangle group, generic basepoint.

    The right triangle with angles (pi/2, pi/3, pi/7) is placed with the
    pi/7 vertex at the origin; the three clockwise rotations by twice
    the angles multiply to the identity.  The whole group is conjugated
    by a translation so that the new basepoint (the origin) is a generic
    point of the old picture, giving a trivial stabilizer and a positive
    separation floor for orbit points.
    """
    ang_a, ang_b, ang_c = math.pi / 2.0, math.pi / 3.0, math.pi / 7.0
    cos_a, cos_b, cos_c = math.cos(ang_a), math.cos(ang_b), math.cos(ang_c)
    sin_a, sin_b, sin_c = math.sin(ang_a), math.sin(ang_b), math.sin(ang_c)
    side_a = math.acosh((cos_a + cos_b * cos_c) / (sin_b * sin_c))
    side_b = math.acosh((cos_b + cos_a * cos_c) / (sin_a * sin_c))
    v_c = 0.0j
    v_b = complex(math.tanh(side_a / 2.0), 0.0)
    v_a = math.tanh(side_b / 2.0) * complex(math.cos(ang_c), math.sin(ang_c))

    rot_a = MobiusIsometry.disk_rotation(v_a, -2.0 * ang_a)
    rot_b = MobiusIsometry.disk_rotation(v_b, -2.0 * ang_b)
    rot_c = MobiusIsometry.disk_rotation(v_c, -2.0 * ang_c)

    # move the basepoint to a generic interior point of the triangle
    s = 0.22 * complex(math.cos(0.7), math.sin(0.7))
    move = MobiusIsometry.disk_translation(s)
    gens = [move.inverse() * g * move for g in (rot_a, rot_b, rot_c)]

    # covering radius bound: the quad (triangle + its mirror across the
    # real-axis side) is a fundamental domain for the rotation subgroup,
    # so every disk point is within max-vertex-distance of an orbit point.
    quad = [v_a, v_b, v_a.conjugate(), v_c]
    radius = max(_disk_dist(s, v) for v in quad)
    return gens, "xyz", radius


def _disk_dist(z: complex, w: complex) -> float:
    z = complex(z)
    w = complex(w)
    num = 2.0 * abs(z - w) ** 2
    den = (1.0 - abs(z) ** 2) * (1.0 - abs(w) ** 2)
    if den <= 0.0:
        raise GeometryError("distance needs points strictly inside the disk")
    return math.acosh(1.0 + num / den)


def build_group(preset: str):
    """Return the generator list (generators followed by their inverses)."""
    key = _PRESET_ALIASES.get(str(preset))
    if key is None:
        raise GeometryError(f"unknown preset {preset!r}")
    if key == "genus2-octagon":
        gens, _, _ = _octagon_generators()
    else:
        gens, _, _ = _triangle_generators()
    return gens + [g.inverse() for g in gens]


# ---------------------------------------------------------------------------
# orbit cache
# ---------------------------------------------------------------------------


def _default_cache_dir() -> str:
    env = os.environ.get(CACHE_ENV_VAR)
    if env:
        return env
    return os.path.join(os.path.expanduser("~"), ".cache", "boundaryrep")


class OrbitCache:
    """Deduplicated orbit of the basepoint under breadth-first products.

    Expansion explores all reduced words level by level, pruning at
    ``radius + margin`` and merging two words when their orbit points
    are closer than ``merge_tol`` (half the minimal observed nonzero
    orbit separation).  The retained elements, the ones within
    ``radius``, are sorted by (distance, word).

    Points are binned in a polar grid whose cells have hyperbolic side
    about ``merge_tol``; a 3x3 neighborhood probe around a candidate's
    cell then sees every stored point within ``merge_tol``.
    """

    def __init__(self, *, preset, radius, margin, merge_tol, words, alphas, betas,
                 dists, angles, inv_angles, audit, fingerprint):
        self.preset = preset
        self.radius = float(radius)
        self.margin = float(margin)
        self.merge_tol = float(merge_tol)
        self.words = words
        self.alphas = alphas
        self.betas = betas
        self.dists = dists
        self.points = betas / np.conj(alphas)
        self.angles = angles
        self.inv_angles = inv_angles
        self.audit = audit
        self.fingerprint = fingerprint

    # -- construction -------------------------------------------------------
    @staticmethod
    def build(generators: Sequence[MobiusIsometry], letters: str, *, preset: str,
              radius: float, margin: float, merge_tol: float,
              max_levels: int = 200) -> "OrbitCache":
        n_gen = len(generators)
        n_base = n_gen // 2
        letter_of = list(letters) + [ch.upper() for ch in letters]
        ga = np.array([g.alpha for g in generators])
        gb = np.array([g.beta for g in generators])
        inv_of = np.array([(i + n_base) % n_gen for i in range(n_gen)])

        r_prune = float(radius) + float(margin)
        h = float(merge_tol)
        # duplicate test in chord form: d_hyp(z, w) < h is equivalent to
        # |z - w|^2 < sinh^2(h/2) * (1 - |z|^2) * (1 - |w|^2)
        sinh2_half = math.sinh(h / 2.0) ** 2
        ring_cells = {}

        def cells_in_ring(ring: int) -> int:
            m = ring_cells.get(ring)
            if m is None:
                m = max(1, int(math.ceil(
                    TWO_PI * max(1.0, math.sinh((ring + 1) * h)) / h)))
                ring_cells[ring] = m
            return m

        probe_span = {}

        def cells_to_probe(ring: int, other: int) -> int:
            """Angular index span in ring `other` that can hold a point
            within hyperbolic distance h of a point in ring `ring`.

            From cosh(d) = cosh(u)cosh(v) - sinh(u)sinh(v)cos(dtheta):
            d < h forces 1 - cos(dtheta) < (cosh h - 1)/(sinh u sinh v),
            bounded below by the inner edges of the two rings.
            """
            span = probe_span.get((ring, other))
            if span is None:
                if ring == 0 or other == 0:
                    span = cells_in_ring(other)  # probe the whole ring
                else:
                    s = sinh2_half / (math.sinh(ring * h) * math.sinh(other * h))
                    dtheta = 2.0 * math.asin(min(1.0, math.sqrt(s)))
                    width = TWO_PI / cells_in_ring(other)
                    span = int(dtheta / width) + 1
                probe_span[(ring, other)] = span
            return span

        grid = {}
        pts: list[complex] = [0.0j]
        oms: list[float] = [1.0]
        dlist: list[float] = [0.0]
        words: list[str] = [""]
        alist: list[complex] = [1.0 + 0.0j]
        blist: list[complex] = [0.0j]
        grid[(0, 0)] = [0]

        fr_a = np.array([1.0 + 0.0j])
        fr_b = np.array([0.0j])
        fr_last = np.array([-1], dtype=np.int16)
        fr_words = [""]

        max_merged = 0.0
        min_compared = math.inf
        n_candidates = 0
        consecutive_quiet = 0
        level = 0
        while len(fr_a) and consecutive_quiet < 2 and level < max_levels:
            level += 1
            cand_a, cand_b, cand_last, cand_parent = [], [], [], []
            for gi in range(n_gen):
                mask = fr_last != inv_of[gi]
                if not mask.any():
                    continue
                parents = np.nonzero(mask)[0]
                na = fr_a[parents] * ga[gi] + fr_b[parents] * np.conj(gb[gi])
                nb = fr_a[parents] * gb[gi] + fr_b[parents] * np.conj(ga[gi])
                det = np.abs(na) ** 2 - np.abs(nb) ** 2
                scale = 1.0 / np.sqrt(det)
                na *= scale
                nb *= scale
                c = np.abs(na) ** 2 + np.abs(nb) ** 2
                dd = np.arccosh(np.maximum(c, 1.0))
                keep = dd <= r_prune
                if keep.any():
                    cand_a.append(na[keep])
                    cand_b.append(nb[keep])
                    cand_last.append(np.full(int(keep.sum()), gi, dtype=np.int16))
                    cand_parent.append(parents[keep])
            if not cand_a:
                break
            ca = np.concatenate(cand_a)
            cb = np.concatenate(cand_b)
            cl = np.concatenate(cand_last)
            cp = np.concatenate(cand_parent)
            n_candidates += len(ca)
            cc = np.abs(ca) ** 2 + np.abs(cb) ** 2
            cd = np.arccosh(np.maximum(cc, 1.0))
            cpt = cb / np.conj(ca)
            cth = np.mod(np.angle(cpt), TWO_PI)
            crings = np.floor(cd / h).astype(np.int64)

            keep_rows = []
            new_within = 0
            for i in range(len(ca)):
                u = float(cd[i])
                th = float(cth[i])
                zi = cpt[i]
                ring0 = int(crings[i])
                one_minus = 1.0 - abs(zi) ** 2
                dup = False
                for ring in (ring0 - 1, ring0, ring0 + 1):
                    if ring < 0:
                        continue
                    m_cells = cells_in_ring(ring)
                    j0 = int(th / (TWO_PI / m_cells)) % m_cells
                    span = cells_to_probe(ring0, ring)
                    if 2 * span + 1 >= m_cells:
                        offsets = range(m_cells)
                    else:
                        offsets = range(-span, span + 1)
                    for dj in offsets:
                        bucket = grid.get((ring, (j0 + dj) % m_cells))
                        if not bucket:
                            continue
                        for j in bucket:
                            zj = pts[j]
                            s2 = abs(zi - zj) ** 2
                            local = one_minus * oms[j]
                            if s2 < sinh2_half * local:
                                dup = True
                                dh = math.acosh(1.0 + 2.0 * s2 / local)
                                if dh > max_merged:
                                    max_merged = dh
                            elif s2 < 4.0 * sinh2_half * local:
                                # audit band: record near-misses just above the
                                # merge tolerance (always below the systole)
                                dh = math.acosh(1.0 + 2.0 * s2 / local)
                                if dh < min_compared:
                                    min_compared = dh
                            if dup:
                                break
                        if dup:
                            break
                    if dup:
                        break
                if dup:
                    continue
                idx = len(pts)
                pts.append(zi)
                oms.append(one_minus)
                dlist.append(u)
                alist.append(complex(ca[i]))
                blist.append(complex(cb[i]))
                words.append(fr_words[cp[i]] + letter_of[cl[i]])
                m_cells = cells_in_ring(ring0)
                j0 = int(th / (TWO_PI / m_cells)) % m_cells
                grid.setdefault((ring0, j0), []).append(idx)
                keep_rows.append(i)
                if u <= radius:
                    new_within += 1
            consecutive_quiet = consecutive_quiet + 1 if new_within == 0 else 0
            keep_rows = np.array(keep_rows, dtype=np.int64)
            if len(keep_rows) == 0:
                break
            fr_a = ca[keep_rows]
            fr_b = cb[keep_rows]
            fr_last = cl[keep_rows]
            fr_words = words[len(words) - len(keep_rows):]

        # retain the points within the declared radius, sorted by (dist, word)
        dist_arr = np.array(dlist)
        inside = np.nonzero(dist_arr <= radius + 1e-12)[0]
        order = sorted(inside, key=lambda i: (dlist[i], words[i]))
        alphas = np.array([alist[i] for i in order])
        betas = np.array([blist[i] for i in order])
        dists = np.array([dlist[i] for i in order])
        kept_words = [words[i] for i in order]
        points = betas / np.conj(alphas)
        angles = np.mod(np.angle(points), TWO_PI)
        inv_points = -betas / alphas
        inv_angles = np.mod(np.angle(inv_points), TWO_PI)

        sampled_min = OrbitCache._separation_scan(points)
        audit = {
            "levels": level,
            "candidates": int(n_candidates),
            "accepted_total": len(pts),
            "kept_within_radius": len(order),
            "max_merged_distance": float(max_merged),
            "min_compared_distinct": (None if math.isinf(min_compared)
                                      else float(min_compared)),
            "sampled_min_separation": float(sampled_min),
            "stopped_quiet": bool(consecutive_quiet >= 2),
        }
        if sampled_min <= merge_tol:
            raise GeometryError(
                "orbit dedup audit failed: separation "
                f"{sampled_min} under merge tolerance {merge_tol}")
        fingerprint = OrbitCache._fingerprint(preset, radius, margin, merge_tol)
        return OrbitCache(
            preset=preset, radius=radius, margin=margin, merge_tol=merge_tol,
            words=kept_words, alphas=alphas, betas=betas, dists=dists,
            angles=angles, inv_angles=inv_angles, audit=audit,
            fingerprint=fingerprint)

    @staticmethod
    def _separation_scan(points: np.ndarray, sample: int = 1536) -> float:
        """Minimum pairwise hyperbolic distance, probed from a strided sample."""
        n = len(points)
        if n < 2:
            return math.inf
        idx = np.unique(np.linspace(1, n - 1, num=min(sample, n - 1), dtype=np.int64))
        best = math.inf
        one_minus = 1.0 - np.abs(points) ** 2
        for i in idx:
            sep = np.abs(points - points[i])
            arg = 1.0 + 2.0 * sep * sep / (one_minus * one_minus[i])
            arg[i] = math.inf
            m = float(np.min(np.arccosh(np.minimum(arg, 1e300))))
            if m < best:
                best = m
        return best

    @staticmethod
    def _fingerprint(preset: str, radius: float, margin: float, tol: float) -> str:
        payload = json.dumps(
            {"preset": preset, "radius": round(float(radius), 12),
             "margin": round(float(margin), 12), "tol": round(float(tol), 12),
             "version": _CACHE_FORMAT_VERSION},
            sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    # -- persistence ---------------------------------------------------------
    def save(self, directory: str) -> str:
        os.makedirs(directory, exist_ok=True)
        path = os.path.join(directory, f"orbit-{self.fingerprint}.npz")
        meta = {
            "preset": self.preset,
            "radius": self.radius,
            "margin": self.margin,
            "merge_tol": self.merge_tol,
            "version": _CACHE_FORMAT_VERSION,
            "audit": self.audit,
        }
        np.savez_compressed(
            path,
            alphas=self.alphas, betas=self.betas, dists=self.dists,
            angles=self.angles, inv_angles=self.inv_angles,
            words=np.array(self.words, dtype=np.str_),
            meta=np.array(json.dumps(meta, sort_keys=True)))
        return path

    @staticmethod
    def load(directory: str, *, preset: str, radius: float, margin: float,
             merge_tol: float):
        fp = OrbitCache._fingerprint(preset, radius, margin, merge_tol)
        path = os.path.join(directory, f"orbit-{fp}.npz")
        if not os.path.exists(path):
            return None
        with np.load(path, allow_pickle=False) as payload:
            meta = json.loads(str(payload["meta"]))
            if not (meta.get("version") == _CACHE_FORMAT_VERSION
                    and meta.get("preset") == preset
                    and meta.get("radius") == float(radius)
                    and meta.get("margin") == float(margin)
                    and meta.get("merge_tol") == float(merge_tol)):
                return None
            return OrbitCache(
                preset=preset, radius=radius, margin=margin, merge_tol=merge_tol,
                words=[str(w) for w in payload["words"]],
                alphas=payload["alphas"], betas=payload["betas"],
                dists=payload["dists"], angles=payload["angles"],
                inv_angles=payload["inv_angles"], audit=meta["audit"],
                fingerprint=fp)

    # -- queries ---------------------------------------------------------------
    def __len__(self):
        return len(self.dists)

    def count_within(self, t: float) -> int:
        """Number of orbit points (including the basepoint) with d <= t."""
        return int(np.searchsorted(self.dists, float(t), side="right"))

    def annulus_indices(self, t: float, R: float) -> np.ndarray:
        lo = float(t) - float(R)
        hi = float(t) + float(R)
        if hi > self.radius + 1e-12:
            raise CacheExhaustedError(
                f"cache exhausted: annulus needs radius {hi}, cache holds "
                f"{self.radius}")
        i0 = int(np.searchsorted(self.dists, lo, side="right"))
        i1 = int(np.searchsorted(self.dists, hi, side="left"))
        return np.arange(i0, i1, dtype=np.int64)

    def element(self, index: int) -> MobiusIsometry:
        return MobiusIsometry.from_disk_pair(
            complex(self.alphas[index]), complex(self.betas[index]))


# ---------------------------------------------------------------------------
# the model
# ---------------------------------------------------------------------------


class PlaneModel:
    """Hyperbolic disk with a cocompact Fuchsian group as SpaceModel.

    Interior points are complex numbers of modulus < 1; boundary points
    are CirclePoint.  The basepoint is the origin, the boundary measure
    is the normalized angle measure, and the critical exponent is 1.
    """

    def __init__(self, preset: str = "genus2-octagon", *,
                 delta: float = math.log(2.0),
                 cache_dir: str | None = None,
                 cache_radius: float | None = None,
                 prune_margin: float = 2.0,
                 algebraic_tol: float = 1e-9,
                 geometric_tol: float = 1e-6):
        key = _PRESET_ALIASES.get(str(preset))
        if key is None:
            raise GeometryError(f"unknown preset {preset!r}")
        self.preset = key
        self.delta = float(delta)
        self.algebraic_tol = float(algebraic_tol)
        self.geometric_tol = float(geometric_tol)
        self.basepoint = 0.0j
        self.boundary_diameter = 1.0
        self.critical_exponent = 1.0
        self.cache_dir = cache_dir if cache_dir is not None else _default_cache_dir()
        self.prune_margin = float(prune_margin)

        if key == "genus2-octagon":
            base_gens, letters, radius = _octagon_generators()
            self.default_cache_radius = 12.5
        else:
            base_gens, letters, radius = _triangle_generators()
            self.default_cache_radius = 8.0
        self.base_generators = base_gens
        self.generators = base_gens + [g.inverse() for g in base_gens]
        self.letters = letters
        self.quotient_radius = radius
        self.cache_radius = (float(cache_radius) if cache_radius is not None
                             else self.default_cache_radius)
        self._orbit = None
        self._validate_group()
        self.systole_estimate = self._systole_estimate()
        self.merge_tol = self.systole_estimate / 2.0

    # -- group sanity -----------------------------------------------------
    def _validate_group(self):
        if self.preset == "genus2-octagon":
            a, b, c, d = self.base_generators
            relator = (a * b * a.inverse() * b.inverse()
                       * c * d * c.inverse() * d.inverse())
            self.relation_residual = relator.residual_to(MobiusIsometry.identity())
        else:
            x, y, z = self.base_generators
            res = 0.0
            for g, order in ((x, 2), (y, 3), (z, 7)):
                p = MobiusIsometry.identity()
                for _ in range(order):
                    p = p * g
                res = max(res, p.residual_to(MobiusIsometry.identity()))
            self.relation_residual = res
        if self.relation_residual > self.algebraic_tol:
            raise GeometryError(
                f"group relation residual {self.relation_residual} exceeds "
                f"{self.algebraic_tol}")

    def _systole_estimate(self) -> float:
        """Minimal nonzero basepoint displacement over words of length <= 2."""
        best = math.inf
        for g in self.generators:
            d = g.displacement()
            if d > self.geometric_tol and d < best:
                best = d
        for g in self.generators:
            for h in self.generators:
                d = (g * h).displacement()
                if d > self.geometric_tol and d < best:
                    best = d
        return best

    def spec_string(self) -> str:
        tag = "genus2" if self.preset == "genus2-octagon" else "triangle237"
        return f"plane:{tag}"

    # -- SpaceModel protocol -------------------------------------------------
    def is_boundary(self, obj) -> bool:
        return isinstance(obj, CirclePoint)

    def _check_interior(self, z) -> complex:
        if isinstance(z, CirclePoint):
            raise GeometryError("expected an interior point, got a boundary point")
        z = complex(z)
        if abs(z) >= 1.0:
            raise GeometryError("interior points must have modulus < 1")
        return z

    def dist(self, x, y) -> float:
        return _disk_dist(self._check_interior(x), self._check_interior(y))

    def busemann_from_root(self, b: CirclePoint, x) -> float:
        """beta_b(origin, x) in the Poisson-kernel closed form."""
        x = self._check_interior(x)
        bp = b.point
        return math.log(abs(x - bp) ** 2 / (1.0 - abs(x) ** 2))

    def busemann_disk(self, b: CirclePoint, x, y) -> float:
        """beta_b(x, y) = log( P(x,b) / P(y,b) ) via the Poisson kernel."""
        if not isinstance(b, CirclePoint):
            raise GeometryError("first argument must be a CirclePoint")
        return self.busemann_from_root(b, y) - self.busemann_from_root(b, x)

    def gromov(self, x, y, base):
        base = self._check_interior(base)
        xb = isinstance(x, CirclePoint)
        yb = isinstance(y, CirclePoint)
        if xb and yb:
            if x == y:
                return math.inf
            half_gap = x.angular_distance(y) / 2.0
            at_origin = -math.log(math.sin(half_gap))
            return (at_origin
                    + 0.5 * (self.busemann_from_root(x, base)
                             + self.busemann_from_root(y, base)))
        if xb or yb:
            b = x if xb else y
            q = self._check_interior(y if xb else x)
            return 0.5 * (_disk_dist(base, q) - self.busemann_disk(b, base, q))
        x = self._check_interior(x)
        y = self._check_interior(y)
        return 0.5 * (_disk_dist(x, base) + _disk_dist(y, base) - _disk_dist(x, y))

    def direction(self, q) -> CirclePoint:
        q = self._check_interior(q)
        if q == 0:
            raise GeometryError("the basepoint has no direction")
        return CirclePoint(math.atan2(q.imag, q.real))

    def ray_point(self, b: CirclePoint, s) -> complex:
        if not isinstance(b, CirclePoint):
            raise GeometryError("ray_point takes a boundary direction")
        s = float(s)
        if s < 0:
            raise GeometryError("ray parameter must be nonnegative")
        return math.tanh(s / 2.0) * b.point

    def thicken(self, U: ArcSet, a) -> ArcSet:
        if not isinstance(U, ArcSet):
            raise GeometryError("thicken expects an ArcSet")
        return U.thicken(float(a))

    # -- boundary measure and weights -----------------------------------------
    def full_boundary(self) -> ArcSet:
        return ArcSet.full()

    def boundary_set_from_text(self, text: str) -> ArcSet:
        return ArcSet.from_text(text)

    def boundary_measure(self, U: ArcSet) -> float:
        return U.measure()

    def ball_measure(self, b: CirclePoint, r: float) -> float:
        """Measure of the open visual ball {c : sigma(b,c) < r}."""
        r = float(r)
        if r <= 0.0:
            return 0.0
        if r > 1.0:
            return 1.0
        return 2.0 * math.asin(r) / math.pi

    def visual_weight(self, q, b: CirclePoint) -> float:
        """e^{-(eta/2) * beta_b(origin, q)} = sqrt(1-|q|^2)/|q - b|."""
        q = self._check_interior(q)
        return math.sqrt(1.0 - abs(q) ** 2) / abs(q - b.point)

    def visual_weight_at_angles(self, q, thetas: np.ndarray) -> np.ndarray:
        q = self._check_interior(q)
        pts = np.cos(thetas) + 1j * np.sin(thetas)
        return math.sqrt(1.0 - abs(q) ** 2) / np.abs(q - pts)

    def weight_l1(self, q) -> float:
        """Closed form of the full boundary integral of visual_weight(q, .)."""
        q = self._check_interior(q)
        r = abs(q)
        if r == 0.0:
            return 1.0
        m = 4.0 * r / (1.0 + r) ** 2
        return math.sqrt(1.0 - r * r) * (2.0 / math.pi) * float(ellipk(m)) / (1.0 + r)

    def weight_l1_many(self, points: np.ndarray) -> np.ndarray:
        r = np.abs(points)
        m = 4.0 * r / (1.0 + r) ** 2
        out = np.sqrt(1.0 - r * r) * (2.0 / math.pi) * ellipk(m) / (1.0 + r)
        return np.where(r == 0.0, 1.0, out)

    def weight_integral(self, q, U: ArcSet) -> float:
        """Integral of visual_weight(q, .) over U, by incomplete elliptic F.

        The antiderivative of 1/|q - e^{i theta}| in theta is
        -(2/(1+r)) * F((pi - (theta - phi))/2 | m) with m = 4r/(1+r)^2,
        q = r e^{i phi}; each arc contributes the endpoint difference.
        """
        q = self._check_interior(q)
        r = abs(q)
        if U.is_empty:
            return 0.0
        if r == 0.0:
            return U.measure()
        phi = math.atan2(q.imag, q.real)
        m = 4.0 * r / (1.0 + r) ** 2
        pref = math.sqrt(1.0 - r * r) / TWO_PI * 2.0 / (1.0 + r)
        total = 0.0
        for lo, hi in U.arcs:
            x_lo = (lo - phi) / 2.0
            x_hi = (hi - phi) / 2.0
            total += pref * float(
                ellipkinc(math.pi / 2.0 - x_lo, m)
                - ellipkinc(math.pi / 2.0 - x_hi, m))
        return total

    def mc_boundary_integral(self, f: Callable, n_samples: int, seed: int):
        """Monte Carlo boundary integral with standard error, fixed seed.

        ``f`` receives an array of angles in [0, 2*pi) and must return
        an array of values (scalars are broadcast).
        """
        n = int(n_samples)
        if n < 1:
            raise GeometryError("n_samples must be >= 1")
        rng = np.random.default_rng(int(seed))
        thetas = rng.uniform(0.0, TWO_PI, size=n)
        vals = np.asarray(f(thetas), dtype=float)
        if vals.shape == ():
            vals = np.full(n, float(vals))
        if vals.shape != (n,):
            raise GeometryError("integrand must map n angles to n values")
        mean = float(np.mean(vals))
        stderr = float(np.std(vals, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return mean, stderr

    # -- group-orbit machinery -------------------------------------------------
    def orbit(self) -> OrbitCache:
        if self._orbit is None:
            loaded = OrbitCache.load(
                self.cache_dir, preset=self.preset, radius=self.cache_radius,
                margin=self.prune_margin, merge_tol=self.merge_tol)
            if loaded is None:
                loaded = OrbitCache.build(
                    self.generators, self.letters, preset=self.preset,
                    radius=self.cache_radius, margin=self.prune_margin,
                    merge_tol=self.merge_tol)
                try:
                    loaded.save(self.cache_dir)
                except OSError:
                    pass  # caching is best-effort; the build result stands
            self._orbit = loaded
        return self._orbit

    def enumerate_annulus_numeric(self, t: float, R: float | None = None):
        """Indices (into the orbit cache) of S_t = {d in (t-R, t+R)}."""
        R = self.quotient_radius if R is None else float(R)
        t = float(t)
        if t <= R:
            raise GeometryError(f"annulus needs t > R; got t={t}, R={R}")
        return self.orbit().annulus_indices(t, R)

    def annulus_size(self, t: float, R: float | None = None) -> int:
        return len(self.enumerate_annulus_numeric(t, R))

    def orbit_count_within(self, t: float) -> int:
        if t > self.cache_radius + 1e-12:
            raise CacheExhaustedError(
                f"cache exhausted: count needs radius {t}, cache holds "
                f"{self.cache_radius}")
        return self.orbit().count_within(t)

    def letter_map(self) -> dict:
        out = dict(zip(self.letters, self.base_generators))
        out.update({ch.upper(): g.inverse()
                    for ch, g in zip(self.letters, self.base_generators)})
        return out

    def element_from_word(self, word: str) -> MobiusIsometry:
        table = self.letter_map()
        g = MobiusIsometry.identity()
        for ch in word:
            if ch not in table:
                raise GeometryError(f"unknown generator letter {ch!r}")
            g = g * table[ch]
        return g

    def translate_boundary(self, g: MobiusIsometry, U: ArcSet) -> ArcSet:
        """The image g . U; Moebius maps preserve circular order."""
        if U.is_empty or U.is_full:
            return U
        out = []
        for lo, hi in U.arcs:
            a = g.act_boundary(CirclePoint(lo)).angle
            b = g.act_boundary(CirclePoint(hi)).angle
            if b <= a:
                b += TWO_PI
            out.append((a, b))
        return ArcSet(out)

    # -- audits -----------------------------------------------------------------
    def hyperbolicity_audit(self, n_samples: int = 4000, seed: int = 7,
                            max_dist: float = 8.0) -> float:
        """Largest four-point defect min((x|z),(y|z)) - (x|y) over samples.

        A defect of at most delta certifies the (hyp) inequality on the
        sample; the true bound for the disk is log 2.
        """
        rng = np.random.default_rng(int(seed))
        n = int(n_samples)
        # hyperbolic-area-uniform radii within max_dist
        u = rng.uniform(0.0, 1.0, size=(n, 4))
        radii = np.arccosh(1.0 + u * (math.cosh(max_dist) - 1.0))
        thetas = rng.uniform(0.0, TWO_PI, size=(n, 4))
        zs = np.tanh(radii / 2.0) * (np.cos(thetas) + 1j * np.sin(thetas))
        worst = 0.0
        for i in range(n):
            x, y, z, w = (complex(zs[i, j]) for j in range(4))
            pxy = self.gromov(x, y, w)
            pxz = self.gromov(x, z, w)
            pyz = self.gromov(y, z, w)
            defect = min(pxz, pyz) - pxy
            if defect > worst:
                worst = defect
        return worst

    def random_boundary(self, rng) -> CirclePoint:
        return CirclePoint(float(rng.uniform(0.0, TWO_PI)))

    def random_interior(self, rng, max_dist: float = 6.0) -> complex:
        r = math.acosh(1.0 + float(rng.uniform(0.0, 1.0))
                       * (math.cosh(max_dist) - 1.0))
        th = float(rng.uniform(0.0, TWO_PI))
        return math.tanh(r / 2.0) * complex(math.cos(th), math.sin(th))
