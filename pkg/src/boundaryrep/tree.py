"""Free group acting on its Cayley tree, with exact boundary measure theory.

The model fixes rank k generators and a rational edge length.  Vertices are
reduced words; general points (possibly mid-edge) are ``TreeLocus`` values;
boundary points are infinite reduced words (``words.BoundaryWord``).  The
boundary carries the uniform cylinder measure

    nu(C(w)) = (1/2k) * (2k-1)^(1-|w|),

which is the conformal density of exponent eta = log(2k-1)/edge_length at
the basepoint.  All measures, visual weights and matrix coefficients lie in
Q(sqrt(2k-1)) and are computed there exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .exact import ExactScalar
from .space import GeometryError
from .words import (
    BoundaryWord,
    ReducedWord,
    alphabet,
    canonical_extension,
    common_prefix_len,
    inv,
    is_reduced,
    iter_reduced_words,
    letters_str,
    parse_letters,
    sphere_size,
)


@dataclass(frozen=True)
class TreeLocus:
    """A point of the metric tree, in edge-length units from the root.

    ``letters`` is the geodesic edge path from the root to the far vertex of
    the edge carrying the point; ``s`` is the arc position, with
    len(letters)-1 < s <= len(letters) (s == len means the vertex itself).
    """

    letters: tuple[int, ...]
    s: Fraction

    def __post_init__(self):
        if self.letters:
            if not (len(self.letters) - 1 < self.s <= len(self.letters)):
                raise ValueError("locus position inconsistent with its edge")
        elif self.s != 0:
            raise ValueError("root locus must sit at position 0")

    @property
    def is_vertex(self) -> bool:
        return self.s == len(self.letters)


class Cylinder:
    """The set of boundary words extending a fixed nonempty reduced prefix."""

    __slots__ = ("prefix",)

    def __init__(self, prefix: Sequence[int]):
        prefix = tuple(prefix)
        if not prefix:
            raise ValueError("cylinder prefix must be nonempty")
        if not is_reduced(prefix):
            raise ValueError("cylinder prefix must be reduced")
        object.__setattr__(self, "prefix", prefix)

    def __setattr__(self, *_):
        raise AttributeError("Cylinder is immutable")

    def __repr__(self):
        return f"Cylinder({letters_str(self.prefix)!r})"

    def __eq__(self, other):
        return isinstance(other, Cylinder) and self.prefix == other.prefix

    def __hash__(self):
        return hash(("Cylinder", self.prefix))


def _cyl_intersect(u: tuple[int, ...], w: tuple[int, ...]):
    """Intersection of two prefix cylinders: the deeper one, or None."""
    j = common_prefix_len(u, w)
    if j == len(u):
        return w
    if j == len(w):
        return u
    return None


class CylinderSet:
    """A finite disjoint union of cylinders, kept in canonical form.

    Canonical form: lexicographically sorted, no piece nested in another,
    and any full sibling family collapsed into its parent (so the whole
    boundary is the single empty prefix).  This makes equality of sets
    equality of representations.
    """

    __slots__ = ("rank", "pieces")

    def __init__(self, rank: int, pieces: Iterable[Sequence[int]], _canonical=False):
        pieces = [tuple(p) for p in pieces]
        if not _canonical:
            for p in pieces:
                if not is_reduced(p):
                    raise ValueError(f"prefix {p} not reduced")
                if any(abs(l) > rank or l == 0 for l in p):
                    raise ValueError(f"prefix {p} outside rank-{rank} alphabet")
            pieces = _canonicalize(rank, pieces)
        object.__setattr__(self, "rank", rank)
        object.__setattr__(self, "pieces", tuple(pieces))

    def __setattr__(self, *_):
        raise AttributeError("CylinderSet is immutable")

    # -- constructors ---------------------------------------------------------

    @classmethod
    def full(cls, rank: int) -> "CylinderSet":
        return cls(rank, [()], _canonical=True)

    @classmethod
    def empty(cls, rank: int) -> "CylinderSet":
        return cls(rank, [], _canonical=True)

    @classmethod
    def from_text(cls, text: str, rank: int) -> "CylinderSet":
        """Parse 'a,bA' style comma-separated prefixes; '!' prefix complements."""
        text = text.strip()
        negate = text.startswith("!")
        if negate:
            text = text[1:]
        if text in ("*", "all", ""):
            out = cls.full(rank)
        else:
            out = cls(rank, [parse_letters(p.strip(), rank)
                             for p in text.split(",") if p.strip()])
        return out.complement() if negate else out

    # -- set algebra ----------------------------------------------------------

    @property
    def is_full(self) -> bool:
        return self.pieces == ((),)

    @property
    def is_empty(self) -> bool:
        return not self.pieces

    def contains(self, b: BoundaryWord) -> bool:
        for p in self.pieces:
            if b.match_letters(p) == len(p):
                return True
        return False

    def contains_letters(self, letters: tuple[int, ...]) -> bool:
        """Whether every boundary word starting with `letters` lies in the set.

        Requires len(letters) at least the deepest piece depth to be decisive;
        the caller guarantees that (annulus words are deeper than CLI sets).
        """
        for p in self.pieces:
            if letters[:len(p)] == p:
                return True
        return False

    def union(self, other: "CylinderSet") -> "CylinderSet":
        return CylinderSet(self.rank, self.pieces + other.pieces)

    def intersect(self, other: "CylinderSet") -> "CylinderSet":
        out = []
        for u in self.pieces:
            for w in other.pieces:
                got = _cyl_intersect(u, w)
                if got is not None:
                    out.append(got)
        return CylinderSet(self.rank, out)

    def complement(self) -> "CylinderSet":
        return CylinderSet(self.rank, _complement_pieces(self.rank, list(self.pieces), ()),
                           _canonical=False)

    def measure(self) -> ExactScalar:
        m = 2 * self.rank - 1
        total = ExactScalar(0, 0, m)
        for p in self.pieces:
            total = total + cylinder_measure_letters(self.rank, p)
        return total

    def max_depth(self) -> int:
        return max((len(p) for p in self.pieces), default=0)

    def __eq__(self, other):
        return (isinstance(other, CylinderSet) and self.rank == other.rank
                and self.pieces == other.pieces)

    def __hash__(self):
        return hash((self.rank, self.pieces))

    def __repr__(self):
        if self.is_full:
            return "CylinderSet(<full boundary>)"
        return f"CylinderSet({','.join(letters_str(p) for p in self.pieces)!r})"


def _allowed_children(rank: int, prefix: tuple[int, ...]) -> list[int]:
    last = prefix[-1] if prefix else None
    return [l for l in alphabet(rank) if last is None or l != -last]


def _canonicalize(rank: int, pieces: list[tuple[int, ...]]) -> list[tuple[int, ...]]:
    # drop nested pieces
    pieces = sorted(set(pieces), key=lambda p: (len(p), p))
    kept: list[tuple[int, ...]] = []
    for p in pieces:
        if not any(p[:len(q)] == q for q in kept):
            kept.append(p)
    # collapse complete sibling families, repeatedly
    changed = True
    while changed:
        changed = False
        by_parent: dict[tuple[int, ...], set[int]] = {}
        for p in kept:
            if p:
                by_parent.setdefault(p[:-1], set()).add(p[-1])
        for parent, kids in by_parent.items():
            if kids == set(_allowed_children(rank, parent)):
                kept = [p for p in kept if not (len(p) == len(parent) + 1 and p[:-1] == parent)]
                kept.append(parent)
                kept = sorted(set(kept), key=lambda p: (len(p), p))
                # re-drop nesting introduced by the collapse
                kept2: list[tuple[int, ...]] = []
                for p in kept:
                    if not any(p[:len(q)] == q for q in kept2):
                        kept2.append(p)
                kept = kept2
                changed = True
                break
    order = {l: i for i, l in enumerate(alphabet(rank))}
    return sorted(kept, key=lambda p: (len(p), tuple(order[l] for l in p)))


def _complement_pieces(rank: int, pieces: list[tuple[int, ...]],
                       prefix: tuple[int, ...]) -> list[tuple[int, ...]]:
    pieces = [p for p in pieces if _cyl_intersect(p, prefix) is not None]
    if any(len(p) <= len(prefix) for p in pieces):
        return []  # prefix fully covered
    if not pieces:
        return [prefix]
    out: list[tuple[int, ...]] = []
    for l in _allowed_children(rank, prefix):
        out += _complement_pieces(rank, pieces, prefix + (l,))
    return out


def cylinder_measure_letters(rank: int, prefix: tuple[int, ...]) -> ExactScalar:
    m = 2 * rank - 1
    d = len(prefix)
    if d == 0:
        return ExactScalar(1, 0, m)
    return ExactScalar(Fraction(1, 2 * rank) * Fraction(m) ** (1 - d), 0, m)


class FreeGroupModel:
    """Rank-k free group on its Cayley tree with rational edge length.

    delta = 0 (the tree is 0-hyperbolic) and the quotient by the group is a
    rose whose radius -- half an edge -- is the annulus half-width R.
    """

    def __init__(self, rank: int = 2, edge_length: Fraction | int = 1):
        if rank < 2:
            raise ValueError("rank must be at least 2")
        edge_length = Fraction(edge_length)
        if edge_length <= 0:
            raise ValueError("edge length must be positive")
        self.rank = rank
        self.edge_length = edge_length
        self.m = 2 * rank - 1
        self.basepoint = ReducedWord(())
        self.delta = Fraction(0)
        self.quotient_radius = edge_length / 2
        self.boundary_diameter = 1.0

    # -- scalar helpers -------------------------------------------------------

    @property
    def critical_exponent(self) -> float:
        return math.log(self.m) / float(self.edge_length)

    def scalar(self, x=0, y=0) -> ExactScalar:
        return ExactScalar(x, y, self.m)

    def half_power(self, e: int) -> ExactScalar:
        """sqrt(2k-1)**e: the exact value of exp(eta * (e/2) * edge_length)."""
        return ExactScalar.sqrt_power(self.m, e)

    def __repr__(self):
        return f"FreeGroupModel(rank={self.rank}, edge_length={self.edge_length})"

    def spec_string(self) -> str:
        if self.edge_length == 1:
            return f"free:rank={self.rank}"
        return f"free:rank={self.rank},edge={self.edge_length}"

    # -- points ---------------------------------------------------------------

    def locus(self, x) -> TreeLocus:
        if isinstance(x, TreeLocus):
            return x
        if isinstance(x, ReducedWord):
            return TreeLocus(x.letters, Fraction(len(x.letters)))
        raise GeometryError(f"not an interior tree point: {x!r}")

    def is_boundary(self, obj) -> bool:
        return isinstance(obj, BoundaryWord)

    def word(self, text: str) -> ReducedWord:
        return ReducedWord.parse(text, self.rank)

    def boundary_point(self, text: str, cycle: str | None = None) -> BoundaryWord:
        if cycle is not None:
            return BoundaryWord(parse_letters(text, self.rank),
                                parse_letters(cycle, self.rank), self.rank)
        return BoundaryWord.truncated(text, self.rank)

    # -- metric oracles -------------------------------------------------------

    def _common(self, a: TreeLocus, b: TreeLocus) -> Fraction:
        j = common_prefix_len(a.letters, b.letters)
        if j < min(len(a.letters), len(b.letters)):
            return Fraction(j)
        return min(a.s, b.s)

    def dist(self, x, y) -> Fraction:
        a, b = self.locus(x), self.locus(y)
        return (a.s + b.s - 2 * self._common(a, b)) * self.edge_length

    def units_from_basepoint(self, x) -> Fraction:
        return self.locus(x).s

    def gromov(self, x, y, base):
        """Gromov product, exact, with boundary points allowed in x and y."""
        bx = self.is_boundary(x)
        by = self.is_boundary(y)
        if self.is_boundary(base):
            raise GeometryError("Gromov product base must be interior")
        if not bx and not by:
            return (self.dist(x, base) + self.dist(y, base) - self.dist(x, y)) / 2
        pb = self.locus(base)
        at_root = pb.s == 0
        if bx and by:
            j = x.match_boundary(y)
            if j is None:
                return math.inf
            prod0 = Fraction(j) * self.edge_length
            if at_root:
                return prod0
            return prod0 + Fraction(1, 2) * (
                self.busemann_from_root(x, pb) + self.busemann_from_root(y, pb))
        if by:
            x, y = y, x  # now x is the boundary point, y interior
        ly = self.locus(y)
        j = x.match_letters(ly.letters)
        common = Fraction(j) if j < len(ly.letters) else ly.s
        prod0 = common * self.edge_length
        if at_root:
            return prod0
        # (y|b)_base = (d(base,y) - beta_b(base,y))/2 with beta via root
        beta = (self.busemann_from_root(x, ly) - self.busemann_from_root(x, pb))
        return (self.dist(base, y) - beta) / 2

    def busemann_from_root(self, b: BoundaryWord, q: TreeLocus) -> Fraction:
        j = b.match_letters(q.letters)
        common = Fraction(j) if j < len(q.letters) else q.s
        return (q.s - 2 * common) * self.edge_length

    # -- rays and directions ----------------------------------------------------

    def direction(self, q) -> BoundaryWord:
        lq = self.locus(q)
        if lq.s == 0:
            return canonical_extension((), self.rank)
        return canonical_extension(lq.letters, self.rank)

    def ray_point(self, q, s) -> TreeLocus:
        """Point at distance s from the root along the canonical ray through q."""
        s = Fraction(s)
        if s < 0:
            raise GeometryError("ray parameter must be nonnegative")
        u = s / self.edge_length
        depth = math.ceil(u)
        if u == 0:
            return TreeLocus((), Fraction(0))
        letters = self.direction(q).letters_to(depth)
        return TreeLocus(letters, u)

    # -- boundary sets ----------------------------------------------------------

    def full_boundary(self) -> CylinderSet:
        return CylinderSet.full(self.rank)

    def cylinder(self, text_or_letters) -> CylinderSet:
        if isinstance(text_or_letters, str):
            letters = parse_letters(text_or_letters, self.rank)
        else:
            letters = tuple(text_or_letters)
        return CylinderSet(self.rank, [letters])

    def boundary_set_from_text(self, text: str) -> CylinderSet:
        return CylinderSet.from_text(text, self.rank)

    def thicken(self, U: CylinderSet, a) -> CylinderSet:
        """Open visual neighborhood {b : sigma(b, U) < exp(-a)}.

        For a cylinder piece C(w) the product (b|C(w)) is the prefix match
        against w (or infinite inside), so the neighborhood truncates w to
        the shortest depth j with j*edge_length > a.
        """
        a = Fraction(a)
        if a <= 0:
            raise GeometryError("thickening scale must be positive")
        jmin = math.floor(a / self.edge_length) + 1
        out = []
        for p in U.pieces:
            out.append(p[:min(jmin, len(p))])
        return CylinderSet(self.rank, out)

    # -- annuli and counting ------------------------------------------------------

    def annulus_length(self, t) -> int:
        """The unique word length n with n*edge_length in (t-R, t+R)."""
        t = Fraction(t)
        if t <= self.quotient_radius:
            raise GeometryError(
                f"annulus parameter {t} not above quotient radius {self.quotient_radius}")
        u = t / self.edge_length
        half = Fraction(1, 2)
        if (u + half).denominator == 1:
            raise GeometryError(
                f"annulus window ({t - self.quotient_radius}, {t + self.quotient_radius}) "
                "contains no vertex sphere")
        return math.floor(u + half)

    def enumerate_annulus(self, t) -> list[ReducedWord]:
        n = self.annulus_length(t)
        return [ReducedWord(ls, _checked=True)
                for ls in iter_reduced_words(self.rank, n)]

    def annulus_size(self, t) -> int:
        return sphere_size(self.rank, self.annulus_length(t))

    def ball_vertex_count(self, radius) -> int:
        """Number of orbit points (vertices) within distance `radius` of the root."""
        n = math.floor(Fraction(radius) / self.edge_length)
        if n < 0:
            return 0
        total = 1
        for j in range(1, n + 1):
            total += sphere_size(self.rank, j)
        return total

    def transfer_matrix(self) -> list[list[int]]:
        letters = alphabet(self.rank)
        return [[0 if b == -a else 1 for b in letters] for a in letters]

    def transfer_matrix_count(self, first: int, last: int, n: int) -> int:
        """Number of reduced length-n words with prescribed first and last letter,
        counted by powers of the letter-adjacency matrix."""
        if n < 1:
            raise GeometryError("transfer counts need length >= 1")
        letters = alphabet(self.rank)
        idx = {l: i for i, l in enumerate(letters)}
        size = len(letters)
        mat = [[1 if i == j else 0 for j in range(size)] for i in range(size)]
        adj = self.transfer_matrix()
        for _ in range(n - 1):
            mat = [[sum(mat[i][u] * adj[u][j] for u in range(size))
                    for j in range(size)] for i in range(size)]
        return mat[idx[first]][idx[last]]

    # -- measure, density, visual weights ------------------------------------------

    def cylinder_measure(self, prefix) -> ExactScalar:
        if isinstance(prefix, str):
            prefix = parse_letters(prefix, self.rank)
        return cylinder_measure_letters(self.rank, tuple(prefix))

    def shell_measure(self, j: int, n: int) -> ExactScalar:
        """nu{b : common prefix with a fixed length-n word is exactly j}, j <= n."""
        if not 0 <= j <= n:
            raise ValueError("shell index out of range")
        k2 = 2 * self.rank
        if j == n:
            return self.scalar(Fraction(1, k2) * Fraction(self.m) ** (1 - n) if n else 1)
        if j == 0:
            return self.scalar(Fraction(k2 - 1, k2))
        return self.scalar(Fraction(k2 - 2, k2) * Fraction(1, self.m ** j))

    def ball_measure(self, b: BoundaryWord, r) -> ExactScalar:
        """Measure of the open visual ball {c : sigma(b, c) < r}.

        The visual distance only takes the values exp(-edge_length * j), so
        the open ball is the cylinder on the prefix of b of depth
        floor(-log(r)/edge_length) + 1, and the whole boundary once r
        exceeds the diameter.
        """
        r = float(r)
        if r <= 0.0:
            raise GeometryError("ball radius must be positive")
        depth = math.floor(-math.log(r) / float(self.edge_length)) + 1
        if depth <= 0:
            return self.scalar(1)
        return self.cylinder_measure(b.letters_to(depth))

    def radon_nikodym(self, q: ReducedWord, b: BoundaryWord) -> ExactScalar:
        """Density of the conformal measure moved to q against the one at the root:
        (2k-1)^(2j - |q|) where j is the prefix match of b with q."""
        n = len(q.letters)
        j = b.match_letters(q.letters)
        return self.scalar(Fraction(self.m) ** (2 * j - n))

    def visual_weight(self, q_letters: tuple[int, ...], b: BoundaryWord) -> ExactScalar:
        """sqrt of the density: (2k-1)^((2j-n)/2), the half-power visual weight."""
        n = len(q_letters)
        j = b.match_letters(q_letters)
        return self.half_power(2 * j - n)

    def weight_integral(self, q_letters: tuple[int, ...],
                        w: tuple[int, ...]) -> ExactScalar:
        """Exact integral of the visual weight of q over the cylinder C(w).

        Splits C(w) by the prefix-match class against q: the class is
        constant on C(w) unless w is a proper prefix of q, in which case the
        remaining match shells are summed explicitly.
        """
        n = len(q_letters)
        if n == 0:
            return cylinder_measure_letters(self.rank, w)
        j0 = common_prefix_len(q_letters, w)
        if len(w) >= n or j0 < len(w):
            j = min(j0, n)
            return cylinder_measure_letters(self.rank, w) * self.half_power(2 * j - n)
        acc = self.scalar(0)
        for j in range(len(w), n):
            acc = acc + self.shell_measure(j, n) * self.half_power(2 * j - n)
        acc = acc + self.shell_measure(n, n) * self.half_power(n)
        return acc

    def weight_l1(self, q_letters: tuple[int, ...]) -> ExactScalar:
        """Exact L1 norm of the visual weight: the full-boundary integral."""
        return self.weight_integral(q_letters, ())

    # -- group action on boundary sets ----------------------------------------------

    def translate_cylinder_pieces(self, g_letters: tuple[int, ...],
                                  w: tuple[int, ...]) -> list[tuple[int, ...]]:
        """Disjoint cylinders covering g . C(w).

        The image is a single cylinder unless w cancels entirely into g, in
        which case the cylinder splits along the continuing-cancellation
        chain -- at most 2k-1 pieces per cancelled letter.
        """
        if not w:
            return [()]
        g = g_letters
        n = len(g)
        out: list[tuple[int, ...]] = []
        stack = [tuple(w)]
        while stack:
            v = stack.pop()
            mlen = len(v)
            c = 0
            while c < n and c < mlen and g[n - 1 - c] == -v[c]:
                c += 1
            if c < mlen:
                out.append(g[:n - c] + v[c:])
            else:
                for l in _allowed_children(self.rank, v):
                    stack.append(v + (l,))
        return out

    def translate_set(self, g: ReducedWord, U: CylinderSet) -> CylinderSet:
        out: list[tuple[int, ...]] = []
        for p in U.pieces:
            out += self.translate_cylinder_pieces(g.letters, p)
        return CylinderSet(self.rank, out)

    def translate_boundary(self, g: ReducedWord, b: BoundaryWord) -> BoundaryWord:
        return b.translate(g)

    # -- per-direction match statistics ------------------------------------------------

    def direction_match_counts(self, b: BoundaryWord, n: int) -> list[int]:
        """counts[j] = number of length-n reduced words whose prefix match with b
        is exactly j.  Needs b resolvable to depth n."""
        b.letters_to(n)  # depth check; the counts depend only on tree regularity
        m = self.m
        k2 = 2 * self.rank
        counts = [0] * (n + 1)
        counts[0] = (k2 - 1) * m ** (n - 1) if n >= 1 else 1
        for j in range(1, n):
            counts[j] = (k2 - 2) * m ** (n - j - 1)
        if n >= 1:
            counts[n] = 1
        return counts

    # -- sampling helpers -------------------------------------------------------------

    def random_word(self, rng, length: int) -> ReducedWord:
        letters: list[int] = []
        for _ in range(length):
            opts = _allowed_children(self.rank, tuple(letters[-1:]))
            letters.append(opts[int(rng.integers(len(opts)))])
        return ReducedWord(tuple(letters), _checked=True)

    def random_boundary(self, rng, prefix_len: int = 3) -> BoundaryWord:
        """Random eventually periodic boundary word (uniform letters)."""
        pre = self.random_word(rng, prefix_len).letters
        while True:
            cyc_len = 1 + int(rng.integers(3))
            cyc: list[int] = []
            last = pre[-1] if pre else None
            ok = True
            for i in range(cyc_len):
                opts = [l for l in alphabet(self.rank) if last is None or l != -last]
                cyc.append(opts[int(rng.integers(len(opts)))])
                last = cyc[-1]
            probe = pre + tuple(cyc) + tuple(cyc)
            if is_reduced(probe):
                return BoundaryWord(pre, tuple(cyc), self.rank)
