"""Boundary functions and the weighted group action built on them.

The quasi-regular action twists a boundary function by the square root of
the measure density of the moved basepoint: (g . v)(b) = weight(g, b) *
v(g^-1 b).  On the tree everything is exact: cylinder-simple functions
carry ExactScalar values and every pairing reduces to finitely many exact
weight integrals.  On the disk, step functions over boundary arcs play the
same role with floats, and pairings reduce to incomplete elliptic
integrals over arcs.

On top of the action this module provides the sphere-averaged operators
(`build_Tt`), their normalized boundary profiles (`sup_norm_Tt1`), shadow
tail bounds (`tail_bound_check`), the weak-convergence experiment of the
averages toward the product of measures (`convergence_experiment`), and
finite-resolution compressions with their numerical ranks
(`truncation_rank`).
"""

from __future__ import annotations

import math
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .exact import ExactScalar
from .plane import TWO_PI, ArcSet, CirclePoint, MobiusIsometry, PlaneModel
from .space import GeometryError, chopped_cocycle
from .tree import CylinderSet, FreeGroupModel, cylinder_measure_letters
from .words import (
    BoundaryWord,
    ReducedWord,
    alphabet,
    canonical_extension,
    common_prefix_len,
    iter_reduced_words,
    reduce_concat,
    sphere_size,
)

__all__ = [
    "ArcStepFunction",
    "CompressedOperator",
    "ConvergenceRow",
    "GroupAlgebraVector",
    "LambdaWindowReport",
    "PlaneRhoImage",
    "SimpleFunction",
    "apply_rho",
    "build_Tt",
    "compress_rho",
    "convergence_experiment",
    "inner",
    "lambda_eval",
    "lambda_l1",
    "lambda_l1_mc",
    "lambda_l1_window",
    "matrix_coefficient",
    "sup_norm_Tt1",
    "tail_bound_check",
    "tail_bound_constant",
    "truncation_rank",
    "truncation_rank_series",
    "tt1_boundary_value",
    "tt_pairing",
    "unitarity_defect",
]

# Dense simple functions refuse to refine past this cylinder depth; the
# action on a function of depth d needs depth d + |gamma|, and exceeding
# the budget is an explicit error, never a silent truncation.
DEFAULT_RESOLUTION_BUDGET = 12
# Compressed operators live on the full depth-n cylinder basis.
DENSE_DIMENSION_BUDGET = 500
# Convergence experiments stream over one word sphere; lengths above this
# take hours in exact arithmetic, so they are refused with the maximal
# feasible parameter reported.
STREAM_LENGTH_BUDGET = 13
# Certified window for the weight L1 norm against n * e^{-eta*n/2}
# (re-derived exactly by lambda_l1_window and the tests).
LAMBDA_WINDOW_LO = Fraction(45, 100)
LAMBDA_WINDOW_HI = Fraction(16, 10)
# Lower bound for the comparison constant used in the tail bound.
TAIL_CONSTANT_FLOOR = Fraction(45, 100)

_PAIRING_CELL_BUDGET = 2_000_000


# ---------------------------------------------------------------------------
# model / argument coercion helpers
# ---------------------------------------------------------------------------

def _is_tree(model) -> bool:
    return isinstance(model, FreeGroupModel)


def _require_tree(model, what: str) -> None:
    if not _is_tree(model):
        raise GeometryError(f"{what} needs the tree model")


def _require_plane(model, what: str) -> None:
    if not isinstance(model, PlaneModel):
        raise GeometryError(f"{what} needs the disk model")


def _tree_word(model, gamma) -> ReducedWord:
    if isinstance(gamma, ReducedWord):
        return gamma
    if isinstance(gamma, str):
        return model.word(gamma)
    return ReducedWord(tuple(gamma))


def _plane_element(model, gamma) -> MobiusIsometry:
    if isinstance(gamma, MobiusIsometry):
        return gamma
    if isinstance(gamma, str):
        return model.element_from_word(gamma)
    raise GeometryError(f"not a disk isometry: {gamma!r}")


_L1_CACHE: dict[tuple[int, int], ExactScalar] = {}


def _l1_cached(model: FreeGroupModel, n: int) -> ExactScalar:
    """Exact weight L1 norm for length n, computed once per (valence, n)."""
    key = (model.m, n)
    got = _L1_CACHE.get(key)
    if got is None:
        letters = canonical_extension((), model.rank).letters_to(n)
        got = _L1_CACHE[key] = model.weight_l1(letters)
    return got


def _merge_prefixes(a: tuple[int, ...], b: tuple[int, ...]):
    """The deeper prefix when one cylinder contains the other, else None."""
    if len(a) <= len(b):
        return b if b[: len(a)] == a else None
    return a if a[: len(b)] == b else None


# ---------------------------------------------------------------------------
# exact simple functions on the tree boundary
# ---------------------------------------------------------------------------

_CELLS_CACHE: dict[tuple[int, int], tuple[tuple[int, ...], ...]] = {}
_INDEX_CACHE: dict[tuple[int, int], dict[tuple[int, ...], int]] = {}


def _cells(rank: int, depth: int) -> tuple[tuple[int, ...], ...]:
    key = (rank, depth)
    got = _CELLS_CACHE.get(key)
    if got is None:
        got = _CELLS_CACHE[key] = tuple(iter_reduced_words(rank, depth))
    return got


def _cell_index(rank: int, depth: int) -> dict[tuple[int, ...], int]:
    key = (rank, depth)
    got = _INDEX_CACHE.get(key)
    if got is None:
        got = _INDEX_CACHE[key] = {w: i for i, w in enumerate(_cells(rank, depth))}
    return got


class SimpleFunction:
    """Exact cylinder-simple function on the tree boundary.

    Stored fully refined at its depth: one ExactScalar per length-`depth`
    reduced word, in canonical enumeration order.  All arithmetic and all
    pairings stay exact.
    """

    __slots__ = ("rank", "depth", "values")

    def __init__(self, rank: int, depth: int, values):
        values = tuple(values)
        if len(values) != sphere_size(rank, depth):
            raise ValueError(
                f"depth-{depth} simple function needs {sphere_size(rank, depth)} "
                f"values, got {len(values)}")
        object.__setattr__(self, "rank", rank)
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "values", values)

    def __setattr__(self, *_):
        raise AttributeError("SimpleFunction is immutable")

    # -- constructors -------------------------------------------------------

    @classmethod
    def constant(cls, model: FreeGroupModel, value) -> "SimpleFunction":
        return cls(model.rank, 0, (model.scalar(value) if not isinstance(value, ExactScalar) else value,))

    @classmethod
    def indicator(cls, model: FreeGroupModel, U: CylinderSet) -> "SimpleFunction":
        if U.rank != model.rank:
            raise GeometryError("indicator set has the wrong rank")
        depth = U.max_depth()
        one, zero = model.scalar(1), model.scalar(0)
        values = tuple(one if U.contains_letters(w) else zero
                       for w in _cells(model.rank, depth))
        return cls(model.rank, depth, values)

    # -- structure ----------------------------------------------------------

    def cells(self):
        """Iterate (prefix letters, value) over the depth-`depth` cylinders."""
        return zip(_cells(self.rank, self.depth), self.values)

    def refine(self, depth: int) -> "SimpleFunction":
        if depth == self.depth:
            return self
        if depth < self.depth:
            raise ValueError("refinement only goes deeper")
        idx = _cell_index(self.rank, self.depth)
        d = self.depth
        values = tuple(self.values[idx[w[:d]]] for w in _cells(self.rank, depth))
        return SimpleFunction(self.rank, depth, values)

    def value_on_prefix(self, letters: tuple[int, ...]) -> ExactScalar:
        """The value on the cylinder C(letters); needs len(letters) >= depth."""
        if len(letters) < self.depth:
            raise GeometryError(
                f"prefix of length {len(letters)} does not resolve a depth-"
                f"{self.depth} simple function")
        return self.values[_cell_index(self.rank, self.depth)[letters[: self.depth]]]

    def eval(self, b: BoundaryWord) -> ExactScalar:
        return self.value_on_prefix(b.letters_to(self.depth))

    # -- algebra --------------------------------------------------------------

    def _zipped(self, other: "SimpleFunction"):
        if self.rank != other.rank:
            raise GeometryError("simple functions live on different trees")
        d = max(self.depth, other.depth)
        return self.refine(d), other.refine(d)

    def __add__(self, other):
        if not isinstance(other, SimpleFunction):
            return NotImplemented
        a, b = self._zipped(other)
        return SimpleFunction(a.rank, a.depth,
                              tuple(x + y for x, y in zip(a.values, b.values)))

    def __sub__(self, other):
        if not isinstance(other, SimpleFunction):
            return NotImplemented
        a, b = self._zipped(other)
        return SimpleFunction(a.rank, a.depth,
                              tuple(x - y for x, y in zip(a.values, b.values)))

    def __neg__(self):
        return SimpleFunction(self.rank, self.depth, tuple(-x for x in self.values))

    def __mul__(self, scalar):
        if isinstance(scalar, SimpleFunction):
            a, b = self._zipped(scalar)
            return SimpleFunction(a.rank, a.depth,
                                  tuple(x * y for x, y in zip(a.values, b.values)))
        return SimpleFunction(self.rank, self.depth,
                              tuple(x * scalar for x in self.values))

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, SimpleFunction):
            return NotImplemented
        if self.rank != other.rank:
            return False
        a, b = self._zipped(other)
        return a.values == b.values

    def __hash__(self):
        return hash((self.rank, self.depth, self.values))

    def __repr__(self):
        return f"SimpleFunction(rank={self.rank}, depth={self.depth})"

    # -- integration ---------------------------------------------------------

    def _cell_measure(self) -> Fraction:
        if self.depth == 0:
            return Fraction(1)
        k2 = 2 * self.rank
        return Fraction(1, k2 * (k2 - 1) ** (self.depth - 1))

    def integral(self) -> ExactScalar:
        acc = self.values[0] * self._cell_measure()
        for v in self.values[1:]:
            acc = acc + v * self._cell_measure()
        return acc

    def inner(self, other: "SimpleFunction") -> ExactScalar:
        """Exact boundary-measure pairing <u, v> = integral of u * v."""
        a, b = self._zipped(other)
        nu = a._cell_measure()
        acc = ExactScalar(0, 0, 2 * self.rank - 1)
        for x, y in zip(a.values, b.values):
            acc = acc + x * y
        return acc * nu

    def norm_sq(self) -> ExactScalar:
        return self.inner(self)

    @property
    def is_nonnegative(self) -> bool:
        zero = ExactScalar(0, 0, 2 * self.rank - 1)
        return all(not (v < zero) for v in self.values)


# ---------------------------------------------------------------------------
# float step functions on the circle boundary
# ---------------------------------------------------------------------------

class ArcStepFunction:
    """Step function on the circle: constant float values on half-open arcs.

    `breakpoints` is a sorted array of angles in [0, 2*pi); `values[i]`
    holds on [breakpoints[i], breakpoints[i+1]) with the last piece
    wrapping around to breakpoints[0].
    """

    __slots__ = ("breakpoints", "values")

    def __init__(self, breakpoints, values):
        bp = np.asarray(breakpoints, dtype=float)
        vals = np.asarray(values, dtype=float)
        if bp.ndim != 1 or bp.shape != vals.shape or bp.size == 0:
            raise ValueError("breakpoints and values must be matching 1-d arrays")
        if np.any(np.diff(bp) <= 0) or bp[0] < 0 or bp[-1] >= TWO_PI:
            raise ValueError("breakpoints must be strictly sorted within [0, 2*pi)")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    def __setattr__(self, *_):
        raise AttributeError("ArcStepFunction is immutable")

    @classmethod
    def constant(cls, model: PlaneModel, value) -> "ArcStepFunction":
        return cls([0.0], [float(value)])

    @classmethod
    def indicator(cls, model: PlaneModel, U: ArcSet) -> "ArcStepFunction":
        if U.is_empty:
            return cls([0.0], [0.0])
        pts = sorted({p % TWO_PI for lohi in U.arcs for p in lohi})
        bp = np.array(pts, dtype=float)
        mids = _piece_midpoints(bp)
        return cls(bp, U.contains_angles(mids).astype(float))

    # -- evaluation ----------------------------------------------------------

    def eval_angles(self, thetas: np.ndarray) -> np.ndarray:
        t = np.asarray(thetas, dtype=float) % TWO_PI
        idx = np.searchsorted(self.breakpoints, t, side="right") - 1
        return self.values[idx]

    # -- piecewise structure ---------------------------------------------------

    def _merged_grid(self, other: "ArcStepFunction") -> np.ndarray:
        return np.unique(np.concatenate([self.breakpoints, other.breakpoints]))

    def pieces(self):
        """Iterate (lo, hi, value) with hi possibly past 2*pi on the wrap piece."""
        bp = self.breakpoints
        for i in range(len(bp) - 1):
            yield float(bp[i]), float(bp[i + 1]), float(self.values[i])
        yield float(bp[-1]), float(bp[0]) + TWO_PI, float(self.values[-1])

    def merged_pieces(self, other: "ArcStepFunction"):
        """Iterate (lo, hi, self value, other value) on the common refinement."""
        grid = self._merged_grid(other)
        mids = _piece_midpoints(grid)
        va = self.eval_angles(mids)
        vb = other.eval_angles(mids)
        hi = np.append(grid[1:], grid[0] + TWO_PI)
        for i in range(len(grid)):
            if hi[i] - grid[i] > 1e-15:
                yield float(grid[i]), float(hi[i]), float(va[i]), float(vb[i])

    # -- algebra ---------------------------------------------------------------

    def _pointwise(self, other, op):
        grid = self._merged_grid(other)
        mids = _piece_midpoints(grid)
        return ArcStepFunction(grid, op(self.eval_angles(mids), other.eval_angles(mids)))

    def __add__(self, other):
        if not isinstance(other, ArcStepFunction):
            return NotImplemented
        return self._pointwise(other, np.add)

    def __sub__(self, other):
        if not isinstance(other, ArcStepFunction):
            return NotImplemented
        return self._pointwise(other, np.subtract)

    def __mul__(self, scalar):
        if isinstance(scalar, ArcStepFunction):
            return self._pointwise(scalar, np.multiply)
        return ArcStepFunction(self.breakpoints, self.values * float(scalar))

    __rmul__ = __mul__

    def integral(self) -> float:
        acc = 0.0
        for lo, hi, v in self.pieces():
            acc += (hi - lo) * v
        return acc / TWO_PI

    def inner(self, other: "ArcStepFunction") -> float:
        acc = 0.0
        for lo, hi, va, vb in self.merged_pieces(other):
            acc += (hi - lo) * va * vb
        return acc / TWO_PI

    def norm_sq(self) -> float:
        return self.inner(self)

    def transport(self, model: PlaneModel, g: MobiusIsometry) -> "ArcStepFunction":
        """The composition with g^-1 (piece [x, y) moves to [g x, g y)).

        Moebius maps preserve circular order, so the mapped breakpoints are
        a circular rotation of the original order: sorting them and
        permuting the values identically is exact.
        """
        z = np.exp(1j * self.breakpoints)
        w = (g.alpha * z + g.beta) / (np.conj(g.beta) * z + np.conj(g.alpha))
        mapped = np.angle(w) % TWO_PI
        perm = np.argsort(mapped, kind="stable")
        return ArcStepFunction(mapped[perm], self.values[perm])

    def __repr__(self):
        return f"ArcStepFunction(pieces={len(self.values)})"


def _piece_midpoints(grid: np.ndarray) -> np.ndarray:
    hi = np.append(grid[1:], grid[0] + TWO_PI)
    return ((grid + hi) / 2.0) % TWO_PI


class PlaneRhoImage:
    """The image of an ArcStepFunction under the weighted action.

    A Moebius map does not carry step functions to step functions (the
    visual weight varies along each arc), so the image is kept in factored
    form: weight(gamma, .) times the transported step function.  Pairings
    against step functions and same-element images reduce to exact arc
    integrals; see `inner`.
    """

    __slots__ = ("model", "gamma", "base", "transported")

    def __init__(self, model: PlaneModel, gamma: MobiusIsometry, base: ArcStepFunction):
        object.__setattr__(self, "model", model)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "transported", base.transport(model, gamma))

    def __setattr__(self, *_):
        raise AttributeError("PlaneRhoImage is immutable")

    def at_angles(self, thetas: np.ndarray) -> np.ndarray:
        thetas = np.asarray(thetas, dtype=float)
        g = self.gamma
        q = g.orbit_point()
        weights = self.model.visual_weight_at_angles(q, thetas)
        z = np.exp(1j * thetas)
        ginv = g.inverse()
        w = (ginv.alpha * z + ginv.beta) / (np.conj(ginv.beta) * z + np.conj(ginv.alpha))
        return weights * self.base.eval_angles(np.angle(w) % TWO_PI)

    def __repr__(self):
        return f"PlaneRhoImage(pieces={len(self.base.values)})"


def _pair_image_step(model: PlaneModel, img: PlaneRhoImage,
                     h: ArcStepFunction) -> float:
    """<rho(g) base, h>: exact arc integrals of the weight on the refinement."""
    q = img.gamma.orbit_point()
    acc = 0.0
    for lo, hi, va, vb in img.transported.merged_pieces(h):
        if va == 0.0 or vb == 0.0:
            continue
        acc += va * vb * model.weight_integral(q, ArcSet([(lo, hi)]))
    return acc


def _pair_image_image(model: PlaneModel, u: PlaneRhoImage, v: PlaneRhoImage) -> float:
    """<rho(g) a, rho(g) b> via measure transport: the squared weight is the
    density of the pushed-forward measure, so each refinement piece
    contributes value-product times the measure of its preimage arc."""
    if abs(u.gamma.alpha - v.gamma.alpha) > 1e-12 or abs(u.gamma.beta - v.gamma.beta) > 1e-12:
        raise GeometryError("images under different elements pair only numerically")
    ginv = u.gamma.inverse()
    acc = 0.0
    for lo, hi, va, vb in u.transported.merged_pieces(v.transported):
        if va == 0.0 or vb == 0.0:
            continue
        acc += va * vb * model.translate_boundary(ginv, ArcSet([(lo, hi)])).measure()
    return acc


# ---------------------------------------------------------------------------
# the weight and its L1 theory
# ---------------------------------------------------------------------------

def lambda_eval(model, q, b, *, chopped: bool = False):
    """The visual weight of the moved basepoint at a boundary direction.

    Exact on the tree (ExactScalar), float on the disk.  With
    ``chopped=True`` the horofunction in the exponent is replaced by its
    chopped version (product capped at the distance to q), which agrees
    exactly on the tree and within e^{+-delta*eta} on the disk.

    The boundary point must be resolvable at depth |q| on the tree;
    shallower truncated words raise InsufficientDepthError.
    """
    if _is_tree(model):
        q = _tree_word(model, q)
        if not chopped:
            return model.visual_weight(q.letters, b)
        cc = chopped_cocycle(model, q, b)
        units = Fraction(cc) / model.edge_length
        if units.denominator != 1:
            raise GeometryError("chopped cocycle is not an integer number of edges")
        return model.half_power(-int(units))
    _require_plane(model, "lambda_eval")
    if not chopped:
        return model.visual_weight(q, b)
    cc = chopped_cocycle(model, q, b)
    return math.exp(-0.5 * model.critical_exponent * cc)


def lambda_l1(model, q):
    """L1 norm of the visual weight: exact on the tree, closed form on the disk."""
    if _is_tree(model):
        return model.weight_l1(_tree_word(model, q).letters)
    _require_plane(model, "lambda_l1")
    return model.weight_l1(q)


def lambda_l1_mc(model, q, n_samples: int = 20000, seed: int = 0):
    """Monte Carlo estimate (mean, standard error) of the weight L1 norm.

    Disk only; the tree norm is exact and needs no sampled route.  The
    uniform-angle integrand is peaked near the direction of q, so for
    points far from the basepoint the estimator is heavy-tailed and the
    reported standard error is optimistic; keep d(p, q) moderate.
    """
    _require_plane(model, "lambda_l1_mc")
    return model.mc_boundary_integral(
        lambda thetas: model.visual_weight_at_angles(q, thetas), n_samples, seed)


@dataclass(frozen=True)
class LambdaWindowReport:
    """Exact ratios of the weight L1 norm against n * e^{-eta*n/2}."""
    n_max: int
    ratios: tuple
    lo: Fraction
    hi: Fraction
    min_ratio: ExactScalar
    max_ratio: ExactScalar
    within: bool


def lambda_l1_window(model, n_max: int = 20) -> LambdaWindowReport:
    """Certify the L1-norm comparison window over word lengths 1..n_max.

    The comparison function is n * e^{-eta*t/2} at t = n edge lengths,
    i.e. n * m^{-n/2}; the exact ratio is computed per length and checked
    against the certified window [0.45, 1.6].
    """
    _require_tree(model, "lambda_l1_window")
    if n_max < 1:
        raise GeometryError("the window needs at least length 1")
    ratios = []
    for n in range(1, n_max + 1):
        l1 = _l1_cached(model, n)
        ratios.append(l1 * model.half_power(n) * Fraction(1, n))
    lo, hi = LAMBDA_WINDOW_LO, LAMBDA_WINDOW_HI
    return LambdaWindowReport(
        n_max=n_max,
        ratios=tuple(ratios),
        lo=lo,
        hi=hi,
        min_ratio=min(ratios),
        max_ratio=max(ratios),
        within=all(lo <= r <= hi for r in ratios),
    )


# ---------------------------------------------------------------------------
# the action
# ---------------------------------------------------------------------------

def apply_rho(model, gamma, v, *, budget: int = DEFAULT_RESOLUTION_BUDGET):
    """Apply the weighted action of `gamma` to a boundary function.

    Tree: the result is again cylinder-simple, at depth |gamma| + depth(v);
    exceeding the resolution budget raises instead of truncating.  Disk:
    the image is returned in factored form (`PlaneRhoImage`), since the
    weight varies along arcs.
    """
    if _is_tree(model):
        if not isinstance(v, SimpleFunction):
            raise GeometryError("apply_rho on the tree takes a SimpleFunction")
        g = _tree_word(model, gamma)
        n = len(g.letters)
        out_depth = n + v.depth
        if out_depth > budget:
            raise GeometryError(
                f"resolution budget exceeded: the image needs cylinder depth "
                f"{out_depth} > budget {budget}; pass a larger budget to proceed")
        if n == 0:
            return v
        ginv = tuple(-l for l in reversed(g.letters))
        gl = g.letters
        idx = _cell_index(model.rank, v.depth)
        vd = v.depth
        vv = v.values
        weights = [model.half_power(2 * j - n) for j in range(n + 1)]
        values = []
        for w in _cells(model.rank, out_depth):
            j = common_prefix_len(w, gl)
            src = reduce_concat(ginv, w)[:vd]
            values.append(weights[j] * vv[idx[src]])
        return SimpleFunction(model.rank, out_depth, tuple(values))
    _require_plane(model, "apply_rho")
    if not isinstance(v, ArcStepFunction):
        raise GeometryError("apply_rho on the disk takes an ArcStepFunction")
    return PlaneRhoImage(model, _plane_element(model, gamma), v)


def inner(model, u, v):
    """Boundary-measure pairing, dispatching on the function types."""
    if _is_tree(model):
        if isinstance(u, SimpleFunction) and isinstance(v, SimpleFunction):
            return u.inner(v)
        raise GeometryError("tree pairing takes two SimpleFunctions")
    _require_plane(model, "inner")
    if isinstance(u, ArcStepFunction) and isinstance(v, ArcStepFunction):
        return u.inner(v)
    if isinstance(u, PlaneRhoImage) and isinstance(v, ArcStepFunction):
        return _pair_image_step(model, u, v)
    if isinstance(u, ArcStepFunction) and isinstance(v, PlaneRhoImage):
        return _pair_image_step(model, v, u)
    if isinstance(u, PlaneRhoImage) and isinstance(v, PlaneRhoImage):
        return _pair_image_image(model, u, v)
    raise GeometryError("unsupported pairing")


def unitarity_defect(model, gamma, u, v):
    """|<rho(g)u, rho(g)v> - <u, v>|: exactly zero on the tree, and zero up
    to arc-endpoint rounding on the disk (computed by measure transport,
    not by sampling)."""
    if _is_tree(model):
        a = apply_rho(model, gamma, u)
        b = apply_rho(model, gamma, v)
        diff = a.inner(b) - u.inner(v)
        return diff if not diff < ExactScalar(0, 0, model.m) else -diff
    _require_plane(model, "unitarity_defect")
    g = _plane_element(model, gamma)
    moved = _pair_image_image(model, PlaneRhoImage(model, g, u),
                              PlaneRhoImage(model, g, v))
    return abs(moved - u.inner(v))


def matrix_coefficient(model, gamma, g=None, h=None):
    """<rho(gamma) g, h> with g, h defaulting to the constant function 1.

    Tree: streams over the refinement cells of g, the translated cylinder
    pieces, and the cells of h, accumulating exact weight integrals; the
    constant-constant case reduces to the match-class stream for the
    weight L1 norm (memoized per word length).  Disk: exact incomplete
    elliptic integrals over the common arc refinement.
    """
    if _is_tree(model):
        gam = _tree_word(model, gamma)
        if g is None and h is None:
            return _l1_cached(model, len(gam.letters))
        g_fn = g if g is not None else SimpleFunction.constant(model, 1)
        h_fn = h if h is not None else SimpleFunction.constant(model, 1)
        if len(g_fn.values) * len(h_fn.values) > _PAIRING_CELL_BUDGET:
            raise GeometryError(
                "pairing budget exceeded: refine the functions less deeply")
        acc = model.scalar(0)
        zero = model.scalar(0)
        for cw, cv in g_fn.cells():
            if cv == zero:
                continue
            for piece in model.translate_cylinder_pieces(gam.letters, cw):
                for hw, hv in h_fn.cells():
                    if hv == zero:
                        continue
                    merged = _merge_prefixes(piece, hw)
                    if merged is None:
                        continue
                    acc = acc + cv * hv * model.weight_integral(gam.letters, merged)
        return acc
    _require_plane(model, "matrix_coefficient")
    elem = _plane_element(model, gamma)
    if g is None and h is None:
        return model.weight_l1(elem.orbit_point())
    g_fn = g if g is not None else ArcStepFunction.constant(model, 1.0)
    h_fn = h if h is not None else ArcStepFunction.constant(model, 1.0)
    return _pair_image_step(model, PlaneRhoImage(model, elem, g_fn), h_fn)


# ---------------------------------------------------------------------------
# sphere averages
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GroupAlgebraVector:
    """A finitely supported vector on the group: sphere-average coefficients.

    `support` holds ReducedWords (tree) or orbit-cache indices (disk);
    `coefficients` are ExactScalars on the tree and floats on the disk.
    """
    t: object
    kind: str
    support: tuple
    coefficients: tuple

    def __len__(self):
        return len(self.support)

    @property
    def is_nonnegative(self) -> bool:
        if self.kind == "tree":
            zero = self.coefficients[0] * 0 if self.coefficients else 0
            return all(not (c < zero) for c in self.coefficients)
        return all(c >= 0.0 for c in self.coefficients)


def build_Tt(model, f, t) -> GroupAlgebraVector:
    """The normalized sphere average paired with a boundary profile f.

    The support is the sphere S_t (word length, resp. orbit displacement,
    within the quotient radius of t); the coefficient of gamma is
    f(direction of gamma) / (|S_t| * <rho(gamma) 1, 1>).  Needs t above
    the quotient radius so the sphere is nonempty.
    """
    if _is_tree(model):
        if f is None:
            f = SimpleFunction.constant(model, 1)
        if not isinstance(f, SimpleFunction):
            raise GeometryError("build_Tt on the tree takes a SimpleFunction profile")
        words = model.enumerate_annulus(t)
        n = len(words[0].letters)
        size = len(words)
        inv = model.scalar(Fraction(1, size)) / _l1_cached(model, n)
        coeffs = tuple(f.value_on_prefix(canonical_extension(w.letters, model.rank)
                                         .letters_to(max(f.depth, n)))
                       * inv for w in words)
        return GroupAlgebraVector(Fraction(t), "tree", tuple(words), coeffs)
    _require_plane(model, "build_Tt")
    if f is None:
        f = ArcStepFunction.constant(model, 1.0)
    if not isinstance(f, ArcStepFunction):
        raise GeometryError("build_Tt on the disk takes an ArcStepFunction profile")
    idx = model.enumerate_annulus_numeric(t)
    if len(idx) == 0:
        raise GeometryError(f"the sphere at t={t} is empty")
    cache = model.orbit()
    pts = cache.betas[idx] / np.conj(cache.alphas[idx])
    l1s = model.weight_l1_many(pts)
    fvals = f.eval_angles(cache.angles[idx])
    coeffs = fvals / (len(idx) * l1s)
    return GroupAlgebraVector(float(t), "plane", tuple(int(i) for i in idx),
                              tuple(float(c) for c in coeffs))


def tt_pairing(model, T: GroupAlgebraVector, g=None, h=None):
    """<(rho . T) g, h> = sum over the support of coeff * <rho(gamma) g, h>."""
    if T.kind == "tree":
        _require_tree(model, "tt_pairing")
        acc = model.scalar(0)
        zero = model.scalar(0)
        for w, c in zip(T.support, T.coefficients):
            if c == zero:
                continue
            acc = acc + c * matrix_coefficient(model, w, g, h)
        return acc
    _require_plane(model, "tt_pairing")
    cache = model.orbit()
    acc = 0.0
    for i, c in zip(T.support, T.coefficients):
        if c == 0.0:
            continue
        acc += c * matrix_coefficient(model, cache.element(i), g, h)
    return acc


def tt1_boundary_value(model, t, b=None) -> ExactScalar:
    """Exact boundary profile of the sphere average of 1 at direction b.

    Aggregates the sphere by prefix-match class against b: the class sizes
    depend only on the tree's regularity, so the profile is constant; the
    tests confirm this against per-word brute sums.
    """
    _require_tree(model, "tt1_boundary_value")
    n = model.annulus_length(t)
    if b is None:
        b = canonical_extension((), model.rank)
    counts = model.direction_match_counts(b, n)
    acc = model.scalar(0)
    for j, c in enumerate(counts):
        if c:
            acc = acc + model.half_power(2 * j - n) * c
    return acc * (model.scalar(Fraction(1, sphere_size(model.rank, n))) / _l1_cached(model, n))


def sup_norm_Tt1(model, t, *, samples: int = 2048) -> float:
    """Sup norm of the boundary profile of the sphere average of 1.

    Tree: exact match-class aggregation (the profile is constant 1).
    Disk: maximum over a deterministic angle grid -- a sampled lower bound
    on the true sup.  Needs t > quotient radius + 2*delta so every sphere
    element sees the whole boundary through its shadow.
    """
    if float(t) <= float(model.quotient_radius) + 2.0 * float(model.delta):
        raise GeometryError(
            f"sup norm needs t above quotient radius + 2*delta = "
            f"{float(model.quotient_radius) + 2.0 * float(model.delta):.3f}")
    if _is_tree(model):
        return float(tt1_boundary_value(model, t))
    _require_plane(model, "sup_norm_Tt1")
    idx = model.enumerate_annulus_numeric(t)
    if len(idx) == 0:
        raise GeometryError(f"the sphere at t={t} is empty")
    cache = model.orbit()
    pts = cache.betas[idx] / np.conj(cache.alphas[idx])
    l1s = model.weight_l1_many(pts)
    thetas = np.linspace(0.0, TWO_PI, samples, endpoint=False)
    z = np.exp(1j * thetas)
    acc = np.zeros(samples)
    for s in range(0, len(pts), 512):
        q = pts[s:s + 512, None]
        w = np.sqrt(1.0 - np.abs(q) ** 2) / np.abs(q - z[None, :])
        acc += (w / l1s[s:s + 512, None]).sum(axis=0)
    return float(acc.max() / len(pts))


# ---------------------------------------------------------------------------
# shadow tail bound
# ---------------------------------------------------------------------------

def tail_bound_constant(model, *, constant_floor: Fraction = TAIL_CONSTANT_FLOOR) -> float:
    """The constructive constant C0 = e^{delta*eta} * nu(B) * e^{delta} / C.

    nu(B) = 1 for the normalized boundary measures used here; C is the
    certified lower window constant of the L1-norm comparison."""
    eta = model.critical_exponent
    delta = float(model.delta)
    return math.exp(delta * eta) * 1.0 * math.exp(delta) / float(constant_floor)


def tail_bound_check(model, q, V, a):
    """Check the normalized weight tail over V against C0 * e^a / d(p, q).

    Precondition: the direction of q stays outside the visual
    a-thickening of V (so V sits in the weight's tail).  Returns
    (lhs, rhs); the left side is exact on the tree.  A violated bound
    raises with the witness values.
    """
    a = Fraction(a) if _is_tree(model) else float(a)
    if a <= 0:
        raise GeometryError("thickening scale must be positive")
    if _is_tree(model):
        qw = _tree_word(model, q)
        if not isinstance(V, CylinderSet):
            raise GeometryError("tree tail bound takes a CylinderSet")
        d = model.dist(model.basepoint, qw)
        if d == 0:
            raise GeometryError("q must differ from the basepoint")
        if not V.is_empty and model.thicken(V, a).contains(model.direction(qw)):
            raise GeometryError(
                "the direction of q meets the thickened target: the tail "
                "bound does not apply")
        num = model.scalar(0)
        for p in V.pieces:
            num = num + model.weight_integral(qw.letters, p)
        lhs = num / _l1_cached(model, len(qw.letters))
        lhs_f = float(lhs)
    else:
        _require_plane(model, "tail_bound_check")
        if not isinstance(V, ArcSet):
            raise GeometryError("disk tail bound takes an ArcSet")
        qpt = q if not isinstance(q, MobiusIsometry) else q.orbit_point()
        qpt = complex(qpt)
        d = model.dist(model.basepoint, qpt)
        if d == 0:
            raise GeometryError("q must differ from the basepoint")
        if not V.is_empty and model.thicken(V, a).contains(model.direction(qpt)):
            raise GeometryError(
                "the direction of q meets the thickened target: the tail "
                "bound does not apply")
        lhs = model.weight_integral(qpt, V) / model.weight_l1(qpt)
        lhs_f = lhs
    rhs = tail_bound_constant(model) * math.exp(float(a)) / float(d)
    if lhs_f > rhs + 1e-12:
        raise GeometryError(
            f"tail bound violated: lhs={lhs_f!r} > rhs={rhs!r} at d={float(d)!r}")
    return lhs, rhs


# ---------------------------------------------------------------------------
# convergence of the averages toward the product of measures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConvergenceRow:
    t: float
    s_t_size: int
    value: float
    target: float
    abs_error: float
    wall_ms: float
    value_exact: ExactScalar | None = None
    target_exact: Fraction | None = None


def _tree_stream_blocks(model, U: CylinderSet, n: int, threads: int):
    """Partition {gamma in S_n : direction(gamma) in U} into prefix blocks.

    Pieces deeper than n contribute at most one word each (the truncation,
    when its canonical extension stays inside the piece); those are
    returned separately.  For worker counts above one the shallow blocks
    are subdivided deterministically so the merge order is fixed.
    """
    blocks: list[tuple[int, ...]] = []
    singles: list[tuple[int, ...]] = []
    for p in U.pieces:
        if len(p) <= n:
            blocks.append(p)
        else:
            cand = p[:n]
            if canonical_extension(cand, model.rank).letters_to(len(p)) == p:
                singles.append(cand)
    want = max(1, 3 * threads)
    i = 0
    while len(blocks) < want:
        j = next((k for k in range(len(blocks)) if len(blocks[k]) < n), None)
        if j is None:
            break
        b = blocks.pop(j)
        last = b[-1] if b else None
        kids = [b + (l,) for l in alphabet(model.rank) if last is None or l != -last]
        blocks[j:j] = kids
        i += 1
        if i > 64:
            break
    return blocks, singles


def _pair_cylinder_indicators(model, g_letters, v_pieces, w_pieces):
    """Exact <rho(g) chi_V, chi_W>, or None when the supports do not meet."""
    acc = None
    for vp in v_pieces:
        for piece in model.translate_cylinder_pieces(g_letters, vp):
            for wp in w_pieces:
                merged = _merge_prefixes(piece, wp)
                if merged is None:
                    continue
                term = model.weight_integral(g_letters, merged)
                acc = term if acc is None else acc + term
    return acc


def _tree_convergence_value(model, U, V, W, n, threads):
    v_pieces, w_pieces = V.pieces, W.pieces
    blocks, singles = _tree_stream_blocks(model, U, n, threads)

    def run_block(prefix):
        local: dict[ExactScalar, int] = {}
        for letters in iter_reduced_words(model.rank, n, prefix):
            val = _pair_cylinder_indicators(model, letters, v_pieces, w_pieces)
            if val is not None:
                local[val] = local.get(val, 0) + 1
        return local

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_block, blocks))
    else:
        results = [run_block(b) for b in blocks]
    total: dict[ExactScalar, int] = {}
    for local in results:
        for k, c in local.items():
            total[k] = total.get(k, 0) + c
    for letters in singles:
        val = _pair_cylinder_indicators(model, letters, v_pieces, w_pieces)
        if val is not None:
            total[val] = total.get(val, 0) + 1
    acc = model.scalar(0)
    for k, c in total.items():
        acc = acc + k * c
    size = sphere_size(model.rank, n)
    return acc * (model.scalar(Fraction(1, size)) / _l1_cached(model, n)), size


def _plane_convergence_value(model, U, V, W, t, threads):
    idx = model.enumerate_annulus_numeric(t)
    if len(idx) == 0:
        raise GeometryError(f"the sphere at t={t} is empty")
    cache = model.orbit()
    mask = U.contains_angles(cache.angles[idx])
    kept = idx[mask]
    pts = cache.betas[kept] / np.conj(cache.alphas[kept])
    l1s = model.weight_l1_many(pts)
    v_step = ArcStepFunction.indicator(model, V)
    w_step = ArcStepFunction.indicator(model, W)

    def run_chunk(bounds):
        lo, hi = bounds
        acc = 0.0
        for j in range(lo, hi):
            elem = cache.element(int(kept[j]))
            acc += _pair_image_step(model, PlaneRhoImage(model, elem, v_step),
                                    w_step) / l1s[j]
        return acc

    chunks = [(s, min(s + 2048, len(kept))) for s in range(0, len(kept), 2048)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run_chunk, chunks))
    else:
        parts = [run_chunk(c) for c in chunks]
    acc = 0.0
    for p in parts:
        acc += p
    return acc / len(idx), len(idx)


def convergence_experiment(model, U, V, W, t_list, *, threads: int = 1,
                           length_budget: int = STREAM_LENGTH_BUDGET):
    """Pair the U-profiled sphere average against indicator functions.

    Per t the value is <(rho . T_t^{chi_U}) chi_V, chi_W>; the target is
    nu(U intersect W) * nu(V).  Exact on the tree (streamed per sphere in
    value classes, never materialized); float on the disk.  The rows carry
    (t, sphere size, value, target, absolute error, wall milliseconds).
    """
    t_list = list(t_list)
    if not t_list:
        raise GeometryError("the experiment needs at least one t")
    if any(float(b) <= float(a) for a, b in zip(t_list, t_list[1:])):
        raise GeometryError("t values must be strictly increasing")
    rows: list[ConvergenceRow] = []
    if _is_tree(model):
        target = (U.intersect(W).measure() * V.measure()).as_fraction()
        for t in t_list:
            n = model.annulus_length(t)
            if n > length_budget:
                sup = (length_budget + Fraction(1, 2)) * model.edge_length
                raise GeometryError(
                    f"streaming budget exceeded at t={t} (sphere of length {n}); "
                    f"feasible t must stay below {sup}")
            start = time.perf_counter()
            value, size = _tree_convergence_value(model, U, V, W, n, threads)
            wall = (time.perf_counter() - start) * 1000.0
            err = value - target
            rows.append(ConvergenceRow(
                t=float(t), s_t_size=size, value=float(value),
                target=float(target), abs_error=abs(float(err)),
                wall_ms=wall, value_exact=value, target_exact=target))
        return rows
    _require_plane(model, "convergence_experiment")
    target = U.intersect(W).measure() * V.measure()
    for t in t_list:
        start = time.perf_counter()
        value, size = _plane_convergence_value(model, U, V, W, float(t), threads)
        wall = (time.perf_counter() - start) * 1000.0
        rows.append(ConvergenceRow(
            t=float(t), s_t_size=size, value=value, target=target,
            abs_error=abs(value - target), wall_ms=wall))
    return rows


# ---------------------------------------------------------------------------
# finite-resolution compressions and ranks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CompressedOperator:
    """The action compressed to the depth-n cylinder basis.

    Entries are exact and expressed in the orthonormalized basis
    chi_c / sqrt(nu(c)); row index is the target cell, column the source.
    """
    depth: int
    cells: tuple
    entries: tuple

    def to_array(self) -> np.ndarray:
        return np.array([[float(e) for e in row] for row in self.entries])


def compress_rho(model, gamma, depth: int) -> CompressedOperator:
    """Compress the action of gamma to the depth-n cylinder basis, exactly."""
    _require_tree(model, "compress_rho")
    dim = sphere_size(model.rank, depth)
    if dim > DENSE_DIMENSION_BUDGET:
        raise GeometryError(
            f"cylinder basis dimension {dim} exceeds the dense budget "
            f"{DENSE_DIMENSION_BUDGET}")
    gam = _tree_word(model, gamma)
    cells = _cells(model.rank, depth)
    index = _cell_index(model.rank, depth)
    zero = model.scalar(0)
    entries = [[zero for _ in range(dim)] for _ in range(dim)]
    for ci, c in enumerate(cells):
        for piece in model.translate_cylinder_pieces(gam.letters, c):
            if len(piece) >= depth:
                ri = index[piece[:depth]]
                entries[ri][ci] = entries[ri][ci] + model.weight_integral(
                    gam.letters, piece)
            else:
                for target in iter_reduced_words(model.rank, depth, piece):
                    ri = index[target]
                    entries[ri][ci] = entries[ri][ci] + model.weight_integral(
                        gam.letters, target)
    if depth == 0:
        nu = Fraction(1)
    else:
        k2 = 2 * model.rank
        nu = Fraction(1, k2 * model.m ** (depth - 1))
    inv_nu = Fraction(1, 1) / nu
    entries = tuple(tuple(e * inv_nu for e in row) for row in entries)
    return CompressedOperator(depth=depth, cells=cells, entries=entries)


def truncation_rank_series(model, n: int, max_length: int, *,
                           tol: float = 1e-9) -> list[int]:
    """Numerical rank of the compressed-action span, per word-length cutoff.

    Entry L is the rank of span{compressed rho(gamma) : |gamma| <= L} inside
    the dim^2-dimensional matrix space, via SVD with threshold tol * sigma_max.
    """
    _require_tree(model, "truncation_rank")
    if n < 0 or max_length < 0:
        raise GeometryError("depth and length cutoff must be nonnegative")
    dim = sphere_size(model.rank, n)
    if dim > DENSE_DIMENSION_BUDGET:
        raise GeometryError(
            f"cylinder basis dimension {dim} exceeds the dense budget "
            f"{DENSE_DIMENSION_BUDGET}")
    rows: list[np.ndarray] = []
    ranks: list[int] = []
    for length in range(max_length + 1):
        for letters in iter_reduced_words(model.rank, length):
            rows.append(compress_rho(model, ReducedWord(letters, _checked=True),
                                     n).to_array().ravel())
        stack = np.vstack(rows)
        sigma = np.linalg.svd(stack, compute_uv=False)
        ranks.append(int(np.sum(sigma > tol * sigma[0])))
    return ranks


def truncation_rank(model, n: int, max_length: int, *, tol: float = 1e-9) -> int:
    """Rank of the span of depth-n compressions over words up to max_length."""
    return truncation_rank_series(model, n, max_length, tol=tol)[-1]
