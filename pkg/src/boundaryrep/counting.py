"""Orbit statistics over spheres and balls.

Two-sided directional equidistribution (the fraction of a sphere whose
elements point backward into one boundary set and forward into another),
growth-exponent fits from ball counts, and the exponentially-normalized
annulus pair-count fit on the disk model.  Tree counts are exact integers
cross-checked against a transfer-matrix oracle; disk counts come from the
orbit cache.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .plane import PlaneModel
from .space import GeometryError
from .tree import CylinderSet, FreeGroupModel
from .words import alphabet, canonical_extension, iter_reduced_words, sphere_size

__all__ = [
    "EquidistributionRow",
    "equidistribution",
    "equidistribution_series",
    "growth_exponent",
    "margulis_fit",
    "transfer_pair_frequency",
]


@dataclass(frozen=True)
class EquidistributionRow:
    t: float
    s_t_size: int
    freq: float
    target: float
    abs_error: float
    freq_exact: Fraction | None = None
    target_exact: Fraction | None = None


def _is_tree(model) -> bool:
    return isinstance(model, FreeGroupModel)


def _suffix_matches(letters: tuple[int, ...], piece: tuple[int, ...]) -> bool:
    """Does the word's inverse start with `piece`?  (Inverse letters are the
    reversed negations, checked in place without building the inverse.)"""
    n = len(letters)
    if len(piece) > n:
        return False
    for i, l in enumerate(piece):
        if letters[n - 1 - i] != -l:
            return False
    return True


def _tree_pair_count(model: FreeGroupModel, U: CylinderSet, Uprime: CylinderSet,
                     n: int) -> int:
    """#{gamma in the length-n sphere : direction(gamma^-1) in U,
    direction(gamma) in U'} by direct enumeration."""
    deep = max(U.max_depth(), Uprime.max_depth()) > n
    u_pieces = U.pieces
    v_pieces = Uprime.pieces
    count = 0
    if not deep:
        # canonical pieces are disjoint and non-nested, so enumerating each
        # forward subtree separately visits every qualifying word once
        for v in v_pieces:
            for w in iter_reduced_words(model.rank, n, prefix=v):
                if any(_suffix_matches(w, p) for p in u_pieces):
                    count += 1
        return count
    for w in iter_reduced_words(model.rank, n):
        fwd = canonical_extension(w, model.rank)
        bwd = canonical_extension(tuple(-l for l in reversed(w)), model.rank)
        if Uprime.contains(fwd) and U.contains(bwd):
            count += 1
    return count


def equidistribution(model, U, Uprime, t):
    """Fraction of the sphere S_t pointing backward into U, forward into U'.

    Exact Fraction on the tree by direct enumeration (the transfer-matrix
    route is the independent oracle, `transfer_pair_frequency`); float on
    the disk from the orbit cache.  Needs t above the quotient radius.
    """
    if _is_tree(model):
        n = model.annulus_length(t)
        count = _tree_pair_count(model, U, Uprime, n)
        return Fraction(count, sphere_size(model.rank, n))
    if not isinstance(model, PlaneModel):
        raise GeometryError("equidistribution needs a boundary model")
    idx = model.enumerate_annulus_numeric(t)
    if len(idx) == 0:
        raise GeometryError(f"the sphere at t={t} is empty")
    cache = model.orbit()
    mask = U.contains_angles(cache.inv_angles[idx]) \
        & Uprime.contains_angles(cache.angles[idx])
    return float(np.count_nonzero(mask)) / len(idx)


def equidistribution_series(model, U, Uprime, t_list) -> list[EquidistributionRow]:
    """The equidistribution frequency per t, against the product of measures."""
    rows = []
    if _is_tree(model):
        target = (U.measure() * Uprime.measure()).as_fraction()
        for t in t_list:
            freq = equidistribution(model, U, Uprime, t)
            rows.append(EquidistributionRow(
                t=float(t), s_t_size=sphere_size(model.rank, model.annulus_length(t)),
                freq=float(freq), target=float(target),
                abs_error=abs(float(freq - target)),
                freq_exact=freq, target_exact=target))
        return rows
    target = U.measure() * Uprime.measure()
    for t in t_list:
        freq = equidistribution(model, U, Uprime, t)
        size = len(model.enumerate_annulus_numeric(t))
        rows.append(EquidistributionRow(
            t=float(t), s_t_size=size, freq=freq, target=target,
            abs_error=abs(freq - target)))
    return rows


# ---------------------------------------------------------------------------
# transfer-matrix oracle
# ---------------------------------------------------------------------------

def _prefix_suffix_count(model: FreeGroupModel, v: tuple[int, ...],
                         s: tuple[int, ...], n: int) -> int:
    """Reduced length-n words starting with v and ending with s, by letter
    adjacency: interior continuations are matrix-power path counts."""
    if len(v) > n or len(s) > n:
        return 0
    if not v and not s:
        return sphere_size(model.rank, n)
    if not v:
        return sum(_prefix_suffix_count(model, (a,), s, n)
                   for a in alphabet(model.rank))
    if not s:
        return sum(_prefix_suffix_count(model, v, (a,), n)
                   for a in alphabet(model.rank))
    overlap = len(v) + len(s) - n
    if overlap > 0:
        # the word is fully pinned; it exists iff the constraints agree
        word = list(v) + list(s[overlap:])
        for i in range(overlap):
            if v[len(v) - overlap + i] != s[i]:
                return 0
        return 1 if all(word[i] != -word[i + 1] for i in range(len(word) - 1)) else 0
    if overlap == 0:
        return 1 if v[-1] != -s[0] else 0
    # the letter path last(v) -> first(s) has n - |v| - |s| + 1 steps, i.e.
    # it is a prescribed-endpoint word count at length n - |v| - |s| + 2
    return model.transfer_matrix_count(v[-1], s[0], n - len(v) - len(s) + 2)


def transfer_pair_frequency(model, U: CylinderSet, Uprime: CylinderSet, t) -> Fraction:
    """Independent oracle for `equidistribution` on the tree.

    A word points backward into the piece C(u) exactly when it ends with
    the inverse of u, so each (U piece, U' piece) pair contributes a
    prefix/suffix path count through the letter-adjacency matrix; pieces
    are canonical (disjoint, non-nested), so the counts add exactly.
    """
    if not _is_tree(model):
        raise GeometryError("the transfer oracle needs the tree model")
    n = model.annulus_length(t)
    if max(U.max_depth(), Uprime.max_depth()) > n:
        raise GeometryError(
            "the transfer oracle needs pieces no deeper than the word length")
    count = 0
    for u in U.pieces:
        suffix = tuple(-l for l in reversed(u))
        for v in Uprime.pieces:
            count += _prefix_suffix_count(model, v, suffix, n)
    return Fraction(count, sphere_size(model.rank, n))


# ---------------------------------------------------------------------------
# growth and annulus-count fits
# ---------------------------------------------------------------------------

def growth_exponent(model, t_values):
    """Least-squares slope of log N(t) against t, with the max residual.

    N(t) counts orbit points within distance t (tree: ball vertex counts,
    exact; disk: orbit cache).  Needs at least three radii.
    """
    t_values = [float(t) for t in t_values]
    if len(t_values) < 3:
        raise GeometryError("the growth fit needs at least three radii")
    if _is_tree(model):
        counts = [model.ball_vertex_count(t) for t in t_values]
    else:
        if not isinstance(model, PlaneModel):
            raise GeometryError("growth_exponent needs a boundary model")
        counts = [model.orbit_count_within(t) for t in t_values]
    if any(c <= 0 for c in counts):
        raise GeometryError("growth fit radii must contain orbit points")
    ts = np.array(t_values)
    logs = np.log(np.array(counts, dtype=float))
    slope, intercept = np.polyfit(ts, logs, 1)
    residual = float(np.max(np.abs(logs - (slope * ts + intercept))))
    return float(slope), residual


def margulis_fit(model, U, Uprime, a, t_list):
    """Fit the constant in the exponential annulus pair-count asymptotic.

    Per t the statistic is e^{-eta t} * n(U, U', (t-a, t+a)) normalized by
    the product of boundary measures; the fitted constant is the mean over
    t_list and the residuals are the per-t deviations.  Disk model only
    (tree pair counts are already exact through the transfer oracle).
    """
    if not isinstance(model, PlaneModel):
        raise GeometryError("margulis_fit needs the disk model")
    a = float(a)
    if a <= 0:
        raise GeometryError("the annulus half-width must be positive")
    t_list = [float(t) for t in t_list]
    if not t_list:
        raise GeometryError("the fit needs at least one t")
    mu = U.measure() * Uprime.measure()
    if mu == 0.0:
        raise GeometryError("the fit needs sets of positive measure")
    cache = model.orbit()
    eta = model.critical_exponent
    values = []
    for t in t_list:
        idx = cache.annulus_indices(t, a)
        mask = U.contains_angles(cache.inv_angles[idx]) \
            & Uprime.contains_angles(cache.angles[idx])
        count = int(np.count_nonzero(mask))
        values.append(np.exp(-eta * t) * count / mu)
    c_hat = float(np.mean(values))
    residuals = [float(v - c_hat) for v in values]
    return c_hat, residuals
