"""Marked length spectrum and the metric-rescaling consistency check.

Translation lengths per conjugacy class (exact on the tree through cyclic
reduction, trace-based on the disk), displacement sequences d(g^m p, p) as
the independent oracle, and the rescaling report: multiplying the tree
edge length by c multiplies every translation length by c while leaving
every matrix coefficient bit-identical, since the exponent scales by 1/c.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .plane import MobiusIsometry, PlaneModel
from .space import GeometryError
from .tree import FreeGroupModel
from .words import ReducedWord, letters_str
from .reps import _plane_element, _tree_word, matrix_coefficient

__all__ = [
    "EllipticElementError",
    "MarkedLengthTable",
    "RescalingReport",
    "displacement_sequence",
    "marked_length_table",
    "rescaling_invariance_check",
    "translation_length",
]

# beyond this displacement the renormalized float pairs stop resolving
# successive powers, so the oracle sequence is truncated there
_DISPLACEMENT_CEILING = 30.0


class EllipticElementError(GeometryError):
    """A disk isometry with |trace| < 2 fixes an interior point and
    translates no geodesic."""


def _is_tree(model) -> bool:
    return isinstance(model, FreeGroupModel)


def translation_length(model, gamma):
    """Infimal displacement of the isometry: the length function of its
    conjugacy class.

    Tree: cyclically-reduced word length times the edge length, exact.
    Disk: 2*arccosh(|trace|/2) for hyperbolic elements; the identity gives
    0 and elliptic elements raise EllipticElementError.
    """
    if _is_tree(model):
        w = _tree_word(model, gamma)
        if w.is_identity:
            return Fraction(0)
        core, _ = w.cyclic_reduce()
        return Fraction(len(core.letters)) * model.edge_length
    elem = _plane_element(model, gamma)
    if elem.is_identity():
        return 0.0
    if abs(elem.trace) / 2.0 < 1.0 - 1e-9:
        raise EllipticElementError(
            f"elliptic, zero translation length (|trace| = {abs(elem.trace):.6f} < 2)")
    return elem.translation_length()


def displacement_sequence(model, gamma, m_max: int = 6):
    """d(g^m p, p) for m = 1..m_max: the oracle behind translation_length.

    The successive differences d(g^m p, p) - d(g^{m-1} p, p) converge to
    the translation length (geometrically fast), whereas d(g^m p, p)/m
    carries a persistent O(1/m) conjugation offset.  Tree values are exact
    Fractions.  On the disk the powers are accumulated as renormalized
    disk-model pairs to dodge the determinant drift of naive composition,
    and entries beyond displacement 30 are dropped: past that the unit-
    determinant normalization cancels away the float mantissa and the
    values it would report are unreliable.
    """
    if m_max < 1:
        raise GeometryError("the displacement sequence needs m_max >= 1")
    if _is_tree(model):
        w = _tree_word(model, gamma)
        out = []
        power = ReducedWord(())
        for _ in range(m_max):
            power = power * w
            out.append(Fraction(len(power.letters)) * model.edge_length)
        return out
    elem = _plane_element(model, gamma)
    a0, b0 = elem.alpha, elem.beta
    alpha, beta = complex(1.0), complex(0.0)
    out = []
    for _ in range(m_max):
        alpha, beta = alpha * a0 + beta * b0.conjugate(), alpha * b0 + beta * a0.conjugate()
        norm = math.sqrt(abs(alpha) ** 2 - abs(beta) ** 2)
        alpha /= norm
        beta /= norm
        d = math.acosh(max(1.0, abs(alpha) ** 2 + abs(beta) ** 2))
        if d > _DISPLACEMENT_CEILING:
            break
        out.append(d)
    return out


@dataclass(frozen=True)
class MarkedLengthTable:
    """Rows of (representative word, translation length).

    Elliptic disk elements are recorded with length 0.0 and listed in
    `elliptic_words` so the caller can tell them apart from the identity.
    """

    model_spec: str
    rows: tuple
    elliptic_words: tuple

    def __iter__(self):
        return iter(self.rows)

    def __len__(self):
        return len(self.rows)

    def lengths(self) -> dict:
        return dict(self.rows)


def _word_label(gamma) -> str:
    if isinstance(gamma, str):
        return gamma
    if isinstance(gamma, ReducedWord):
        return letters_str(gamma.letters)
    if isinstance(gamma, MobiusIsometry):
        return repr(gamma)
    return letters_str(tuple(gamma))


def marked_length_table(model, words) -> MarkedLengthTable:
    """Tabulate translation lengths for a list of representative words."""
    rows = []
    elliptic = []
    for gamma in words:
        label = _word_label(gamma)
        try:
            length = translation_length(model, gamma)
        except EllipticElementError:
            length = 0.0
            elliptic.append(label)
        rows.append((label, length))
    return MarkedLengthTable(model_spec=model.spec_string(), rows=tuple(rows),
                             elliptic_words=tuple(elliptic))


@dataclass(frozen=True)
class RescalingReport:
    """Outcome of the edge-rescaling consistency check.

    Scaling the tree metric by c scales every translation length by c
    (`lengths_proportional`, with the exact worst deviation) and leaves
    every matrix coefficient bit-identical (`coefficients_identical`),
    because the critical exponent scales by 1/c and the two changes cancel
    in the visual weights.
    """

    c: Fraction
    words: tuple
    lengths_proportional: bool
    max_length_mismatch: Fraction
    coefficients_identical: bool
    max_coefficient_mismatch: float
    coefficient_pairs_checked: int
    base_exponent: float
    scaled_exponent: float


def rescaling_invariance_check(model, c, words, function_pairs=None) -> RescalingReport:
    """Rescale the tree edge length by c and compare both spectra.

    Checks, exactly: every listed word's translation length in the scaled
    model equals c times its base length, and every matrix coefficient
    <rho(gamma) g, h> over `function_pairs` (default: the constant pair)
    is unchanged.
    """
    if not _is_tree(model):
        raise GeometryError("the rescaling check needs the tree model")
    c = Fraction(c)
    if c <= 0:
        raise GeometryError("the scale factor must be positive")
    scaled = FreeGroupModel(model.rank, edge_length=c * model.edge_length)
    if function_pairs is None:
        function_pairs = [(None, None)]

    word_list = [_tree_word(model, w) for w in words]
    max_len_mismatch = Fraction(0)
    for w in word_list:
        mismatch = abs(translation_length(scaled, w) - c * translation_length(model, w))
        if mismatch > max_len_mismatch:
            max_len_mismatch = mismatch

    max_coeff_mismatch = 0.0
    identical = True
    checked = 0
    for w in word_list:
        for g, h in function_pairs:
            diff = matrix_coefficient(model, w, g, h) \
                - matrix_coefficient(scaled, w, g, h)
            checked += 1
            if diff != 0:
                identical = False
                max_coeff_mismatch = max(max_coeff_mismatch, abs(float(diff)))

    return RescalingReport(
        c=c,
        words=tuple(letters_str(w.letters) for w in word_list),
        lengths_proportional=(max_len_mismatch == 0),
        max_length_mismatch=max_len_mismatch,
        coefficients_identical=identical,
        max_coefficient_mismatch=max_coeff_mismatch,
        coefficient_pairs_checked=checked,
        base_exponent=model.critical_exponent,
        scaled_exponent=scaled.critical_exponent,
    )
