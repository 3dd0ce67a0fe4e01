"""Reduced words in a free group and (pre)periodic boundary words.

Letters are nonzero ints: +i is the i-th generator, -i its inverse
(1 <= i <= rank).  String form uses 'a','b',... for generators and
'A','B',... for inverses, so rank <= 26 round-trips through text.

The canonical alphabet order is (1, 2, ..., k, -1, -2, ..., -k); all
"lexicographic" enumeration in the package refers to this order.
"""

from __future__ import annotations

from typing import Iterable, Iterator


class InsufficientDepthError(ValueError):
    """A boundary word stored at finite depth was asked for letters beyond it."""


def inv(letter: int) -> int:
    return -letter


def letter_str(letter: int) -> str:
    if letter > 0:
        return chr(ord("a") + letter - 1)
    return chr(ord("A") + (-letter) - 1)


def parse_letters(text: str, rank: int) -> tuple[int, ...]:
    out = []
    for ch in text:
        if "a" <= ch <= "z":
            v = ord(ch) - ord("a") + 1
        elif "A" <= ch <= "Z":
            v = -(ord(ch) - ord("A") + 1)
        else:
            raise ValueError(f"bad letter {ch!r}")
        if abs(v) > rank:
            raise ValueError(f"letter {ch!r} outside rank-{rank} alphabet")
        out.append(v)
    return tuple(out)


def letters_str(letters: Iterable[int]) -> str:
    return "".join(letter_str(l) for l in letters) or "e"


def alphabet(rank: int) -> tuple[int, ...]:
    return tuple(range(1, rank + 1)) + tuple(range(-1, -rank - 1, -1))


def is_reduced(letters: tuple[int, ...]) -> bool:
    return all(letters[i] != -letters[i + 1] for i in range(len(letters) - 1))


def reduce_concat(u: tuple[int, ...], v: tuple[int, ...]) -> tuple[int, ...]:
    """Concatenate two reduced words, cancelling across the junction."""
    i = len(u)
    j = 0
    while i > 0 and j < len(v) and u[i - 1] == -v[j]:
        i -= 1
        j += 1
    return u[:i] + v[j:]


def common_prefix_len(u: tuple[int, ...], v: tuple[int, ...]) -> int:
    n = min(len(u), len(v))
    for i in range(n):
        if u[i] != v[i]:
            return i
    return n


class ReducedWord:
    """Immutable reduced word; doubles as a vertex of the Cayley tree."""

    __slots__ = ("letters",)

    def __init__(self, letters: Iterable[int] = (), _checked: bool = False):
        letters = tuple(letters)
        if not _checked:
            if any(l == 0 or not isinstance(l, int) for l in letters):
                raise ValueError("letters must be nonzero ints")
            if not is_reduced(letters):
                raise ValueError(f"word {letters} is not reduced")
        object.__setattr__(self, "letters", letters)

    @classmethod
    def parse(cls, text: str, rank: int) -> "ReducedWord":
        if text in ("e", "1", ""):
            return cls(())
        return cls(parse_letters(text, rank))

    def __setattr__(self, *_):
        raise AttributeError("ReducedWord is immutable")

    def __len__(self):
        return len(self.letters)

    def __mul__(self, other: "ReducedWord") -> "ReducedWord":
        return ReducedWord(reduce_concat(self.letters, other.letters), _checked=True)

    def inverse(self) -> "ReducedWord":
        return ReducedWord(tuple(-l for l in reversed(self.letters)), _checked=True)

    def __pow__(self, n: int) -> "ReducedWord":
        if n < 0:
            return self.inverse() ** (-n)
        out = ReducedWord(())
        for _ in range(n):
            out = out * self
        return out

    def cyclic_reduce(self) -> tuple["ReducedWord", "ReducedWord"]:
        """Return (core, conj) with self == conj * core * conj^-1, core cyclically reduced."""
        ls = self.letters
        i, j = 0, len(ls)
        while j - i >= 2 and ls[i] == -ls[j - 1]:
            i += 1
            j -= 1
        return ReducedWord(ls[i:j], _checked=True), ReducedWord(ls[:i], _checked=True)

    def __eq__(self, other):
        return isinstance(other, ReducedWord) and self.letters == other.letters

    def __hash__(self):
        return hash(self.letters)

    def __repr__(self):
        return f"ReducedWord({letters_str(self.letters)!r})"

    def __str__(self):
        return letters_str(self.letters)

    @property
    def is_identity(self) -> bool:
        return not self.letters


def next_canonical_letter(last: int | None, rank: int) -> int:
    """First alphabet letter that keeps the word reduced after `last`."""
    for cand in alphabet(rank):
        if last is None or cand != -last:
            return cand
    raise ValueError("empty alphabet")


def canonical_extension(letters: tuple[int, ...], rank: int) -> "BoundaryWord":
    """The canonical boundary ray through the vertex `letters`.

    Extends by repeatedly appending the first alphabet letter that keeps
    the word reduced.  The rule depends only on the previous letter, so
    all rays through a common vertex share their tail, and the tail is
    eventually periodic (in fact eventually constant).
    """
    ext = list(letters)
    seen: dict[int, int] = {}
    while True:
        last = ext[-1] if ext else None
        nxt = next_canonical_letter(last, rank)
        if nxt == last:
            # constant tail from here on
            return BoundaryWord(tuple(ext), (nxt,), rank)
        key = nxt
        if key in seen:
            start = seen[key]
            return BoundaryWord(tuple(ext[:start]), tuple(ext[start:]), rank)
        seen[key] = len(ext)
        ext.append(nxt)


class BoundaryWord:
    """A point of the tree boundary: an infinite reduced word.

    Stored either as an eventually periodic word (prefix + repeating cycle,
    available to arbitrary depth) or as a plain finite prefix of configured
    depth.  Operations that need letters beyond a finite prefix raise
    InsufficientDepthError instead of guessing.
    """

    __slots__ = ("prefix", "cycle", "rank")

    def __init__(self, prefix: tuple[int, ...], cycle: tuple[int, ...] | None, rank: int):
        prefix = tuple(prefix)
        cycle = tuple(cycle) if cycle is not None else None
        if not is_reduced(prefix):
            raise ValueError("prefix not reduced")
        if cycle is not None:
            if not cycle:
                raise ValueError("empty cycle")
            probe = prefix + cycle + cycle
            if not is_reduced(probe):
                raise ValueError("cycle does not stay reduced")
        elif not prefix:
            raise ValueError("finite-depth boundary word needs at least one letter")
        object.__setattr__(self, "prefix", prefix)
        object.__setattr__(self, "cycle", cycle)
        object.__setattr__(self, "rank", rank)

    def __setattr__(self, *_):
        raise AttributeError("BoundaryWord is immutable")

    @classmethod
    def periodic(cls, cycle_text: str, rank: int, prefix_text: str = "") -> "BoundaryWord":
        return cls(parse_letters(prefix_text, rank), parse_letters(cycle_text, rank), rank)

    @classmethod
    def truncated(cls, prefix_text: str, rank: int) -> "BoundaryWord":
        return cls(parse_letters(prefix_text, rank), None, rank)

    @property
    def depth_available(self) -> float:
        return float("inf") if self.cycle is not None else len(self.prefix)

    def letter(self, i: int) -> int:
        """0-based i-th letter."""
        if i < len(self.prefix):
            return self.prefix[i]
        if self.cycle is None:
            raise InsufficientDepthError(
                f"boundary word stored to depth {len(self.prefix)}; letter {i + 1} requested")
        return self.cycle[(i - len(self.prefix)) % len(self.cycle)]

    def letters_to(self, n: int) -> tuple[int, ...]:
        return tuple(self.letter(i) for i in range(n))

    def match_letters(self, letters: tuple[int, ...]) -> int:
        """Length of the common prefix with a finite reduced word.

        Needs self resolvable to depth len(letters) in the worst case.
        """
        for i, l in enumerate(letters):
            if i >= len(self.prefix) and self.cycle is None:
                raise InsufficientDepthError(
                    f"need depth {len(letters)}, stored {len(self.prefix)}")
            if self.letter(i) != l:
                return i
        return len(letters)

    def match_boundary(self, other: "BoundaryWord") -> int | None:
        """Common prefix length with another boundary word; None means equal."""
        if self.semantic_eq(other):
            return None
        i = 0
        while True:
            a = self.letter(i)
            b = other.letter(i)
            if a != b:
                return i
            i += 1

    def semantic_eq(self, other: "BoundaryWord") -> bool:
        if self.cycle is None or other.cycle is None:
            # finite-depth words denote an unknown continuation: only equal
            # when they are the same stored object value
            return (self.prefix == other.prefix
                    and self.cycle == other.cycle)
        import math as _math
        horizon = (len(self.prefix) + len(other.prefix)
                   + 2 * _math.lcm(len(self.cycle), len(other.cycle)))
        return self.letters_to(horizon) == other.letters_to(horizon)

    def translate(self, g: "ReducedWord") -> "BoundaryWord":
        """The boundary action: prepend g and cancel."""
        if self.cycle is not None:
            pre = reduce_concat(g.letters, self.prefix)
            k = len(self.cycle)
            # ensure junction stays reduced by unrolling cycle copies as needed
            cyc = self.cycle
            while True:
                combined = reduce_concat(pre, cyc)
                if len(combined) == len(pre) + len(cyc):
                    return BoundaryWord(pre, cyc, self.rank)
                # cancellation ate into the cycle: absorb one copy and retry
                pre = combined
                if len(pre) > len(g.letters) + len(self.prefix) + 3 * k + 3:
                    # g has finite length; cancellation must stop before this
                    raise AssertionError("runaway cancellation")
        pre = reduce_concat(g.letters, self.prefix)
        if not pre:
            raise InsufficientDepthError("translation cancelled the stored prefix entirely")
        return BoundaryWord(pre, None, self.rank)

    def __eq__(self, other):
        return (isinstance(other, BoundaryWord)
                and self.rank == other.rank
                and self.semantic_eq(other))

    def __hash__(self):
        if self.cycle is None:
            return hash((self.prefix, None))
        # hash via a canonical unrolling long enough to separate unequal words
        return hash(self.letters_to(len(self.prefix) + 2 * len(self.cycle)))

    def __repr__(self):
        if self.cycle is None:
            return f"BoundaryWord({letters_str(self.prefix)!r}...)"
        return (f"BoundaryWord({letters_str(self.prefix)!r}"
                f"+({letters_str(self.cycle)!r})*)")


def iter_reduced_words(rank: int, length: int,
                       prefix: tuple[int, ...] = ()) -> Iterator[tuple[int, ...]]:
    """All reduced words of exactly `length` letters extending `prefix`, lexicographic."""
    if len(prefix) > length:
        return
    if len(prefix) == length:
        yield prefix
        return
    last = prefix[-1] if prefix else None
    for l in alphabet(rank):
        if last is not None and l == -last:
            continue
        yield from iter_reduced_words(rank, length, prefix + (l,))


def sphere_size(rank: int, length: int) -> int:
    if length == 0:
        return 1
    return 2 * rank * (2 * rank - 1) ** (length - 1)
