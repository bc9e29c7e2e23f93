"""Lattice rectangles, the step ordering, minimal rectangles and G-sets."""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass
from math import prod
from typing import Callable, Iterator, Optional, Sequence, Union

DEFAULT_MAX_SITES = 64


class GeometryError(ValueError):
    """Raised on invalid rectangles or violated preconditions."""


class DimensionMismatchError(GeometryError):
    pass


@dataclass(frozen=True)
class LatticeSpec:
    """Open square lattice with ``N`` sites per side in ``d`` dimensions."""

    d: int
    N: int
    max_sites: int = DEFAULT_MAX_SITES

    def __post_init__(self) -> None:
        if not isinstance(self.d, int) or self.d < 1:
            raise GeometryError(f"d must be an integer >= 1, got {self.d!r}")
        if not isinstance(self.N, int) or self.N < 2:
            raise GeometryError(f"N must be an integer >= 2, got {self.N!r}")
        if self.n_sites > self.max_sites:
            raise GeometryError(
                f"lattice has {self.n_sites} sites, budget is {self.max_sites}"
            )

    @property
    def n_sites(self) -> int:
        return self.N**self.d

    @property
    def full(self) -> "Rectangle":
        return Rectangle((self.N - 1,) * self.d, (1,) * self.d)

    def sites(self) -> list[tuple[int, ...]]:
        return self.full.sites()

    def contains(self, rect: "Rectangle") -> bool:
        return rect.d == self.d and all(
            q >= 1 and q + k <= self.N for k, q in zip(rect.k, rect.q)
        )

    def bonds(self) -> list["Rectangle"]:
        """Nearest-neighbour bonds (open boundaries) in step order."""
        return enumerate_rectangles(self, lambda r: r.size == 1)


@dataclass(frozen=True)
class Rectangle:
    """Box of sites ``q_j .. q_j + k_j`` on every axis ``j``."""

    k: tuple[int, ...]
    q: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "k", tuple(int(v) for v in self.k))
        object.__setattr__(self, "q", tuple(int(v) for v in self.q))
        if len(self.k) != len(self.q) or not self.k:
            raise GeometryError(f"k and q must have equal nonzero length: {self}")
        if any(v < 0 for v in self.k):
            raise GeometryError(f"side lengths must be >= 0: {self.k}")
        if any(v < 1 for v in self.q):
            raise GeometryError(f"corner coordinates must be >= 1: {self.q}")

    @classmethod
    def site(cls, coords: Sequence[int]) -> "Rectangle":
        return cls((0,) * len(coords), tuple(coords))

    @property
    def d(self) -> int:
        return len(self.k)

    @property
    def size(self) -> int:
        """Circumference ``|k|``."""
        return sum(self.k)

    @property
    def far(self) -> tuple[int, ...]:
        return tuple(q + k for q, k in zip(self.q, self.k))

    @property
    def n_sites(self) -> int:
        return prod(k + 1 for k in self.k)

    def sites(self) -> list[tuple[int, ...]]:
        """Sites in lexicographic coordinate order."""
        ranges = [range(q, q + k + 1) for q, k in zip(self.q, self.k)]
        return list(itertools.product(*ranges))

    def contains(self, other: "Rectangle") -> bool:
        _check_dims(self, other)
        return all(
            a <= b and bf <= af
            for a, b, af, bf in zip(self.q, other.q, self.far, other.far)
        )

    def strictly_contains(self, other: "Rectangle") -> bool:
        return self != other and self.contains(other)

    def intersects(self, other: "Rectangle") -> bool:
        _check_dims(self, other)
        return all(
            max(a, b) <= min(af, bf)
            for a, b, af, bf in zip(self.q, other.q, self.far, other.far)
        )

    def to_json(self) -> list[list[int]]:
        return [list(self.k), list(self.q)]

    def __str__(self) -> str:
        return f"J[k={self.k}, q={self.q}]"


class _Sentinel:
    """The initial step index, placed before every rectangle."""

    _instance: Optional["_Sentinel"] = None

    def __new__(cls) -> "_Sentinel":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "INITIAL"

    def __reduce__(self):
        return (_Sentinel, ())


INITIAL = _Sentinel()
StepIndex = Union[Rectangle, _Sentinel]


def _check_dims(a: Rectangle, b: Rectangle) -> None:
    if a.d != b.d:
        raise DimensionMismatchError(f"dimension mismatch: {a.d} vs {b.d}")


def order_cmp(a: Rectangle, b: Rectangle) -> int:
    """Compare two rectangles in the step ordering; returns -1, 0 or 1.

    The rules, with ``b`` playing the role of ``(k, q)`` and ``a`` of
    ``(k', q')`` when deciding whether ``a`` is greater:

    1. larger circumference is greater;
    2. on equal circumference, at the first axis where the side lengths
       differ, the rectangle with the *smaller* side there is greater;
    3. on equal shape, at the last axis where the corners differ, the
       rectangle with the larger corner coordinate there is greater.
    """
    _check_dims(a, b)
    if a.size != b.size:
        return 1 if a.size > b.size else -1
    for ka, kb in zip(a.k, b.k):
        if ka != kb:
            return 1 if kb > ka else -1
    for qa, qb in zip(reversed(a.q), reversed(b.q)):
        if qa != qb:
            return 1 if qa > qb else -1
    return 0


def order_key(r: Rectangle) -> tuple:
    """Sort key consistent with :func:`order_cmp`."""
    return (r.size, tuple(-v for v in r.k), tuple(reversed(r.q)))


def step_cmp(a: StepIndex, b: StepIndex) -> int:
    """``order_cmp`` extended so that ``INITIAL`` precedes every rectangle."""
    if a is INITIAL or b is INITIAL:
        return (a is not INITIAL) - (b is not INITIAL)
    return order_cmp(a, b)


def iter_rectangles(lattice: LatticeSpec) -> Iterator[Rectangle]:
    """All rectangles in the lattice, unordered."""
    d, N = lattice.d, lattice.N
    for k in itertools.product(range(N), repeat=d):
        ranges = [range(1, N - kj + 1) for kj in k]
        for q in itertools.product(*ranges):
            yield Rectangle(k, q)


def enumerate_rectangles(
    lattice: LatticeSpec,
    predicate: Optional[Callable[[Rectangle], bool]] = None,
) -> list[Rectangle]:
    """Rectangles passing ``predicate``, sorted ascending by ``order_cmp``."""
    rects = [r for r in iter_rectangles(lattice) if predicate is None or predicate(r)]
    return sorted(rects, key=functools.cmp_to_key(order_cmp))


@functools.lru_cache(maxsize=64)
def step_sequence(lattice: LatticeSpec) -> tuple[Rectangle, ...]:
    """Genuine algorithm steps: rectangles with ``1 <= |k|`` in order."""
    return tuple(enumerate_rectangles(lattice, lambda r: r.size >= 1))


def step_position(step: StepIndex, lattice: LatticeSpec) -> int:
    """0-based position of a step in the sequence; ``INITIAL`` is ``-1``."""
    if step is INITIAL:
        return -1
    try:
        return step_sequence(lattice).index(step)
    except ValueError:
        raise GeometryError(f"{step} is not a step of {lattice}") from None


def step_successor(step: StepIndex, lattice: LatticeSpec) -> Optional[Rectangle]:
    """Next step, or ``None`` after the maximal rectangle."""
    seq = step_sequence(lattice)
    pos = step_position(step, lattice)
    return seq[pos + 1] if pos + 1 < len(seq) else None


def bounding_rectangle(a: Rectangle, b: Rectangle) -> Rectangle:
    """Smallest rectangle containing both inputs (overlap not required)."""
    _check_dims(a, b)
    lo = tuple(min(x, y) for x, y in zip(a.q, b.q))
    hi = tuple(max(x, y) for x, y in zip(a.far, b.far))
    return Rectangle(tuple(h - l for h, l in zip(hi, lo)), lo)


def minimal_rectangle(a: Rectangle, b: Rectangle) -> Rectangle:
    """Minimal rectangle ``[a ∪ b]`` of two overlapping rectangles."""
    if not a.intersects(b):
        raise GeometryError(f"minimal rectangle needs overlapping inputs: {a}, {b}")
    return bounding_rectangle(a, b)


def sub_rectangles(target: Rectangle) -> list[Rectangle]:
    """All rectangles contained in ``target`` (itself included), in order."""
    out = []
    for k in itertools.product(*(range(kj + 1) for kj in target.k)):
        ranges = [range(q, q + kt - kj + 1) for q, kt, kj in zip(target.q, target.k, k)]
        for q in itertools.product(*ranges):
            out.append(Rectangle(k, q))
    return sorted(out, key=functools.cmp_to_key(order_cmp))


def g_set(inner: Rectangle, target: Rectangle) -> list[Rectangle]:
    """Sub-rectangles ``J'`` of ``target`` whose hull with ``inner`` is ``target``.

    ``J' = target`` is included. Members need not overlap ``inner``; such
    members only ever carry a vanishing contribution in the algorithm.
    """
    if not target.strictly_contains(inner):
        raise GeometryError(f"{inner} is not strictly inside {target}")
    return [j for j in sub_rectangles(target) if bounding_rectangle(inner, j) == target]


def shapes(d: int, size: int) -> list[tuple[int, ...]]:
    """Side-length vectors of dimension ``d`` with ``|k| = size``."""
    return [k for k in itertools.product(range(size + 1), repeat=d) if sum(k) == size]


def shape_count_cap(d: int, size: int) -> int:
    return (size + 1) ** (d - 1)


def subrectangle_count_cap(d: int, r: int, size: int) -> int:
    """Cap on sub-rectangles of fixed circumference inside a size-``r`` box."""
    return (r + 1) ** d * (size + 1) ** (d - 1)


def all_subrectangle_count_cap(d: int, r: int) -> int:
    return (r + 1) ** d * sum((k + 1) ** (d - 1) for k in range(1, r + 1))


def g_set_count_cap(d: int, r: int) -> int:
    return 2 * d * (r + 1) ** (d - 1) * sum((k + 1) ** (d - 1) for k in range(1, r + 1))
