"""Re-expansion of effective potentials into branch operators.

A potential after some level is unrolled level by level: the identity
edge keeps the same rectangle one level down, and each labelled edge
applies the adjoint series of that level's generator to a member of the
level's G-set. Summing all branch operators reproduces the potential.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .diagonalizer import RunResult
from .geometry import (
    Rectangle,
    bounding_rectangle,
    g_set,
    step_position,
    step_sequence,
)
from .operators import (
    adjoint_series,
    local_embed,
    spectral_norm,
    weight_diag,
    weighted_norm_matrix,
)

DEFAULT_DEPTH_CAP = 6


class TreeError(RuntimeError):
    pass


@dataclass(frozen=True)
class Branch:
    """One branch: labelled edges from the root down to a leaf.

    ``edges[i] = (label, child)`` applies the generator of step ``label``
    to the potential of ``child``; the parent of ``edges[0]`` is ``root``
    and the parent of ``edges[i]`` is the child of ``edges[i-1]``.
    ``leaf_level`` is the step position whose table supplies the leaf
    (``-1`` for the initial table).
    """

    root: Rectangle
    edges: tuple[tuple[Rectangle, Rectangle], ...]
    leaf_level: int

    @property
    def leaf(self) -> Rectangle:
        return self.edges[-1][1] if self.edges else self.root

    @property
    def labels(self) -> tuple[Rectangle, ...]:
        return tuple(lab for lab, _ in self.edges)

    @property
    def rectangles(self) -> tuple[Rectangle, ...]:
        """Edge labels from the top, then the leaf support."""
        return self.labels + (self.leaf,)

    @property
    def vertices(self) -> tuple[Rectangle, ...]:
        return (self.root,) + tuple(child for _, child in self.edges)


@dataclass
class Expansion:
    root: Rectangle
    level: int
    branches: list[Branch] = field(default_factory=list)
    truncated: bool = False


def _leaf_value(result: RunResult, rect: Rectangle, level: int) -> Optional[np.ndarray]:
    return result.tables[level + 1].get(rect)


def enumerate_branches(
    result: RunResult, target: Rectangle, root_level: int, depth_cap: int = DEFAULT_DEPTH_CAP
) -> Expansion:
    """All branches of the tree of ``target`` rooted after step ``root_level``.

    ``root_level`` is a step position, ``-1`` meaning the initial table.
    Edges whose child is a single site or misses the label rectangle, or
    whose step generator is zero, carry a vanishing operator and are not
    followed.
    """
    seq = step_sequence(result.lattice)
    out = Expansion(target, root_level)

    def own_level(rect: Rectangle) -> Optional[int]:
        return step_position(rect, result.lattice) if rect.size >= 1 else None

    def expand(rect: Rectangle, level: int, edges: tuple) -> None:
        if len(edges) + 1 > depth_cap:
            out.truncated = True
            return
        own = own_level(rect)
        if level == -1 or (own is not None and own <= level):
            # leaf: initial potential, or a potential frozen since its own step
            leaf_level = -1 if level == -1 else own
            if _leaf_value(result, rect, leaf_level) is not None:
                out.branches.append(Branch(target, edges, leaf_level))
            return
        step = seq[level]
        expand(rect, level - 1, edges)
        # an exactly vanishing generator makes every labelled edge vanish
        if rect.strictly_contains(step) and np.any(result.generator(step)):
            for child in g_set(step, rect):
                if child.size == 0 or not child.intersects(step):
                    continue
                expand(child, level - 1, edges + ((step, child),))

    expand(target, root_level, ())
    return out


def branch_operator(result: RunResult, branch: Branch) -> np.ndarray:
    """Nested adjoint series applied to the leaf, on the root's support."""
    n = result.data.basis.site_dim
    opts = result.options
    value = _leaf_value(result, branch.leaf, branch.leaf_level)
    if value is None:
        raise TreeError(f"no leaf potential for {branch.leaf}")
    region = branch.leaf
    for (label, _), parent in zip(reversed(branch.edges), reversed(branch.vertices[:-1])):
        if label not in result.step_data:
            raise TreeError(f"no generator cached for step {label}")
        s = local_embed(result.generator(label), label, parent, n)
        x = local_embed(value, region, parent, n)
        value = adjoint_series(s, x, opts.adjoint_n_max, opts.adjoint_tol).value
        region = parent
    return value


def branch_sum(result: RunResult, expansion: Expansion) -> np.ndarray:
    n = result.data.basis.site_dim
    total = np.zeros((n**expansion.root.n_sites,) * 2)
    for b in expansion.branches:
        total = total + branch_operator(result, b)
    return total


def edge_factor(s: np.ndarray, label: Rectangle, result: RunResult) -> float:
    """Measured growth factor of the weighted norm across one labelled edge.

    With ``a = ||S||`` and ``b = ||S (H0_R + 1)^{1/2}||`` the adjoint series
    obeys ``||A(X)||_w <= ((1 + (b/a)(e^a - 1))^2 - 1) ||X||_w`` whenever the
    parent region contains the label and the child.
    """
    a = spectral_norm(s)
    if a == 0.0:
        return 0.0
    root = 1.0 / weight_diag(label.n_sites, result.data.basis)
    b = spectral_norm(s * root[None, :])
    delta = (b / a) * math.expm1(a)
    return (1.0 + delta) ** 2 - 1.0


def branch_norm_bound(
    result: RunResult, branch: Branch, op: Optional[np.ndarray] = None
) -> tuple[float, float]:
    """``(||b||_H0, product of measured edge factors times ||V_leaf||_H0)``."""
    basis = result.data.basis
    if op is None:
        op = branch_operator(result, branch)
    lhs = weighted_norm_matrix(op, branch.root.n_sites, basis)
    leaf = _leaf_value(result, branch.leaf, branch.leaf_level)
    rhs = weighted_norm_matrix(leaf, branch.leaf.n_sites, basis)
    for label, _ in branch.edges:
        rhs *= edge_factor(result.generator(label), label, result)
    return lhs, rhs


def is_connected(rects: Sequence[Rectangle]) -> bool:
    """Whether the overlap graph of ``rects`` is connected."""
    rects = list(dict.fromkeys(rects))
    if not rects:
        return True
    seen = {0}
    stack = [0]
    while stack:
        i = stack.pop()
        for j, other in enumerate(rects):
            if j not in seen and rects[i].intersects(other):
                seen.add(j)
                stack.append(j)
    return len(seen) == len(rects)


def hull(rects: Sequence[Rectangle]) -> Rectangle:
    out = rects[0]
    for r in rects[1:]:
        out = bounding_rectangle(out, r)
    return out


def connectivity_holds(branch: Branch) -> bool:
    """The rectangles below every vertex form a connected union."""
    rects = branch.rectangles
    return all(is_connected(rects[i:]) for i in range(len(rects)))


def minimality_holds(branch: Branch) -> bool:
    """Every vertex rectangle is the hull of the rectangles below it."""
    rects = branch.rectangles
    return all(
        hull(rects[i:]) == vertex for i, vertex in enumerate(branch.vertices[:-1])
    ) and (not branch.edges or branch.vertices[-1] == branch.leaf)


@dataclass(frozen=True)
class Path:
    """Sequence of rectangles with distinct, overlapping neighbours."""

    rects: tuple[Rectangle, ...]

    def __post_init__(self) -> None:
        for a, b in zip(self.rects, self.rects[1:]):
            if a == b or not a.intersects(b):
                raise TreeError(f"invalid path step {a} -> {b}")

    @property
    def steps(self) -> list[tuple[Rectangle, Rectangle]]:
        return list(zip(self.rects, self.rects[1:]))

    @property
    def length(self) -> int:
        return max(len(self.rects) - 1, 0)

    @property
    def support(self) -> set[Rectangle]:
        return set(self.rects)


def step_weight(a: Rectangle, b: Rectangle, t: float, x_d: float, c: float) -> float:
    s = max(a.size, b.size)
    return math.sqrt((c + 1.0) * t ** (1.0 / 3.0) / s**x_d)


def path_weight(path: Path, t: float, x_d: float, c: float) -> float:
    if not 0.0 < t < 1.0:
        raise ValueError("t must lie in (0, 1)")
    w = 1.0
    for a, b in path.steps:
        w *= step_weight(a, b, t, x_d, c)
    return w


def traversal_path(rects: Sequence[Rectangle]) -> Optional[Path]:
    """Depth-first tour of the overlap graph, returning to the start.

    Returns ``None`` when the rectangles are not connected.
    """
    nodes = list(dict.fromkeys(rects))
    if not is_connected(nodes):
        return None
    order = [nodes[0]]
    seen = {nodes[0]}

    def visit(u: Rectangle) -> None:
        for v in nodes:
            if v not in seen and u.intersects(v):
                seen.add(v)
                order.append(v)
                visit(v)
                order.append(u)

    visit(nodes[0])
    return Path(tuple(order))


def path_length_cap(branch: Branch) -> int:
    return 2 * len(set(branch.rectangles)) - 2


def measured_constant(
    result: RunResult,
    branches: Sequence[Branch],
    x_d: float,
    norms: Optional[dict[Branch, float]] = None,
) -> float:
    """Smallest ``c >= 0`` making the per-branch product bound hold on ``branches``.

    ``norms`` may supply precomputed weighted branch norms.
    """
    t = abs(result.t)
    worst = 0.0
    for b in branches:
        lhs = norms[b] if norms is not None else branch_norm_bound(result, b)[0]
        if lhs == 0.0:
            continue
        r = b.root.size
        base = t ** ((r - 1) / 3.0)
        for rect in b.rectangles:
            base *= t ** (1.0 / 3.0) / max(rect.size, 1) ** x_d
        need = (lhs / base) ** (1.0 / len(b.rectangles)) - 1.0
        worst = max(worst, need)
    return worst
