"""Numerical trace engine: graph evaluation in matrix families.

Evaluation enumerates vertex labelings block by block (the split structure)
with early termination on zero partial products; the naive all-maps loop is
kept as the correctness oracle.  Scalars stay exact (Python ints, Fractions)
whenever the input matrices are exact, so the Moebius identity between the
combinatorial and injective traces can be asserted with zero tolerance.
"""

from __future__ import annotations

import itertools
import math
import statistics
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping

import numpy as np

from .graphs import GraphMonomial, TestGraph, quotient, split_partitions


@dataclass(frozen=True)
class BlockLayout:
    """Sizes of the three index blocks inside [N], in block order 0, 1, 2."""

    N0: int
    N1: int
    N2: int

    def __post_init__(self) -> None:
        if min(self.N0, self.N1, self.N2) < 0:
            raise ValueError("block sizes must be >= 0")

    @property
    def N(self) -> int:
        return self.N0 + self.N1 + self.N2

    def size(self, block: int) -> int:
        return (self.N0, self.N1, self.N2)[block]

    def start(self, block: int) -> int:
        return (0, self.N0, self.N0 + self.N1)[block]

    def block_range(self, block: int) -> range:
        return range(self.start(block), self.start(block) + self.size(block))

    def psi(self, block: int) -> Fraction:
        """Empirical ratio N_block / N."""
        return Fraction(self.size(block), self.N)


def embed(a: np.ndarray, blocks: tuple[int, int], layout: BlockLayout) -> np.ndarray:
    """Place a rectangular matrix in block (row, col) of an N x N matrix."""
    row, col = blocks
    a = np.asarray(a)
    if a.shape != (layout.size(row), layout.size(col)):
        raise ValueError(f"matrix shape {a.shape} does not fit block ({row},{col})")
    out = np.zeros((layout.N, layout.N), dtype=a.dtype)
    out[layout.start(row) : layout.start(row) + layout.size(row),
        layout.start(col) : layout.start(col) + layout.size(col)] = a
    return out


def extract(a: np.ndarray, blocks: tuple[int, int], layout: BlockLayout) -> np.ndarray:
    row, col = blocks
    return np.asarray(a)[layout.start(row) : layout.start(row) + layout.size(row),
                         layout.start(col) : layout.start(col) + layout.size(col)]


@dataclass(frozen=True)
class LabeledMatrix:
    """Rectangular matrix with its source and target block indices.

    Shape is (N_dst, N_src): an edge labeled by this matrix evaluates
    matrix[phi(target), phi(source)] in block-local coordinates.
    """

    matrix: np.ndarray
    src_block: int
    dst_block: int


class MatrixFamily:
    """Label -> rectangular matrix with declared blocks, over one layout."""

    def __init__(self, layout: BlockLayout, items: Mapping[object, LabeledMatrix] | None = None) -> None:
        self.layout = layout
        self.items: dict[object, LabeledMatrix] = {}
        for label, lm in (items or {}).items():
            self.add(label, lm.matrix, lm.src_block, lm.dst_block)

    def add(self, label: object, matrix, src_block: int, dst_block: int) -> "MatrixFamily":
        matrix = np.asarray(matrix)
        want = (self.layout.size(dst_block), self.layout.size(src_block))
        if matrix.shape != want:
            raise ValueError(f"label {label!r}: shape {matrix.shape}, blocks demand {want}")
        self.items[label] = LabeledMatrix(matrix, src_block, dst_block)
        return self

    def __getitem__(self, label: object) -> LabeledMatrix:
        if label not in self.items:
            raise KeyError(f"unresolved label {label!r}")
        return self.items[label]

    def __contains__(self, label: object) -> bool:
        return label in self.items


def _edge_tables(g: TestGraph, family: MatrixFamily):
    """Per-edge (src, dst, nested-list matrix); validates color consistency."""
    tables = []
    for e in g.edges:
        lm = family[e.label]
        if g.color[e.dst] != lm.dst_block or g.color[e.src] != lm.src_block:
            raise ValueError(
                f"edge {e.id!r}: label {e.label!r} demands blocks "
                f"({lm.dst_block},{lm.src_block}) but endpoints are colored "
                f"({g.color[e.dst]},{g.color[e.src]})"
            )
        tables.append((e.src, e.dst, lm.matrix.tolist()))
    return tables


def _assignment_sum(g: TestGraph, family: MatrixFamily, injective: bool) -> object:
    """Sum over split vertex labelings of the edge-entry product.

    Labelings are block-local (vertex of color c ranges over [N_c]); with
    embedded matrices this equals the sum over all of [N] except for the
    block-size factor on isolated vertices, which follows the vertex color.
    """
    order = g.vertex_ids
    pos = {v: i for i, v in enumerate(order)}
    tables = _edge_tables(g, family)
    ready: list[list[tuple[int, int, list]]] = [[] for _ in order]
    for src, dst, mat in tables:
        later = max(pos[src], pos[dst])
        ready[later].append((pos[dst], pos[src], mat))
    sizes = [family.layout.size(g.color[v]) for v in order]
    colors = [g.color[v] for v in order]
    n = len(order)
    assign = [0] * n
    used: dict[int, set[int]] = {0: set(), 1: set(), 2: set()}

    def rec(i: int, partial):
        if i == n:
            return partial
        total = 0
        color = colors[i]
        for val in range(sizes[i]):
            if injective and val in used[color]:
                continue
            assign[i] = val
            prod = partial
            for dst_i, src_i, mat in ready[i]:
                prod = prod * mat[assign[dst_i]][assign[src_i]]
                if prod == 0:
                    break
            if prod == 0:
                continue
            if injective:
                used[color].add(val)
            total += rec(i + 1, prod)
            if injective:
                used[color].remove(val)
        return total

    return rec(0, 1)


def combinatorial_trace(g: TestGraph, family: MatrixFamily) -> object:
    """Sum over split vertex labelings of the product of edge entries."""
    return _assignment_sum(g, family, injective=False)


def combinatorial_trace_all_maps(g: TestGraph, family: MatrixFamily) -> object:
    """Oracle: literal sum over all maps V -> [N] with embedded matrices."""
    layout = family.layout
    embedded = {}
    for label, lm in family.items.items():
        embedded[label] = embed(lm.matrix, (lm.dst_block, lm.src_block), layout).tolist()
    order = g.vertex_ids
    pos = {v: i for i, v in enumerate(order)}
    total = 0
    for assign in itertools.product(range(layout.N), repeat=len(order)):
        prod = 1
        for e in g.edges:
            prod = prod * embedded[e.label][assign[pos[e.dst]]][assign[pos[e.src]]]
            if prod == 0:
                break
        total += prod
    return total


def injective_trace(g: TestGraph, family: MatrixFamily) -> object:
    """Combinatorial trace restricted to injective split labelings."""
    return _assignment_sum(g, family, injective=True)


@dataclass(frozen=True)
class MoebiusReport:
    lhs: object
    rhs: object
    equal: bool


def moebius_check(g: TestGraph, family: MatrixFamily) -> MoebiusReport:
    """Combinatorial trace vs the sum of injective traces over split quotients.

    Exact integer equality when the inputs are integer matrices.
    """
    if len(g.vertices) > 8:
        raise ValueError("moebius_check guarded at 8 vertices")
    lhs = combinatorial_trace(g, family)
    rhs = 0
    for pi in split_partitions(g):
        rhs += injective_trace(quotient(g, pi), family)
    return MoebiusReport(lhs=lhs, rhs=rhs, equal=lhs == rhs)


def falling_factorial(m: int, n: int) -> int:
    out = 1
    for k in range(n):
        out *= m - k
    return out


def _color_counts(g: TestGraph) -> tuple[int, int, int]:
    counts = [0, 0, 0]
    for _, c in g.vertices:
        counts[c] += 1
    return tuple(counts)


def delta0(
    g: TestGraph,
    family: MatrixFamily,
    mode: str = "exact",
    trials: int = 0,
    seed: int = 0,
) -> object:
    """Mean edge-entry product under a uniform injective split labeling.

    Exact mode averages over every injective split map (guarded); Monte Carlo
    mode averages over sampled maps, reproducibly in the seed.  The exact
    value times N^{-1} (N0)_{v0} (N1)_{v1} (N2)_{v2} is the injective trace
    over N.
    """
    counts = _color_counts(g)
    layout = family.layout
    for c in range(3):
        if counts[c] > layout.size(c):
            raise ValueError(f"color {c} has more vertices than block size")
    tables = _edge_tables(g, family)
    order = g.vertex_ids
    pos = {v: i for i, v in enumerate(order)}
    by_color = {c: [i for i, v in enumerate(order) if g.color[v] == c] for c in range(3)}

    def product_for(assign: list[int]) -> object:
        prod = 1
        for src, dst, mat in tables:
            prod = prod * mat[assign[pos[dst]]][assign[pos[src]]]
            if prod == 0:
                break
        return prod

    if mode == "exact":
        n_maps = 1
        for c in range(3):
            n_maps *= falling_factorial(layout.size(c), counts[c])
        if n_maps > 10**6:
            raise ValueError(f"exact delta0 guarded at 1e6 maps, got {n_maps}")
        if n_maps == 0:
            raise ValueError("no injective split maps exist")
        total = 0
        pools = [itertools.permutations(range(layout.size(c)), counts[c]) for c in range(3)]
        assign = [0] * len(order)
        for combo in itertools.product(*pools):
            for c in range(3):
                for slot, val in zip(by_color[c], combo[c]):
                    assign[slot] = val
            total = total + product_for(assign)
        if isinstance(total, int):
            return Fraction(total, n_maps)
        return total / n_maps
    if mode == "monte_carlo":
        if trials <= 0:
            raise ValueError("monte_carlo mode needs trials >= 1")
        rng = np.random.default_rng([seed, 0xD0])
        total = 0.0
        assign = [0] * len(order)
        for _ in range(trials):
            for c in range(3):
                picks = rng.choice(layout.size(c), size=counts[c], replace=False)
                for slot, val in zip(by_color[c], picks):
                    assign[slot] = int(val)
            total += float(product_for(assign))
        return total / trials
    raise ValueError(f"unknown mode {mode!r}")


# -- graph monomial evaluation ---------------------------------------------


def eval_monomial(mono: GraphMonomial, family: MatrixFamily) -> np.ndarray:
    """Evaluate a graph monomial to a rectangular matrix.

    Entry (i, j) sums the edge-entry product over split labelings with the
    output pinned to i and the input pinned to j; rows live in the output
    vertex's block, columns in the input vertex's block.
    """
    g = mono.graph
    layout = family.layout
    out_color = g.color[mono.output]
    in_color = g.color[mono.input]
    rows, cols = layout.size(out_color), layout.size(in_color)
    tables = _edge_tables(g, family)
    order = g.vertex_ids
    pos = {v: i for i, v in enumerate(order)}
    ready: list[list[tuple[int, int, list]]] = [[] for _ in order]
    for src, dst, mat in tables:
        later = max(pos[src], pos[dst])
        ready[later].append((pos[dst], pos[src], mat))
    sizes = [layout.size(g.color[v]) for v in order]
    n = len(order)
    out = np.zeros((rows, cols))
    out_pos, in_pos = pos[mono.output], pos[mono.input]
    pinned = {out_pos, in_pos}
    assign = [0] * n

    def rec(i: int, partial) -> float:
        if i == n:
            return partial
        if i in pinned:
            prod = partial
            for dst_i, src_i, mat in ready[i]:
                prod = prod * mat[assign[dst_i]][assign[src_i]]
                if prod == 0:
                    return 0
            return rec(i + 1, prod)
        total = 0
        for val in range(sizes[i]):
            assign[i] = val
            prod = partial
            for dst_i, src_i, mat in ready[i]:
                prod = prod * mat[assign[dst_i]][assign[src_i]]
                if prod == 0:
                    break
            if prod == 0:
                continue
            total += rec(i + 1, prod)
        return total

    for i in range(rows):
        for j in range(cols):
            assign[out_pos] = i
            if in_pos == out_pos and i != j:
                continue
            assign[in_pos] = j
            out[i, j] = rec(0, 1)
    return out


# -- sampled traces ----------------------------------------------------------


def sample_trace(g: TestGraph, family: MatrixFamily) -> float:
    """Combinatorial trace of one realized family, sized for large N.

    Parallel edges between the same endpoints merge into one entrywise
    bundle factor; leaf vertices are then summed out by matrix-vector
    products, so trees and cactus-like graphs reduce to linear algebra.  A
    leftover simple cycle is folded as a transfer-matrix trace; anything
    denser falls back to labeling enumeration (guarded).
    """
    for e in g.edges:
        lm = family[e.label]
        if g.color[e.dst] != lm.dst_block or g.color[e.src] != lm.src_block:
            raise ValueError(f"edge {e.id!r}: label blocks do not match endpoint colors")
    sizes = {v: family.layout.size(g.color[v]) for v in g.vertex_ids}
    pot = {v: np.ones(sizes[v]) for v in g.vertex_ids}
    # bundle[(a, b)] has rows indexed by a and columns by b, a before b in
    # vertex order; entries are the product over parallel edges
    order = {v: i for i, v in enumerate(g.vertex_ids)}
    bundles: dict[tuple, np.ndarray] = {}
    for e in g.edges:
        m = family[e.label].matrix  # rows = dst, cols = src
        if e.src == e.dst:
            pot[e.src] = pot[e.src] * np.diagonal(m)
            continue
        a, b = sorted((e.src, e.dst), key=order.get)
        aligned = m if e.dst == a else m.T
        key = (a, b)
        bundles[key] = bundles[key] * aligned if key in bundles else aligned.astype(float, copy=True)

    neighbors: dict[object, set] = {v: set() for v in g.vertex_ids}
    for a, b in bundles:
        neighbors[a].add(b)
        neighbors[b].add(a)

    live = set(g.vertex_ids)
    # sum out degree-1 vertices
    while True:
        leaf = next((v for v in live if len(neighbors[v]) == 1), None)
        if leaf is None:
            break
        (other,) = neighbors[leaf]
        key = (leaf, other) if (leaf, other) in bundles else (other, leaf)
        f = bundles.pop(key)
        msg = f @ pot[leaf] if key[1] == leaf else f.T @ pot[leaf]
        pot[other] = pot[other] * msg
        neighbors[other].discard(leaf)
        neighbors[leaf].clear()
        live.discard(leaf)

    total = 1.0
    seen: set = set()
    for v in sorted(live, key=order.get):
        if v in seen:
            continue
        comp = [v]
        seen.add(v)
        stack = [v]
        while stack:
            u = stack.pop()
            for w in neighbors[u]:
                if w not in seen:
                    seen.add(w)
                    comp.append(w)
                    stack.append(w)
        if len(comp) == 1:
            total *= float(pot[v].sum())
            continue
        if any(len(neighbors[u]) != 2 for u in comp):
            size = 1
            for u in g.vertex_ids:
                size *= sizes[u]
                if size > 2 * 10**6:
                    raise ValueError("graph too dense for labeling enumeration")
            return float(combinatorial_trace(g, family))
        # fold the remaining simple cycle as a product of transfer matrices
        walk = [comp[0]]
        prev = None
        while True:
            here = walk[-1]
            nxt = next(w for w in neighbors[here] if w != prev)
            if nxt == walk[0]:
                break
            walk.append(nxt)
            prev = here
        acc = None
        k = len(walk)
        for i, here in enumerate(walk):
            nxt = walk[(i + 1) % k]
            key = (here, nxt) if (here, nxt) in bundles else (nxt, here)
            f = bundles[key]
            step = f.T if key[0] == here else f  # rows = nxt, cols = here
            step = step * pot[here][None, :]
            acc = step if acc is None else step @ acc
        total *= float(np.trace(acc))
    return total


@dataclass(frozen=True)
class TauEstimate:
    mean: float
    std_error: float | None
    trials: int
    seed: int


def tau_estimate(
    g: TestGraph,
    sampler: Callable[[np.random.Generator], MatrixFamily],
    trials: int,
    seed: int,
    values_out: list | None = None,
    map_fn: Callable | None = None,
) -> TauEstimate:
    """Monte Carlo mean and standard error of N^{-1} * trace over samples.

    Trial t draws its family from a generator seeded by (seed, t), so runs
    are reproducible and trials can be evaluated independently; aggregation
    is always in trial order.  std_error is the sample standard deviation
    over trials divided by sqrt(trials), None for a single trial.  map_fn
    lets a harness run trials concurrently (e.g. an executor's map); it must
    preserve order.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")

    def one_trial(t: int) -> float:
        rng = np.random.default_rng([seed, t])
        family = sampler(rng)
        return sample_trace(g, family) / family.layout.N

    values = list((map_fn or map)(one_trial, range(trials)))
    if values_out is not None:
        values_out.extend(values)
    mean = sum(values) / trials
    if trials == 1:
        return TauEstimate(mean=mean, std_error=None, trials=trials, seed=seed)
    sd = statistics.stdev(values)
    return TauEstimate(mean=mean, std_error=sd / math.sqrt(trials), trials=trials, seed=seed)
