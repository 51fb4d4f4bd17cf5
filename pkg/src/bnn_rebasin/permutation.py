"""Permutations of hidden units: cycles, transposition counts, weight relabeling.

Convention (shared by every module): ``map[i]`` is the source index feeding
target slot ``i``, i.e. relabeled row i of the first layer is original row
``map[i]``. In matrix form W' = P W with P[i, map[i]] = 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import WeightSet
from .numerics import Rng


@dataclass(frozen=True)
class Permutation:
    map: np.ndarray  # (H,) int64, a bijection on {0..H-1}

    def __post_init__(self):
        object.__setattr__(self, "map",
                           np.ascontiguousarray(self.map, dtype=np.int64))
        m = self.map
        if m.ndim != 1 or not np.array_equal(np.sort(m), np.arange(m.shape[0])):
            raise ValueError("map is not a bijection on {0..H-1}")

    @property
    def size(self) -> int:
        return self.map.shape[0]

    def destinations(self) -> np.ndarray:
        """dest[j] = target slot of source unit j (inverse of map)."""
        dest = np.empty(self.size, dtype=np.int64)
        dest[self.map] = np.arange(self.size)
        return dest


def identity(h: int) -> Permutation:
    return Permutation(np.arange(h))


def random_permutation(h: int, rng: Rng) -> Permutation:
    return Permutation(rng.permutation(h))


def cycle_decompose(p: Permutation) -> list[list[int]]:
    """Disjoint cycles of the unit relocation j -> dest(j), fixed points
    included; each cycle starts at its smallest element, cycles sorted by
    starting element."""
    dest = p.destinations()
    seen = np.zeros(p.size, dtype=bool)
    cycles = []
    for start in range(p.size):
        if seen[start]:
            continue
        cycle = [start]
        seen[start] = True
        j = int(dest[start])
        while j != start:
            cycle.append(j)
            seen[j] = True
            j = int(dest[j])
        cycles.append(cycle)
    return cycles


def not_count(p: Permutation) -> int:
    """Minimal number of pairwise swaps composing p: size minus cycle count."""
    m = p.map
    seen = np.zeros(p.size, dtype=bool)
    n_cycles = 0
    for start in range(p.size):
        if seen[start]:
            continue
        n_cycles += 1
        j = start
        while not seen[j]:
            seen[j] = True
            j = int(m[j])
    return p.size - n_cycles


def random_with_not(h: int, k: int, rng: Rng) -> Permutation:
    """Random permutation with exactly k transpositions, seeded-deterministic.

    Starting from the identity, each step swaps two entries drawn from
    distinct cycles, which merges them and raises the count by exactly one.
    """
    if not 0 <= k <= h - 1:
        raise ValueError(f"k must be in [0, {h - 1}], got {k}")
    dest = np.arange(h)
    parent = np.arange(h)

    def find(i):
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    roots = list(range(h))
    for _ in range(k):
        ia = int(rng.integers(0, len(roots)))
        ib = int(rng.integers(0, len(roots) - 1))
        if ib >= ia:
            ib += 1
        a, b = roots[ia], roots[ib]
        dest[a], dest[b] = dest[b], dest[a]
        parent[find(b)] = find(a)
        last = roots.pop()
        if ib < len(roots):
            roots[ib] = last
    m = np.empty(h, dtype=np.int64)
    m[dest] = np.arange(h)
    return Permutation(m)


def compose(p: Permutation, q: Permutation) -> Permutation:
    """Permutation applying q first, then p: apply(compose(p,q), w) =
    apply(p, apply(q, w))."""
    if p.size != q.size:
        raise ValueError(f"size mismatch: {p.size} vs {q.size}")
    return Permutation(q.map[p.map])


def invert(p: Permutation) -> Permutation:
    return Permutation(p.destinations())


def apply_to_weights(p: Permutation, w: WeightSet) -> WeightSet:
    """Relabel hidden units; the network function is unchanged."""
    if p.size != w.hidden_size:
        raise ValueError(f"permutation size {p.size} != hidden size {w.hidden_size}")
    m = p.map
    return WeightSet(w.w1[m], w.b1[m], w.w2[:, m], w.b2.copy())
