"""Independent oracles used by the test suite.

Everything here is deliberately written against different representations
and algorithms than the library code it checks: brute-force enumeration,
breadth-first search, finite differences. Run this module directly to
regenerate the frozen swap-distance table (tests/data/not_oracle.json).
"""

from __future__ import annotations

import hashlib
import itertools
import json
import os
from collections import deque

import numpy as np

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")
NOT_ORACLE_PATH = os.path.join(DATA_DIR, "not_oracle.json")
NOT_ORACLE_SEED = 20240901
NOT_ORACLE_COUNT = 1000
NOT_ORACLE_MAX_SIZE = 64


def matmul_triple_loop(a, b):
    """Naive i-j-k triple loop product."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def lap_max_brute_force(cost):
    """Exhaustive search over all assignments; returns (best value, best perm)."""
    cost = np.asarray(cost, dtype=np.float64)
    n = cost.shape[0]
    rows = np.arange(n)
    best_value, best_perm = -np.inf, None
    for perm in itertools.permutations(range(n)):
        value = float(cost[rows, perm].sum())
        if value > best_value:
            best_value, best_perm = value, perm
    return best_value, np.array(best_perm)


def lap_max_brute_force_value_vectorized(cost, all_perms):
    """Objective only, vectorized over a precomputed (n!, n) index array."""
    cost = np.asarray(cost, dtype=np.float64)
    n = cost.shape[0]
    return float(cost[np.arange(n), all_perms].sum(axis=1).max())


def group_bfs_distances(n):
    """Exact distance of every permutation of size n from the identity in
    the Cayley graph generated by all transpositions (plain BFS)."""
    start = tuple(range(n))
    dist = {start: 0}
    queue = deque([start])
    swaps = list(itertools.combinations(range(n), 2))
    while queue:
        perm = queue.popleft()
        d = dist[perm] + 1
        for i, j in swaps:
            neighbor = list(perm)
            neighbor[i], neighbor[j] = neighbor[j], neighbor[i]
            neighbor = tuple(neighbor)
            if neighbor not in dist:
                dist[neighbor] = d
                queue.append(neighbor)
    return dist


def cycle_type(perm) -> tuple:
    """Sorted cycle lengths of a permutation given as a function array."""
    perm = list(perm)
    seen = [False] * len(perm)
    lengths = []
    for start in range(len(perm)):
        if seen[start]:
            continue
        length = 0
        j = start
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        lengths.append(length)
    return tuple(sorted(lengths))


def partition_bfs_distances(n, targets=None):
    """BFS over cycle types: one transposition either merges two cycles or
    splits one, so swap distance from the identity is a breadth-first search
    over integer partitions of n with merge/split edges. If ``targets`` is
    given, stop once all of them are resolved.
    """
    start = (1,) * n
    dist = {start: 0}
    queue = deque([start])
    remaining = set(targets) if targets is not None else None
    if remaining is not None:
        remaining.discard(start)
    while queue and (remaining is None or remaining):
        part = queue.popleft()
        d = dist[part] + 1
        length = len(part)
        firsts = {}
        for idx in range(length - 1, -1, -1):
            firsts[part[idx]] = idx
        vals = list(firsts)
        n_vals = len(vals)
        for ai in range(n_vals):
            a = vals[ai]
            ia = firsts[a]
            for bi in range(ai, n_vals):
                b = vals[bi]
                if a == b:
                    if ia + 1 >= length or part[ia + 1] != a:
                        continue
                    rest = part[:ia] + part[ia + 2:]
                else:
                    ib = firsts[b]
                    lo, hi = (ia, ib) if ia < ib else (ib, ia)
                    rest = part[:lo] + part[lo + 1:hi] + part[hi + 1:]
                merged = a + b
                pos = _bisect(rest, merged)
                new = rest[:pos] + (merged,) + rest[pos:]
                if new not in dist:
                    dist[new] = d
                    queue.append(new)
                    if remaining is not None:
                        remaining.discard(new)
        for a in vals:
            if a < 2:
                continue
            ia = firsts[a]
            rest0 = part[:ia] + part[ia + 1:]
            for cut in range(1, a // 2 + 1):
                lo, hi = cut, a - cut
                pos1 = _bisect(rest0, lo)
                tmp = rest0[:pos1] + (lo,) + rest0[pos1:]
                pos2 = _bisect(tmp, hi)
                new = tmp[:pos2] + (hi,) + tmp[pos2:]
                if new not in dist:
                    dist[new] = d
                    queue.append(new)
                    if remaining is not None:
                        remaining.discard(new)
    return dist


def _bisect(seq, value):
    lo, hi = 0, len(seq)
    while lo < hi:
        mid = (lo + hi) // 2
        if seq[mid] < value:
            lo = mid + 1
        else:
            hi = mid
    return lo


def swap_distance_via_partition_bfs(perms, n_embed=None):
    """Exact minimal swap counts for many permutations with one BFS.

    A permutation of size m embeds into size ``n_embed`` by appending fixed
    points; extra elements join the cycle type as 1s and the search still
    returns the true distance, so a single BFS at the largest size answers
    every query.
    """
    sizes = [len(p) for p in perms]
    n_embed = n_embed or max(sizes)
    targets = []
    for p in perms:
        t = cycle_type(p)
        targets.append(tuple(sorted(t + (1,) * (n_embed - len(p)))))
    dist = partition_bfs_distances(n_embed, targets=set(targets))
    return [dist[t] for t in targets]


def central_difference_grad(f, x, h=1e-5, coords=None):
    """Central finite differences of scalar f at x on selected coordinates."""
    x = np.asarray(x, dtype=np.float64)
    coords = range(x.size) if coords is None else coords
    out = {}
    for i in coords:
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        out[i] = (f(xp) - f(xm)) / (2.0 * h)
    return out


# ---------------------------------------------------------------------------
# Frozen swap-distance table
# ---------------------------------------------------------------------------

def not_oracle_permutations():
    """The seeded permutations checked against the frozen BFS distances."""
    from bnn_rebasin.numerics import Rng

    rng = Rng(NOT_ORACLE_SEED).split("not-oracle")
    perms = []
    for _ in range(NOT_ORACLE_COUNT):
        size = int(rng.integers(2, NOT_ORACLE_MAX_SIZE + 1))
        perms.append(rng.permutation(size).tolist())
    return perms


def fingerprint(perms) -> str:
    blob = json.dumps(perms).encode()
    return hashlib.sha256(blob).hexdigest()


def regenerate_not_oracle(path=NOT_ORACLE_PATH):
    perms = not_oracle_permutations()
    distances = swap_distance_via_partition_bfs(perms, n_embed=NOT_ORACLE_MAX_SIZE)
    payload = {
        "seed": NOT_ORACLE_SEED,
        "count": NOT_ORACLE_COUNT,
        "max_size": NOT_ORACLE_MAX_SIZE,
        "perm_fingerprint": fingerprint(perms),
        "distances": distances,
    }
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as f:
        json.dump(payload, f)
        f.write("\n")
    return payload


def load_not_oracle(path=NOT_ORACLE_PATH):
    with open(path) as f:
        return json.load(f)


if __name__ == "__main__":
    payload = regenerate_not_oracle()
    print(f"wrote {NOT_ORACLE_PATH}: {payload['count']} distances, "
          f"fingerprint {payload['perm_fingerprint'][:12]}")
