"""Brute-force ground truth at tiny scale.

Explicit enumeration of self-avoiding walks, a naive Z_n by plain
summation over paths, and exact expectations of functionals of Z_n
computed by exhausting every environment configuration of a finite-atom
law.  Deliberately simple code paths, independent of the engine's scaled
accumulation and chunked reductions, so the two can adjudicate each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import product

import numpy as np

from .engine import WorkBudgetError
from .theory import saw_count, tree_edge_count

__all__ = [
    "PathSet",
    "enumerate_saws",
    "naive_zn",
    "naive_profile",
    "exact_expectation",
    "MAX_PATHS",
    "MAX_CONFIGS",
]

MAX_PATHS = 10 ** 7
MAX_CONFIGS = 10 ** 7

FUNCTIONALS = ("mean_zn", "second_moment", "fractional_moment", "indicator")


@dataclass
class PathSet:
    """All root-anchored SAWs of one length, as child-index sequences."""

    ell: int
    n: int
    paths: list


def enumerate_saws(ell, n, *, max_paths=MAX_PATHS):
    """Every n-step SAW from the root, in lexicographic child-index order."""
    if ell < 2:
        raise ValueError(f"ell must be >= 2: {ell}")
    if n < 0:
        raise ValueError(f"n must be >= 0: {n}")
    count = saw_count(ell, n)
    if count > max_paths:
        raise WorkBudgetError(f"c_{n} = {count} exceeds the path budget {max_paths}")
    if n == 0:
        return PathSet(ell=ell, n=0, paths=[()])
    paths = [
        (first,) + rest
        for first in range(ell)
        for rest in product(range(ell - 1), repeat=n - 1)
    ]
    return PathSet(ell=ell, n=n, paths=paths)


def _level_tables(env, depth):
    """Per-depth lists of conductances indexed by rank (vectorized prefill)."""
    tables = [None]
    for d in range(1, depth + 1):
        ranks = np.arange(saw_count(env.ell, d), dtype=np.uint64)
        tables.append([float(v) for v in env.samples_at(d, ranks)])
    return tables


def naive_zn(env, beta, n, *, max_paths=MAX_PATHS):
    """Z_n by direct summation over enumerated paths, in path order."""
    if n == 0:
        return 1.0
    ell = env.ell
    paths = enumerate_saws(ell, n, max_paths=max_paths).paths
    table = _level_tables(env, n)
    total = 0.0
    for path in paths:
        rank = 0
        s = 0.0
        for j, ix in enumerate(path):
            rank = ix if j == 0 else rank * (ell - 1) + ix
            s += table[j + 1][rank]
        total += math.exp(-beta * s)
    return total / (saw_count(ell, n) * env.law.laplace(beta) ** n)


def naive_profile(env, beta, depth, *, max_paths=MAX_PATHS):
    """[Z_0..Z_depth] in one sweep, still by plain per-path summation."""
    ell = env.ell
    if saw_count(ell, depth) > max_paths:
        raise WorkBudgetError(f"c_{depth} exceeds the path budget {max_paths}")
    table = _level_tables(env, depth)
    lam = env.law.laplace(beta)
    out = [1.0]
    frontier = [(0, 0.0)]  # (rank, conductance sum along the path)
    for d in range(1, depth + 1):
        width = ell if d == 1 else ell - 1
        nxt = []
        total = 0.0
        for rank, s in frontier:
            base = rank * width if d > 1 else 0
            for j in range(width):
                r2 = base + j
                s2 = s + table[d][r2]
                total += math.exp(-beta * s2)
                nxt.append((r2, s2))
        frontier = nxt
        out.append(total / (saw_count(ell, d) * lam ** d))
    return np.array(out)


def _finite_atoms(law):
    atoms = law.atoms()
    if atoms is None:
        raise ValueError(f"exhaustive expectation needs a finite-support law: {law.spec()}")
    return atoms


def _path_edge_ids(ell, n):
    """Edge ids along each path, under breadth-first (depth, rank) numbering."""
    offsets = [0]
    for d in range(1, n + 1):
        offsets.append(offsets[-1] + saw_count(ell, d))
    ids = []
    for path in enumerate_saws(ell, n).paths:
        rank = 0
        eids = []
        for j, ix in enumerate(path):
            rank = ix if j == 0 else rank * (ell - 1) + ix
            eids.append(offsets[j] + rank)
        ids.append(tuple(eids))
    return ids


def _digits(idx, k, place):
    # digit of each config at a given edge place (most significant = edge 0)
    if k == 2:
        return (idx >> place) & 1
    return (idx // k ** place) % k


@lru_cache(maxsize=4)
def _config_distribution(law, beta, ell, n, max_configs):
    """(probabilities, Z_n values) over every environment configuration."""
    values, probs = _finite_atoms(law)
    k = len(values)
    n_edges = tree_edge_count(ell, n)
    n_configs = k ** n_edges
    if n_configs > max_configs:
        raise WorkBudgetError(
            f"{k}^{n_edges} = {n_configs} configurations exceed the budget {max_configs}"
        )
    idx = np.arange(n_configs, dtype=np.int64)
    p_atom = np.asarray(probs)
    w_atom = np.exp(-beta * np.asarray(values))

    # mixed-radix order over the breadth-first edge enumeration
    p = np.ones(n_configs)
    for e in range(n_edges):
        p *= p_atom[_digits(idx, k, n_edges - 1 - e)]

    z = np.zeros(n_configs)
    for eids in _path_edge_ids(ell, n):
        wp = np.ones(n_configs)
        for e in eids:
            wp *= w_atom[_digits(idx, k, n_edges - 1 - e)]
        z += wp
    z /= saw_count(ell, n) * law.laplace(beta) ** n
    return p, z


def exact_expectation(
    law, beta, ell, n, functional, *, theta=None, threshold=None, max_configs=MAX_CONFIGS
):
    """Exact E[g(Z_n)] by exhausting the finite environment configurations.

    functional: "mean_zn" | "second_moment" | "fractional_moment" (needs
    theta) | "indicator" (needs threshold; computes P(Z_n > threshold)).
    """
    if ell < 2:
        raise ValueError(f"ell must be >= 2: {ell}")
    if n < 0:
        raise ValueError(f"n must be >= 0: {n}")
    if functional not in FUNCTIONALS:
        raise ValueError(f"unknown functional {functional!r}; expected one of {FUNCTIONALS}")
    if n == 0:
        z0 = np.array([1.0])
        p0 = np.array([1.0])
        p, z = p0, z0
    else:
        p, z = _config_distribution(law, float(beta), int(ell), int(n), int(max_configs))
    if functional == "mean_zn":
        g = z
    elif functional == "second_moment":
        g = z * z
    elif functional == "fractional_moment":
        if theta is None or theta <= 0.0:
            raise ValueError("fractional_moment needs theta > 0")
        g = z ** theta
    else:
        if threshold is None:
            raise ValueError("indicator needs a threshold")
        g = (z > threshold).astype(float)
    return float(np.sum(p * g))
