"""Exact, storage-free computation of Z_n over one environment realization.

Every self-avoiding walk from the root of a tree is the unique descending
path to some depth-n vertex, so the partition sums are computed by level
enumeration: at depth d the array of per-vertex log-weights is expanded to
depth d+1 by one vectorized hash/sample/multiply step.  Per-edge
normalization (1/((ell-1) lambda), 1/(ell lambda) at the root) is folded
into the log-weights, so the level log-sum-exp is log Z_n directly and the
arithmetic stays safe for |beta * sum X| up to ~1e4.

Subtrees hanging below a configurable split depth are independent tasks;
their per-level (max, sum-exp) partials are combined strictly in child
order, which makes the output bit-identical for any worker count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ZnProfile",
    "Susceptibility",
    "PopulationSummary",
    "WorkBudgetError",
    "DEFAULT_WORK_BUDGET",
    "THREADS_ENV_VAR",
    "resolve_workers",
    "compute_profile",
    "susceptibility",
    "free_energy",
    "population_dynamics",
]

DEFAULT_WORK_BUDGET = 2 ** 31
DEFAULT_SPLIT_DEPTH = 4
DEFAULT_CHUNK_WIDTH = 1 << 14  # level arrays stay cache-resident inside a chunk
THREADS_ENV_VAR = "TREEPOLYMER_THREADS"


class WorkBudgetError(RuntimeError):
    """Requested traversal exceeds the configured edge-visit budget."""


def resolve_workers(workers=None):
    """Worker count: the environment variable overrides any configured value.

    Defaults to 1: extra workers only help when each has cache to itself,
    so parallelism is strictly opt-in (explicit argument, --threads, or
    TREEPOLYMER_THREADS).  Results are bit-identical either way.
    """
    env = os.environ.get(THREADS_ENV_VAR)
    if env:
        return max(1, int(env))
    if workers:
        return max(1, int(workers))
    return 1


@dataclass
class ZnProfile:
    """The sequence Z_0..Z_N for one environment, plus log-scale companions."""

    ell: int
    beta: float
    seed: int
    depth: int
    mode: str
    forward_child: int
    z: np.ndarray
    log_unnormalized: np.ndarray
    free_energy: np.ndarray


def _descend(env, beta, t_norm, depth0, rank0, logw, n_levels, b, keep_frontier=False):
    """Level partials (max, sumexp) for the subtree below a block of vertices.

    `logw` holds the log-weights of a contiguous rank block [rank0, rank0+w)
    at depth `depth0`; children of rank r occupy ranks r*b..r*b+b-1 one level
    down, so the block stays contiguous all the way.
    """
    out = []
    lo = rank0
    width = logw.shape[0]
    for t in range(1, n_levels + 1):
        lo *= b
        width *= b
        ranks = np.arange(lo, lo + width, dtype=np.uint64)
        inc = env.boltzmann_at(depth0 + t, ranks, beta, t_norm)
        logw = np.repeat(logw, b)
        logw += inc
        m = float(logw.max())
        tmp = logw - m
        np.exp(tmp, out=tmp)
        out.append((m, float(tmp.sum())))
    if keep_frontier:
        return out, logw, lo
    return out


def _combine(parts):
    """Merge (max, sumexp) partials from subtree chunks, in chunk order."""
    m = max(p[0] for p in parts)
    if not math.isfinite(m):
        return (m, sum(p[1] for p in parts))
    s = 0.0
    for pm, ps in parts:
        s += ps * math.exp(pm - m)
    return (m, s)


def compute_profile(
    env,
    beta,
    depth,
    mode="root",
    forward_child=0,
    *,
    work_budget=None,
    split_depth=DEFAULT_SPLIT_DEPTH,
    max_chunk_width=DEFAULT_CHUNK_WIDTH,
    workers=None,
):
    """Exact Z_0..Z_depth for one environment.

    mode="root" sums over all SAWs from the root (normalization c_n
    lambda^n); mode="forward" sums over the subtree ahead of the root's
    child `forward_child`, excluding the root edge (normalization
    (ell-1)^n lambda^n), which is the auxiliary martingale used in the
    one-step decomposition.
    """
    if depth < 0:
        raise ValueError(f"depth must be >= 0: {depth}")
    if mode not in ("root", "forward"):
        raise ValueError(f"mode must be 'root' or 'forward': {mode!r}")
    ell = env.ell
    b = ell - 1
    law = env.law
    law._require(beta)
    loglam = law.log_laplace(beta)
    budget = DEFAULT_WORK_BUDGET if work_budget is None else int(work_budget)
    workers = resolve_workers(workers)

    if mode == "root":
        edges = sum(ell * b ** (d - 1) for d in range(1, depth + 1))
    else:
        if not (0 <= forward_child < ell):
            raise ValueError(f"forward_child must be in [0,{ell}): {forward_child}")
        edges = sum(b ** m for m in range(1, depth + 1))
    if edges > budget:
        raise WorkBudgetError(
            f"{edges} edge visits exceed the work budget {budget}; "
            f"reduce depth or raise the budget"
        )

    t_norm = loglam + math.log(b)
    levels = [None] * depth  # (max, sumexp) for n = 1..depth

    if mode == "root":
        if depth >= 1:
            logw = env.boltzmann_at(
                1, np.arange(ell, dtype=np.uint64), beta, loglam + math.log(ell)
            )
            m = float(logw.max())
            tmp = logw - m
            np.exp(tmp, out=tmp)
            levels[0] = (m, float(tmp.sum()))
        depth0, lo0, logw0 = 1, 0, logw if depth >= 1 else None
        n_levels = depth - 1
        level_offset = 1  # _descend level t lands at profile index t + offset
    else:
        depth0, lo0 = 1, forward_child
        logw0 = np.zeros(1)
        n_levels = depth
        level_offset = 0

    if n_levels > 0:
        # Trunk until the split point, then one task per split-level vertex.
        # The split depends only on (split_depth, max_chunk_width), never on
        # the worker count: chunk boundaries change float grouping, and the
        # output must be bit-identical for any parallelism.
        if b ** n_levels <= max_chunk_width:
            t_split = n_levels  # whole subtree fits one chunk, plain sweep
        else:
            t_split = min(max(split_depth - depth0, 0), n_levels)
            while b ** (n_levels - t_split) > max_chunk_width and t_split < n_levels:
                t_split += 1

        if t_split > 0:
            trunk, frontier, lo = _descend(
                env, beta, t_norm, depth0, lo0, logw0, t_split, b, keep_frontier=True
            )
            for t, part in enumerate(trunk, start=1):
                levels[t + level_offset - 1] = part
        else:
            frontier, lo = logw0, lo0

        if t_split < n_levels:

            def run_chunk(k):
                return _descend(
                    env,
                    beta,
                    t_norm,
                    depth0 + t_split,
                    lo + k,
                    frontier[k : k + 1].copy(),
                    n_levels - t_split,
                    b,
                )

            n_chunks = frontier.shape[0]
            if workers > 1 and n_chunks > 1:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    chunk_parts = list(pool.map(run_chunk, range(n_chunks)))
            else:
                chunk_parts = [run_chunk(k) for k in range(n_chunks)]
            for t in range(1, n_levels - t_split + 1):
                levels[t_split + t + level_offset - 1] = _combine(
                    [cp[t - 1] for cp in chunk_parts]
                )

    logz = np.zeros(depth + 1)
    for n in range(1, depth + 1):
        m, s = levels[n - 1]
        logz[n] = m + math.log(s)

    ns = np.arange(depth + 1, dtype=np.float64)
    addback = ns * (loglam + math.log(b))
    if mode == "root":
        addback[1:] += math.log(ell / b)
    log_unnorm = logz + addback
    fe = np.full(depth + 1, np.nan)
    if depth >= 1:
        fe[1:] = log_unnorm[1:] / ns[1:]
    return ZnProfile(
        ell=ell,
        beta=beta,
        seed=env.seed,
        depth=depth,
        mode=mode,
        forward_child=forward_child if mode == "forward" else 0,
        z=np.exp(logz),
        log_unnormalized=log_unnorm,
        free_energy=fe,
    )


@dataclass
class Susceptibility:
    """Truncated susceptibility series with a tail diagnostic."""

    h: float
    terms: np.ndarray
    partial_sums: np.ndarray
    tail_ratio: float
    diverging: bool


def susceptibility(env, beta, h, depth, **profile_kwargs):
    """Partial sums S_0..S_depth of sum_n c_n lambda^n e^{-h n} Z_n.

    The series is infinite; this reports partial sums plus the empirical
    geometric ratio of the last terms, and flags divergence when the
    running term grows for 10 consecutive n.
    """
    prof = compute_profile(env, beta, depth, **profile_kwargs)
    log_terms = prof.log_unnormalized - h * np.arange(depth + 1)
    terms = np.exp(log_terms)
    partial = np.cumsum(terms)
    diverging = False
    if depth >= 1:
        growth = terms[1:] > terms[:-1]
        run = 0
        for g in growth:
            run = run + 1 if g else 0
            if run >= 10:
                diverging = True
                break
    if depth >= 6:
        tail_ratio = float(np.exp((log_terms[-1] - log_terms[-6]) / 5.0))
    elif depth >= 1:
        tail_ratio = float(np.exp((log_terms[-1] - log_terms[0]) / depth))
    else:
        tail_ratio = float("nan")
    return Susceptibility(
        h=h, terms=terms, partial_sums=partial, tail_ratio=tail_ratio, diverging=diverging
    )


def free_energy(env, beta, depth, **profile_kwargs):
    """(1/N) log of the unnormalized depth-N partition sum; tends to h_q."""
    if depth < 1:
        raise ValueError(f"depth must be >= 1: {depth}")
    prof = compute_profile(env, beta, depth, **profile_kwargs)
    return float(prof.log_unnormalized[depth] / depth)


@dataclass
class PopulationSummary:
    """Pool statistics from the recursive distributional equation."""

    beta: float
    ell: int
    pool_size: int
    generations: int
    mean: float
    median: float
    quantiles: dict
    frac_below: float
    collapse_threshold: float
    degenerate: bool
    mean_path: np.ndarray
    median_path: np.ndarray


QUANTILE_LEVELS = (0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99)


def population_dynamics(
    law, beta, ell, pool_size, generations, seed, *, collapse_threshold=1e-12
):
    """Evolve a particle pool under the forward-tree recursion.

    Each generation every particle is replaced by a weighted sum of ell-1
    uniformly resampled parents with fresh edge weights e^{-beta X} /
    ((ell-1) lambda).  On the tree the recursion is an exact equality
    in distribution, so the pool approximates the law of the forward
    martingale: the mean stays near 1 while the median collapses to 0 in
    strong disorder.  Resampling uses a sequential generator independent
    of the edge-hash stream.
    """
    if pool_size < 1000:
        raise ValueError(f"pool_size must be >= 1000: {pool_size}")
    if generations < 1:
        raise ValueError(f"generations must be >= 1: {generations}")
    if ell < 2:
        raise ValueError(f"ell must be >= 2: {ell}")
    law._require(beta)
    b = ell - 1
    log_norm = law.log_laplace(beta) + math.log(b)
    rng = np.random.default_rng(seed)
    pool = np.ones(pool_size)
    mean_path = np.empty(generations)
    median_path = np.empty(generations)
    for g in range(generations):
        parents = rng.integers(0, pool_size, size=(b, pool_size))
        x = law.ppf(rng.random((b, pool_size)))
        w = np.exp(-beta * np.asarray(x, dtype=np.float64) - log_norm)
        pool = (w * pool[parents]).sum(axis=0)
        mean_path[g] = pool.mean()
        median_path[g] = np.median(pool)
    qs = {q: float(np.quantile(pool, q)) for q in QUANTILE_LEVELS}
    return PopulationSummary(
        beta=beta,
        ell=ell,
        pool_size=pool_size,
        generations=generations,
        mean=float(pool.mean()),
        median=float(np.median(pool)),
        quantiles=qs,
        frac_below=float((pool < collapse_threshold).mean()),
        collapse_threshold=collapse_threshold,
        degenerate=bool(not np.any(pool > 0.0)),
        mean_path=mean_path,
        median_path=median_path,
    )
