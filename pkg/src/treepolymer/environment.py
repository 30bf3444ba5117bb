"""Seed-keyed random environments on the degree-ell tree.

An edge is identified with its endpoint farther from the root, and that
vertex with the sequence of child indices leading to it: the first index
is in [0, ell) (the root has ell neighbors), every later index is in
[0, ell-1).  Edges are coded as prefix-free byte strings and, internally,
by (depth, rank), where rank is the mixed-radix number spelled by the
index sequence.

Sampling is counter-based: a 64-bit mix of (seed, depth, rank) yields one
uniform, pushed through the law's quantile function.  One draw per edge,
no rejection and no sequential state, so the environment is a pure
function of (seed, code) and parallel traversal order cannot change it.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .laws import ConductanceLaw

__all__ = ["Environment", "edge_code", "decode_edge", "path_rank", "EdgeCodeError"]

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_DEPTH_SALT = 0xD1342543DE82EF95
_RANK_SALT = 0xAF251AF3B0F025B5

MAX_DEPTH = 0xFFFF  # two-byte depth prefix in edge codes


class EdgeCodeError(ValueError):
    """Invalid edge path or byte code."""


def mix64(z):
    """SplitMix64 finalizer on python ints (mod 2**64)."""
    z &= _MASK
    z ^= z >> 30
    z = (z * _M1) & _MASK
    z ^= z >> 27
    z = (z * _M2) & _MASK
    return z ^ (z >> 31)


def _mix64_u64(z):
    # vectorized twin of mix64; z is a uint64 array, modified in place
    z ^= z >> np.uint64(30)
    z *= np.uint64(_M1)
    z ^= z >> np.uint64(27)
    z *= np.uint64(_M2)
    z ^= z >> np.uint64(31)
    return z


def _check_path(path, ell):
    if len(path) == 0:
        raise EdgeCodeError("empty path: the root has no parent edge")
    if len(path) > MAX_DEPTH:
        raise EdgeCodeError(f"path deeper than {MAX_DEPTH}")
    if not (0 <= path[0] < ell):
        raise EdgeCodeError(f"first child index {path[0]} out of range [0,{ell})")
    for ix in path[1:]:
        if not (0 <= ix < ell - 1):
            raise EdgeCodeError(f"child index {ix} out of range [0,{ell - 1})")


def edge_code(path, ell):
    """Prefix-free byte code of an edge given its child-index path.

    Layout: two big-endian depth bytes, then one byte per index.  Codes of
    different depth differ in the prefix, codes of equal depth have equal
    length, so no code is a proper prefix of another.
    """
    if ell < 2 or ell > 256:
        raise EdgeCodeError(f"ell must be in [2,256]: {ell}")
    path = tuple(int(i) for i in path)
    _check_path(path, ell)
    d = len(path)
    return bytes([d >> 8, d & 0xFF, *path])


def decode_edge(code, ell):
    """Inverse of edge_code."""
    if len(code) < 3:
        raise EdgeCodeError(f"code too short: {code!r}")
    d = (code[0] << 8) | code[1]
    if len(code) != 2 + d:
        raise EdgeCodeError(f"code length {len(code)} does not match depth {d}")
    path = tuple(code[2:])
    _check_path(path, ell)
    return path


def path_rank(path, ell):
    """Mixed-radix rank of the path among the depth-d edges, in [0, c_d)."""
    rank = path[0]
    for ix in path[1:]:
        rank = rank * (ell - 1) + ix
    return rank


@dataclass(frozen=True)
class Environment:
    """A realization of the i.i.d. conductance field, keyed by a seed."""

    law: ConductanceLaw
    seed: int
    ell: int
    _base: int = field(init=False, repr=False, compare=False, default=0)

    def __post_init__(self):
        if self.ell < 2 or self.ell > 256:
            raise ValueError(f"ell must be in [2,256]: {self.ell}")
        object.__setattr__(self, "seed", int(self.seed) & _MASK)
        object.__setattr__(self, "_base", mix64(self.seed ^ _GOLDEN))

    def _depth_key(self, depth):
        return mix64(self._base ^ ((depth * _DEPTH_SALT) & _MASK))

    # vectorized interface (the engine's hot path)

    def uniforms_at(self, depth, ranks):
        """Uniforms in (0,1) for the depth-`depth` edges with the given ranks.

        The top 52 hash bits are planted into a float mantissa (a cast-free
        bit view), giving the grid k*2^-52 + 2^-53, strictly inside (0,1).
        """
        h = np.asarray(ranks, dtype=np.uint64) * np.uint64(_RANK_SALT)
        h ^= np.uint64(self._depth_key(depth))
        h = _mix64_u64(h)
        h >>= np.uint64(12)
        h |= np.uint64(0x3FF0000000000000)
        u = h.view(np.float64)
        u -= 1.0 - 2.0 ** -53
        return u

    def samples_at(self, depth, ranks):
        """Conductance samples for a whole batch of same-depth edges."""
        return self.law.ppf(self.uniforms_at(depth, ranks))

    def boltzmann_at(self, depth, ranks, beta, shift):
        """-beta * X - shift for a batch of edges, fused where the law allows."""
        return self.law.boltzmann_exponent(self.uniforms_at(depth, ranks), beta, shift)

    # per-edge interface

    def uniform(self, code):
        path = decode_edge(code, self.ell)
        h = mix64(
            self._depth_key(len(path)) ^ ((path_rank(path, self.ell) * _RANK_SALT) & _MASK)
        )
        bits = (h >> 12) | 0x3FF0000000000000
        return struct.unpack("<d", struct.pack("<Q", bits))[0] - (1.0 - 2.0 ** -53)

    def sample(self, code):
        """Deterministic conductance of one edge: hash, one uniform, quantile."""
        u = np.array([self.uniform(code)])
        return float(self.law.ppf(u)[0])
