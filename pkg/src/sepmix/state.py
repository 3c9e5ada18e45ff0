"""Particle configurations on the segment and their partial order.

A configuration is an occupancy vector over sites 1..n with a fixed
particle number k.  Ordered particle positions give the componentwise
partial order: a <= b iff the i-th leftmost particle of a sits no
further right than the i-th leftmost particle of b, for every i.
"""

from __future__ import annotations

import numpy as np

from .errors import BadK, ShapeMismatch


class Configuration:
    """Immutable occupancy vector with both views (bits and positions)."""

    __slots__ = ("n", "occupancy", "positions", "_hash")

    def __init__(self, occupancy):
        # own the buffer: a view of a live board would mutate underneath
        occ = np.array(occupancy, dtype=np.uint8, copy=True)
        if occ.ndim != 1 or occ.size == 0:
            raise ShapeMismatch("occupancy must be a nonempty vector")
        if np.any(occ > 1):
            raise ValueError("occupancy entries must be 0 or 1")
        occ.setflags(write=False)
        object.__setattr__(self, "n", int(occ.size))
        object.__setattr__(self, "occupancy", occ)
        object.__setattr__(self, "positions", tuple(int(x) + 1 for x in np.flatnonzero(occ)))
        object.__setattr__(self, "_hash", hash((self.n, occ.tobytes())))

    def __setattr__(self, name, value):
        raise AttributeError("Configuration is immutable")

    @property
    def k(self) -> int:
        return len(self.positions)

    @classmethod
    def from_positions(cls, n: int, positions) -> "Configuration":
        occ = np.zeros(n, dtype=np.uint8)
        for x in positions:
            if not (1 <= x <= n):
                raise ShapeMismatch(f"position {x} outside 1..{n}")
            if occ[x - 1]:
                raise ValueError(f"duplicate position {x}")
            occ[x - 1] = 1
        return cls(occ)

    @classmethod
    def from_string(cls, bits: str) -> "Configuration":
        return cls(np.frombuffer(bits.encode(), dtype=np.uint8) - ord("0"))

    def to_string(self) -> str:
        return "".join("1" if b else "0" for b in self.occupancy)

    def __repr__(self):
        return f"Configuration({self.to_string()!r})"

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.occupancy, other.occupancy)

    def __hash__(self):
        return self._hash


def extremal(n: int, k: int) -> tuple:
    """(minimal, maximal) configurations: k packed left, k packed right."""
    if not (1 <= k <= n - 1):
        raise BadK(f"need 1 <= k <= n - 1, got k={k}, n={n}")
    lo = np.zeros(n, dtype=np.uint8)
    lo[:k] = 1
    hi = np.zeros(n, dtype=np.uint8)
    hi[n - k:] = 1
    return Configuration(lo), Configuration(hi)


def _check_comparable(a: Configuration, b: Configuration):
    if a.n != b.n:
        raise ShapeMismatch(f"segment lengths differ: {a.n} vs {b.n}")
    if a.k != b.k:
        raise BadK(f"particle numbers differ: {a.k} vs {b.k}")


def leq(a: Configuration, b: Configuration) -> bool:
    """Componentwise order of sorted particle positions."""
    _check_comparable(a, b)
    return all(x <= y for x, y in zip(a.positions, b.positions))


def swap(xi: Configuration, x: int, y: int) -> Configuration:
    """Exchange the values at sites x and y (new configuration)."""
    for s in (x, y):
        if not (1 <= s <= xi.n):
            raise ShapeMismatch(f"site {s} outside 1..{xi.n}")
    occ = xi.occupancy.copy()
    occ[x - 1], occ[y - 1] = occ[y - 1], occ[x - 1]
    return Configuration(occ)


def observable_m(xi: Configuration) -> int:
    """Sum of occupied site indices; strictly monotone in the order."""
    return int(sum(xi.positions))


def tail_count(xi: Configuration, y: int) -> int:
    """Number of particles strictly beyond site y, for y in 0..n."""
    if not (0 <= y <= xi.n):
        raise ShapeMismatch(f"y={y} outside 0..{xi.n}")
    return int(xi.occupancy[y:].sum())


def in_A_r(xi: Configuration, r: int) -> bool:
    """Is xi within distance r of the maximal configuration?

    Concretely: all sites <= n - k - r are empty and all sites
    > n - k + r are occupied, leaving a free window of width 2r around
    the interface.  r = 0 picks out the maximal configuration alone;
    r >= n is vacuous.
    """
    if r < 0:
        raise ValueError("r must be >= 0")
    n, k = xi.n, xi.k
    occ = xi.occupancy
    left_end = n - k - r          # sites 1..left_end must be empty
    right_start = n - k + r + 1   # sites right_start..n must be occupied
    if left_end >= 1 and occ[:left_end].any():
        return False
    if right_start <= n and not occ[right_start - 1:].all():
        return False
    return True


def hamming(a: Configuration, b: Configuration) -> int:
    """Half the symmetric difference of the occupancy sets."""
    _check_comparable(a, b)
    return int(np.sum(a.occupancy != b.occupancy)) // 2


def discrepancy_pairs(a: Configuration, b: Configuration) -> tuple:
    """Sorted surplus sites of a and of b; equal lengths by construction."""
    _check_comparable(a, b)
    xs = np.flatnonzero((a.occupancy == 1) & (b.occupancy == 0)) + 1
    ys = np.flatnonzero((b.occupancy == 1) & (a.occupancy == 0)) + 1
    return tuple(int(x) for x in xs), tuple(int(y) for y in ys)
