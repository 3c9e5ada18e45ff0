"""Exact equilibrium tables for a fixed particle number.

The reversible measure weights a configuration by
``exp(-sum_x v[x] xi(x))``.  Everything here works in log space through
the two-index partition recursion

    log_z[m][j] = logaddexp(log_z[m-1][j], log_w[m] + log_z[m-1][j-1])

over window sites m = 1..L and particle counts j = 0..k, which is exact
up to float rounding for any potential scale.  Tables can cover the
full segment or a sub-window (weights keep their global values; the
normaliser absorbs any constant shift of the potential).
"""

from __future__ import annotations

import math
from itertools import combinations
from typing import Optional

import numpy as np

from .errors import BadK, ShapeMismatch
from .environment import PotentialProfile
from .state import Configuration

_NEG_INF = -math.inf


def _build_log_z(log_w: np.ndarray, k: int) -> np.ndarray:
    L = log_w.size
    log_z = np.full((L + 1, k + 1), _NEG_INF)
    log_z[:, 0] = 0.0
    for m in range(1, L + 1):
        kk = min(m, k)
        log_z[m, 1:kk + 1] = np.logaddexp(
            log_z[m - 1, 1:kk + 1],
            log_w[m - 1] + log_z[m - 1, 0:kk],
        )
    return log_z


class EquilibriumTable:
    """Partition table over a window of sites with k particles."""

    def __init__(self, log_weights, k: int, first_site: int = 1):
        lw = np.asarray(log_weights, dtype=float)
        if lw.ndim != 1 or lw.size == 0:
            raise ShapeMismatch("log weights must be a nonempty vector")
        if not (0 <= k <= lw.size):
            raise BadK(f"need 0 <= k <= {lw.size}, got {k}")
        self.L = int(lw.size)
        self.k = int(k)
        self.first_site = int(first_site)
        self.log_w = lw
        self.log_z = _build_log_z(lw, k)
        self._log_zs: Optional[np.ndarray] = None

    # -- constructors --------------------------------------------------

    @classmethod
    def from_profile(cls, profile: PotentialProfile, k: int) -> "EquilibriumTable":
        return cls(-profile.v, k, first_site=1)

    @classmethod
    def from_profile_window(cls, profile: PotentialProfile, a: int, b: int,
                            k: int) -> "EquilibriumTable":
        if not (1 <= a <= b <= profile.n):
            raise ShapeMismatch(f"window [{a}, {b}] invalid for n={profile.n}")
        return cls(-profile.v[a - 1:b], k, first_site=a)

    # -- suffix table, built on demand ----------------------------------

    def _suffix(self) -> np.ndarray:
        if self._log_zs is None:
            # log_zs[m][j]: partition of window sites m..L with j particles,
            # indexed so that log_zs[L + 1][0] = 0
            L, k = self.L, self.k
            zs = np.full((L + 2, k + 1), _NEG_INF)
            zs[:, 0] = 0.0
            for m in range(L, 0, -1):
                kk = min(L - m + 1, k)
                zs[m, 1:kk + 1] = np.logaddexp(
                    zs[m + 1, 1:kk + 1],
                    self.log_w[m - 1] + zs[m + 1, 0:kk],
                )
            self._log_zs = zs
        return self._log_zs

    # -- exact queries ---------------------------------------------------

    @property
    def log_Z(self) -> float:
        return float(self.log_z[self.L, self.k])

    def prob(self, xi: Configuration) -> float:
        if xi.n != self.L:
            raise ShapeMismatch(f"configuration length {xi.n} != window length {self.L}")
        if xi.k != self.k:
            raise BadK(f"configuration has {xi.k} particles, table has {self.k}")
        logp = sum(self.log_w[x - 1] for x in xi.positions) - self.log_Z
        return math.exp(logp)

    def sample(self, rng: np.random.Generator) -> Configuration:
        """Exact backward sampling: scan sites right to left."""
        occ = np.zeros(self.L, dtype=np.uint8)
        j = self.k
        for m in range(self.L, 0, -1):
            if j == 0:
                break
            if j == m:
                occ[:m] = 1
                break
            log_occ = self.log_w[m - 1] + self.log_z[m - 1, j - 1] - self.log_z[m, j]
            if rng.random() < math.exp(log_occ):
                occ[m - 1] = 1
                j -= 1
        return Configuration(occ)

    def marginals(self) -> np.ndarray:
        """Occupation probability per window site (sums to k)."""
        if self.k == 0:
            return np.zeros(self.L)
        zs = self._suffix()
        out = np.empty(self.L)
        for x in range(1, self.L + 1):
            js = np.arange(1, self.k + 1)
            terms = (self.log_z[x - 1, js - 1] + self.log_w[x - 1]
                     + zs[x + 1, self.k - js])
            m = np.max(terms)
            out[x - 1] = 0.0 if m == _NEG_INF else math.exp(
                m + math.log(np.sum(np.exp(terms - m))) - self.log_Z)
        return out

    def leftmost_law(self) -> np.ndarray:
        """Distribution of the leftmost particle position (window-local)."""
        if self.k == 0:
            raise BadK("no particles")
        zs = self._suffix()
        out = np.zeros(self.L)
        for x in range(1, self.L - self.k + 2):
            out[x - 1] = math.exp(self.log_w[x - 1] + zs[x + 1, self.k - 1] - self.log_Z)
        return out

    def rightmost_empty_law(self) -> np.ndarray:
        """Distribution of the rightmost empty site (window-local).

        Entry y - 1 is the probability that site y is empty while
        y+1..L are all occupied.
        """
        if self.k == self.L:
            raise BadK("no empty site")
        out = np.zeros(self.L)
        suffix_w = 0.0
        for y in range(self.L, 0, -1):
            forced = self.L - y            # particles pinned at y+1..L
            rest = self.k - forced         # particles among 1..y-1
            if 0 <= rest <= y - 1:
                out[y - 1] = math.exp(suffix_w + self.log_z[y - 1, rest] - self.log_Z)
            suffix_w += self.log_w[y - 1]
        return out

    def prob_A_r(self, r: int, method: str = "dp") -> float:
        """Mass of the event "within r of the packed-right configuration".

        Sites <= L - k - r empty, sites > L - k + r occupied, free window
        of width at most 2r at the interface.  ``method="enumerate"``
        sums the window patterns directly (cross-validation route).
        """
        if r < 0:
            raise ValueError("r must be >= 0")
        L, k = self.L, self.k
        w_lo = max(1, L - k - r + 1)
        w_hi = min(L, L - k + r)
        forced_start = L - k + r + 1
        n_forced = max(0, L - forced_start + 1)
        k_free = k - n_forced
        if k_free < 0 or k_free > max(0, w_hi - w_lo + 1):
            return 0.0
        log_forced = float(np.sum(self.log_w[forced_start - 1:]))
        if w_hi < w_lo:
            return math.exp(log_forced - self.log_Z) if k_free == 0 else 0.0
        window_w = self.log_w[w_lo - 1:w_hi]
        if method == "dp":
            log_zw = _build_log_z(window_w, k_free)[w_hi - w_lo + 1, k_free]
        elif method == "enumerate":
            terms = [sum(window_w[list(c)]) for c in
                     combinations(range(window_w.size), k_free)]
            arr = np.array(terms)
            mx = arr.max()
            log_zw = mx + math.log(np.sum(np.exp(arr - mx)))
        else:
            raise ValueError(f"unknown method {method!r}")
        return math.exp(log_forced + log_zw - self.log_Z)

    def mean_var_m(self) -> tuple:
        """Exact mean and variance of m(xi) = sum of occupied site indices.

        Runs the moment-augmented partition recursion; all accumulators
        stay positive, so log space is safe.
        """
        L, k = self.L, self.k
        lz = np.full(k + 1, _NEG_INF)
        ls1 = np.full(k + 1, _NEG_INF)
        ls2 = np.full(k + 1, _NEG_INF)
        lz[0] = 0.0
        for m in range(1, L + 1):
            w = self.log_w[m - 1]
            lm = math.log(m)
            kk = min(m, k)
            j = slice(1, kk + 1)
            jm1 = slice(0, kk)
            new_s2 = np.logaddexp(
                ls2[j],
                w + _log_add3(ls2[jm1], math.log(2.0) + lm + ls1[jm1], 2.0 * lm + lz[jm1]),
            )
            new_s1 = np.logaddexp(ls1[j], w + np.logaddexp(ls1[jm1], lm + lz[jm1]))
            new_z = np.logaddexp(lz[j], w + lz[jm1])
            ls2[j], ls1[j], lz[j] = new_s2, new_s1, new_z
        log_Z = lz[k]
        mean = math.exp(ls1[k] - log_Z) if ls1[k] > _NEG_INF else 0.0
        second = math.exp(ls2[k] - log_Z) if ls2[k] > _NEG_INF else 0.0
        return mean, max(second - mean * mean, 0.0)

    def m_law(self, max_span: int = 2_000_000) -> tuple:
        """Exact law of m(xi): (values array, probabilities array)."""
        L, k = self.L, self.k
        lo = k * (k + 1) // 2
        hi = k * (2 * L - k + 1) // 2
        span = hi - lo + 1
        if span * (k + 1) > max_span:
            raise MemoryError("m-law table too large")
        # dist[j, s]: log partition over j-particle patterns with m = lo_j + s,
        # tracked on the absolute scale s = m (0..hi)
        dist = np.full((k + 1, hi + 1), _NEG_INF)
        dist[0, 0] = 0.0
        for m in range(1, L + 1):
            w = self.log_w[m - 1]
            for j in range(min(m, k), 0, -1):
                shifted = np.full(hi + 1, _NEG_INF)
                if m <= hi:
                    shifted[m:] = dist[j - 1, :hi + 1 - m]
                dist[j] = np.logaddexp(dist[j], w + shifted)
        logs = dist[k, lo:hi + 1]
        mx = np.max(logs)
        probs = np.exp(logs - mx)
        probs /= probs.sum()
        return np.arange(lo, hi + 1), probs

    def median_m(self) -> float:
        vals, probs = self.m_law()
        cdf = np.cumsum(probs)
        return float(vals[int(np.searchsorted(cdf, 0.5))])


def _log_add3(a, b, c):
    return np.logaddexp(np.logaddexp(a, b), c)


def prob_max_window(profile: PotentialProfile, window: tuple, k: int) -> float:
    """Equilibrium mass of the packed-right configuration of a sub-window."""
    a, b = window
    table = EquilibriumTable.from_profile_window(profile, a, b, k)
    occ = np.zeros(table.L, dtype=np.uint8)
    occ[table.L - k:] = 1
    return table.prob(Configuration(occ))
