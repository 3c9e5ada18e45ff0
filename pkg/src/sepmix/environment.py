"""Quenched environments: sampling, potential profiles, trap geometry.

Sites are numbered 1..n in every public signature.  Internally arrays
are 0-based, so ``omega[x - 1]`` is the parameter at site ``x``; the
docstrings below always speak in site numbers.

The potential assigns ``v[1] = 0`` and increments
``v[x] - v[x-1] = log((1 - omega_x) / omega_{x-1})``; the i.i.d.
comparison profile uses ``log rho_x`` increments instead.  Both agree
up to the boundary term ``log(omega_x / omega_1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyRange, SepmixError, ShapeMismatch
from .law import LawSpec, analytics, q_n

_ENV_STREAM_TAG = 0x0E17


def _site_uniforms(seed: int, n: int) -> np.ndarray:
    """First n uniforms of the counter-based site stream for this seed.

    Philox is counter-based, so the stream prefix does not depend on n:
    extending the segment reuses the same draws for the old sites.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(_ENV_STREAM_TAG,))
    gen = np.random.Generator(np.random.Philox(ss))
    return gen.random(n)


@dataclass(frozen=True)
class Environment:
    """A quenched draw omega_1..omega_n plus its provenance."""

    n: int
    omega: np.ndarray
    law: Optional[LawSpec] = None
    seed: Optional[int] = None

    def __post_init__(self):
        om = np.asarray(self.omega, dtype=float)
        if om.shape != (self.n,):
            raise ShapeMismatch("omega must have length n")
        if np.any(om <= 0.0) or np.any(om >= 1.0):
            raise SepmixError("omega entries must lie in (0, 1)")
        if self.law is not None:
            a = self.law.alpha
            if np.any(om < a - 1e-12) or np.any(om > 1.0 - a + 1e-12):
                raise SepmixError(
                    "omega entries must lie in [alpha, 1 - alpha]")
        object.__setattr__(self, "omega", om)

    @classmethod
    def from_omega(cls, omega, law: Optional[LawSpec] = None) -> "Environment":
        om = np.asarray(omega, dtype=float)
        return cls(n=om.size, omega=om, law=law, seed=None)

    def omega_at(self, site: int) -> float:
        """Parameter at a 1-based site."""
        if not (1 <= site <= self.n):
            raise IndexError(f"site {site} outside 1..{self.n}")
        return float(self.omega[site - 1])


def sample_env(law: LawSpec, n: int, seed: int) -> Environment:
    """Draw omega_1..omega_n i.i.d. from the law, one uniform per site.

    Deterministic in (law, n, seed); any prefix of the sites matches the
    environment sampled with the same seed at a shorter n.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    u = _site_uniforms(seed, n)
    if law.kind == "two-point":
        om = np.where(u < law.p, law.alpha, 1.0 - law.alpha)
    elif law.kind == "finite-discrete":
        vals = np.asarray(law.values, float)
        cum = np.cumsum(np.asarray(law.weights, float))
        cum[-1] = 1.0
        om = vals[np.searchsorted(cum, u, side="right")]
    else:
        ug, vg = law.quantiles
        om = np.interp(u, np.asarray(ug, float), np.asarray(vg, float))
    return Environment(n=n, omega=om, law=law, seed=seed)


@dataclass(frozen=True)
class PotentialProfile:
    """Potential v, i.i.d. profile v_bar, and jump ratios, all length n."""

    n: int
    v: np.ndarray
    v_bar: np.ndarray
    rho: np.ndarray


def potential(env: Environment) -> PotentialProfile:
    om = env.omega
    rho = (1.0 - om) / om
    inc_v = np.log(1.0 - om[1:]) - np.log(om[:-1])
    v = np.concatenate(([0.0], np.cumsum(inc_v)))
    v_bar = np.concatenate(([0.0], np.cumsum(np.log(rho[1:]))))
    return PotentialProfile(n=env.n, v=v, v_bar=v_bar, rho=rho)


@dataclass(frozen=True)
class Trap:
    """An uphill stretch: sites x <= y with depth v[y] - v[x]."""

    x: int
    y: int
    depth: float

    @property
    def length(self) -> int:
        return self.y - self.x


def deepest_trap(profile: PotentialProfile, lo: int = 1, hi: Optional[int] = None) -> Trap:
    """Maximise v[y] - v[x] over lo <= x <= y <= hi in one scan.

    Ties resolve to the smallest x, then the smallest y, so a monotone
    non-increasing profile returns the zero-depth trap at (lo, lo).
    """
    hi = profile.n if hi is None else hi
    if not (1 <= lo <= hi <= profile.n):
        raise EmptyRange(f"range [{lo}, {hi}] invalid for n={profile.n}")
    vv = profile.v[lo - 1:hi]
    prefix_min = np.minimum.accumulate(vv)
    gains = vv - prefix_min
    # first argmax: the running-min position is non-decreasing in y, so the
    # earliest maximal gain realises the smallest x and then the smallest y
    iy = int(np.argmax(gains))
    ix = int(np.argmax(vv == prefix_min[iy]))
    return Trap(x=lo + ix, y=lo + iy, depth=float(gains[iy]))


def constrained_max_gain(profile: PotentialProfile, q: int,
                         lo: int = 1, hi: Optional[int] = None) -> float:
    """max v[y] - v[x] over pairs in [lo, hi] with y - x >= q."""
    hi = profile.n if hi is None else hi
    if not (1 <= lo <= hi <= profile.n):
        raise EmptyRange(f"range [{lo}, {hi}] invalid for n={profile.n}")
    if q < 0 or lo + q > hi:
        raise EmptyRange(f"no pair with separation >= {q} inside [{lo}, {hi}]")
    vv = profile.v[lo - 1:hi]
    prefix_min = np.minimum.accumulate(vv)
    if q == 0:
        return float(np.max(vv - prefix_min))
    return float(np.max(vv[q:] - prefix_min[:-q]))


def check_event_A(env: Environment, q: int) -> bool:
    """True iff every gain over separations >= q is at most -3 log n."""
    prof = potential(env)
    return constrained_max_gain(prof, q) <= -3.0 * math.log(env.n)


def half_fill_census(profile: PotentialProfile, x2: int, y2: int):
    """Sites of [x2, y2] with potential below the window midpoint level.

    Returns (sites array, count); the count is the natural particle
    number for the window in hitting-time bounds.
    """
    if not (1 <= x2 <= y2 <= profile.n):
        raise EmptyRange(f"window [{x2}, {y2}] invalid for n={profile.n}")
    v = profile.v
    level = 0.5 * (v[x2 - 1] + v[y2 - 1])
    sites = np.arange(x2, y2 + 1)[v[x2 - 1:y2] <= level]
    return sites, int(sites.size)


@dataclass(frozen=True)
class TrapWindowStats:
    """Per-seed trap-depth fluctuations around (1/lambda) log n."""

    n: int
    lam: float
    q: int
    seeds: np.ndarray
    depth: np.ndarray           # deepest-trap depth per seed
    centered: np.ndarray        # depth - (1/lambda) log n
    trap_length: np.ndarray     # y - x of the argmax trap
    window_lo: float            # -(1+eps)/lambda * loglog n
    window_hi: float            # eps/lambda * loglog n
    frac_in_window: float
    frac_in_sym_window: float   # +- 2/lambda * loglog n
    frac_short: float           # trap length <= q_n

    def quantiles(self, qs=(0.1, 0.25, 0.5, 0.75, 0.9)) -> dict:
        return {float(q): float(np.quantile(self.centered, q)) for q in qs}


def trap_depth_window_stats(law: LawSpec, n: int, seeds: Sequence[int],
                            eps: float = 1.0) -> TrapWindowStats:
    """Depth of the deepest trap across seeds, centred at (1/lambda) log n.

    Reports the fraction of seeds inside the one-sided window
    [-(1+eps)/lambda loglog n, eps/lambda loglog n], inside the symmetric
    +-(2/lambda) loglog n window, and with argmax trap length <= q_n.
    """
    ana = analytics(law)
    if not math.isfinite(ana.lam):
        raise ValueError("trap statistics require a finite tilt root")
    lam = ana.lam
    q = q_n(law, n)
    lln = math.log(math.log(n))
    center = math.log(n) / lam
    depth = np.empty(len(seeds))
    length = np.empty(len(seeds), dtype=int)
    for i, s in enumerate(seeds):
        trap = deepest_trap(potential(sample_env(law, n, int(s))))
        depth[i] = trap.depth
        length[i] = trap.length
    centered = depth - center
    lo = -(1.0 + eps) / lam * lln
    hi = eps / lam * lln
    sym = 2.0 / lam * lln
    return TrapWindowStats(
        n=n, lam=lam, q=q,
        seeds=np.asarray(seeds, dtype=int),
        depth=depth, centered=centered, trap_length=length,
        window_lo=lo, window_hi=hi,
        frac_in_window=float(np.mean((centered >= lo) & (centered <= hi))),
        frac_in_sym_window=float(np.mean(np.abs(centered) <= sym)),
        frac_short=float(np.mean(length <= q)),
    )
