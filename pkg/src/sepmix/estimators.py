"""Monte Carlo estimators: mixing times, lower-bound witnesses, scaling.

Every estimator is reproducible bit for bit from (seed, replicas): each
replica derives its own stream from the master seed and the replica
index, and aggregation order is fixed, so worker scheduling can never
change a result.  Confidence intervals on frequencies are Wilson at
level 0.95 through the single routine below; mean-valued estimates use
a normal interval at the same level.
"""

import math
from dataclasses import dataclass
from importlib import resources
import json

import numpy as np

from ._kernels import coupling_time_active
from .dynamics import EventSource, FlowState, evolve, flow_run
from .environment import Environment, deepest_trap, potential, sample_env
from .equilibrium import EquilibriumTable
from .errors import BadK, CapExceeded, EmptyRange, ShapeMismatch
from .law import lambda_root
from .state import extremal, observable_m, tail_count

_Z95 = 1.959963984540054  # two-sided 0.95 normal quantile
_EVENT_BUDGET = 1_000_000_000  # per-replica hard stop, reported as Timeout
_TIME_CAP = 1.0e7

_SEED_COUPLE = 0x5EED
_SEED_WALK = 0x57A7
_SEED_FLOW = 0xF10E
_SEED_ENV = 0x0E57


def wilson_interval(successes, trials, level=0.95):
    """Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise ShapeMismatch("need at least one trial")
    if not 0 <= successes <= trials:
        raise ShapeMismatch("successes outside [0, trials]")
    if level != 0.95:
        from scipy.stats import norm
        z = float(norm.ppf(0.5 * (1.0 + level)))
    else:
        z = _Z95
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = (z / denom) * math.sqrt(p * (1 - p) / trials
                                   + z * z / (4 * trials * trials))
    # the endpoints touch p exactly at the boundaries; keep them there
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == trials else min(1.0, center + half)
    return lo, hi


@dataclass(frozen=True)
class EstimateReport:
    """Point estimate with its interval and provenance."""

    point: float
    ci: tuple
    replicas: int
    seed: int
    method: str
    timeouts: int = 0

    def __post_init__(self):
        if self.replicas < 1:
            raise ShapeMismatch("replicas must be >= 1")
        if not self.ci[0] <= self.point <= self.ci[1]:
            raise ShapeMismatch("interval must contain the point estimate")


def _replica_seed(master, tag, r):
    ss = np.random.SeedSequence(entropy=master, spawn_key=(tag, r))
    return int(ss.generate_state(1)[0])


def _freq_report(hits, replicas, seed, method, timeouts=0):
    lo, hi = wilson_interval(hits, replicas)
    return EstimateReport(point=hits / replicas, ci=(lo, hi),
                          replicas=replicas, seed=seed, method=method,
                          timeouts=timeouts)


def _mean_report(values, seed, method):
    arr = np.asarray(values, float)
    m = float(arr.mean())
    se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return EstimateReport(point=m, ci=(m - _Z95 * se, m + _Z95 * se),
                          replicas=int(arr.size), seed=seed, method=method)


# -- coupling-based mixing time ------------------------------------------


def sample_coupling_times(env, k, replicas, seed, cap):
    """Coalescence time of the extremal pair, one draw per replica.

    Coalescence is permanent, so a single draw answers every time
    threshold at once.  Draws stopped by the cap or the event budget
    come back as inf.
    """
    lo, hi = extremal(env.n, k)
    a0 = np.asarray(lo.occupancy, np.int8)
    b0 = np.asarray(hi.occupancy, np.int8)
    omega = np.asarray(env.omega, float)
    taus = np.empty(replicas)
    for r in range(replicas):
        s = _replica_seed(seed, _SEED_COUPLE, r) & 0x7FFFFFFF
        tau, _, _ = coupling_time_active(a0.copy(), b0.copy(), omega, s,
                                         float(cap), _EVENT_BUDGET)
        taus[r] = tau if tau >= 0.0 else math.inf
    return taus


def estimate_tmix_coupling(env, k, eps, replicas, seed, cap=_TIME_CAP):
    """Mixing-time upper estimate from extremal-pair coalescence.

    Bisects t until the Wilson upper bound on P(not coalesced by t)
    drops to eps; the interval comes from bisecting the Wilson lower
    bound and the upper bound the same way, so point and interval all
    answer "when does this curve cross eps".
    """
    if not 0.0 < eps < 1.0:
        raise ShapeMismatch("eps must lie in (0, 1)")
    taus = sample_coupling_times(env, k, replicas, seed, cap)
    timeouts = int(np.isinf(taus).sum())

    def curve(stat, t):
        exceed = int((taus > t).sum())
        lo, hi = wilson_interval(exceed, replicas)
        return {"lower": lo, "point": exceed / replicas, "upper": hi}[stat]

    def cross(stat):
        # smallest t with curve <= eps, to 5% relative
        if curve(stat, 0.0) <= eps:
            return 0.0
        lo_t, hi_t = 0.0, float(cap)
        while hi_t - lo_t > 0.05 * hi_t:
            mid = 0.5 * (lo_t + hi_t)
            if curve(stat, mid) <= eps:
                hi_t = mid
            else:
                lo_t = mid
        return hi_t

    if curve("upper", float(cap)) > eps:
        raise CapExceeded(f"Wilson bound stays above eps up to t={cap:g} "
                          f"({timeouts} of {replicas} replicas timed out)")
    t_lo = cross("lower")
    t_pt = cross("point")
    t_hi = cross("upper")
    return EstimateReport(point=t_pt, ci=(t_lo, t_hi), replicas=replicas,
                          seed=seed, method="coupling", timeouts=timeouts)


# -- lower-bound witnesses ------------------------------------------------


def _evolved_minimals(env, k, t, replicas, seed):
    lo, _ = extremal(env.n, k)
    for r in range(replicas):
        src = EventSource(env.n, _replica_seed(seed, _SEED_WALK, r))
        yield evolve(lo, env, src, float(t))


@dataclass(frozen=True)
class LeftmostWitness:
    """Frequency of the leftmost particle lagging in the first quarter."""

    report: EstimateReport
    trap: object
    blocking_time: float


def witness_leftmost(env, k, t, replicas, seed):
    """P(leftmost particle of the minimal start is still <= n/4 at t).

    The companion numbers name the obstruction: the deepest potential
    rise inside the first quarter and the blocking time it predicts,
    exp(depth)/(2e) - 1.
    """
    if t < 0:
        raise ShapeMismatch("time must be nonnegative")
    n = env.n
    hits = 0
    for conf in _evolved_minimals(env, k, t, replicas, seed):
        if conf.positions[0] <= n / 4:
            hits += 1
    trap = deepest_trap(potential(env), 1, max(n // 4, 1))
    blocking = math.exp(trap.depth) / (2.0 * math.e) - 1.0
    return LeftmostWitness(
        report=_freq_report(hits, replicas, seed, "leftmost"),
        trap=trap, blocking_time=blocking)


@dataclass(frozen=True)
class FlowWitness:
    """Mean tail count past y2, with its boundary-driven dominator."""

    report: EstimateReport
    bound: float
    absorbed_mean: float
    x2: int
    y2: int
    eps: float


def witness_flow(env, k, y2, t, replicas, seed, eps=0.125):
    """E[J_t], the particles of the minimal start beyond y2 at time t.

    Emits the distance bound 1 - 4 E[J_t]/k - eps.  Each replica also
    drives the boundary-injected window chain on the same event stream;
    its absorbed count dominates J_t path by path, and the mean is
    reported alongside as a sanity anchor.  The injection site pairs y2
    with the lowest potential at or past max(k+1, n/2), the same rule
    that selects the slow window in the first place.
    """
    if t < 0:
        raise ShapeMismatch("time must be nonnegative")
    n = env.n
    if not 2 <= y2 <= n - 1:
        raise ShapeMismatch(f"need 2 <= y2 <= {n - 1}, got {y2}")
    lo_site = max(k + 1, (n + 1) // 2)
    if lo_site > y2:
        raise EmptyRange(f"no room for an injection site in [{lo_site}, {y2}]")
    v = potential(env).v
    x2 = lo_site + int(np.argmin(v[lo_site - 1:y2]))
    lo, _ = extremal(n, k)
    js = np.empty(replicas)
    absorbed = np.empty(replicas)
    for r in range(replicas):
        src = EventSource(n, _replica_seed(seed, _SEED_FLOW, r))
        state, conf = flow_run(env, x2, y2, FlowState.empty(x2, y2), src,
                               float(t), full=lo)
        js[r] = tail_count(conf, y2)
        absorbed[r] = state.absorbed
    rep = _mean_report(js, seed, "flow")
    return FlowWitness(report=rep, bound=1.0 - 4.0 * rep.point / k - eps,
                       absorbed_mean=float(absorbed.mean()), x2=x2, y2=y2,
                       eps=eps)


@dataclass(frozen=True)
class MassWitness:
    """Frequency of the minimal start crossing the equilibrium median mass."""

    report: EstimateReport
    median_m: float
    mean_m: float
    markov_bound: float
    drift_bound: float


def witness_mass(env, k, t, replicas, seed):
    """P(m(minimal start at t) >= median of m under equilibrium).

    m is the sum of particle positions; from the minimal start it can
    only sit above its floor k(k+1)/2, each particle drifts right at
    rate at most one, and crossing the halfway mark k(n+1)/2 therefore
    has probability at most 2t/(n-k).
    """
    if t < 0:
        raise ShapeMismatch("time must be nonnegative")
    n = env.n
    table = EquilibriumTable.from_profile(potential(env), k)
    med = table.median_m()
    ms = np.empty(replicas)
    hits = 0
    for r, conf in enumerate(_evolved_minimals(env, k, t, replicas, seed)):
        ms[r] = observable_m(conf)
        if ms[r] >= med:
            hits += 1
    return MassWitness(
        report=_freq_report(hits, replicas, seed, "mass"),
        median_m=float(med), mean_m=float(ms.mean()),
        markov_bound=2.0 * t / (n - k),
        drift_bound=k * (k + 1) / 2.0 + k * t)


# -- scaling harness ------------------------------------------------------


@dataclass(frozen=True)
class ScalingRow:
    """One system size of a scaling sweep."""

    n: int
    k: int
    beta: float
    lambda_ref: float
    t_hat: float
    ci: tuple
    timeouts: int
    predicted_exponent: float
    censored: bool = False

    def __post_init__(self):
        if self.k > self.n / 2:
            raise BadK(f"k={self.k} exceeds n/2={self.n / 2}")


@dataclass(frozen=True)
class ScalingResult:
    rows: tuple
    slope: float
    slope_se: float
    eps: float
    seed: int


def predicted_exponent(lam, beta):
    """max(1, 1/lambda, beta + 1/(2 lambda)); barrier terms die as lam -> inf."""
    inv = 0.0 if math.isinf(lam) else 1.0 / lam
    return max(1.0, inv, beta + 0.5 * inv)


def fit_loglog(ns, ts):
    """Least-squares slope of log t against log n, with standard error."""
    x = np.log(np.asarray(ns, float))
    y = np.log(np.asarray(ts, float))
    if x.size < 2:
        raise ShapeMismatch("need at least two points to fit a slope")
    xc = x - x.mean()
    slope = float((xc @ y) / (xc @ xc))
    if x.size == 2:
        return slope, 0.0
    resid = y - (y.mean() + slope * xc)
    var = float((resid @ resid) / (x.size - 2))
    return slope, math.sqrt(var / float(xc @ xc))


def scaling_run(law, beta, ns, eps, replicas, seed, cap=_TIME_CAP):
    """Mixing-time scaling across system sizes at k = ceil(n^beta).

    Each size gets its own sampled environment and coupling estimate;
    rows whose bracket cannot close under the cap are kept but marked
    censored and left out of the slope fit.
    """
    lam = lambda_root(law)
    rows = []
    for i, n in enumerate(sorted(int(n) for n in ns)):
        k = max(1, math.ceil(n ** beta))
        env_seed = _replica_seed(seed, _SEED_ENV, i)
        env = sample_env(law, n, env_seed)
        try:
            rep = estimate_tmix_coupling(env, k, eps, replicas,
                                         _replica_seed(seed, _SEED_COUPLE, i),
                                         cap)
            rows.append(ScalingRow(n=n, k=k, beta=float(beta),
                                   lambda_ref=lam, t_hat=rep.point,
                                   ci=rep.ci, timeouts=rep.timeouts,
                                   predicted_exponent=predicted_exponent(lam, beta)))
        except CapExceeded:
            rows.append(ScalingRow(n=n, k=k, beta=float(beta),
                                   lambda_ref=lam, t_hat=math.nan,
                                   ci=(math.nan, math.nan),
                                   timeouts=replicas,
                                   predicted_exponent=predicted_exponent(lam, beta),
                                   censored=True))
    live = [(r.n, r.t_hat) for r in rows if not r.censored]
    if len(live) >= 2:
        slope, se = fit_loglog([n for n, _ in live], [t for _, t in live])
    else:
        slope, se = math.nan, math.nan
    return ScalingResult(rows=tuple(rows), slope=slope, slope_se=se,
                         eps=float(eps), seed=int(seed))


# -- curated deep-trap fixture -------------------------------------------


def load_deep_trap_env():
    """The shipped hand-planted environment with one deep uphill block.

    Keeps witness tests off rare random draws: the block's position and
    depth are fixed, so the predicted blocking time is a constant.
    """
    text = resources.files("sepmix").joinpath("data/deep_trap_env.json") \
                    .read_text()
    doc = json.loads(text)
    return Environment.from_omega(np.asarray(doc["omega"], float))
