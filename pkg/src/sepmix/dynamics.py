"""Event-driven dynamics on the segment.

The graphical construction: one rate-n Poisson clock with uniform site
labels and uniform marks (the superposition of n independent rate-1
site clocks).  Every trajectory driven by the same EventSource consumes
the identical (time, site, mark) sequence, which realizes the grand
coupling and makes it order preserving.  Censoring blocks a
time-dependent edge set, displacements replace the configuration by a
smaller one at fixed times, and the boundary-driven window chain
measures particle flow through a trap.
"""

import math
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import spsolve

from . import _kernels
from .environment import potential
from .errors import SepmixError, ShapeMismatch, WindowTooLarge, WindowTooWide
from .state import Configuration, extremal, leq

CHUNK = 1 << 16
_EVENT_TAG = 0x7119


class EventSource:
    """Seeded stream of (time, site, mark) ring events at total rate n.

    Replaying from the same seed yields the identical event sequence;
    the stream survives stage boundaries because a pending event that
    falls beyond a stage end stays unconsumed until the next call.
    """

    def __init__(self, n, seed):
        if n < 1:
            raise ShapeMismatch("need at least one site")
        self.n = int(n)
        self.seed = int(seed)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(_EVENT_TAG,))
        self._rng = np.random.Generator(np.random.Philox(ss))
        self.t = 0.0
        self.events = 0
        self._dts = np.empty(0)
        self._sites = np.empty(0, np.int64)
        self._marks = np.empty(0)
        self._i = 0

    def _ensure(self):
        if self._i >= self._dts.shape[0]:
            self._dts = self._rng.standard_exponential(CHUNK) / self.n
            self._sites = self._rng.integers(0, self.n, CHUNK)
            self._marks = self._rng.random(CHUNK)
            self._i = 0

    def advance(self, boards, omega, blocked, t_end, check_pairs, budget=-1):
        """Drive boards to t_end (or until budget events); returns used."""
        used_total = 0
        while True:
            self._ensure()
            left = -1 if budget < 0 else budget - used_total
            i, t, used, viol = _kernels.apply_chunk(
                boards, omega, blocked, self._dts, self._sites, self._marks,
                self._i, self.t, t_end, left, check_pairs)
            self._i = i
            self.t = t
            self.events += used
            used_total += used
            if viol >= 0:
                raise SepmixError(
                    "coupled order violated at event %d, time %.6f"
                    % (self.events, t))
            if i < self._dts.shape[0]:
                return used_total
            if budget >= 0 and used_total >= budget:
                return used_total


@dataclass(frozen=True)
class CensoringScheme:
    """Piecewise-constant blocked edge sets, right-continuous in time.

    edge_sets[i] is active on [times[i-1], times[i]) with times[-1]
    treated as 0; beyond the last breakpoint nothing is blocked.
    Edges are named by their left site: edge x joins x and x+1.
    """

    times: tuple
    edge_sets: tuple

    def __post_init__(self):
        if len(self.times) != len(self.edge_sets):
            raise ShapeMismatch("one edge set per breakpoint")
        if any(t2 <= t1 for t1, t2 in zip(self.times, self.times[1:])):
            raise ShapeMismatch("breakpoints must increase")
        if self.times and self.times[0] <= 0:
            raise ShapeMismatch("breakpoints must be positive")
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        object.__setattr__(
            self, "edge_sets", tuple(frozenset(int(e) for e in s)
                                     for s in self.edge_sets))

    @property
    def horizon(self):
        return self.times[-1] if self.times else 0.0

    def blocked_at(self, t):
        i = bisect_right(self.times, t)
        if i >= len(self.times):
            return frozenset()
        return self.edge_sets[i]


@dataclass(frozen=True)
class DisplacementSchedule:
    """Deterministic configuration replacements at fixed times.

    Each map must send xi to some xi' with leq(xi', xi); this is
    enforced when the map is applied.
    """

    times: tuple
    maps: tuple

    def __post_init__(self):
        if len(self.times) != len(self.maps):
            raise ShapeMismatch("one map per displacement time")
        if any(t2 <= t1 for t1, t2 in zip(self.times, self.times[1:])):
            raise ShapeMismatch("displacement times must increase")
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))

    def at(self, t):
        for s, q in zip(self.times, self.maps):
            if s == t:
                return q
        return None


EMPTY_DISPLACEMENTS = DisplacementSchedule(times=(), maps=())


def _blocked_array(n, edges):
    blocked = np.zeros(max(n - 1, 1), np.uint8)
    for e in edges:
        if not 1 <= e <= n - 1:
            raise ShapeMismatch("edge %d outside the segment" % e)
        blocked[e - 1] = 1
    return blocked


def _apply_displacement(q, board, row):
    xi = Configuration(board[row])
    out = q(xi)
    if out.n != xi.n or len(out.positions) != len(xi.positions):
        raise SepmixError("displacement changed the particle count")
    if not leq(out, xi):
        raise SepmixError("displacement must move the configuration down")
    board[row] = out.occupancy


def _segment_bounds(horizon, scheme, displacements, sample_times):
    cuts = {float(horizon)}
    if scheme is not None:
        cuts.update(t for t in scheme.times if t < horizon)
    if displacements is not None:
        cuts.update(t for t in displacements.times if t <= horizon)
    if sample_times:
        cuts.update(float(t) for t in sample_times if t <= horizon)
    return sorted(c for c in cuts if c > 0.0)


def evolve(xi0, env, source, horizon, scheme=None, displacements=None,
           sample_times=None):
    """Run one trajectory to the horizon.

    At each ring (t, x, U): the particle at x (if any) moves right when
    U <= omega_x and the target is free and unblocked, left when
    U > omega_x under the mirror conditions.  Displacement maps apply
    instantaneously at their times, before any ring sharing the same
    timestamp.  Returns the final Configuration, or (final, samples)
    when sample_times is given, samples being [(t, Configuration)].
    """
    n = env.n
    if xi0.n != n:
        raise ShapeMismatch("configuration is on %d sites, env on %d"
                            % (xi0.n, n))
    if horizon < 0:
        raise ShapeMismatch("horizon must be nonnegative")
    board = np.array(xi0.occupancy, np.uint8).reshape(1, n)
    omega = np.asarray(env.omega, float)
    no_pairs = np.empty((0, 2), np.int64)
    want = set(float(t) for t in sample_times) if sample_times else set()
    samples = []
    if displacements is not None:
        q = displacements.at(0.0)
        if q is not None:
            _apply_displacement(q, board, 0)
    if 0.0 in want:
        samples.append((0.0, Configuration(board[0])))
    t_cur = 0.0
    for t_next in _segment_bounds(horizon, scheme, displacements,
                                  sample_times):
        edges = scheme.blocked_at(t_cur) if scheme is not None else ()
        blocked = _blocked_array(n, edges)
        source.advance(board, omega, blocked, t_next, no_pairs)
        q = displacements.at(t_next) if displacements is not None else None
        if q is not None:
            _apply_displacement(q, board, 0)
        if t_next in want:
            samples.append((t_next, Configuration(board[0])))
        t_cur = t_next
    final = Configuration(board[0])
    if sample_times is not None:
        return final, samples
    return final


def evolve_coupled(xis, env, source, horizon, scheme=None, check_order=True,
                   budget=-1):
    """Run several copies on one stream; returns the final list.

    All copies consume identical (time, site, mark) events.  When
    check_order is set, every pair ordered at time 0 is re-checked
    after every single ring and a violation raises SepmixError.  A
    nonnegative budget caps the number of rings consumed (the horizon
    may then be math.inf).
    """
    if not xis:
        return []
    n = env.n
    k = len(xis[0].positions)
    for xi in xis:
        if xi.n != n or len(xi.positions) != k:
            raise ShapeMismatch("all copies need the same (n, k)")
    boards = np.stack([np.array(xi.occupancy, np.uint8) for xi in xis])
    omega = np.asarray(env.omega, float)
    pairs = []
    if check_order:
        for a in range(len(xis)):
            for b in range(len(xis)):
                if a != b and leq(xis[a], xis[b]):
                    pairs.append((a, b))
    check_pairs = (np.array(pairs, np.int64).reshape(-1, 2)
                   if pairs else np.empty((0, 2), np.int64))
    if math.isfinite(horizon):
        bounds = _segment_bounds(horizon, scheme, None, None)
    elif scheme is not None:
        bounds = sorted(scheme.times) + [math.inf]
    else:
        bounds = [math.inf]
    if not math.isfinite(horizon) and budget < 0:
        raise ShapeMismatch("an infinite horizon needs an event budget")
    t_cur = 0.0
    left = budget
    for t_next in bounds:
        edges = scheme.blocked_at(t_cur) if scheme is not None else ()
        blocked = _blocked_array(n, edges)
        used = source.advance(boards, omega, blocked, t_next, check_pairs,
                              left)
        if left >= 0:
            left -= used
            if left <= 0:
                break
        t_cur = t_next
    return [Configuration(boards[r]) for r in range(len(xis))]


def coupling_time(env, k, source, cap):
    """First time the copies started from the two extremal states agree.

    Both copies ride the same stream.  Returns the coalescence time, or
    math.inf when it is not reached by the cap.
    """
    if not math.isfinite(cap):
        raise ShapeMismatch("cap must be finite")
    n = env.n
    lo, hi = extremal(n, k)
    a = np.array(lo.occupancy, np.uint8)
    b = np.array(hi.occupancy, np.uint8)
    omega = np.asarray(env.omega, float)
    ndiff = int(np.sum(a != b))
    if ndiff == 0:
        return 0.0
    while True:
        source._ensure()
        i, t, ndiff, tau = _kernels.pair_chunk_coalesce(
            a, b, omega, source._dts, source._sites, source._marks,
            source._i, source.t, cap, ndiff)
        source.events += i - source._i
        source._i = i
        source.t = t
        if tau >= 0.0:
            return tau
        if i < source._dts.shape[0]:
            return math.inf


def hit_time_max(env, k, source, cap):
    """First time the copy started from xi_min reaches xi_max.

    Returns the hitting time, or math.inf when not reached by the cap.
    """
    if not math.isfinite(cap):
        raise ShapeMismatch("cap must be finite")
    n = env.n
    lo, _ = extremal(n, k)
    board = np.array(lo.occupancy, np.uint8)
    omega = np.asarray(env.omega, float)
    suffix_start = n - k
    in_suffix = int(board[suffix_start:].sum())
    if in_suffix == k:
        return 0.0
    while True:
        source._ensure()
        i, t, in_suffix, tau = _kernels.hit_chunk(
            board, omega, source._dts, source._sites, source._marks,
            source._i, source.t, cap, suffix_start, in_suffix)
        source.events += i - source._i
        source._i = i
        source.t = t
        if tau >= 0.0:
            return tau
        if i < source._dts.shape[0]:
            return math.inf


def trace_events(boards, env, source, horizon):
    """Yield (event_index, time, site, mark, moved) one ring at a time.

    Pure-python mirror of the chunk kernel for event logging: boards is
    a (copies, n) occupancy array mutated in place, site is 1-based and
    moved counts how many boards changed at the ring.  No censoring.
    The pending-event convention matches evolve, so a tracer and a
    kernel driver fed the same seed produce the same trajectory.
    """
    om = np.asarray(env.omega, float)
    n = env.n
    if boards.ndim != 2 or boards.shape[1] != n:
        raise ShapeMismatch("boards must be (copies, n)")
    t_end = float(horizon)
    while True:
        source._ensure()
        tn = source.t + source._dts[source._i]
        if tn >= t_end:
            return
        x = int(source._sites[source._i])
        u = float(source._marks[source._i])
        moved = 0
        for row in boards:
            if row[x] == 1:
                if u <= om[x]:
                    if x + 1 < n and row[x + 1] == 0:
                        row[x] = 0
                        row[x + 1] = 1
                        moved += 1
                elif x >= 1 and row[x - 1] == 0:
                    row[x] = 0
                    row[x - 1] = 1
                    moved += 1
        source._i += 1
        source.t = tn
        source.events += 1
        yield source.events, tn, x + 1, u, moved


def trace_flow(env, x2, y2, win, source, horizon):
    """Yield boundary-driven window events; returns the absorbed count.

    Same rules as flow_run (injection rides the clock at x2-1, a ring
    at y2 with mark <= omega_{y2} ejects to the absorber), one yield
    per ring as in trace_events.  win is the window occupancy array,
    mutated in place; the generator's return value is the absorber
    tally, readable from StopIteration.value under manual iteration.
    """
    _check_window(env, x2, y2)
    if win.shape[0] != y2 - x2 + 1:
        raise ShapeMismatch("window occupancy length must match [x2, y2]")
    om = np.asarray(env.omega, float)
    x2i, y2i = x2 - 1, y2 - 1
    absorbed = 0
    t_end = float(horizon)
    while True:
        source._ensure()
        tn = source.t + source._dts[source._i]
        if tn >= t_end:
            return absorbed
        x = int(source._sites[source._i])
        u = float(source._marks[source._i])
        moved = 0
        if x == x2i - 1:
            if u <= om[x] and win[0] == 0:
                win[0] = 1
                moved = 1
        elif x2i <= x <= y2i:
            j = x - x2i
            if win[j] == 1:
                if u <= om[x]:
                    if x == y2i:
                        win[j] = 0
                        absorbed += 1
                        moved = 1
                    elif win[j + 1] == 0:
                        win[j] = 0
                        win[j + 1] = 1
                        moved = 1
                elif j >= 1 and win[j - 1] == 0:
                    win[j] = 0
                    win[j - 1] = 1
                    moved = 1
        source._i += 1
        source.t = tn
        source.events += 1
        yield source.events, tn, x + 1, u, moved


@dataclass(frozen=True)
class FlowState:
    """Occupancy of the window [x2, y2] plus the absorber tally at y2+1."""

    x2: int
    y2: int
    occupancy: tuple
    absorbed: int = 0

    def __post_init__(self):
        if self.y2 < self.x2:
            raise ShapeMismatch("window must satisfy x2 <= y2")
        if len(self.occupancy) != self.y2 - self.x2 + 1:
            raise ShapeMismatch("occupancy length must match the window")
        if self.absorbed < 0:
            raise ShapeMismatch("absorbed count cannot be negative")
        object.__setattr__(self, "occupancy",
                           tuple(int(v) for v in self.occupancy))

    @classmethod
    def empty(cls, x2, y2):
        return cls(x2, y2, (0,) * (y2 - x2 + 1))

    @property
    def count(self):
        return sum(self.occupancy)


def _check_window(env, x2, y2):
    if not 2 <= x2 <= y2 <= env.n - 1:
        raise ShapeMismatch("need 2 <= x2 <= y2 <= n-1")


def flow_run(env, x2, y2, initial, source, horizon, full=None,
             check_domination=False):
    """Boundary-driven run: injection at x2, absorption past y2.

    Interior rings follow exclusion; injection rides the clock at site
    x2-1 with mark <= omega_{x2-1} (same rate as a jump from x2-1, so
    the window chain dominates a coupled full-segment copy tail by
    tail); a ring at y2 with mark <= omega_{y2} moves the particle at
    y2 to the absorber.  Returns the final FlowState, or (FlowState,
    Configuration) when a full-segment copy rides along.  With
    check_domination the tail-count comparison is asserted after every
    event.
    """
    _check_window(env, x2, y2)
    if initial.x2 != x2 or initial.y2 != y2:
        raise ShapeMismatch("initial state is for a different window")
    n = env.n
    omega = np.asarray(env.omega, float)
    win = np.array(initial.occupancy, np.uint8)
    use_full = full is not None
    fboard = (np.array(full.occupancy, np.uint8) if use_full
              else np.zeros(1, np.uint8))
    if use_full and full.n != n:
        raise ShapeMismatch("full copy must live on the same segment")
    absorbed = initial.absorbed
    t_end = float(horizon)
    while True:
        source._ensure()
        i, t, absorbed, viol = _kernels.flow_chunk(
            win, omega, x2 - 1, y2 - 1, absorbed, source._dts, source._sites,
            source._marks, source._i, source.t, t_end, fboard,
            use_full, check_domination)
        source.events += i - source._i
        source._i = i
        source.t = t
        if viol >= 0:
            raise SepmixError(
                "flow domination violated at event %d" % source.events)
        if i < source._dts.shape[0]:
            break
    out = FlowState(x2, y2, win, absorbed)
    if use_full:
        return out, Configuration(fboard)
    return out


def flow_bound(env, x2, y2):
    """Stationary-flow ceiling 16e^2 (y2-x2)(y2-x2+2) e^{-(V(y2)-V(x2))/2}."""
    profile = potential(env)
    dv = profile.v[y2 - 1] - profile.v[x2 - 1]
    return 16.0 * math.e ** 2 * (y2 - x2) * (y2 - x2 + 2) * math.exp(-dv / 2)


def flow_stationary_exact(env, x2, y2):
    """Exact stationary throughput of the boundary-driven window chain.

    Enumerates the 2^L window states (L = y2-x2+1 <= 14), solves the
    stationary balance equations sparsely, and returns
    omega_{y2} * mu(site y2 occupied).
    """
    _check_window(env, x2, y2)
    L = y2 - x2 + 1
    if L > 14:
        raise WindowTooLarge("window of length %d exceeds 14" % L)
    omega = np.asarray(env.omega, float)
    # local site j holds omega[x2 - 1 + j]; bit j of a state is site x2+j
    loc = omega[x2 - 1:y2]
    inject = omega[x2 - 2]
    eject = omega[y2 - 1]
    nstates = 1 << L
    rows, cols, vals = [], [], []
    diag = np.zeros(nstates)

    def add(s, s2, rate):
        rows.append(s2)
        cols.append(s)
        vals.append(rate)
        diag[s] -= rate

    for s in range(nstates):
        if not s & 1:
            add(s, s | 1, inject)
        for j in range(L - 1):
            occ_j = (s >> j) & 1
            occ_j1 = (s >> (j + 1)) & 1
            if occ_j == 1 and occ_j1 == 0:
                add(s, s ^ (1 << j) ^ (1 << (j + 1)), loc[j])
            elif occ_j == 0 and occ_j1 == 1:
                add(s, s ^ (1 << j) ^ (1 << (j + 1)), 1.0 - loc[j + 1])
        if (s >> (L - 1)) & 1:
            add(s, s ^ (1 << (L - 1)), eject)
    rows += list(range(nstates))
    cols += list(range(nstates))
    vals += list(diag)
    A = csr_matrix((vals, (rows, cols)), shape=(nstates, nstates)).tolil()
    A[-1, :] = 1.0
    rhs = np.zeros(nstates)
    rhs[-1] = 1.0
    mu = spsolve(A.tocsr(), rhs)
    top = np.array([(s >> (L - 1)) & 1 for s in range(nstates)], bool)
    return float(eject * mu[top].sum())


def build_sweep_scheme(n, k, q, T):
    """Censoring plus displacements that sweep all particles right.

    For k <= q: ceil(n/2q)-1 stages of length T; stage i confines the
    dynamics to [2iq+1, 2(i+2)q] by blocking every other edge, and the
    last stage isolates [n-4q+1, n].  For k > q: the rightmost k-q
    particles are parked one per phase behind a frozen right block,
    each phase running r = ceil((n-k+q)/2q)-1 sliding windows of width
    4q plus one isolation stage, with the leftmost particles repacked
    to the left segment at every phase start.
    """
    if 4 * q >= n:
        raise WindowTooWide("need 4q < n, got q=%d, n=%d" % (q, n))
    if T <= 0:
        raise ShapeMismatch("stage length must be positive")
    if not 1 <= k <= n - 1:
        raise ShapeMismatch("need 1 <= k <= n-1")
    all_edges = frozenset(range(1, n))

    def confine(a, b):
        # block everything except edges interior to [a, b]
        return all_edges - frozenset(range(a, b))

    if k <= q:
        n_stages = math.ceil(n / (2 * q)) - 1
        windows = [(2 * i * q + 1, 2 * (i + 2) * q)
                   for i in range(n_stages - 1)]
        windows.append((n - 4 * q + 1, n))
        times = tuple(T * (i + 1) for i in range(n_stages))
        edge_sets = tuple(confine(a, b) for a, b in windows)
        return (CensoringScheme(times, edge_sets), EMPTY_DISPLACEMENTS)

    r = math.ceil((n - k + q) / (2 * q)) - 1
    if r < 1:
        raise WindowTooWide("sweep needs n - k > q, got n=%d, k=%d, q=%d"
                            % (n, k, q))

    def in_range(edges):
        return frozenset(e for e in edges if 1 <= e <= n - 1)

    times = []
    edge_sets = []
    for j in range(k - q + 1):
        for i in range(r - 1):
            a = k - q - j + 2 * q * i
            times.append(T * (i + r * j + 1))
            edge_sets.append(in_range({a, a + 4 * q, n - j}))
        times.append(T * r * (j + 1))
        edge_sets.append(in_range({n - 4 * q - j, n - j}))
    scheme = CensoringScheme(tuple(times), tuple(edge_sets))

    def pack(m):
        def q_map(xi, m=m):
            pos = xi.positions
            return Configuration.from_positions(
                xi.n, tuple(range(1, m + 1)) + pos[m:])
        return q_map

    disp_times = tuple(T * r * j for j in range(1, k - q + 1))
    disp_maps = tuple(pack(k - j) for j in range(1, k - q + 1))
    return scheme, DisplacementSchedule(disp_times, disp_maps)
