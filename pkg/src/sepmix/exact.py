"""Full enumeration analysis of the segment chain at small (n, k).

The configuration space is enumerated outright, the generator is
assembled from the jump rates and checked against detailed balance, and
the stationary vector is imported from the sampling table rather than
solved for (a null-space solve stays available as a debug cross-check).
Spectral quantities come from one dense symmetric eigensolve of the
similarity-transformed generator; transient laws come from uniformized
kernels with a Chernoff-truncated Poisson series, summed in a fixed
order so results reproduce bit for bit.
"""

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.special import gammaln

from .dynamics import EMPTY_DISPLACEMENTS, _apply_displacement, _segment_bounds
from .environment import potential
from .equilibrium import EquilibriumTable
from .errors import BadK, SepmixError, ShapeMismatch, TooLarge
from .state import Configuration, extremal

_STATE_CAP = 200_000
_DENSE_CAP = 4_000
_SERIES_TAIL = 1e-12
_DB_TOL = 1e-12
# e^{-x} below this cutoff is dead against double precision
_MODE_CUT = 60.0


class ExactChain:
    """Enumerated chain: states, jump rates, stationary vector.

    states are position tuples in lexicographic order; rates holds the
    off-diagonal generator entries and exit the negated diagonal.
    Immutable after build; the eigendecomposition is cached on first use.
    """

    def __init__(self, env, k, states, index, rates, exit_rates, log_pi,
                 transitions):
        self.env = env
        self.k = int(k)
        self.states = states
        self.index = index
        self.rates = rates
        self.exit = exit_rates
        self.log_pi = log_pi
        self.pi = np.exp(log_pi)
        self.lambda_u = float(exit_rates.max()) if len(states) else 0.0
        self._tr = transitions
        self._spec = None
        self.db_residual = 0.0

    @property
    def n(self):
        return self.env.n

    @property
    def size(self):
        return len(self.states)

    def state_index(self, xi):
        key = tuple(int(x) for x in xi.positions)
        if key not in self.index:
            raise ShapeMismatch("configuration is not a state of this chain")
        return self.index[key]

    def configuration(self, i):
        return Configuration.from_positions(self.n, self.states[i])


def _moved(s, x, y):
    return tuple(sorted((y,) + tuple(p for p in s if p != x)))


def build(env, k):
    """Assemble the enumerated chain for k particles on env.

    The stationary vector comes from the partition table and detailed
    balance is then verified transition by transition, in log space so
    small probabilities cost nothing.
    """
    n = env.n
    if not 0 <= k <= n:
        raise BadK(f"need 0 <= k <= {n}, got {k}")
    if math.comb(n, k) > _STATE_CAP:
        raise TooLarge(f"C({n},{k}) exceeds {_STATE_CAP} states")
    states = list(combinations(range(1, n + 1), k))
    index = {s: i for i, s in enumerate(states)}
    om = env.omega

    rows, cols, vals, edges = [], [], [], []
    for i, s in enumerate(states):
        occ = frozenset(s)
        for x in s:
            if x < n and x + 1 not in occ:
                rows.append(i)
                cols.append(index[_moved(s, x, x + 1)])
                vals.append(float(om[x - 1]))
                edges.append(x)
            if x > 1 and x - 1 not in occ:
                rows.append(i)
                cols.append(index[_moved(s, x, x - 1)])
                vals.append(1.0 - float(om[x - 1]))
                edges.append(x - 1)
    m = len(states)
    transitions = (np.asarray(rows, np.int64), np.asarray(cols, np.int64),
                   np.asarray(vals, float), np.asarray(edges, np.int64))
    rates = sp.csr_matrix((transitions[2], (transitions[0], transitions[1])),
                          shape=(m, m))
    exit_rates = np.bincount(transitions[0], weights=transitions[2],
                             minlength=m)

    table = EquilibriumTable.from_profile(potential(env), k)
    lw = table.log_w
    log_pi = np.array([sum(lw[x - 1] for x in s) for s in states]) - table.log_Z

    chain = ExactChain(env, k, states, index, rates, exit_rates, log_pi,
                       transitions)
    _validate(chain)
    return chain


def _validate(chain):
    rows, cols, vals, _ = chain._tr
    rowsum = np.asarray(chain.rates.sum(axis=1)).ravel() - chain.exit
    if chain.size and np.abs(rowsum).max() > 1e-12:
        raise SepmixError("generator row sums off by %.3e" % np.abs(rowsum).max())
    # detailed balance, each unordered transition checked once via its
    # rightward orientation
    worst = 0.0
    lp = chain.log_pi
    for i, j, r in zip(rows, cols, vals):
        if i < j:  # rightward move; the reverse entry exists by construction
            jr = _rate(chain, j, i)
            res = abs((lp[i] + math.log(r)) - (lp[j] + math.log(jr)))
            worst = max(worst, res)
    chain.db_residual = worst
    if worst > _DB_TOL:
        raise SepmixError("detailed balance residual %.3e" % worst)


def _rate(chain, i, j):
    r = chain.rates
    lo, hi = r.indptr[i], r.indptr[i + 1]
    pos = np.searchsorted(r.indices[lo:hi], j)
    if pos == hi - lo or r.indices[lo + pos] != j:
        return 0.0
    return float(r.data[lo + pos])


# -- spectral route ----------------------------------------------------


def _modes(chain):
    """Eigendecomposition of the negated symmetrized generator, cached."""
    if chain._spec is None:
        m = chain.size
        if m > _DENSE_CAP:
            raise TooLarge(f"{m} states is too many for a dense eigensolve")
        if m < 2:
            raise ShapeMismatch("spectrum needs at least two states")
        sq = np.exp(0.5 * chain.log_pi)
        a = -chain.rates.toarray() * (sq[:, None] / sq[None, :])
        np.fill_diagonal(a, chain.exit)
        a = 0.5 * (a + a.T)
        w, u = scipy.linalg.eigh(a)
        chain._spec = (w, u, sq)
    return chain._spec


def spectral_gap(chain):
    """Smallest nonzero decay rate: second eigenvalue of -L symmetrized."""
    w, _, _ = _modes(chain)
    return float(w[1])


def tv_to_pi(chain, t):
    """Worst-case total variation distance to pi at time t.

    The max runs over every start state; the invariant mode is removed
    exactly (pi is subtracted, not reconstructed), so the result stays
    clean at large t where the series has decayed.
    """
    if t < 0:
        raise ShapeMismatch("time must be nonnegative")
    if chain.size == 1:
        return 0.0
    if t == 0.0:
        return float(1.0 - chain.pi.min())
    w, u, sq = _modes(chain)
    hi = np.searchsorted(w, _MODE_CUT / t)
    if hi <= 1:
        return 0.0
    decay = np.exp(-w[1:hi] * t)
    left = u[:, 1:hi] / sq[:, None]
    right = u[:, 1:hi] * sq[:, None]
    diff = (left * decay) @ right.T
    return float(0.5 * np.abs(diff).sum(axis=1).max())


def t_mix_exact(chain, eps):
    """Smallest t with d(t) <= eps, bisected to relative 1e-6.

    Returns the certified upper end of the final bracket, so the answer
    never undershoots the true mixing time.
    """
    if not 0.0 < eps < 1.0:
        raise ShapeMismatch("eps must lie in (0, 1)")
    if 1.0 - chain.pi.min() <= eps:
        return 0.0
    gap = spectral_gap(chain)
    hi = (-math.log(eps) - float(chain.log_pi.min())) / gap
    for _ in range(64):
        if tv_to_pi(chain, hi) <= eps:
            break
        hi *= 2.0
    else:
        raise SepmixError("failed to bracket the mixing time from above")
    lo = 0.0
    while hi - lo > 1e-6 * hi:
        mid = 0.5 * (lo + hi)
        if tv_to_pi(chain, mid) <= eps:
            hi = mid
        else:
            lo = mid
    return hi


# -- canonical paths ----------------------------------------------------


def _relay_edges(chain, s_idx, star_idx):
    """Edges of the relay path from state s_idx to star_idx.

    Discrepancies are paired in increasing order; each one is resolved
    by relaying the intervening particles one step at a time, so every
    edge is a legal adjacent swap.  Returns (edge list, path length).
    """
    n = chain.n
    cur = np.zeros(n + 1, np.int8)
    star = np.zeros(n + 1, np.int8)
    cur[list(chain.states[s_idx])] = 1
    star[list(chain.states[star_idx])] = 1
    xs = [x for x in range(1, n + 1) if cur[x] and not star[x]]
    ys = [y for y in range(1, n + 1) if star[y] and not cur[y]]

    pos = list(chain.states[s_idx])
    cur_idx = s_idx
    out = []
    length = 0
    for x, y in zip(xs, ys):
        if x < y:
            zs = [z for z in range(y - 1, x - 1, -1) if cur[z]]
            step = 1
        else:
            zs = [z for z in range(y + 1, x + 1) if cur[z]]
            step = -1
        prev = y
        for z in zs:
            i = pos.index(z)
            for c in range(z, prev, step):
                cur[c], cur[c + step] = 0, 1
                pos[i] = c + step
                nxt = chain.index[tuple(sorted(pos))]
                out.append((cur_idx, nxt) if cur_idx < nxt else (nxt, cur_idx))
                cur_idx = nxt
                length += 1
            prev = z
    if cur_idx != star_idx:
        raise SepmixError("relay path failed to reach the anchor state")
    return out, length


def canonical_path_bound(chain, env):
    """Congestion constant B of the relay path collection; gap >= 1/B.

    Every pair of states is routed through a fixed anchor of maximal
    probability, so the per-edge congestion sum collapses to running
    totals over the half-paths: with W(e) the pi-weighted length mass,
    S(e) the pi mass through e and M1 the mean half-path length, the
    ordered-pair sum at e equals 2(W + S*M1 - S*W).
    """
    if env.n != chain.n:
        raise ShapeMismatch("environment does not match the chain")
    if chain.size < 2:
        raise ShapeMismatch("congestion needs at least two states")
    star = int(np.argmax(chain.log_pi))
    pi = chain.pi
    w_mass = {}
    s_mass = {}
    m1 = 0.0
    for s in range(chain.size):
        edge_list, length = _relay_edges(chain, s, star)
        m1 += pi[s] * length
        for e in edge_list:
            w_mass[e] = w_mass.get(e, 0.0) + pi[s] * length
            s_mass[e] = s_mass.get(e, 0.0) + pi[s]
    best = 0.0
    for e, w in w_mass.items():
        sm = s_mass[e]
        i, j = e
        q = pi[i] * _rate(chain, i, j)
        best = max(best, (w + sm * m1 - sm * w) / q)
    return best


# -- uniformized transients ---------------------------------------------


def _series_length(mu):
    """Truncation index with Chernoff tail below the series tolerance."""
    if mu <= 0.0:
        return 0
    target = math.log(_SERIES_TAIL)
    m = int(math.ceil(mu)) + 1
    step = max(1, int(math.sqrt(mu)))
    while m * (1.0 + math.log(mu / m)) - mu > target:
        m += step
    return m


def _poisson_weights(mu, m_max):
    ms = np.arange(m_max + 1)
    if mu == 0.0:
        out = np.zeros(m_max + 1)
        out[0] = 1.0
        return out
    return np.exp(-mu + ms * math.log(mu) - gammaln(ms + 1))


def _push_row(v, rates, exit_rates, lam, dt):
    """v exp(dt*Q) for the generator with the given off-diagonal part."""
    mu = lam * dt
    m_max = _series_length(mu)
    pois = _poisson_weights(mu, m_max)
    out = pois[0] * v
    cur = v
    for m in range(1, m_max + 1):
        cur = cur + ((cur @ rates) - cur * exit_rates) / lam
        out = out + pois[m] * cur
    return out


def _push_col(v, rates, exit_rates, lam, dt):
    mu = lam * dt
    m_max = _series_length(mu)
    pois = _poisson_weights(mu, m_max)
    out = pois[0] * v
    cur = v
    for m in range(1, m_max + 1):
        cur = cur + ((rates @ cur) - cur * exit_rates) / lam
        out = out + pois[m] * cur
    return out


def transient(chain, xi0, t):
    """Distribution at time t started from the configuration xi0."""
    if t < 0:
        raise ShapeMismatch("time must be nonnegative")
    v = np.zeros(chain.size)
    v[chain.state_index(xi0)] = 1.0
    if chain.lambda_u == 0.0:
        return v
    return _push_row(v, chain.rates, chain.exit, chain.lambda_u, t)


def _censored_parts(chain, blocked):
    if not blocked:
        return chain.rates, chain.exit
    rows, cols, vals, edges = chain._tr
    keep = ~np.isin(edges, np.fromiter(blocked, np.int64))
    m = chain.size
    rates = sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(m, m))
    exit_rates = np.bincount(rows[keep], weights=vals[keep], minlength=m)
    return rates, exit_rates


def _displacement_dest(chain, q):
    """Index map of a displacement, validated like the simulation path."""
    dest = np.empty(chain.size, np.int64)
    board = np.zeros((1, chain.n), np.int8)
    for i, s in enumerate(chain.states):
        board[0] = 0
        board[0, np.asarray(s, np.int64) - 1] = 1
        _apply_displacement(q, board, 0)
        key = tuple(int(x) + 1 for x in np.flatnonzero(board[0]))
        dest[i] = chain.index[key]
    return dest


def censored_transient(chain, scheme, displacements, t):
    """Distribution at time t of the censored chain started minimal.

    Blocked edge sets are piecewise constant, so the evolution is a
    product of per-stage uniformized kernels; each displacement map is
    applied exactly at its scheduled time, before any ring there, and
    the global uniformization rate dominates every censored stage.
    """
    if t < 0:
        raise ShapeMismatch("time must be nonnegative")
    if displacements is None:
        displacements = EMPTY_DISPLACEMENTS
    lo, _ = extremal(chain.n, chain.k)
    v = np.zeros(chain.size)
    v[chain.state_index(lo)] = 1.0
    q0 = displacements.at(0.0)
    if q0 is not None:
        v = _apply_dest(v, _displacement_dest(chain, q0))
    if chain.lambda_u == 0.0:
        return v
    cur = 0.0
    for b in _segment_bounds(t, scheme, displacements, None):
        blocked = scheme.blocked_at(cur) if scheme is not None else frozenset()
        rates, exit_rates = _censored_parts(chain, blocked)
        v = _push_row(v, rates, exit_rates, chain.lambda_u, b - cur)
        q = displacements.at(b)
        if q is not None:
            v = _apply_dest(v, _displacement_dest(chain, q))
        cur = b
    return v


def _apply_dest(v, dest):
    out = np.zeros_like(v)
    np.add.at(out, dest, v)
    return out


@dataclass(frozen=True)
class CensorReport:
    """Hitting probabilities of the top state along a time grid."""

    times: tuple
    plain_min: tuple
    censored: tuple
    displaced: tuple
    worst_slack: float


def censoring_inequality_check(chain, scheme, displacements, times):
    """Verify plain >= censored >= displaced hitting of the top state.

    plain is minimized over every start state; a violation beyond the
    -1e-10 slack raises instead of returning.
    """
    _, top = extremal(chain.n, chain.k)
    j = chain.state_index(top)
    plain, cens, disp = [], [], []
    worst = math.inf
    for t in times:
        t = float(t)
        col = np.zeros(chain.size)
        col[j] = 1.0
        if chain.lambda_u > 0.0:
            col = _push_col(col, chain.rates, chain.exit, chain.lambda_u, t)
        pm = float(col.min())
        pc = float(censored_transient(chain, scheme, EMPTY_DISPLACEMENTS, t)[j])
        pd = float(censored_transient(chain, scheme, displacements, t)[j])
        plain.append(pm)
        cens.append(pc)
        disp.append(pd)
        worst = min(worst, pm - pc, pc - pd)
    if worst < -1e-10:
        raise SepmixError("censoring inequality violated by %.3e" % -worst)
    return CensorReport(tuple(float(t) for t in times), tuple(plain),
                        tuple(cens), tuple(disp), float(worst))


def stationary_nullspace(chain):
    """Stationary vector from the generator null space.

    Debug cross-check only: production pi always comes from the
    partition table.
    """
    m = chain.size
    if m > _DENSE_CAP:
        raise TooLarge(f"{m} states is too many for a dense solve")
    a = chain.rates.toarray().T
    a[np.diag_indices(m)] -= chain.exit
    a[-1, :] = 1.0
    b = np.zeros(m)
    b[-1] = 1.0
    return np.linalg.solve(a, b)
