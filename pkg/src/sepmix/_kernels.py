"""Jitted inner loops for the event-driven dynamics.

All kernels speak 0-based arrays: site x holds ``omega[x]``, the edge
between sites x and x+1 is ``blocked[x]``.  A ring at an occupied site
x moves its particle right when the mark is at most ``omega[x]`` and
left otherwise, subject to exclusion and edge blocking; rings at empty
sites do nothing.  Chunk kernels consume events from shared arrays and
stop *before* the first event with time >= t_end, leaving it pending so
a driver can resume across stage boundaries without losing stream
state.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def apply_chunk(boards, omega, blocked, dts, sites, marks, start, t_prev,
                t_end, budget, check_pairs):
    """Advance every board through one chunk of shared events.

    budget < 0 means unlimited; otherwise at most budget events are
    consumed.  check_pairs rows (a, b) demand board a <= board b in the
    tail-count partial order after every ring.  Returns (stop_index,
    time, used, violation) with violation = -1 if the order held.
    """
    n_boards, n = boards.shape
    m = dts.shape[0]
    i = start
    t = t_prev
    used = 0
    while i < m:
        if budget >= 0 and used >= budget:
            return i, t, used, -1
        tn = t + dts[i]
        if tn >= t_end:
            return i, t, used, -1
        x = sites[i]
        u = marks[i]
        for r in range(n_boards):
            if boards[r, x] == 1:
                if u <= omega[x]:
                    if x + 1 < n and boards[r, x + 1] == 0 and blocked[x] == 0:
                        boards[r, x] = 0
                        boards[r, x + 1] = 1
                else:
                    if x >= 1 and boards[r, x - 1] == 0 and blocked[x - 1] == 0:
                        boards[r, x] = 0
                        boards[r, x - 1] = 1
        t = tn
        i += 1
        used += 1
        for p in range(check_pairs.shape[0]):
            a = check_pairs[p, 0]
            b = check_pairs[p, 1]
            ca = 0
            cb = 0
            for s in range(n - 1, -1, -1):
                ca += boards[a, s]
                cb += boards[b, s]
                if ca > cb:
                    return i, t, used, i - 1
    return i, t, used, -1


@njit(cache=True)
def pair_chunk_coalesce(a, b, omega, dts, sites, marks, start, t_prev,
                        t_cap, ndiff):
    """Extremal pair on one stream until coalescence, cap, or chunk end.

    Returns (stop_index, time, ndiff, coalesce_time); coalesce_time < 0
    means not yet coalesced.
    """
    n = a.shape[0]
    m = dts.shape[0]
    i = start
    t = t_prev
    while i < m:
        tn = t + dts[i]
        if tn >= t_cap:
            return i, t, ndiff, -1.0
        x = sites[i]
        u = marks[i]
        lo = x - 1 if x >= 1 else 0
        hi = x + 1 if x + 1 < n else n - 1
        old = 0
        for s in range(lo, hi + 1):
            if a[s] != b[s]:
                old += 1
        if a[x] == 1:
            if u <= omega[x]:
                if x + 1 < n and a[x + 1] == 0:
                    a[x] = 0
                    a[x + 1] = 1
            else:
                if x >= 1 and a[x - 1] == 0:
                    a[x] = 0
                    a[x - 1] = 1
        if b[x] == 1:
            if u <= omega[x]:
                if x + 1 < n and b[x + 1] == 0:
                    b[x] = 0
                    b[x + 1] = 1
            else:
                if x >= 1 and b[x - 1] == 0:
                    b[x] = 0
                    b[x - 1] = 1
        new = 0
        for s in range(lo, hi + 1):
            if a[s] != b[s]:
                new += 1
        ndiff += new - old
        t = tn
        i += 1
        if ndiff == 0:
            return i, t, 0, t
    return i, t, ndiff, -1.0


@njit(cache=True)
def hit_chunk(board, omega, dts, sites, marks, start, t_prev, t_cap,
              suffix_start, in_suffix):
    """Single board until all particles sit at 0-based sites >= suffix_start.

    Returns (stop_index, time, in_suffix, hit_time); hit_time < 0 while
    the packed-right state has not been reached.
    """
    n = board.shape[0]
    k = n - suffix_start
    m = dts.shape[0]
    i = start
    t = t_prev
    while i < m:
        tn = t + dts[i]
        if tn >= t_cap:
            return i, t, in_suffix, -1.0
        x = sites[i]
        u = marks[i]
        if board[x] == 1:
            if u <= omega[x]:
                if x + 1 < n and board[x + 1] == 0:
                    board[x] = 0
                    board[x + 1] = 1
                    if x + 1 == suffix_start:
                        in_suffix += 1
            else:
                if x >= 1 and board[x - 1] == 0:
                    board[x] = 0
                    board[x - 1] = 1
                    if x == suffix_start:
                        in_suffix -= 1
        t = tn
        i += 1
        if in_suffix == k:
            return i, t, in_suffix, t
    return i, t, in_suffix, -1.0


@njit(cache=True)
def flow_chunk(win, omega, x2i, y2i, absorbed, dts, sites, marks, start,
               t_prev, t_end, full, use_full, check_dom):
    """Boundary-driven window, optionally coupled with a full board.

    x2i..y2i are 0-based window bounds.  Injection rides the clock at
    site x2i-1: a ring there with mark <= omega[x2i-1] fills the left
    window end when empty (and, when coupled, the same ring may move a
    full-board particle into it, which keeps the tail-count domination
    of the window process over the full board intact event by event).
    A ring at y2i with mark <= omega[y2i] ejects the window particle to
    the absorber.  With check_dom, after every event each tail count of
    the full board over [x, n) for x in [x2i, y2i+1] must not exceed
    the window tail plus absorbed.  Returns (stop_index, time,
    absorbed, violation_event or -1).
    """
    n = omega.shape[0]
    m = dts.shape[0]
    i = start
    t = t_prev
    while i < m:
        tn = t + dts[i]
        if tn >= t_end:
            return i, t, absorbed, -1
        x = sites[i]
        u = marks[i]
        if use_full and full[x] == 1:
            if u <= omega[x]:
                if x + 1 < n and full[x + 1] == 0:
                    full[x] = 0
                    full[x + 1] = 1
            else:
                if x >= 1 and full[x - 1] == 0:
                    full[x] = 0
                    full[x - 1] = 1
        if x == x2i - 1:
            if u <= omega[x] and win[0] == 0:
                win[0] = 1
        elif x2i <= x <= y2i:
            j = x - x2i
            if win[j] == 1:
                if u <= omega[x]:
                    if x == y2i:
                        win[j] = 0
                        absorbed += 1
                    elif win[j + 1] == 0:
                        win[j] = 0
                        win[j + 1] = 1
                else:
                    if j >= 1 and win[j - 1] == 0:
                        win[j] = 0
                        win[j - 1] = 1
        t = tn
        i += 1
        if check_dom and use_full:
            tail_full = 0
            for s in range(n - 1, y2i, -1):
                tail_full += full[s]
            if tail_full > absorbed:
                return i, t, absorbed, i - 1
            tail_win = absorbed
            for j in range(y2i - x2i, -1, -1):
                tail_full += full[x2i + j]
                tail_win += win[j]
                if tail_full > tail_win:
                    return i, t, absorbed, i - 1
    return i, t, absorbed, -1


@njit(cache=True)
def _active_move(board, c, act, pos_in_act, s, x, y):
    """Move a particle x -> y on one board, maintaining the union set."""
    board[x] = 0
    board[y] = 1
    c[x] -= 1
    if c[x] == 0:
        idx = pos_in_act[x]
        last = act[s - 1]
        act[idx] = last
        pos_in_act[last] = idx
        pos_in_act[x] = -1
        s -= 1
    c[y] += 1
    if c[y] == 1:
        act[s] = y
        pos_in_act[y] = s
        s += 1
    return s


@njit(cache=True)
def coupling_time_active(a, b, omega, seed, t_cap, max_events):
    """Coalescence time of a coupled pair, thinned to occupied sites.

    Rings at sites empty in both copies move nothing, so running rate-1
    clocks on the union of the two supports only reproduces the law of
    the full construction.  Returns (coalesce_time or -1, time_reached,
    events_used).
    """
    np.random.seed(seed)
    n = a.shape[0]
    c = np.zeros(n, np.int8)
    act = np.empty(n, np.int64)
    pos_in_act = np.full(n, -1, np.int64)
    s = 0
    ndiff = 0
    for x in range(n):
        c[x] = a[x] + b[x]
        if a[x] != b[x]:
            ndiff += 1
        if c[x] > 0:
            act[s] = x
            pos_in_act[x] = s
            s += 1
    t = 0.0
    ev = 0
    while ndiff > 0:
        if ev >= max_events:
            return -1.0, t, ev
        t += np.random.exponential() / s
        if t >= t_cap:
            return -1.0, t, ev
        x = act[np.random.randint(0, s)]
        u = np.random.random()
        ev += 1
        if u <= omega[x]:
            y = x + 1
        else:
            y = x - 1
        if y < 0 or y >= n:
            continue
        move_a = a[x] == 1 and a[y] == 0
        move_b = b[x] == 1 and b[y] == 0
        if not (move_a or move_b):
            continue
        old = 0
        if a[x] != b[x]:
            old += 1
        if a[y] != b[y]:
            old += 1
        if move_a:
            s = _active_move(a, c, act, pos_in_act, s, x, y)
        if move_b:
            s = _active_move(b, c, act, pos_in_act, s, x, y)
        new = 0
        if a[x] != b[x]:
            new += 1
        if a[y] != b[y]:
            new += 1
        ndiff += new - old
    return t, t, ev


@njit(cache=True)
def hit_time_active(board, omega, seed, t_cap, max_events, suffix_start):
    """First time every particle sits at a 0-based site >= suffix_start.

    Single board, thinned to occupied sites; returns (hit_time or -1,
    time_reached, events_used).
    """
    np.random.seed(seed)
    n = board.shape[0]
    k = 0
    in_suffix = 0
    act = np.empty(n, np.int64)
    pos_in_act = np.full(n, -1, np.int64)
    c = np.zeros(n, np.int8)
    s = 0
    for x in range(n):
        if board[x] == 1:
            k += 1
            if x >= suffix_start:
                in_suffix += 1
            c[x] = 1
            act[s] = x
            pos_in_act[x] = s
            s += 1
    if in_suffix == k:
        return 0.0, 0.0, 0
    t = 0.0
    ev = 0
    while True:
        if ev >= max_events:
            return -1.0, t, ev
        t += np.random.exponential() / s
        if t >= t_cap:
            return -1.0, t, ev
        x = act[np.random.randint(0, s)]
        u = np.random.random()
        ev += 1
        if u <= omega[x]:
            y = x + 1
        else:
            y = x - 1
        if y < 0 or y >= n or board[y] == 1:
            continue
        s = _active_move(board, c, act, pos_in_act, s, x, y)
        if y == suffix_start and x < suffix_start:
            in_suffix += 1
        elif x == suffix_start and y < suffix_start:
            in_suffix -= 1
        if in_suffix == k:
            return t, t, ev
