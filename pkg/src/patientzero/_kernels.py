"""JIT-compiled inner loops for the spreading simulators.

Every kernel fills ``ever[i]`` (ever-infected flags) and ``pruned[i]`` for
each simulation ``i`` of a chunk, drawing all randomness from ``rng``.

``target``/``observed`` are 0/1 node masks of the snapshot being compared
against. With ``prune`` set, a run stops as soon as an observed node outside
the target gets infected. ``bound_cut > 0`` enables the soft-margin early
exit: a run stops once the best Jaccard it could still reach, ``x_max``,
satisfies ``1 - x_max > bound_cut``. Both kinds of early stop set ``pruned``.
"""
import numpy as np
from numba import njit

SUSCEPTIBLE = 0
INFECTED = 1
RECOVERED = 2
NEW = 3


@njit(cache=True)
def _too_far(s_obs, e_obs, inter, bound_cut):
    union = s_obs + e_obs - inter
    if union == 0:
        return False
    return 1.0 - s_obs / union > bound_cut


@njit(cache=True)
def sir_static(indptr, indices, source, steps, p, q, rng, target, observed, prune,
               bound_cut, ever, pruned):
    n, n_nodes = ever.shape
    state = np.zeros(n_nodes, np.int8)
    cur = np.empty(n_nodes, np.int64)
    nxt = np.empty(n_nodes, np.int64)
    new = np.empty(n_nodes, np.int64)
    touched = np.empty(n_nodes, np.int64)
    s_obs = 0
    for k in range(n_nodes):
        if target[k] and observed[k]:
            s_obs += 1
    for i in range(n):
        pi = p[i]
        qi = q[i]
        state[source] = INFECTED
        cur[0] = source
        ncur = 1
        touched[0] = source
        nt = 1
        e_obs = 1 if observed[source] else 0
        inter = 1 if (observed[source] and target[source]) else 0
        stop = False
        for _ in range(steps):
            nnew = 0
            for a in range(ncur):
                u = cur[a]
                for e in range(indptr[u], indptr[u + 1]):
                    v = indices[e]
                    if state[v] == SUSCEPTIBLE and rng.random() < pi:
                        state[v] = NEW
                        new[nnew] = v
                        nnew += 1
                        touched[nt] = v
                        nt += 1
                        if observed[v]:
                            e_obs += 1
                            if target[v]:
                                inter += 1
                            elif prune:
                                stop = True
                                break
                if stop:
                    break
            if stop:
                break
            nn = 0
            for a in range(ncur):
                u = cur[a]
                if rng.random() < qi:
                    state[u] = RECOVERED
                else:
                    nxt[nn] = u
                    nn += 1
            for b in range(nnew):
                state[new[b]] = INFECTED
                nxt[nn] = new[b]
                nn += 1
            cur, nxt = nxt, cur
            ncur = nn
            if ncur == 0:
                break
            if bound_cut > 0.0 and _too_far(s_obs, e_obs, inter, bound_cut):
                stop = True
                break
        pruned[i] = stop
        for k in range(nt):
            ever[i, touched[k]] = True
            state[touched[k]] = SUSCEPTIBLE


@njit(cache=True)
def ic_static(indptr, indices, source, steps, p, rng, target, observed, prune,
              bound_cut, ever, pruned):
    """Independent cascade: each newly activated node gets one round of attempts."""
    n, n_nodes = ever.shape
    active = np.zeros(n_nodes, np.bool_)
    frontier = np.empty(n_nodes, np.int64)
    new = np.empty(n_nodes, np.int64)
    touched = np.empty(n_nodes, np.int64)
    s_obs = 0
    for k in range(n_nodes):
        if target[k] and observed[k]:
            s_obs += 1
    for i in range(n):
        pi = p[i]
        active[source] = True
        frontier[0] = source
        nf = 1
        touched[0] = source
        nt = 1
        e_obs = 1 if observed[source] else 0
        inter = 1 if (observed[source] and target[source]) else 0
        stop = False
        for _ in range(steps):
            nnew = 0
            for a in range(nf):
                u = frontier[a]
                for e in range(indptr[u], indptr[u + 1]):
                    v = indices[e]
                    if not active[v] and rng.random() < pi:
                        active[v] = True
                        new[nnew] = v
                        nnew += 1
                        touched[nt] = v
                        nt += 1
                        if observed[v]:
                            e_obs += 1
                            if target[v]:
                                inter += 1
                            elif prune:
                                stop = True
                                break
                if stop:
                    break
            if stop or nnew == 0:
                break
            frontier[:nnew] = new[:nnew]
            nf = nnew
            if bound_cut > 0.0 and _too_far(s_obs, e_obs, inter, bound_cut):
                stop = True
                break
        pruned[i] = stop
        for k in range(nt):
            ever[i, touched[k]] = True
            active[touched[k]] = False


@njit(cache=True)
def sir_temporal(times, src, dst, source, t0, t_end, p, q, rng, target, observed, prune,
                 bound_cut, ever, pruned):
    """Event-driven SIR over a time-sorted contact list.

    The source is infected at the start of day ``t0[i]``. Contacts on days
    ``t0[i]..t_end`` are processed in list order; at every day boundary each
    infected node recovers with probability ``q[i]``. Boundaries with no
    contacts in between are collapsed into one draw with the same law.
    """
    n, n_nodes = ever.shape
    n_events = len(times)
    state = np.zeros(n_nodes, np.int8)
    inf = np.empty(n_nodes, np.int64)
    touched = np.empty(n_nodes, np.int64)
    s_obs = 0
    for k in range(n_nodes):
        if target[k] and observed[k]:
            s_obs += 1
    for i in range(n):
        pi = p[i]
        survive = 1.0 - q[i]
        state[source] = INFECTED
        inf[0] = source
        ninf = 1
        touched[0] = source
        nt = 1
        e_obs = 1 if observed[source] else 0
        inter = 1 if (observed[source] and target[source]) else 0
        stop = False
        day = t0[i]
        e = np.searchsorted(times, day)
        while e < n_events:
            t = times[e]
            if t > t_end:
                break
            if t > day:
                keep = survive ** (t - day)
                nn = 0
                for a in range(ninf):
                    u = inf[a]
                    if rng.random() >= keep:
                        state[u] = RECOVERED
                    else:
                        inf[nn] = u
                        nn += 1
                ninf = nn
                day = t
                if ninf == 0:
                    break
                if bound_cut > 0.0 and _too_far(s_obs, e_obs, inter, bound_cut):
                    stop = True
                    break
            u = src[e]
            v = dst[e]
            e += 1
            if state[u] == INFECTED and state[v] == SUSCEPTIBLE:
                w = v
            elif state[v] == INFECTED and state[u] == SUSCEPTIBLE:
                w = u
            else:
                continue
            if rng.random() < pi:
                state[w] = INFECTED
                inf[ninf] = w
                ninf += 1
                touched[nt] = w
                nt += 1
                if observed[w]:
                    e_obs += 1
                    if target[w]:
                        inter += 1
                    elif prune:
                        stop = True
                        break
        pruned[i] = stop
        for k in range(nt):
            ever[i, touched[k]] = True
            state[touched[k]] = SUSCEPTIBLE
