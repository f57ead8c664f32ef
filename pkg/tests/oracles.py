"""Independent reference computations used by the test suite.

Nothing here imports the code under test beyond plain data containers, so a
bug in the package cannot leak into its own oracle.
"""

import itertools
import math

import numpy as np


def softmax_shares(beta, rows):
    """Direct exp/sum evaluation of logit shares for one choice set."""
    u = [sum(b * x for b, x in zip(beta, row)) for row in rows]
    e = [math.exp(x) for x in u]
    s = sum(e)
    return [x / s for x in e]


def commonality(station_lists, r, gamma=5.0):
    """Brute-force commonality factor of path ``r`` over its set."""
    own = station_lists[r]
    total = 0.0
    for other in station_lists:
        common = sum(1 for s in set(own) if s in set(other))
        total += (common / (len(own) * len(other))) ** gamma
    return math.log(total)


def qp_by_enumeration(H, c, Aeq, beq, G, h, tol=1e-9):
    """Minimise ``z'Hz/2 + c'z`` s.t. ``Aeq z = beq``, ``G z <= h`` by trying every active set.

    Requires ``H`` positive definite.  Every subset of at most
    ``n - rank(Aeq)`` inequalities is made active, the equality-constrained
    minimiser is found from the KKT system, and the best primal-feasible one
    wins; for a strictly convex problem it is the optimum.
    """
    H = np.asarray(H, dtype=float)
    c = np.asarray(c, dtype=float)
    n = len(c)
    Aeq = np.asarray(Aeq, dtype=float).reshape(-1, n)
    G = np.asarray(G, dtype=float).reshape(-1, n)
    beq = np.asarray(beq, dtype=float)
    h = np.asarray(h, dtype=float)
    free = n - np.linalg.matrix_rank(Aeq) if len(Aeq) else n
    best, best_val = None, np.inf
    for k in range(0, min(free, len(G)) + 1):
        for active in itertools.combinations(range(len(G)), k):
            M = np.vstack([Aeq, G[list(active)]]) if k else Aeq
            rhs = np.concatenate([beq, h[list(active)]]) if k else beq
            m = len(M)
            K = np.block([[H, M.T], [M, np.zeros((m, m))]])
            sol, *_ = np.linalg.lstsq(K, np.concatenate([-c, rhs]), rcond=None)
            z = sol[:n]
            if m and np.max(np.abs(M @ z - rhs)) > tol:
                continue  # inconsistent active set
            if len(G) and np.max(G @ z - h) > tol:
                continue
            val = 0.5 * z @ H @ z + c @ z
            if val < best_val:
                best, best_val = z, val
    return best, best_val


def share_qp_oracle(problem):
    """Optimum of an assembled share QP, solved in the full share space.

    Simplex rows and ALC equalities become equality rows; ``p >= 0`` and ALC
    inequalities become inequality rows (``p <= 1`` follows from the simplex).
    """
    A = problem.A.toarray()
    y = problem.target
    n = A.shape[1]
    prior = problem.prior if problem.prior is not None else np.zeros(n)
    H = 2 * problem.w1 * A.T @ A + 2 * problem.w2 * np.eye(n)
    c = -2 * problem.w1 * A.T @ y - 2 * problem.w2 * prior
    const = problem.w1 * y @ y + problem.w2 * prior @ prior
    ptr = problem.index.group_ptr
    rows, rhs = [], []
    for g in range(len(ptr) - 1):
        r = np.zeros(n)
        r[ptr[g] : ptr[g + 1]] = 1
        rows.append(r)
        rhs.append(1.0)
    for a, b in problem.constraints.equalities:
        r = np.zeros(n)
        r[a], r[b] = 1, -1
        rows.append(r)
        rhs.append(0.0)
    G, h = [], []
    for v in range(n):
        r = np.zeros(n)
        r[v] = -1
        G.append(r)
        h.append(0.0)
    for a, b in problem.constraints.inequalities:  # p_a >= p_b
        r = np.zeros(n)
        r[a], r[b] = -1, 1
        G.append(r)
        h.append(0.0)
    z, val = qp_by_enumeration(H, c, np.array(rows), np.array(rhs), np.array(G), np.array(h))
    return z, None if z is None else val + const


def hand_fifb(arrivals, departures, capacity):
    """Boarding train per passenger on one platform, served first-come first-board.

    ``arrivals``: platform arrival seconds, already in queue order.
    ``departures``: train departure seconds in time order.
    """
    boarded = [None] * len(arrivals)
    for t_idx, dep in enumerate(departures):
        room = capacity
        for p, arr in enumerate(arrivals):
            if boarded[p] is None and arr <= dep and room > 0:
                boarded[p] = t_idx
                room -= 1
    return boarded
