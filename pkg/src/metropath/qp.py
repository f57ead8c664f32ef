"""Share-space quadratic program with delay rates held fixed.

    minimise   w1 * ||A p - q_obs||^2 + w2 * ||p - p_prior||^2
    subject to per-group simplex, 0 <= p, ALC equalities and inequalities

where row ``(g, n)`` of ``A`` holds ``q_g * mu[v, n]`` for the variables of
group ``g``.  Equality classes are merged into one variable each, the problem
splits into connected components, and every component is solved by a primal
active-set method started from an LP-feasible point near the warm start.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog
from scipy.sparse.csgraph import connected_components

from .alc import ConstraintSet, equality_classes
from .domain import ChoiceIndex

log = logging.getLogger(__name__)


class AssemblyError(ValueError):
    pass


class QpInfeasible(RuntimeError):
    """ALC constraints contradict the simplex; ``certificate`` is a minimal subset."""

    def __init__(self, message: str, certificate: list[tuple[str, int, int]]):
        super().__init__(message)
        self.certificate = certificate

    def to_dict(self, index: ChoiceIndex | None = None) -> list[dict]:
        out = []
        for kind, a, b in self.certificate:
            item = {"kind": kind, "a": a, "b": b}
            if index is not None:
                item["a_triple"] = list(index.triple(a))
                item["b_triple"] = list(index.triple(b))
            out.append(item)
        return out


class QpFailure(RuntimeError):
    pass


@dataclass
class QpProblem:
    index: ChoiceIndex
    A: sp.csr_matrix
    target: np.ndarray
    constraints: ConstraintSet
    w1: float = 1.0
    w2: float = 0.0
    prior: np.ndarray | None = None
    warm_start: np.ndarray | None = None

    @property
    def n_vars(self) -> int:
        return self.index.n_vars

    def objective(self, p) -> float:
        p = np.asarray(p, dtype=float)
        r = self.A @ p - self.target
        val = self.w1 * float(r @ r)
        if self.w2 and self.prior is not None:
            d = p - self.prior
            val += self.w2 * float(d @ d)
        return val

    def predicted(self, p) -> np.ndarray:
        return self.A @ np.asarray(p, dtype=float)

    def to_dict(self) -> dict:
        A = self.A.tocoo()
        return {
            "n_vars": self.n_vars,
            "n_rows": int(A.shape[0]),
            "w1": self.w1,
            "w2": self.w2,
            "A": {"row": A.row.tolist(), "col": A.col.tolist(), "val": A.data.tolist()},
            "target": self.target.tolist(),
            "prior": None if self.prior is None else self.prior.tolist(),
            "group_ptr": self.index.group_ptr.tolist(),
            "constraints": self.constraints.to_dict(),
        }


@dataclass
class QpSolution:
    shares: np.ndarray
    objective: float
    kkt: dict
    iterations: int
    unique: bool
    components: int
    multipliers: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "shares": self.shares.tolist(),
            "objective": self.objective,
            "kkt": self.kkt,
            "iterations": self.iterations,
            "unique": self.unique,
            "components": self.components,
        }


def assemble_qp(
    index: ChoiceIndex,
    od_flows,
    mu,
    observed,
    constraints: ConstraintSet | None = None,
    w1: float = 1.0,
    w2: float = 0.0,
    prior=None,
    warm_start=None,
) -> QpProblem:
    """Build the QP for fixed delay rates ``mu`` (``n_vars x n_exit``)."""
    od_flows = np.asarray(od_flows, dtype=float)
    mu = np.asarray(mu, dtype=float)
    observed = np.asarray(observed, dtype=float)
    if od_flows.shape != (index.n_groups,):
        raise AssemblyError("OD entry flows do not match the choice index")
    if mu.ndim != 2 or mu.shape[0] != index.n_vars:
        raise AssemblyError("delay-rate table does not match the choice index")
    n_exit = mu.shape[1]
    if observed.shape != (index.n_groups, n_exit):
        raise AssemblyError("observed entry-exit table has the wrong shape")
    if np.any(od_flows < 0) or np.any(observed < 0):
        raise AssemblyError("flows must be non-negative")
    demanded = od_flows[index.var_group] > 0
    row_sum = mu.sum(axis=1)
    bad = demanded & (np.abs(row_sum - 1.0) > 1e-9)
    if np.any(bad):
        v = int(np.flatnonzero(bad)[0])
        raise AssemblyError(f"delay rates missing or unnormalised for {index.triple(v)}")
    if w1 < 0 or w2 < 0:
        raise AssemblyError("objective weights must be non-negative")

    vv, nn = np.nonzero(mu * demanded[:, None])
    g = index.var_group[vv]
    vals = od_flows[g] * mu[vv, nn]
    A = sp.csr_matrix((vals, (g * n_exit + nn, vv)), shape=(index.n_groups * n_exit, index.n_vars))
    if constraints is None:
        constraints = ConstraintSet(index.n_vars)
    if constraints.n_vars != index.n_vars:
        raise AssemblyError("constraint set indexes a different variable space")
    return QpProblem(
        index,
        A,
        observed.ravel().copy(),
        constraints,
        float(w1),
        float(w2),
        None if prior is None else np.asarray(prior, dtype=float),
        None if warm_start is None else np.asarray(warm_start, dtype=float),
    )


# --------------------------------------------------------------------------
# reduced problem


@dataclass
class _Reduced:
    labels: np.ndarray  # class per original variable
    H: sp.csr_matrix
    c: np.ndarray
    const: float
    S: np.ndarray  # (rows, k) dense simplex rows over classes
    ineq: np.ndarray  # (m, 2) class pairs meaning z_a >= z_b


def _reduce(problem: QpProblem) -> _Reduced:
    idx = problem.index
    cs = problem.constraints
    labels = equality_classes(idx.n_vars, cs.equalities)
    k = int(labels.max()) + 1
    E = sp.csr_matrix((np.ones(idx.n_vars), (np.arange(idx.n_vars), labels)), shape=(idx.n_vars, k))
    AE = (problem.A @ E).tocsr()
    H = 2.0 * problem.w1 * (AE.T @ AE)
    c = -2.0 * problem.w1 * (AE.T @ problem.target)
    const = problem.w1 * float(problem.target @ problem.target)
    if problem.w2:
        prior = problem.prior if problem.prior is not None else np.zeros(idx.n_vars)
        H = H + 2.0 * problem.w2 * (E.T @ E)
        c = c - 2.0 * problem.w2 * (E.T @ prior)
        const += problem.w2 * float(prior @ prior)
    S = np.zeros((idx.n_groups, k))
    np.add.at(S, (idx.var_group, labels), 1.0)
    S = np.unique(S, axis=0)
    pairs = {(int(labels[a]), int(labels[b])) for a, b in cs.inequalities}
    ineq = np.array(sorted(p for p in pairs if p[0] != p[1]), dtype=np.int64).reshape(-1, 2)
    return _Reduced(labels, sp.csr_matrix(H), np.asarray(c).ravel(), const, S, ineq)


def _components(red: _Reduced) -> tuple[int, np.ndarray]:
    k = red.S.shape[1]
    rows, cols = [], []
    for row in red.S:
        nz = np.flatnonzero(row)
        rows += list(nz[:-1])
        cols += list(nz[1:])
    if len(red.ineq):
        rows += list(red.ineq[:, 0])
        cols += list(red.ineq[:, 1])
    Hc = red.H.tocoo()
    rows += list(Hc.row)
    cols += list(Hc.col)
    adj = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(k, k))
    return connected_components(adj, directed=False)


def _feasible_start(Aeq, beq, G, h, z0):
    """LP point minimising ``|z - z0|_1``; None when infeasible."""
    n = Aeq.shape[1] if Aeq.size else G.shape[1]
    # variables (z, t) with t >= |z - z0|
    c = np.concatenate([np.zeros(n), np.ones(n)])
    I = np.eye(n)
    A_ub = [np.hstack([I, -I]), np.hstack([-I, -I])]
    b_ub = [z0, -z0]
    if len(G):
        A_ub.append(np.hstack([-G, np.zeros((len(G), n))]))
        b_ub.append(-h)
    res = linprog(
        c,
        A_ub=np.vstack(A_ub),
        b_ub=np.concatenate(b_ub),
        A_eq=np.hstack([Aeq, np.zeros((len(Aeq), n))]) if len(Aeq) else None,
        b_eq=beq if len(Aeq) else None,
        bounds=[(0, None)] * (2 * n),
        method="highs",
    )
    if res.status == 2:
        return None
    if res.status != 0:
        raise QpFailure(f"feasibility LP failed: {res.message}")
    return res.x[:n]


def _null_space(M: np.ndarray, n: int) -> np.ndarray:
    if M.shape[0] == 0:
        return np.eye(n)
    _, s, Vt = np.linalg.svd(M)
    rank = int(np.sum(s > 1e-10 * max(1.0, s[0]))) if len(s) else 0
    return Vt[rank:].T


def _rank(M: np.ndarray) -> int:
    return int(np.linalg.matrix_rank(M, tol=1e-10)) if M.size else 0


def active_set_qp(H, c, Aeq, beq, G, h, z0, max_iter: int = 1000):
    """Primal active-set method for ``min 1/2 z'Hz + c'z, Aeq z = beq, G z >= h``.

    ``H`` may be singular (positive semidefinite); ``z0`` must be feasible.
    Returns ``(z, working set, multipliers, iterations, unique)``.
    """
    n = len(z0)
    z = np.array(z0, dtype=float)
    scale = max(1.0, float(np.max(np.abs(H))) if H.size else 0.0, float(np.max(np.abs(c))) if c.size else 0.0)
    n_eq = len(Aeq)

    W: list[int] = []
    slack = G @ z - h if len(G) else np.zeros(0)
    base = Aeq.copy()
    for i in np.flatnonzero(slack <= 1e-10):
        trial = np.vstack([base, G[i]])
        if _rank(trial) > _rank(base):
            W.append(int(i))
            base = trial

    zero_streak = 0
    at_minimum = False  # set after an unblocked Newton step
    it = 0
    while it < max_iter:
        it += 1
        Aw = np.vstack([Aeq, G[W]]) if W else Aeq
        g = H @ z + c
        d = np.zeros(n)
        alpha_full = 1.0
        Z = np.zeros((n, 0)) if at_minimum else _null_space(Aw, n)
        if Z.shape[1]:
            Hr = Z.T @ H @ Z
            gr = Z.T @ g
            w, U = np.linalg.eigh(Hr)
            pos = w > 1e-11 * scale
            flat = U[:, ~pos]
            g_flat = flat @ (flat.T @ gr)
            if np.max(np.abs(g_flat), initial=0.0) > 1e-10 * scale:
                # descent along zero curvature: move until a constraint blocks
                d = -Z @ g_flat
                alpha_full = np.inf
            elif np.any(pos):
                Up = U[:, pos]
                d = -Z @ (Up @ ((Up.T @ gr) / w[pos]))
        if np.max(np.abs(d)) <= 1e-13 * (1.0 + np.max(np.abs(z))):
            lam = np.linalg.lstsq(Aw.T, g, rcond=None)[0] if len(Aw) else np.zeros(0)
            lam_in = lam[n_eq:]
            neg = np.flatnonzero(lam_in < -1e-9 * scale)
            if len(neg) == 0:
                return z, W, lam, it, _unique(H, Aw, n, scale)
            if zero_streak >= 3:
                drop = min(neg, key=lambda j: W[j])  # Bland: lowest constraint index
            else:
                drop = int(neg[np.argmin(lam_in[neg])])
            W.pop(int(drop))
            at_minimum = False
            continue
        Gd = G @ d if len(G) else np.zeros(0)
        alpha, block = alpha_full, None
        if len(G):
            slack = G @ z - h
            active = np.zeros(len(G), dtype=bool)
            active[W] = True
            cand = np.flatnonzero(~active & (Gd < -1e-14 * max(1.0, np.max(np.abs(d)))))
            if len(cand):
                steps = np.maximum(slack[cand], 0.0) / -Gd[cand]
                j = int(np.argmin(steps))
                if steps[j] < alpha:
                    alpha, block = float(steps[j]), int(cand[j])
        if not np.isfinite(alpha):
            raise QpFailure("quadratic program is unbounded below")
        z = z + alpha * d
        if block is not None:
            W.append(block)
        else:
            at_minimum = True
        zero_streak = zero_streak + 1 if alpha <= 1e-14 else 0
    raise QpFailure(f"active-set method did not converge in {max_iter} iterations")


def _unique(H, Aw, n, scale) -> bool:
    Z = _null_space(Aw, n)
    if Z.shape[1] == 0:
        return True
    w = np.linalg.eigvalsh(Z.T @ H @ Z)
    return bool(w.min() > 1e-11 * scale)


def solve_qp(problem: QpProblem, max_iter: int = 1000) -> QpSolution:
    """Solve component by component; raises :class:`QpInfeasible` with a certificate."""
    red = _reduce(problem)
    k = red.S.shape[1]
    n_comp, comp = _components(red)
    if problem.warm_start is not None:
        ws = np.asarray(problem.warm_start, dtype=float)
        z_warm = np.bincount(red.labels, weights=ws, minlength=k) / np.bincount(red.labels, minlength=k)
    else:
        # uniform shares as the default anchor
        sizes = problem.index.group_sizes()
        uni = np.repeat(1.0 / sizes, sizes)
        z_warm = np.bincount(red.labels, weights=uni, minlength=k) / np.bincount(red.labels, minlength=k)

    H_full = red.H.tocsr()
    z = np.zeros(k)
    total_it = 0
    unique = True
    mult_eq = np.zeros(len(red.S))
    mult_in = np.zeros(k + len(red.ineq))
    for cid in range(n_comp):
        cols = np.flatnonzero(comp == cid)
        pos = {int(c): i for i, c in enumerate(cols)}
        srows = np.flatnonzero(np.any(red.S[:, cols] != 0, axis=1))
        Aeq = red.S[np.ix_(srows, cols)]
        beq = np.ones(len(srows))
        ineq_rows = [j for j, (a, b) in enumerate(red.ineq) if a in pos]
        G = np.vstack(
            [np.eye(len(cols))]
            + [np.eye(1, len(cols), pos[a]) - np.eye(1, len(cols), pos[b]) for a, b in red.ineq[ineq_rows]]
        )
        h = np.zeros(len(G))
        Hc = H_full[cols][:, cols].toarray()
        cc = red.c[cols]
        z0 = _feasible_start(Aeq, beq, G, h, z_warm[cols])
        if z0 is None:
            cert = _certificate(problem, red, cols)
            raise QpInfeasible(f"ALC constraints are infeasible ({len(cert)} conflicting)", cert)
        zc, W, lam, it, uq = active_set_qp(Hc, cc, Aeq, beq, G, h, z0, max_iter)
        z[cols] = zc
        total_it += it
        unique &= uq
        # multipliers back into global arrays
        lam_eq_local = np.zeros(len(srows))
        lam_eq_local[:] = lam[: len(srows)]
        mult_eq[srows] = lam_eq_local
        for j, wi in enumerate(W):
            val = lam[len(srows) + j]
            if wi < len(cols):
                mult_in[cols[wi]] = val
            else:
                mult_in[k + ineq_rows[wi - len(cols)]] = val
    # polish tiny negatives from round-off
    z = np.where(np.abs(z) < 1e-15, 0.0, z)
    p = z[red.labels]
    kkt = _kkt(problem, red, z, mult_eq, mult_in)
    if not unique:
        log.info("QP optimum is not unique (flat objective directions)")
    return QpSolution(p, problem.objective(p), kkt, total_it, unique, n_comp,
                      {"simplex": mult_eq, "inequality": mult_in})


def _kkt(problem: QpProblem, red: _Reduced, z, mult_eq, mult_in) -> dict:
    k = len(z)
    H = red.H
    g = H @ z + red.c
    G = sp.vstack([sp.eye(k, format="csr"), _pair_matrix(red.ineq, k)]).tocsr()
    h_slack = G @ z
    resid = g - red.S.T @ mult_eq - G.T @ mult_in
    scale = max(1.0, float(abs(H).max()) if H.nnz else 0.0, float(np.max(np.abs(red.c))) if len(red.c) else 0.0)
    p = z[red.labels]
    return {
        "stationarity": float(np.max(np.abs(resid), initial=0.0) / scale),
        "primal_feasibility": primal_violation(problem, p),
        "dual_feasibility": float(max(0.0, -mult_in.min(initial=0.0)) / scale),
        "complementarity": float(np.max(np.abs(mult_in * h_slack), initial=0.0) / scale),
        "scale": scale,
    }


def _pair_matrix(pairs: np.ndarray, k: int) -> sp.csr_matrix:
    m = len(pairs)
    if m == 0:
        return sp.csr_matrix((0, k))
    rows = np.repeat(np.arange(m), 2)
    cols = pairs.ravel()
    vals = np.tile([1.0, -1.0], m)
    return sp.csr_matrix((vals, (rows, cols)), shape=(m, k))


def primal_violation(problem: QpProblem, p) -> float:
    """Largest violation of simplex, bounds and ALC constraints at ``p``."""
    p = np.asarray(p, dtype=float)
    idx, cs = problem.index, problem.constraints
    viol = [np.max(np.abs(idx.group_sums(p) - 1.0), initial=0.0), max(0.0, -p.min(initial=0.0))]
    if cs.equalities:
        e = np.array(cs.equalities)
        viol.append(np.max(np.abs(p[e[:, 0]] - p[e[:, 1]])))
    if cs.inequalities:
        q = np.array(cs.inequalities)
        viol.append(max(0.0, float(np.max(p[q[:, 1]] - p[q[:, 0]]))))
    return float(max(viol))


def _certificate(problem: QpProblem, red: _Reduced, cols) -> list[tuple[str, int, int]]:
    """Deletion filter: a minimal infeasible subset of the ALC constraints."""
    idx, cs = problem.index, problem.constraints
    in_comp = np.isin(red.labels, cols)
    vars_ = np.flatnonzero(in_comp)
    groups = np.unique(idx.var_group[vars_])
    # all variables of the touched groups take part in the simplex rows
    vars_ = np.flatnonzero(np.isin(idx.var_group, groups))
    local = {int(v): i for i, v in enumerate(vars_)}
    items = [("eq", a, b) for a, b in cs.equalities if a in local or b in local]
    items += [("ineq", a, b) for a, b in cs.inequalities if a in local or b in local]
    n = len(vars_)
    S = np.zeros((len(groups), n))
    gpos = {int(g): i for i, g in enumerate(groups)}
    for v in vars_:
        S[gpos[int(idx.var_group[v])], local[int(v)]] = 1.0

    def feasible(subset):
        eq_rows = [S]
        ub_rows = []
        for kind, a, b in subset:
            row = np.zeros((1, n))
            row[0, local[a]] = 1.0
            row[0, local[b]] = -1.0
            (eq_rows if kind == "eq" else ub_rows).append(row if kind == "eq" else -row)
        A_eq = np.vstack(eq_rows)
        b_eq = np.concatenate([np.ones(len(groups)), np.zeros(len(A_eq) - len(groups))])
        res = linprog(
            np.zeros(n),
            A_ub=np.vstack(ub_rows) if ub_rows else None,
            b_ub=np.zeros(len(ub_rows)) if ub_rows else None,
            A_eq=A_eq,
            b_eq=b_eq,
            bounds=[(0, None)] * n,
            method="highs",
        )
        return res.status != 2

    keep = list(items)
    for item in list(items):
        trial = [x for x in keep if x != item]
        if not feasible(trial):
            keep = trial
    return keep


def dump_qp_bundle(path, problem: QpProblem, solution: QpSolution | None = None) -> None:
    with open(path, "w") as fh:
        json.dump({"problem": problem.to_dict(),
                   "solution": None if solution is None else solution.to_dict()}, fh)
        fh.write("\n")
