"""C-logit path shares and the weighted fractional-logit correction step."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

log = logging.getLogger(__name__)


class NonIdentifiableWarning(UserWarning):
    pass


class SeparationError(RuntimeError):
    """The weighted likelihood increases without bound along ``direction``."""

    def __init__(self, message: str, direction: np.ndarray):
        super().__init__(message)
        self.direction = direction


def _segment_max(values: np.ndarray, ptr: np.ndarray) -> np.ndarray:
    return np.maximum.reduceat(values, ptr[:-1])


def shares_from_beta(beta, design: np.ndarray, group_ptr: np.ndarray) -> np.ndarray:
    """Softmax of ``design @ beta`` within each group (max-shifted)."""
    u = design @ np.asarray(beta, dtype=float)
    sizes = np.diff(group_ptr)
    u = u - np.repeat(_segment_max(u, group_ptr), sizes)
    e = np.exp(u)
    return e / np.repeat(np.add.reduceat(e, group_ptr[:-1]), sizes)


def log_likelihood(beta, shares, weights, design, group_ptr) -> float:
    """Weighted fractional-logit objective ``sum_g w_g sum_r p_r log pi_r``."""
    u = design @ np.asarray(beta, dtype=float)
    sizes = np.diff(group_ptr)
    u = u - np.repeat(_segment_max(u, group_ptr), sizes)
    logsum = np.log(np.add.reduceat(np.exp(u), group_ptr[:-1]))
    log_pi = u - np.repeat(logsum, sizes)
    return float(np.sum(np.repeat(weights, sizes) * shares * log_pi))


def gradient(beta, shares, weights, design, group_ptr) -> np.ndarray:
    sizes = np.diff(group_ptr)
    pi = shares_from_beta(beta, design, group_ptr)
    mass = np.repeat(np.add.reduceat(shares, group_ptr[:-1]), sizes)
    w = np.repeat(weights, sizes)
    return design.T @ (w * (shares - mass * pi))


def hessian(beta, shares, weights, design, group_ptr) -> np.ndarray:
    sizes = np.diff(group_ptr)
    pi = shares_from_beta(beta, design, group_ptr)
    mass = np.add.reduceat(shares, group_ptr[:-1])
    w = np.repeat(weights * mass, sizes)
    # per-group mean attribute under pi
    ybar = np.add.reduceat(pi[:, None] * design, group_ptr[:-1], axis=0)
    centred = design - np.repeat(ybar, sizes, axis=0)
    return -(centred * (w * pi)[:, None]).T @ centred


def recession_direction(shares, weights, design, group_ptr, support_tol: float = 1e-12):
    """Direction along which the likelihood rises forever, or ``None``.

    Such a direction keeps utilities equal within each group's support and
    pushes every zero-share path strictly down for some group.
    """
    k = design.shape[1]
    eq_rows, gt_rows = [], []
    for g in range(len(group_ptr) - 1):
        lo, hi = group_ptr[g], group_ptr[g + 1]
        if hi - lo < 2 or weights[g] <= 0:
            continue
        p = shares[lo:hi]
        supp = np.flatnonzero(p > support_tol)
        if len(supp) == 0:
            continue
        y0 = design[lo + supp[0]]
        eq_rows += [design[lo + r] - y0 for r in supp[1:]]
        gt_rows += [y0 - design[lo + s] for s in np.flatnonzero(p <= support_tol)]
    if not gt_rows:
        return None
    G = np.array(gt_rows)
    A_eq = sp.csr_matrix(np.array(eq_rows)) if eq_rows else None
    res = linprog(
        -G.sum(axis=0),
        A_ub=sp.csr_matrix(-G),
        b_ub=np.zeros(len(G)),
        A_eq=A_eq,
        b_eq=np.zeros(len(eq_rows)) if eq_rows else None,
        bounds=[(-1, 1)] * k,
        method="highs",
    )
    scale = max(1.0, float(np.abs(G).max()))
    if res.status != 0 or -res.fun <= 1e-9 * scale:
        return None
    d = res.x
    # equality rows hold only to solver precision; reject near-misses
    if eq_rows and np.max(np.abs(np.array(eq_rows) @ d)) > 1e-9 * scale:
        return None
    return d / np.linalg.norm(d)


@dataclass
class FitResult:
    beta: np.ndarray
    log_likelihood: float
    gradient_norm: float
    iterations: int
    converged: bool
    identifiable: bool
    rank: int


def fit_fractional_logit(
    shares,
    weights,
    design,
    group_ptr,
    beta_init=None,
    tol: float = 1e-8,
    max_iter: int = 500,
    max_norm: float = 1e4,
) -> FitResult:
    """Maximise the weighted fractional-logit likelihood by damped Newton.

    Directions along which the likelihood is flat keep their ``beta_init``
    component (minimum-norm Newton steps); a warning flags the design as
    non-identifiable in that case.
    """
    shares = np.asarray(shares, dtype=float)
    weights = np.asarray(weights, dtype=float)
    design = np.asarray(design, dtype=float)
    if np.any(weights < 0):
        raise ValueError("weights must be non-negative")
    k = design.shape[1]
    beta0 = np.zeros(k) if beta_init is None else np.asarray(beta_init, dtype=float).copy()
    beta = beta0.copy()

    direction = recession_direction(shares, weights, design, group_ptr)
    if direction is not None:
        raise SeparationError("fractional logit diverges: shares are separable by the design", direction)

    H = hessian(beta, shares, weights, design, group_ptr)
    scale = max(1.0, float(np.max(np.abs(H)))) if H.size else 1.0
    # rank of the information at the start point: flat directions are
    # flat for every beta (they are spanned by within-group constant columns)
    eig = np.linalg.eigvalsh(-H)
    rank = int(np.sum(eig > 1e-10 * scale))
    identifiable = rank == k
    if not identifiable:
        warnings.warn(
            f"fractional logit design has rank {rank} < {k}; flat directions keep their initial values",
            NonIdentifiableWarning,
            stacklevel=2,
        )
    if rank == 0:
        g = gradient(beta, shares, weights, design, group_ptr)
        return FitResult(beta, log_likelihood(beta, shares, weights, design, group_ptr),
                         float(np.max(np.abs(g))), 0, True, False, 0)

    ll = log_likelihood(beta, shares, weights, design, group_ptr)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g = gradient(beta, shares, weights, design, group_ptr)
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= tol:
            converged = True
            it -= 1
            break
        H = hessian(beta, shares, weights, design, group_ptr)
        w, V = np.linalg.eigh(-H)
        keep = w > 1e-12 * max(1.0, w.max())
        # fall back to a gradient step when curvature collapses (near separation)
        if not np.any(keep):
            step = g / max(gnorm, 1.0)
        else:
            Vk = V[:, keep]
            step = Vk @ ((Vk.T @ g) / w[keep])
        t = 1.0
        while True:
            cand = beta + t * step
            ll_new = log_likelihood(cand, shares, weights, design, group_ptr)
            if ll_new >= ll + 1e-4 * t * float(g @ step) or t < 1e-12:
                break
            t *= 0.5
        if t < 1e-12:
            # no further ascent possible at machine precision
            converged = gnorm <= max(tol, 1e-6 * max(1.0, float(np.sum(weights))))
            break
        beta, ll = cand, ll_new
        if np.linalg.norm(beta - beta0) > max_norm:
            direction = (beta - beta0) / np.linalg.norm(beta - beta0)
            raise SeparationError(
                "fractional logit diverges: shares are separable by the design", direction
            )
    g = gradient(beta, shares, weights, design, group_ptr)
    return FitResult(beta, ll, float(np.max(np.abs(g))), it, converged, identifiable, rank)
