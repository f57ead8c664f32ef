"""Fixed-point driver: loading, share QP and fractional-logit correction in turn.

Starting from ``mu_0 = SP2(beta_0)`` each iteration solves the share QP with
the current delay rates, refits beta to those shares, and reloads the
network.  The reported beta is the mean over iterations ``K_b..K_t``.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from .afc import observed_flows_from_afc  # noqa: F401  re-exported for callers
from .alc import ConstraintSet, construct_alc, dof_report
from .clogit import SeparationError, fit_fractional_logit, shares_from_beta
from .domain import ATTRIBUTE_NAMES, ConfigurationError
from .loading import LoadingModel, LoadingResult, SimConfig
from .qp import QpFailure, QpInfeasible, assemble_qp, solve_qp
from .scenario import Scenario
from .synthgen import BETA_LOWER, BETA_UPPER

log = logging.getLogger(__name__)


class EstimationError(RuntimeError):
    """A sub-problem failed; ``stage`` is ``"loading"``, ``"qp"`` or ``"logit"``."""

    def __init__(self, message: str, iteration: int, stage: str, cause: Exception | None = None):
        super().__init__(f"iteration {iteration}, {stage}: {message}")
        self.iteration = iteration
        self.stage = stage
        self.cause = cause


@dataclass
class RunConfig:
    k_total: int = 15
    k_burn: int = 13
    beta_init: tuple = (0.0, 0.0, 0.0, 0.0)
    w1: float = 1.0
    w2: float = 0.0
    beta_prior: tuple | None = None
    lower: tuple = tuple(BETA_LOWER)
    upper: tuple = tuple(BETA_UPPER)
    alc_samples: int = 50
    alc_tolerance: float = 1e-9
    alc_cross_interval: bool = True
    seed: int = 0
    replications: int = 1
    backend: str | None = None

    def __post_init__(self):
        if not 1 <= self.k_burn <= self.k_total:
            raise ConfigurationError("need 1 <= K_b <= K_t")
        if self.replications < 1:
            raise ConfigurationError("replications must be >= 1")
        if len(self.beta_init) != len(ATTRIBUTE_NAMES):
            raise ConfigurationError("beta_init needs one value per attribute")
        if self.w1 < 0 or self.w2 < 0:
            raise ConfigurationError("objective weights must be non-negative")

    @property
    def prior(self) -> np.ndarray:
        return np.asarray(self.beta_prior if self.beta_prior is not None else self.beta_init, dtype=float)


@dataclass
class IterationRecord:
    k: int
    beta: np.ndarray
    objective: float
    qp_objective: float
    rmse: float | None
    qp: dict
    fit: dict
    stranded: int
    max_left_behind: float

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "beta": dict(zip(ATTRIBUTE_NAMES, map(float, self.beta))),
            "objective": self.objective,
            "qp_objective": self.qp_objective,
            "rmse": self.rmse,
            "qp": self.qp,
            "fit": self.fit,
            "stranded": self.stranded,
            "max_left_behind": self.max_left_behind,
        }


@dataclass
class EstimationResult:
    beta: np.ndarray
    shares: np.ndarray
    objective: float
    rmse: float | None
    records: list[IterationRecord]
    initial_objective: float
    constraints: ConstraintSet
    dof: dict
    loading: LoadingResult = field(repr=False)


def objective(predicted, observed, beta=None, prior_beta=None, w1: float = 1.0, w2: float = 0.0) -> float:
    """``w1 * sum (q - q_obs)^2 + w2 * ||beta - beta_prior||^2``."""
    predicted = np.asarray(predicted, dtype=float)
    observed = np.asarray(observed, dtype=float)
    if predicted.shape != observed.shape:
        raise ValueError("predicted and observed tables differ in shape")
    val = w1 * float(np.sum((predicted - observed) ** 2))
    if w2:
        d = np.asarray(beta, dtype=float) - np.asarray(prior_beta, dtype=float)
        val += w2 * float(d @ d)
    return val


def rmse(estimated, reference) -> float:
    """Root-mean-square share error in percentage points over all path entries."""
    estimated = np.asarray(estimated, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if estimated.shape != reference.shape:
        raise IndexError("share tables cover different path universes")
    if estimated.size == 0:
        return 0.0
    return float(np.sqrt(np.mean((100.0 * (estimated - reference)) ** 2)))


def run_estimation(
    scenario: Scenario,
    od_flows,
    observed,
    config: RunConfig = RunConfig(),
    sim_config: SimConfig = SimConfig(),
    reference_shares=None,
    constraints: ConstraintSet | None = None,
    extra_constraints: ConstraintSet | None = None,
    tapins=None,
) -> EstimationResult:
    """Run the fixed-point iteration on observed entry-exit flows.

    ``tapins`` optionally fixes tap-in times per group for every loading run.
    """
    index = scenario.index
    design = scenario.design
    od_flows = np.asarray(od_flows, dtype=float)
    observed = np.asarray(observed, dtype=float)
    model = LoadingModel(scenario, sim_config)
    prior = config.prior

    if constraints is None:
        constraints = construct_alc(
            design, index, config.lower, config.upper, config.alc_samples,
            config.seed, config.alc_tolerance, config.alc_cross_interval,
        )
    if extra_constraints is not None:
        constraints = constraints.merged(extra_constraints)
    dof = dof_report(constraints, index=index)
    log.info("ALC: %d equalities, %d inequalities, dof reduction %.1f%%",
             len(constraints.equalities), len(constraints.inequalities), 100 * dof["reduction"])

    def load(beta, k):
        # the same seeds at every iteration; several replications average mu
        shares = shares_from_beta(beta, design, index.group_ptr)
        try:
            runs = [model.run(od_flows, shares, seed=config.seed + i, tapins=tapins, backend=config.backend)
                    for i in range(config.replications)]
        except Exception as exc:  # propagate with iteration context
            raise EstimationError(str(exc), k, "loading", exc) from exc
        if len(runs) == 1:
            return runs[0]
        mu = np.mean([r.mu for r in runs], axis=0)
        entry_exit = np.mean([r.entry_exit for r in runs], axis=0)
        return dataclasses.replace(runs[0], mu=mu, entry_exit=entry_exit)

    def score(beta, res):
        return objective(res.entry_exit, observed, beta, prior, config.w1, config.w2)

    beta = np.asarray(config.beta_init, dtype=float)
    res = load(beta, 0)
    initial_objective = score(beta, res)
    records: list[IterationRecord] = []
    history = []
    for k in range(1, config.k_total + 1):
        warm = shares_from_beta(beta, design, index.group_ptr)
        prior_shares = shares_from_beta(prior, design, index.group_ptr) if config.w2 else None
        try:
            problem = assemble_qp(index, od_flows, res.mu, observed, constraints,
                                  config.w1, config.w2, prior_shares, warm)
            sol = solve_qp(problem)
        except (QpInfeasible, QpFailure, ValueError) as exc:
            raise EstimationError(str(exc), k, "qp", exc) from exc
        try:
            fit = fit_fractional_logit(sol.shares, od_flows, design, index.group_ptr, beta_init=beta)
        except SeparationError as exc:
            raise EstimationError(str(exc), k, "logit", exc) from exc
        beta = fit.beta
        history.append(beta.copy())
        res = load(beta, k)
        shares_k = shares_from_beta(beta, design, index.group_ptr)
        lbr = res.indicators.left_behind_rate
        records.append(IterationRecord(
            k,
            beta.copy(),
            score(beta, res),
            sol.objective,
            None if reference_shares is None else rmse(shares_k, reference_shares),
            {"iterations": sol.iterations, "unique": sol.unique, "components": sol.components,
             **{key: float(v) for key, v in sol.kkt.items()}},
            {"iterations": fit.iterations, "converged": fit.converged,
             "gradient_norm": fit.gradient_norm, "rank": fit.rank},
            res.n_stranded,
            float(lbr[:, -1].max(initial=0.0)),
        ))
        log.info("k=%d beta=%s objective=%.3f", k, np.round(beta, 4), records[-1].objective)

    beta_bar = np.mean(history[config.k_burn - 1 : config.k_total], axis=0)
    shares = shares_from_beta(beta_bar, design, index.group_ptr)
    final = load(beta_bar, config.k_total)
    return EstimationResult(
        beta_bar,
        shares,
        score(beta_bar, final),
        None if reference_shares is None else rmse(shares, reference_shares),
        records,
        initial_objective,
        constraints,
        dof,
        final,
    )


def write_convergence_csv(records: list[IterationRecord], path) -> None:
    fields = ["k", *[f"beta_{n}" for n in ATTRIBUTE_NAMES], "objective", "qp_objective", "rmse",
              "stranded", "max_left_behind"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in records:
            w.writerow([r.k, *[repr(float(b)) for b in r.beta], repr(r.objective),
                        repr(r.qp_objective), "" if r.rmse is None else repr(r.rmse),
                        r.stranded, repr(r.max_left_behind)])


def write_shares_csv(scenario: Scenario, shares, path) -> None:
    index = scenario.index
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["origin", "interval", "destination", "path", "share"])
        for v in range(index.n_vars):
            o, m, d, r = index.triple(v)
            w.writerow([o, m, d, r, repr(float(shares[v]))])


def read_shares_csv(scenario: Scenario, path) -> np.ndarray:
    index = scenario.index
    shares = np.full(index.n_vars, np.nan)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            v = index.var(row["origin"], int(row["interval"]), row["destination"], int(row["path"]))
            shares[v] = float(row["share"])
    return shares
