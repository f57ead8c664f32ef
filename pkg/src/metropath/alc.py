"""Monte-Carlo construction of approximate linear constraints over path shares.

Shares are evaluated at ``S`` coefficient vectors drawn uniformly from the
bounds.  A pair of share variables that agrees at every draw becomes an
equality; a same-OD pair whose order never flips becomes an inequality.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .clogit import shares_from_beta
from .domain import ChoiceIndex, ConfigurationError


@dataclass
class ConstraintSet:
    """``equalities``: ``p_a == p_b``; ``inequalities``: ``p_a >= p_b`` (same OD)."""

    n_vars: int
    equalities: list[tuple[int, int]] = field(default_factory=list)
    inequalities: list[tuple[int, int]] = field(default_factory=list)
    samples: int = 0
    lower: tuple = ()
    upper: tuple = ()
    seed: int | None = None
    tolerance: float = 1e-9

    def __post_init__(self):
        for a, b in self.equalities + self.inequalities:
            if a == b:
                raise ValueError(f"constraint relates variable {a} to itself")
            if not (0 <= a < self.n_vars and 0 <= b < self.n_vars):
                raise ValueError(f"constraint ({a}, {b}) outside 0..{self.n_vars - 1}")

    def merged(self, other: "ConstraintSet") -> "ConstraintSet":
        """Union of two constraint sets over the same variables."""
        if other.n_vars != self.n_vars:
            raise ValueError("constraint sets index different variables")
        eq = sorted(set(self.equalities) | set(other.equalities))
        ineq = sorted(set(self.inequalities) | set(other.inequalities))
        return ConstraintSet(self.n_vars, eq, ineq, self.samples, self.lower,
                             self.upper, self.seed, self.tolerance)

    def classes(self) -> np.ndarray:
        """Union-find class label per variable (labels are 0..k-1 by first member)."""
        return equality_classes(self.n_vars, self.equalities)

    def to_dict(self, index: ChoiceIndex | None = None) -> dict:
        def describe(v):
            if index is None:
                return int(v)
            o, m, d, r = index.triple(int(v))
            return {"var": int(v), "origin": o, "interval": m, "destination": d, "path": r}

        return {
            "n_vars": self.n_vars,
            "samples": self.samples,
            "lower": [float(x) for x in self.lower],
            "upper": [float(x) for x in self.upper],
            "seed": self.seed,
            "tolerance": self.tolerance,
            "equalities": [[describe(a), describe(b)] for a, b in self.equalities],
            "inequalities": [[describe(a), describe(b)] for a, b in self.inequalities],
        }

    @classmethod
    def from_dict(cls, data: dict, index: ChoiceIndex | None = None) -> "ConstraintSet":
        def var(item):
            if isinstance(item, dict):
                if "var" in item:
                    return int(item["var"])
                if index is None:
                    raise ConfigurationError("constraint triples need a choice index")
                return index.var(str(item["origin"]), int(item["interval"]),
                                 str(item["destination"]), int(item["path"]))
            return int(item)

        n_vars = int(data["n_vars"]) if "n_vars" in data else index.n_vars
        return cls(
            n_vars,
            [(var(a), var(b)) for a, b in data.get("equalities", [])],
            [(var(a), var(b)) for a, b in data.get("inequalities", [])],
            int(data.get("samples", 0)),
            tuple(data.get("lower", ())),
            tuple(data.get("upper", ())),
            data.get("seed"),
            float(data.get("tolerance", 1e-9)),
        )

    def write_json(self, path, index: ChoiceIndex | None = None) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(index), fh, indent=1)
            fh.write("\n")


def read_constraints(path, index: ChoiceIndex | None = None) -> ConstraintSet:
    with open(path) as fh:
        return ConstraintSet.from_dict(json.load(fh), index)


def equality_classes(n_vars: int, pairs) -> np.ndarray:
    parent = list(range(n_vars))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in pairs:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(v) for v in range(n_vars)], dtype=np.int64)
    _, labels = np.unique(roots, return_inverse=True)
    return labels.astype(np.int64)


def sample_betas(lower, upper, samples: int, seed) -> np.ndarray:
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    rng = np.random.default_rng(seed)
    return rng.uniform(lower, upper, size=(samples, len(lower)))


def construct_alc(
    design: np.ndarray,
    index: ChoiceIndex,
    lower,
    upper,
    samples: int = 50,
    seed: int | None = 0,
    tolerance: float = 1e-9,
    cross_interval: bool = True,
) -> ConstraintSet:
    """Sample shares at ``samples`` uniform draws and extract pairwise constraints.

    Variables of single-path groups are skipped (the simplex fixes them at 1).
    With ``cross_interval=False`` only pairs within one interval are kept.
    """
    if samples < 1:
        raise ConfigurationError("ALC needs at least one sample")
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if lower.shape != upper.shape or lower.shape != (design.shape[1],):
        raise ConfigurationError("beta bounds must match the attribute count")
    if np.any(lower > upper):
        raise ConfigurationError("lower beta bound exceeds upper bound")
    if np.any(upper[:-1] > 0):
        raise ConfigurationError("cost coefficients need non-positive upper bounds")

    betas = sample_betas(lower, upper, samples, seed)
    P = np.vstack([shares_from_beta(b, design, index.group_ptr) for b in betas])  # (S, V)

    sizes = index.group_sizes()
    multi = np.repeat(sizes > 1, sizes)
    interval = np.array([index.groups[g][1] for g in index.var_group])

    # equalities: sweep the variables in order of their first-sample share;
    # any equal pair lies within ``tolerance`` in that order
    cand = np.flatnonzero(multi)
    order = cand[np.argsort(P[0, cand], kind="stable")]
    first = P[0, order]
    equalities = []
    for i, a in enumerate(order):
        j = i + 1
        while j < len(order) and first[j] - first[i] <= tolerance:
            b = order[j]
            j += 1
            if not cross_interval and interval[a] != interval[b]:
                continue
            if np.all(np.abs(P[:, a] - P[:, b]) <= tolerance):
                equalities.append((int(min(a, b)), int(max(a, b))))
    equalities.sort()
    eq_set = set(equalities)

    inequalities = []
    for g in np.flatnonzero(sizes > 1):
        sl = index.group_slice(g)
        vs = range(sl.start, sl.stop)
        for a in vs:
            for b in vs:
                if a == b or (min(a, b), max(a, b)) in eq_set:
                    continue
                if np.all(P[:, a] >= P[:, b] - tolerance):
                    inequalities.append((a, b))
    return ConstraintSet(
        index.n_vars,
        equalities,
        inequalities,
        samples,
        tuple(float(x) for x in lower),
        tuple(float(x) for x in upper),
        seed,
        tolerance,
    )


def dof_report(constraints: ConstraintSet, n_vars: int | None = None, index: ChoiceIndex | None = None) -> dict:
    """Degree-of-freedom summary after merging equality classes."""
    n = constraints.n_vars if n_vars is None else n_vars
    labels = equality_classes(n, constraints.equalities)
    n_classes = int(labels.max()) + 1 if n else 0
    report = {
        "variables": n,
        "classes": n_classes,
        "independent_equalities": n - n_classes,
        "inequalities": len(constraints.inequalities),
        "reduction": (n - n_classes) / n if n else 0.0,
    }
    if index is not None:
        # simplex rows over merged classes; their rank removes further dimensions
        S = np.zeros((index.n_groups, n_classes))
        np.add.at(S, (index.var_group, labels), 1.0)
        rank = int(np.linalg.matrix_rank(S)) if S.size else 0
        report["free_dimension"] = n_classes - rank
    return report
