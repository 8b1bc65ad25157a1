"""Co-training bound calculator and Monte-Carlo validator.

Setting: two classifiers over a common domain, trained from private
datasets of sizes s1 and s2, with generalization errors bounded by a0 and
b0 (both below one half) at confidence delta over a finite hypothesis
class of size |H|. The first classifier labels g extra samples which are
merged into the second classifier's training set; the retrained
classifier's error is then bounded, with probability at least 1 - delta,
by

    b1 = max(b0 + g * (a0 - d12) / s2, 0)

where d12 is the disagreement rate between the first classifier and the
retrained one. The guarantee needs three sample-size conditions:

    s1 >= ln(|H| / delta) / a0
    s2 >= ln(|H| / delta) / b0
    exp(M) * sqrt(M!) - M >= s2 * b0        with M = g * a0

The tail probability behind the bound is a binomial expression
approximated by a Poisson mass; both are computed here in log space. M is
a count, so it is rounded to the nearest integer wherever a factorial or
binomial needs it.

The Monte-Carlo validator instantiates all of this literally: threshold
classifiers over a discrete domain (a finite class with exactly
computable disagreements), an exact empirical-risk-minimizing retrain,
and a violation count for d(retrained, truth) >= b1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError
from .seeds import derive_seed

__all__ = [
    "BoundInputs",
    "BoundReport",
    "McSpec",
    "McReport",
    "empirical_disagreement",
    "bound_conditions",
    "compute_bound",
    "poisson_tail_estimate",
    "mc_validate",
    "threshold_class_predictions",
]


@dataclass(frozen=True)
class BoundInputs:
    """Inputs to the bound. ``d12`` is the realized disagreement between
    the helper classifier and the retrained one."""

    a0: float
    b0: float
    s1: int
    s2: int
    g: int
    delta: float
    h_space_size: int
    d12: float

    def __post_init__(self):
        if not 0 < self.a0 < 0.5:
            raise ConfigError(f"a0 must lie in (0, 0.5), got {self.a0}")
        if not 0 < self.b0 < 0.5:
            raise ConfigError(f"b0 must lie in (0, 0.5), got {self.b0}")
        for name, val in (("s1", self.s1), ("s2", self.s2), ("g", self.g)):
            if val < 1:
                raise ConfigError(f"{name} must be a positive integer, got {val}")
        if not 0 < self.delta < 1:
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        if self.h_space_size < 2:
            raise ConfigError(f"h_space_size must be >= 2, got {self.h_space_size}")
        if not 0 <= self.d12 <= 1:
            raise ConfigError(f"d12 must lie in [0, 1], got {self.d12}")

    @property
    def rounded_count(self) -> int:
        """M = g * a0, rounded to the nearest integer for count expressions."""
        return int(round(self.g * self.a0))


@dataclass(frozen=True)
class BoundReport:
    b1: float
    cond_s1: bool
    cond_s2: bool
    cond_factorial: bool
    tail_estimate: float
    all_conditions_met: bool
    # both sides of the factorial condition, in log space, for inspection
    factorial_lhs_log: float
    factorial_rhs_log: float

    def as_dict(self) -> dict:
        return {
            "b1": self.b1,
            "cond_s1": self.cond_s1,
            "cond_s2": self.cond_s2,
            "cond_factorial": self.cond_factorial,
            "all_conditions_met": self.all_conditions_met,
            "tail_estimate": self.tail_estimate,
            "factorial_lhs_log": self.factorial_lhs_log,
            "factorial_rhs_log": self.factorial_rhs_log,
        }


def empirical_disagreement(preds_a, preds_b) -> float:
    """Fraction of positions where two prediction lists differ.

    A normalized Hamming distance: symmetric, zero on identical lists,
    and obeying the triangle inequality.
    """
    a = np.asarray(preds_a)
    b = np.asarray(preds_b)
    if a.shape != b.shape or a.ndim != 1:
        raise ContractError(f"prediction lists must be 1-D and equal length, got {a.shape} vs {b.shape}")
    if len(a) == 0:
        raise ContractError("prediction lists are empty")
    return float(np.mean(a != b))


def bound_conditions(inputs: BoundInputs) -> tuple[bool, bool, bool]:
    """Evaluate the three sample-size conditions exactly as stated.

    The factorial condition compares M + ln(M!)/2 against
    ln(s2*b0 + M) in log space, avoiding overflow for large M.
    """
    log_ratio = math.log(inputs.h_space_size / inputs.delta)
    cond_s1 = inputs.s1 >= log_ratio / inputs.a0
    cond_s2 = inputs.s2 >= log_ratio / inputs.b0
    m = inputs.rounded_count
    lhs_log = m + 0.5 * math.lgamma(m + 1)
    rhs_log = math.log(inputs.s2 * inputs.b0 + m)
    cond_factorial = lhs_log >= rhs_log
    return cond_s1, cond_s2, cond_factorial


def _factorial_condition_logs(inputs: BoundInputs) -> tuple[float, float]:
    m = inputs.rounded_count
    return m + 0.5 * math.lgamma(m + 1), math.log(inputs.s2 * inputs.b0 + m)


def compute_bound(inputs: BoundInputs) -> BoundReport:
    """The high-probability error bound for the retrained classifier."""
    b1 = max(inputs.b0 + inputs.g * (inputs.a0 - inputs.d12) / inputs.s2, 0.0)
    cond_s1, cond_s2, cond_factorial = bound_conditions(inputs)
    lhs_log, rhs_log = _factorial_condition_logs(inputs)
    return BoundReport(
        b1=b1,
        cond_s1=cond_s1,
        cond_s2=cond_s2,
        cond_factorial=cond_factorial,
        tail_estimate=poisson_tail_estimate(inputs, b1),
        all_conditions_met=cond_s1 and cond_s2 and cond_factorial,
        factorial_lhs_log=lhs_log,
        factorial_rhs_log=rhs_log,
    )


def poisson_tail_estimate(inputs: BoundInputs, b1: float) -> float:
    """Poisson mass lambda^M * exp(-lambda) / M! at M = round(g * a0),
    with lambda = s2*b1 + g*a0. Computed in log space."""
    if not 0 <= b1 <= 1:
        raise ContractError(f"b1 must lie in [0, 1], got {b1}")
    lam = inputs.s2 * b1 + inputs.g * inputs.a0
    m = inputs.rounded_count
    log_p = m * math.log(lam) - lam - math.lgamma(m + 1)
    return math.exp(log_p)


# ---------------------------------------------------------------------------
# Monte-Carlo validation over an enumerable hypothesis class
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class McSpec:
    """Monte-Carlo setup: threshold classifiers over the domain {1..K}.

    The class contains, for every threshold t in 1..K+1, the ascending
    rule (+1 iff x >= t) and the descending rule (-1 iff x >= t), for
    2K + 2 members including the constant rules. Ground-truth errors and
    disagreements are exact on the uniform discrete domain.
    """

    domain_size: int
    a0_target: float
    b0_target: float
    s1: int
    s2: int
    g: int
    delta: float
    trials: int

    def __post_init__(self):
        if self.domain_size < 2:
            raise ConfigError(f"domain_size must be >= 2, got {self.domain_size}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        # range checks are delegated to BoundInputs at validation time

    @property
    def h_space_size(self) -> int:
        return 2 * self.domain_size + 2


@dataclass(frozen=True)
class McReport:
    trials: int
    violations: int
    violation_rate: float
    b1_min: float
    b1_mean: float
    conditions: tuple[bool, bool, bool]
    delta: float


def threshold_class_predictions(domain_size: int) -> np.ndarray:
    """Prediction table of the threshold class, shape (2K+2, K), entries in {-1, +1}.

    Row 2*t is the ascending rule with threshold t+1; row 2*t+1 the
    descending one.
    """
    xs = np.arange(1, domain_size + 1)
    rows = []
    for t in range(1, domain_size + 2):
        asc = np.where(xs >= t, 1, -1)
        rows.append(asc)
        rows.append(-asc)
    return np.array(rows, dtype=np.int8)


def mc_validate(spec: McSpec, seed: int) -> McReport:
    """Empirically test the bound by exact ERM over the threshold class.

    Per trial: pick a ground truth h and a helper h1 with exact
    disagreement at most a0 from h; draw s2 points labeled by h and g
    points labeled by h1; retrain by exact empirical risk minimization
    (ties to the lower enumeration index); count a violation when the
    retrained classifier's exact error reaches b1 computed from the
    realized disagreement. Refuses specs whose conditions fail.
    """
    inputs = BoundInputs(
        a0=spec.a0_target,
        b0=spec.b0_target,
        s1=spec.s1,
        s2=spec.s2,
        g=spec.g,
        delta=spec.delta,
        h_space_size=spec.h_space_size,
        d12=0.0,
    )
    cond_s1, cond_s2, cond_factorial = bound_conditions(inputs)
    for name, ok in (("s1", cond_s1), ("s2", cond_s2), ("factorial", cond_factorial)):
        if not ok:
            raise ContractError(f"spec does not satisfy the {name} condition; refusing to validate")

    k = spec.domain_size
    preds = threshold_class_predictions(k)  # (|H|, K)
    n_hyp = preds.shape[0]
    # exact pairwise disagreement d(h_a, h_b) = mean over the domain
    diff = (preds[:, None, :] != preds[None, :, :]).mean(axis=2)

    violations = 0
    b1_values = np.empty(spec.trials)
    for trial in range(spec.trials):
        rng = np.random.default_rng(derive_seed(seed, "trial", trial))
        truth = int(rng.integers(n_hyp))
        candidates = np.flatnonzero(diff[truth] <= spec.a0_target)
        helper = int(rng.choice(candidates))

        own_points = rng.integers(0, k, size=spec.s2)
        helper_points = rng.integers(0, k, size=spec.g)
        own_labels = preds[truth, own_points]
        helper_labels = preds[helper, helper_points]

        # exact ERM: disagreement counts with the merged training set
        errs = (preds[:, own_points] != own_labels).sum(axis=1)
        errs += (preds[:, helper_points] != helper_labels).sum(axis=1)
        retrained = int(np.argmin(errs))  # argmin takes the lowest index on ties

        d12 = float(diff[helper, retrained])
        b1 = max(spec.b0_target + spec.g * (spec.a0_target - d12) / spec.s2, 0.0)
        b1_values[trial] = b1
        if diff[truth, retrained] >= b1:
            violations += 1

    return McReport(
        trials=spec.trials,
        violations=violations,
        violation_rate=violations / spec.trials,
        b1_min=float(b1_values.min()),
        b1_mean=float(b1_values.mean()),
        conditions=(cond_s1, cond_s2, cond_factorial),
        delta=spec.delta,
    )
