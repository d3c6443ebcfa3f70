"""Adversarial convex instances with closed-form trajectory oracles.

Three families are provided, each targeted at a step count where the
descent run realizes a certified error floor:

* a one-dimensional piecewise-linear valley whose minimum the iterates
  reach exactly one step before the target, so the next step overshoots
  by the full stepsize;
* a one-dimensional quadratic scaled by the step-sum, realizing the
  ``1/(4 e^2 sum eta)`` floor;
* a high-dimensional max-of-linear objective on the unit ball whose
  deterministic minimal-index subgradient rule walks the iterate through
  one fresh coordinate per step.

Each family embeds a :class:`~stepaudit.engine.ConvexInstance`, exposes
``closed_form_iterate`` for independent trajectory verification, and
carries the analytic error floor it certifies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bounds import GuaranteeEnvelope
from .engine import ConvexInstance, project_ball, project_interval
from .errors import ConstructionError, InvalidParameterError
from .schedules import StepSchedule

__all__ = [
    "VShapeInstance",
    "QuadraticInstance",
    "MaxLinearInstance",
    "build_vshape",
    "build_quadratic",
    "build_maxlinear",
    "coupling_weights",
    "check_weight_conditions",
    "ConditionCheck",
    "ConditionReport",
]


# -- valley (piecewise-linear) family -------------------------------------


@dataclass
class VShapeInstance:
    """1-d valley with a shallow ramp of slope ``c_eps`` on ``(0, eps]``.

    Starting at ``x_0 = eps``, the ramp steps shrink the iterate to the
    minimum at exactly ``target_t - 1`` steps; the consistent subgradient
    ``-1`` at the minimum then throws step ``target_t`` a full stepsize
    up the right branch.
    """

    schedule: StepSchedule
    target_t: int
    epsilon: float
    c_eps: float
    shrink: float
    landing: float  # simulated iterate value one step before the target
    convex: ConvexInstance

    @property
    def horizon(self) -> int:
        return self.target_t

    def certified_bound(self) -> float:
        """Predicted error at the target step (domain-capped exit)."""
        exit_step = min(self.schedule.rate(self.target_t - 1), 1.0)
        return exit_step - self.epsilon + self.c_eps * self.epsilon

    @property
    def certified(self) -> bool:
        return self.landing <= 0 and abs(self.landing) <= 1e-12 * self.epsilon

    def closed_form_iterate(self, t: int) -> np.ndarray:
        if not 1 <= t <= self.target_t:
            raise InvalidParameterError(f"t={t} outside 1..{self.target_t}")
        if t < self.target_t:
            return np.array([self.epsilon - self.c_eps * self.schedule.prefix_sum(t)])
        pre = self.epsilon - self.c_eps * self.schedule.prefix_sum(self.target_t - 1)
        return np.array([float(np.clip(pre + self.schedule.rate(self.target_t - 1), -1.0, 1.0))])

    def closed_form_error(self, t: int) -> float:
        return float(self.convex.value(self.closed_form_iterate(t)))

    def to_dict(self) -> dict:
        return {
            "family": "vshape",
            "T": self.target_t,
            "schedule_label": self.schedule.label,
            "epsilon": self.epsilon,
            "c_eps": self.c_eps,
        }


def _vshape_landing(eps: float, c: float, steps: np.ndarray) -> float:
    # mirror of the engine loop on this family, kept in scalar float64
    x = eps
    for s in steps:
        g = -1.0 if x <= 0 else (c if x <= eps else 1.0)
        x = x - s * g
        if x > 1.0:
            x = 1.0
        elif x < -1.0:
            x = -1.0
    return x


def build_vshape(schedule: StepSchedule, target_t: int, shrink: float = 1e-6) -> VShapeInstance:
    """Build the valley instance targeted at step ``target_t``.

    ``eps = shrink * min(1, eta_{t-1}, sum_{j<t-1} eta_j)`` and the ramp
    slope is ``eps`` divided by that prefix sum.  The slope is nudged up
    by at most a few ulps so that, in float64, the simulated iterate one
    step before the target lands at or below the minimum and the exit
    step takes the ``-1`` branch exactly as in real arithmetic.
    """
    target_t = int(target_t)
    if target_t < 2:
        raise InvalidParameterError("vshape target_t must be >= 2")
    if not 0 < shrink <= 1e-3:
        raise InvalidParameterError("shrink factor must lie in (0, 1e-3]")
    eta_exit = schedule.rate(target_t - 1)
    ramp_sum = schedule.prefix_sum(target_t - 1)
    if eta_exit <= 0:
        raise ConstructionError(f"vshape needs eta_{target_t - 1} > 0")
    if ramp_sum <= 0:
        raise ConstructionError("vshape needs a positive stepsize sum before the target")
    eps = shrink * min(1.0, eta_exit, ramp_sum)
    c = eps / ramp_sum
    steps = schedule.rates(target_t - 1)
    landing = _vshape_landing(eps, c, steps)
    bump = 2.0**-50
    for _ in range(64):
        if landing <= 0:
            break
        c = c * (1.0 + bump)
        bump *= 2.0
        landing = _vshape_landing(eps, c, steps)
    if landing > 0:
        raise ConstructionError("vshape ramp slope could not be settled onto the minimum")
    if not 0 < c < 1:
        raise ConstructionError(f"vshape ramp slope c={c} outside (0, 1)")

    def value(x: np.ndarray) -> float:
        v = float(x[0])
        if v < 0:
            return -v
        if v <= eps:
            return c * v
        return v - eps + c * eps

    def subgradient(x: np.ndarray) -> np.ndarray:
        v = float(x[0])
        if v <= 0:
            return np.array([-1.0])
        if v <= eps:
            return np.array([c])
        return np.array([1.0])

    convex = ConvexInstance(
        dim=1,
        initial_point=np.array([eps]),
        value=value,
        subgradient=subgradient,
        project=lambda x: project_interval(x, -1.0, 1.0),
        reference_level=0.0,
        lipschitz=1.0,
        diameter=2.0,
        label=f"vshape(t={target_t},{schedule.label})",
        sample=lambda rng: rng.uniform(-1.0, 1.0, size=1),
    )
    return VShapeInstance(
        schedule=schedule,
        target_t=target_t,
        epsilon=eps,
        c_eps=c,
        shrink=shrink,
        landing=landing,
        convex=convex,
    )


# -- quadratic family ------------------------------------------------------


@dataclass
class QuadraticInstance:
    """1-d quadratic ``x^2 / (4 S)`` with ``S`` the step sum to the target."""

    schedule: StepSchedule
    target_t: int
    S: float
    convex: ConvexInstance

    @property
    def horizon(self) -> int:
        return self.target_t

    def certified_bound(self) -> float:
        return math.exp(-2.0) / (4.0 * self.S)

    @property
    def certified(self) -> bool:
        return True

    def closed_form_iterate(self, t: int) -> np.ndarray:
        if not 1 <= t <= self.target_t:
            raise InvalidParameterError(f"t={t} outside 1..{self.target_t}")
        factors = 1.0 - self.schedule.rates(t) / (2.0 * self.S)
        return np.array([float(np.prod(factors))])

    def closed_form_error(self, t: int) -> float:
        return float(self.convex.value(self.closed_form_iterate(t)))

    def to_dict(self) -> dict:
        return {
            "family": "quadratic",
            "T": self.target_t,
            "schedule_label": self.schedule.label,
            "S": self.S,
        }


def build_quadratic(schedule: StepSchedule, target_t: int) -> QuadraticInstance:
    """Build the quadratic instance targeted at step ``target_t``.

    Requires the step sum ``S`` over the first ``target_t`` steps to be at
    least 1/2 so the objective is 1-Lipschitz on ``[-1, 1]``.
    """
    target_t = int(target_t)
    if target_t < 1:
        raise InvalidParameterError("quadratic target_t must be >= 1")
    S = schedule.prefix_sum(target_t)
    if S < 0.5:
        raise ConstructionError(
            f"quadratic instance needs step sum S >= 1/2 at t={target_t}, got S={S}"
        )
    inv = 1.0 / (4.0 * S)

    convex = ConvexInstance(
        dim=1,
        initial_point=np.array([1.0]),
        value=lambda x: float(x[0]) * float(x[0]) * inv,
        subgradient=lambda x: np.array([float(x[0]) / (2.0 * S)]),
        project=lambda x: project_interval(x, -1.0, 1.0),
        reference_level=0.0,
        lipschitz=1.0,
        diameter=2.0,
        label=f"quadratic(t={target_t},{schedule.label})",
        sample=lambda rng: rng.uniform(-1.0, 1.0, size=1),
    )
    return QuadraticInstance(schedule=schedule, target_t=target_t, S=S, convex=convex)


# -- max-of-linear family ---------------------------------------------------


def coupling_weights(
    schedule: StepSchedule, t: int, phi: GuaranteeEnvelope
) -> tuple[np.ndarray, np.ndarray]:
    """Weight sequences ``(a, b)`` of length ``t + 1`` for the construction.

    ``a_j = min(1, eta_j sqrt(t+1)) / (16 phi(t+1) (t+1-j))`` couples
    coordinate ``j+1`` into later linear pieces, and
    ``b_j = min(1/2, 1/(2 eta_j sqrt(t+1)))`` is the depth of the fresh
    coordinate opened at step ``j``.  A zero stepsize yields ``a_j = 0``
    and ``b_j = 1/2``.
    """
    t = int(t)
    if t < 1:
        raise InvalidParameterError("weights need t >= 1")
    pt = float(phi(t + 1))
    if not pt >= 1.0:
        raise InvalidParameterError(f"envelope value {pt} at {t + 1} is below 1")
    eta = schedule.rates(t + 1)
    root = math.sqrt(t + 1.0)
    j = np.arange(t + 1, dtype=np.float64)
    a = np.minimum(1.0, eta * root) / (16.0 * pt * (t + 1.0 - j))
    with np.errstate(divide="ignore"):
        inv = np.where(eta > 0, 1.0 / (2.0 * eta * root), np.inf)
    b = np.minimum(0.5, inv)
    return a, b


@dataclass
class ConditionCheck:
    name: str
    passed: bool
    slack: float
    worst_index: int | None = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "slack": self.slack,
            "worst_index": self.worst_index,
        }


@dataclass
class ConditionReport:
    """Outcome of the three admissibility conditions on ``(a, b)``."""

    sum_sq: ConditionCheck
    step_cap: ConditionCheck
    tail_coupling: ConditionCheck

    @property
    def ok(self) -> bool:
        return self.sum_sq.passed and self.step_cap.passed and self.tail_coupling.passed

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "checks": [c.to_dict() for c in (self.sum_sq, self.step_cap, self.tail_coupling)],
        }


def check_weight_conditions(
    a: np.ndarray, b: np.ndarray, schedule: StepSchedule, T: int
) -> ConditionReport:
    """Check the admissibility conditions that make the error floor sound.

    (1) ``sum a_j^2 <= 1/2``; (2) each ``b_j`` at most
    ``min(1/2, 1/(2 eta_j sqrt(T+1)))``; (3) each coupling tail
    ``a_j * sum_{k>j}^{T} eta_k`` at most ``eta_j b_j / 2``.  Slacks are
    reported as ``rhs - lhs``; a condition passes only with nonnegative
    slack.
    """
    T = int(T)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != (T + 1,) or b.shape != (T + 1,):
        raise InvalidParameterError(f"weight arrays must have length T+1 = {T + 1}")
    if np.any(a < 0) or np.any(b < 0) or not np.all(np.isfinite(a)) or not np.all(np.isfinite(b)):
        raise InvalidParameterError("weights must be finite and nonnegative")
    eta = schedule.rates(T + 1)
    root = math.sqrt(T + 1.0)

    slack1 = 0.5 - float(np.sum(a * a))
    c1 = ConditionCheck("sum_sq", slack1 >= 0, slack1)

    with np.errstate(divide="ignore"):
        cap = np.minimum(0.5, np.where(eta > 0, 1.0 / (2.0 * eta * root), np.inf))
    gap2 = cap - b
    w2 = int(np.argmin(gap2))
    c2 = ConditionCheck("step_cap", float(gap2[w2]) >= 0, float(gap2[w2]), w2)

    rev = np.cumsum(eta[::-1])[::-1]
    tail = np.append(rev[1:], 0.0)  # tail[j] = sum_{k=j+1}^{T} eta_k
    gap3 = 0.5 * eta * b - a * tail
    w3 = int(np.argmin(gap3))
    c3 = ConditionCheck("tail_coupling", float(gap3[w3]) >= 0, float(gap3[w3]), w3)

    return ConditionReport(sum_sq=c1, step_cap=c2, tail_coupling=c3)


@dataclass
class MaxLinearInstance:
    """Max-of-linear objective on the unit ball in dimension ``T + 1``.

    The deterministic oracle returns the linear piece of minimal index
    among those attaining the maximum; under positive stepsizes this is
    piece ``t`` at iterate ``t``, which drives the closed-form trajectory.
    """

    schedule: StepSchedule
    T: int
    phi_label: str
    a: np.ndarray
    b: np.ndarray
    conditions: ConditionReport
    convex: ConvexInstance

    @property
    def horizon(self) -> int:
        return self.T

    @property
    def dim(self) -> int:
        return self.T + 1

    def _scores(self, x: np.ndarray) -> np.ndarray:
        ax = self.a * x
        cum = np.empty(self.dim)
        cum[0] = 0.0
        np.cumsum(ax[:-1], out=cum[1:])
        return cum - self.b * x

    def argmax_index(self, x: np.ndarray) -> int:
        """Minimal index attaining the maximum score at ``x``."""
        return int(np.argmax(self._scores(x)))

    def certified_bound(self) -> float:
        eta = self.schedule.rates(self.T)
        return 0.5 * float(np.sum(self.a[: self.T] * self.b[: self.T] * eta))

    @property
    def certified(self) -> bool:
        # zero stepsizes allow argmax ties that break the trajectory
        # argument, so the floor is only certified for strictly positive
        # steps (or when it is vacuously zero)
        if not self.conditions.ok:
            return False
        eta = self.schedule.rates(self.T)
        return bool(np.all(eta > 0)) or self.certified_bound() == 0.0

    def closed_form_iterate(self, t: int) -> np.ndarray:
        if not 1 <= t <= self.T:
            raise InvalidParameterError(f"t={t} outside 1..{self.T}")
        eta = self.schedule.rates(t)
        x = np.zeros(self.dim)
        rev = np.cumsum(eta[::-1])[::-1]
        tail = np.append(rev[1:], 0.0)  # tail[m] = sum_{k=m+1}^{t-1} eta_k
        x[:t] = self.b[:t] * eta - self.a[:t] * tail
        return x

    def closed_form_error(self, t: int) -> float:
        return float(self.convex.value(self.closed_form_iterate(t)))

    def to_dict(self) -> dict:
        return {
            "family": "maxlinear",
            "T": self.T,
            "schedule_label": self.schedule.label,
            "a": self.a.tolist(),
            "b": self.b.tolist(),
        }


def build_maxlinear(schedule: StepSchedule, T: int, phi: GuaranteeEnvelope) -> MaxLinearInstance:
    """Build the max-of-linear instance for horizon ``T`` shaped by ``phi``.

    The admissibility conditions are checked on the generated weights and
    a failure aborts construction; the certified floor rests on that
    check, not on ``phi`` being a true guarantee envelope.  One oracle
    call costs O(T) via a running prefix sum over the coupled coordinates.
    """
    T = int(T)
    if T < 1:
        raise InvalidParameterError("maxlinear horizon must be >= 1")
    a, b = coupling_weights(schedule, T, phi)
    report = check_weight_conditions(a, b, schedule, T)
    if not report.ok:
        raise ConstructionError(
            f"maxlinear weight conditions failed for {schedule.label} at T={T}", report=report
        )
    dim = T + 1

    def scores(x: np.ndarray) -> np.ndarray:
        ax = a * x
        cum = np.empty(dim)
        cum[0] = 0.0
        np.cumsum(ax[:-1], out=cum[1:])
        return cum - b * x

    def value(x: np.ndarray) -> float:
        return float(np.max(scores(x)))

    def subgradient(x: np.ndarray) -> np.ndarray:
        i = int(np.argmax(scores(x)))
        g = np.zeros(dim)
        g[:i] = a[:i]
        g[i] = -b[i]
        return g

    def sample(rng: np.random.Generator) -> np.ndarray:
        z = rng.normal(size=dim)
        r = rng.uniform() ** (1.0 / dim)
        return z * (r / float(np.linalg.norm(z)))

    convex = ConvexInstance(
        dim=dim,
        initial_point=np.zeros(dim),
        value=value,
        subgradient=subgradient,
        project=lambda x: project_ball(x, 1.0),
        reference_level=0.0,
        lipschitz=1.0,
        diameter=2.0,
        label=f"maxlinear(T={T},{schedule.label})",
        sample=sample,
        kernel_data=("maxlinear", a, b),
    )
    return MaxLinearInstance(
        schedule=schedule,
        T=T,
        phi_label=phi.label,
        a=a,
        b=b,
        conditions=report,
        convex=convex,
    )
