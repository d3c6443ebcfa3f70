"""Analytic error floors, guarantee envelopes, and bound reports.

A guarantee envelope is a non-decreasing function ``phi: {1, 2, ...} ->
[1, inf)`` certifying that the worst-case last-iterate error at step ``t``
is at most ``phi(t) / sqrt(t)``.  The functions below evaluate the lower
bounds that any such envelope must respect for a given stepsize schedule:
the single-step floor, the step-sum floor, the high-dimensional
max-of-linear floor, the fourth-power floor and its time average, and the
asymptotic floor obtained by combining them.  All constants are computed
from library transcendentals at full working precision.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError
from .schedules import StepSchedule

__all__ = [
    "GuaranteeEnvelope",
    "log_envelope",
    "constant_envelope",
    "harmonic",
    "harmonic_table",
    "last_step_bound",
    "step_sum_bound",
    "maxlinear_bound",
    "quartic_floor",
    "averaged_quartic_floor",
    "tail_cutoff",
    "envelope_floor",
    "step_sum_upper",
    "l1_l2_gap",
    "empirical_envelope",
    "validate_envelope",
    "EnvelopeReport",
    "BoundRow",
    "BoundReport",
]


class GuaranteeEnvelope:
    """A non-decreasing guarantee function ``phi(t) >= 1`` for ``t >= 1``."""

    def __init__(self, evaluator: Callable[[int], float], label: str = "phi"):
        self._evaluator = evaluator
        self.label = label

    def __call__(self, t: int) -> float:
        t = int(t)
        if t < 1:
            raise InvalidParameterError("envelopes are defined for t >= 1")
        return float(self._evaluator(t))

    def __repr__(self) -> str:  # pragma: no cover - cosmetic
        return f"GuaranteeEnvelope({self.label!r})"


def log_envelope(offset: float = 8.0, coef: float = 4.0) -> GuaranteeEnvelope:
    """Envelope ``phi(t) = offset + coef * ln(t)``.

    The defaults are the known anytime guarantee of the ``sqrt_decay``
    schedule at unit gradient scale and diameter 2.
    """
    offset = float(offset)
    coef = float(coef)
    return GuaranteeEnvelope(
        lambda t: offset + coef * math.log(t),
        label=f"log(offset={offset:g},coef={coef:g})",
    )


def constant_envelope(c: float) -> GuaranteeEnvelope:
    """Envelope ``phi(t) = c`` (``c >= 1``)."""
    c = float(c)
    if c < 1.0:
        raise InvalidParameterError("constant envelope requires c >= 1")
    return GuaranteeEnvelope(lambda t: c, label=f"const({c:g})")


# -- elementary quantities -------------------------------------------------


def harmonic(n: int) -> float:
    """Harmonic number ``H_n``, summed from the smallest term up."""
    n = int(n)
    if n < 1:
        raise InvalidParameterError("harmonic numbers need n >= 1")
    total = 0.0
    for i in range(n, 0, -1):
        total += 1.0 / i
    return total


def harmonic_table(n: int) -> np.ndarray:
    """Array ``[H_1, ..., H_n]`` via a cumulative sum."""
    n = int(n)
    if n < 1:
        raise InvalidParameterError("harmonic numbers need n >= 1")
    return np.cumsum(1.0 / np.arange(1, n + 1, dtype=np.float64))


def last_step_bound(schedule: StepSchedule, t: int) -> float:
    """Error floor ``eta_{t-1}``: the final step cannot be undone."""
    t = int(t)
    if t < 1:
        raise InvalidParameterError("bounds need t >= 1")
    return schedule.rate(t - 1)


def step_sum_bound(schedule: StepSchedule, t: int) -> float | None:
    """Error floor ``1 / (4 e^2 sum_{j<t} eta_j)`` when the sum is >= 1/2.

    Returns ``None`` when the step sum is below 1/2 (the floor does not
    apply there).
    """
    t = int(t)
    if t < 1:
        raise InvalidParameterError("bounds need t >= 1")
    S = schedule.prefix_sum(t)
    if S < 0.5:
        return None
    return 1.0 / (4.0 * math.exp(2.0) * S)


def maxlinear_bound(schedule: StepSchedule, t: int, phi: GuaranteeEnvelope) -> float:
    """High-dimensional error floor from the max-of-linear construction.

    Evaluates ``sum_{j<t} min(1, eta_j sqrt(t+1))^2 / (t+1-j)`` scaled by
    ``1 / (64 phi(t+1) sqrt(t+1))``; algebraically equal to half the
    weighted step sum certified by the built instance.
    """
    t = int(t)
    if t < 1:
        raise InvalidParameterError("bounds need t >= 1")
    eta = schedule.rates(t)
    root = math.sqrt(t + 1.0)
    j = np.arange(t, dtype=np.float64)
    terms = np.minimum(1.0, eta * root) ** 2 / (t + 1.0 - j)
    return float(np.sum(terms)) / (64.0 * phi(t + 1) * root)


def quartic_floor(schedule: StepSchedule, t: int, shifted: bool = False) -> float:
    """Floor on ``phi(t+1)^4``: ``(1/128) sum_{j<t} eta_j^2 w_j / (t+1-j)``.

    The weight is ``w_j = j`` by default; ``shifted=True`` uses the
    sharper ``w_j = j + 1`` variant.
    """
    t = int(t)
    if t < 1:
        raise InvalidParameterError("bounds need t >= 1")
    eta = schedule.rates(t)
    j = np.arange(t, dtype=np.float64)
    w = j + 1.0 if shifted else j
    return float(np.sum(eta * eta * w / (t + 1.0 - j))) / 128.0


def averaged_quartic_floor(schedule: StepSchedule, T: int) -> float:
    """Time average of the quartic floor over horizons ``1..T``.

    Closed form ``(1/T) sum_{k=1}^{T-1} k eta_k^2 (H_{T+1-k} - 1)``; the
    shifted harmonic weight counts the horizons ``t > k`` at which step
    ``k`` contributes, so this equals the brute-force double sum
    ``(1/T) sum_t sum_{j<t} j eta_j^2 / (t+1-j)`` exactly.
    """
    T = int(T)
    if T < 2:
        raise InvalidParameterError("averaging needs T >= 2")
    eta = schedule.rates(T)
    H = harmonic_table(T)
    k = np.arange(1, T)
    terms = k * eta[1:T] ** 2 * (H[T - k] - 1.0)  # H[T - k] is the (T+1-k)-th harmonic number
    return float(np.sum(terms)) / T


def tail_cutoff(T: int, phi: GuaranteeEnvelope) -> int | None:
    """Warmup cutoff ``floor((T/2+1) / (256 e^4 phi(T/2+1)^2)) - 1``.

    Returns ``None`` when the cutoff falls below 1 (horizon too small for
    the tail argument to engage).
    """
    T = int(T)
    if T < 2:
        raise InvalidParameterError("cutoff selection needs T >= 2")
    half = T // 2
    p = phi(half + 1)
    t1 = math.floor((half + 1.0) / (256.0 * math.exp(4.0) * p * p)) - 1
    return t1 if t1 >= 1 else None


def envelope_floor(T: int) -> tuple[float, float]:
    """Asymptotic floor on ``phi(T+1)`` in two forms.

    Returns ``(harmonic_form, log_form)`` with
    ``harmonic_form = H_{T/2}^{1/8} / (2^{5/2} e^2)`` and
    ``log_form = ln(T/2)^{1/8} / (2^{5/2} e)``.  The two curves cross at
    small horizons; callers compare, they do not assume an ordering.
    """
    T = int(T)
    if T < 2:
        raise InvalidParameterError("floors need T >= 2")
    half = T // 2
    base = 2.0 ** 2.5
    harm = harmonic(half) ** 0.125 / (base * math.exp(2.0))
    lg = 0.0 if half == 1 else math.log(half) ** 0.125 / (base * math.exp(1.0))
    return harm, lg


@dataclass
class StepSumCheck:
    lhs: float
    rhs: float
    passed: bool


def step_sum_upper(
    schedule: StepSchedule, t1: int, t2: int, phi: GuaranteeEnvelope
) -> StepSumCheck:
    """Check ``sum_{j=t1}^{t2} eta_j <= 2 phi(t2+1) (sqrt(t2) - sqrt(t1))``.

    A failure signals that ``phi`` is not a valid envelope for the
    schedule on that range.
    """
    t1 = int(t1)
    t2 = int(t2)
    if not 1 <= t1 < t2:
        raise InvalidParameterError("need 1 <= t1 < t2")
    lhs = schedule.prefix_sum(t2 + 1) - schedule.prefix_sum(t1)
    rhs = 2.0 * phi(t2 + 1) * (math.sqrt(t2) - math.sqrt(t1))
    return StepSumCheck(lhs=lhs, rhs=rhs, passed=lhs <= rhs + 1e-12)


def l1_l2_gap(values: Sequence[float] | np.ndarray) -> StepSumCheck:
    """Check ``sum v^2 >= (sum v)^2 / n`` directly on a vector."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] == 0:
        raise InvalidParameterError("need a nonempty vector")
    lhs = float(np.sum(v * v))
    total = float(np.sum(v))
    rhs = total * total / v.shape[0]
    return StepSumCheck(lhs=lhs, rhs=rhs, passed=lhs >= rhs - 1e-12 * max(1.0, rhs))


# -- envelopes from measurements --------------------------------------------


def empirical_envelope(records: Iterable, label: str | None = None) -> GuaranteeEnvelope:
    """Best envelope candidate supported by measured errors.

    ``phi_hat(t) = max(1, max over records and s <= t of sqrt(s) err(s))``;
    non-decreasing by construction, and a lower bound on any true envelope
    of the records' schedule.  Past the recorded range the table extends
    flat.
    """
    records = list(records)
    if not records:
        raise InvalidParameterError("empirical envelope needs at least one record")
    labels = {r.schedule_label for r in records}
    if len(labels) > 1:
        raise InvalidParameterError(f"records mix schedules: {sorted(labels)}")
    max_t = max(r.horizon for r in records)
    scaled = np.full(max_t, 1.0)
    for r in records:
        ts = np.arange(1, r.horizon + 1, dtype=np.float64)
        np.maximum(scaled[: r.horizon], np.sqrt(ts) * r.errors, out=scaled[: r.horizon])
    table = np.maximum.accumulate(scaled)

    def evaluator(t: int) -> float:
        return float(table[min(t, max_t) - 1])

    name = label or f"empirical({labels.pop()},T<={max_t})"
    return GuaranteeEnvelope(evaluator, label=name)


@dataclass
class EnvelopeReport:
    """Outcome of the necessary-condition checks on an envelope."""

    ge_one_ok: bool
    monotone_ok: bool
    step_ok: bool
    records_ok: bool
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.ge_one_ok and self.monotone_ok and self.step_ok and self.records_ok

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "ge_one_ok": self.ge_one_ok,
            "monotone_ok": self.monotone_ok,
            "step_ok": self.step_ok,
            "records_ok": self.records_ok,
            "failures": self.failures,
        }


def validate_envelope(
    schedule: StepSchedule,
    phi: GuaranteeEnvelope,
    records: Iterable = (),
    t_max: int = 1024,
) -> EnvelopeReport:
    """Check the conditions any true envelope must satisfy.

    On ``t = 1..t_max``: ``phi >= 1`` and monotone non-decreasing; the
    step condition ``phi(t+1) >= eta_t sqrt(t+1)`` forced by the
    single-step floor; and ``phi(t) >= sqrt(t) err(t)`` against every
    recorded error.  Failures are report entries, never exceptions.
    """
    t_max = int(t_max)
    if t_max < 1:
        raise InvalidParameterError("t_max must be >= 1")
    failures: list[str] = []
    vals = np.array([phi(t) for t in range(1, t_max + 2)])
    ge_one = bool(np.all(vals >= 1.0))
    if not ge_one:
        t_bad = int(np.argmax(vals < 1.0)) + 1
        failures.append(f"phi({t_bad}) = {vals[t_bad - 1]} < 1")
    mono = bool(np.all(np.diff(vals) >= 0))
    if not mono:
        t_bad = int(np.argmax(np.diff(vals) < 0)) + 1
        failures.append(f"phi decreases between t={t_bad} and t={t_bad + 1}")
    eta = schedule.rates(t_max)
    need = eta * np.sqrt(np.arange(1, t_max + 1, dtype=np.float64))
    step_ok = bool(np.all(vals[:t_max] >= need))
    if not step_ok:
        t_bad = int(np.argmax(vals[:t_max] < need))
        failures.append(
            f"step condition fails at t={t_bad}: eta_t sqrt(t+1) = {need[t_bad]} "
            f"> phi({t_bad + 1}) = {vals[t_bad]}"
        )
    records_ok = True
    for r in records:
        ts = np.arange(1, r.horizon + 1, dtype=np.float64)
        measured = np.sqrt(ts) * r.errors
        phivals = np.array([phi(t) for t in range(1, r.horizon + 1)])
        bad = measured > phivals
        if np.any(bad):
            records_ok = False
            t_bad = int(np.argmax(bad)) + 1
            failures.append(
                f"recorded error exceeds envelope at t={t_bad}: "
                f"sqrt(t) err = {measured[t_bad - 1]} > phi = {phivals[t_bad - 1]}"
            )
    return EnvelopeReport(
        ge_one_ok=ge_one,
        monotone_ok=mono,
        step_ok=step_ok,
        records_ok=records_ok,
        failures=failures,
    )


# -- tabular report ----------------------------------------------------------


_CSV_COLUMNS = (
    "t",
    "last_step",
    "step_sum",
    "maxlinear",
    "quartic_floor",
    "quartic_floor_shifted",
    "floor_harmonic",
    "floor_log",
    "err_maxlinear",
    "err_vshape",
    "err_quadratic",
)


@dataclass
class BoundRow:
    """Analytic floors and measured errors at one horizon."""

    t: int
    last_step: float
    step_sum: float | None
    maxlinear: float | None
    quartic: float
    quartic_shifted: float
    floor_harmonic: float | None
    floor_log: float | None
    measured: dict[str, float] = field(default_factory=dict)
    certified: dict[str, float] = field(default_factory=dict)


@dataclass
class BoundReport:
    """Per-horizon bound table for one schedule/envelope pair."""

    schedule_label: str
    envelope_label: str
    rows: list[BoundRow] = field(default_factory=list)

    def write_csv(self, path: str, header: str | None = None) -> None:
        def fmt(v) -> str:
            return "" if v is None else repr(float(v))

        with open(path, "w") as fh:
            if header:
                fh.write(f"# {header}\n")
            fh.write(",".join(_CSV_COLUMNS) + "\n")
            for row in self.rows:
                cells = [
                    str(row.t),
                    fmt(row.last_step),
                    fmt(row.step_sum),
                    fmt(row.maxlinear),
                    fmt(row.quartic),
                    fmt(row.quartic_shifted),
                    fmt(row.floor_harmonic),
                    fmt(row.floor_log),
                    fmt(row.measured.get("maxlinear")),
                    fmt(row.measured.get("vshape")),
                    fmt(row.measured.get("quadratic")),
                ]
                fh.write(",".join(cells) + "\n")

    def to_dict(self) -> dict:
        return {
            "schedule": self.schedule_label,
            "envelope": self.envelope_label,
            "rows": [
                {
                    "t": r.t,
                    "last_step": r.last_step,
                    "step_sum": r.step_sum,
                    "maxlinear": r.maxlinear,
                    "quartic_floor": r.quartic,
                    "quartic_floor_shifted": r.quartic_shifted,
                    "floor_harmonic": r.floor_harmonic,
                    "floor_log": r.floor_log,
                    "measured": r.measured,
                    "certified": r.certified,
                }
                for r in self.rows
            ],
        }
