"""Generic projected subgradient descent over a convex instance.

The update is ``x_{t+1} = project(x_t - eta_t * g_t)`` with ``g_t`` taken
from the instance's deterministic subgradient oracle.  Instances carrying
kernel data are dispatched to the compiled fast path in ``_kernels``; all
other instances run through the generic loop below.  Both paths are pure
functions of their inputs, so repeated runs are bit-identical.
"""

from __future__ import annotations

import json
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InvalidParameterError, NumericFaultError
from .schedules import StepSchedule

__all__ = [
    "ConvexInstance",
    "RunRecord",
    "run",
    "project_ball",
    "project_interval",
    "validate_instance",
]


@dataclass
class ConvexInstance:
    """A convex objective bundled with its oracles and domain.

    ``reference_level`` is a value known to upper-bound the domain minimum
    (the error baseline), ``lipschitz`` a certified gradient-norm bound,
    and ``diameter`` the domain diameter.  ``sample`` draws in-domain
    points for spot checks; ``kernel_data`` optionally names a compiled
    fast path for :func:`run`.
    """

    dim: int
    initial_point: np.ndarray
    value: Callable[[np.ndarray], float]
    subgradient: Callable[[np.ndarray], np.ndarray]
    project: Callable[[np.ndarray], np.ndarray]
    reference_level: float
    lipschitz: float
    diameter: float
    label: str = ""
    sample: Callable[[np.random.Generator], np.ndarray] | None = None
    kernel_data: tuple | None = None


@dataclass
class RunRecord:
    """Per-step errors and optional iterate snapshots from one descent run."""

    schedule_label: str
    horizon: int
    errors: np.ndarray
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)
    max_norm_seen: float = 0.0
    projection_activations: int = 0
    argmax_trace: np.ndarray | None = None

    def error_at(self, t: int) -> float:
        """Return ``err(t)`` for ``1 <= t <= horizon``."""
        if not 1 <= t <= self.horizon:
            raise InvalidParameterError(f"t={t} outside 1..{self.horizon}")
        return float(self.errors[t - 1])

    def save_csv(self, path: str, header: str | None = None) -> None:
        """Write ``t,err`` rows; ``header`` is an optional leading comment."""
        with open(path, "w") as fh:
            if header:
                fh.write(f"# {header}\n")
            fh.write("t,err\n")
            for t in range(1, self.horizon + 1):
                fh.write(f"{t},{float(self.errors[t - 1])!r}\n")

    def save_snapshots(self, path: str, meta: dict | None = None) -> None:
        """Write stored iterates as JSON keyed by step."""
        payload = {
            "meta": meta or {},
            "snapshots": [
                {"t": t, "x": self.snapshots[t].tolist()} for t in sorted(self.snapshots)
            ],
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, sort_keys=True)


def project_ball(x: np.ndarray, radius: float) -> np.ndarray:
    """Project onto the Euclidean ball of the given radius."""
    if radius <= 0:
        raise InvalidParameterError("ball radius must be positive")
    nrm = float(np.linalg.norm(x))
    if nrm <= radius:
        return x
    return x * (radius / nrm)


def project_interval(x, lo: float, hi: float):
    """Clamp to ``[lo, hi]`` (works on scalars and arrays)."""
    if lo > hi:
        raise InvalidParameterError(f"empty interval [{lo}, {hi}]")
    return np.clip(x, lo, hi)


def _snapshot_times(snapshots, T: int) -> np.ndarray:
    if snapshots is None:
        return np.empty(0, dtype=np.int64)
    if isinstance(snapshots, str):
        if snapshots == "none":
            return np.empty(0, dtype=np.int64)
        if snapshots == "all":
            return np.arange(1, T + 1, dtype=np.int64)
        raise InvalidParameterError(f"unknown snapshot policy {snapshots!r}")
    times = sorted({int(s) for s in snapshots})
    if times and (times[0] < 1 or times[-1] > T):
        raise InvalidParameterError(f"snapshot times must lie in 1..{T}")
    return np.asarray(times, dtype=np.int64)


def run(
    instance: ConvexInstance,
    schedule: StepSchedule,
    T: int,
    snapshots: str | Iterable[int] | None = None,
    force_generic: bool = False,
) -> RunRecord:
    """Run ``T`` projected subgradient steps and record per-step errors.

    ``snapshots`` selects which iterates to keep: ``None``/``"none"``,
    ``"all"``, or an iterable of step indices in ``1..T``.  With no
    snapshots the working memory stays O(dim) regardless of ``T``.
    """
    T = int(T)
    if T < 1:
        raise InvalidParameterError("horizon T must be >= 1")
    if instance.dim < 1:
        raise InvalidParameterError("instance dimension must be >= 1")
    snap_times = _snapshot_times(snapshots, T)
    eta = schedule.rates(T)

    if not force_generic and instance.kernel_data is not None:
        kind = instance.kernel_data[0]
        if kind == "maxlinear":
            _, a, b = instance.kernel_data
            errors, trace, max_norm, hits, snaps, fault = _kernels.maxlinear_descent(
                a, b, eta, snap_times
            )
            if fault >= 0:
                raise NumericFaultError(f"non-finite objective value at step {fault}")
            if instance.reference_level != 0.0:
                errors = errors - instance.reference_level
            return RunRecord(
                schedule_label=schedule.label,
                horizon=T,
                errors=errors,
                snapshots={int(t): snaps[k].copy() for k, t in enumerate(snap_times)},
                max_norm_seen=float(max_norm),
                projection_activations=int(hits),
                argmax_trace=trace,
            )
        raise InvalidParameterError(f"unknown kernel kind {kind!r}")

    x = np.array(instance.initial_point, dtype=np.float64, copy=True)
    if x.shape != (instance.dim,):
        raise InvalidParameterError("initial point does not match instance dimension")
    errors = np.empty(T)
    stored: dict[int, np.ndarray] = {}
    wanted = set(int(t) for t in snap_times)
    max_norm = 0.0
    hits = 0
    for t in range(T):
        g = instance.subgradient(x)
        if not np.all(np.isfinite(g)):
            raise NumericFaultError(f"non-finite subgradient at step {t}")
        y = x - eta[t] * g
        nrm = float(np.linalg.norm(y))
        if nrm > max_norm:
            max_norm = nrm
        x_new = np.asarray(instance.project(y), dtype=np.float64)
        if not np.array_equal(x_new, y):
            hits += 1
        x = x_new
        fv = float(instance.value(x))
        if not np.isfinite(fv):
            raise NumericFaultError(f"non-finite objective value at step {t + 1}")
        errors[t] = fv - instance.reference_level
        if t + 1 in wanted:
            stored[t + 1] = x.copy()
    return RunRecord(
        schedule_label=schedule.label,
        horizon=T,
        errors=errors,
        snapshots=stored,
        max_norm_seen=max_norm,
        projection_activations=hits,
    )


def validate_instance(
    instance: ConvexInstance,
    rng: np.random.Generator,
    trials: int = 1000,
    rel_tol: float = 1e-12,
) -> dict:
    """Spot-check convexity, subgradient validity, and projection idempotence.

    Samples point pairs/triples from the instance's domain and counts
    violations of ``f(y) >= f(x) + g(x).(y-x)``, of convexity along
    segments, of the Lipschitz bound on subgradient norms, and of
    ``project(project(x)) == project(x)``.
    """
    if instance.sample is None:
        raise InvalidParameterError("instance has no domain sampler")
    report = {
        "trials": trials,
        "subgradient_violations": 0,
        "convexity_violations": 0,
        "lipschitz_violations": 0,
        "projection_violations": 0,
        "worst_subgradient_gap": 0.0,
    }
    for _ in range(trials):
        x = instance.sample(rng)
        y = instance.sample(rng)
        fx = instance.value(x)
        fy = instance.value(y)
        g = instance.subgradient(x)
        scale = max(1.0, abs(fx), abs(fy))
        gap = (fx + float(np.dot(g, y - x))) - fy
        if gap > rel_tol * scale:
            report["subgradient_violations"] += 1
            report["worst_subgradient_gap"] = max(report["worst_subgradient_gap"], gap / scale)
        if float(np.linalg.norm(g)) > instance.lipschitz * (1 + rel_tol):
            report["lipschitz_violations"] += 1
        lam = float(rng.uniform())
        z = lam * x + (1 - lam) * y
        if instance.value(z) > lam * fx + (1 - lam) * fy + rel_tol * scale:
            report["convexity_violations"] += 1
        p = np.asarray(instance.project(x))
        if not np.allclose(instance.project(p), p, rtol=0, atol=1e-15):
            report["projection_violations"] += 1
    report["passed"] = not any(
        report[k]
        for k in (
            "subgradient_violations",
            "convexity_violations",
            "lipschitz_violations",
            "projection_violations",
        )
    )
    return report
