"""Stepsize sequences with cached prefix sums.

A :class:`StepSchedule` maps a 0-based step index ``t`` to a nonnegative
stepsize ``eta_t`` and exposes the running sum ``sum_{j<t} eta_j``.  Values
come either from a generator function, from a finite table, or from both
(the table shadows the generator on its indices).  Every evaluation is
cached, so repeated queries return bit-identical values and schedules can
be shared by concurrent readers.
"""

from __future__ import annotations

import csv
import math
import threading
from collections.abc import Callable, Sequence

import numpy as np

from .errors import ConstructionError, InvalidParameterError

__all__ = [
    "StepSchedule",
    "sqrt_decay",
    "constant",
    "from_table",
    "from_csv",
    "doubling_concat",
    "doubling_block",
]


class StepSchedule:
    """A deterministic nonnegative stepsize sequence.

    Parameters
    ----------
    generator:
        Callable ``t -> eta_t`` for 0-based integer ``t``.  May be ``None``
        when a finite ``table`` covers every index that will be queried.
    table:
        Optional finite array of stepsizes; overrides the generator on
        indices ``0 .. len(table)-1``.
    label:
        Human-readable name used in reports and file headers.
    """

    def __init__(
        self,
        generator: Callable[[int], float] | None = None,
        table: Sequence[float] | np.ndarray | None = None,
        label: str = "schedule",
    ):
        if generator is None and table is None:
            raise InvalidParameterError("schedule needs a generator, a table, or both")
        if table is not None:
            table = np.asarray(table, dtype=np.float64)
            if table.ndim != 1:
                raise InvalidParameterError("schedule table must be one-dimensional")
            if not np.all(np.isfinite(table)):
                raise InvalidParameterError("schedule table contains non-finite values")
            if np.any(table < 0):
                raise InvalidParameterError("schedule table contains negative stepsizes")
        self._generator = generator
        self._table = table
        self.label = label
        self._values = np.empty(0, dtype=np.float64)
        self._prefix = np.zeros(1, dtype=np.float64)
        self._lock = threading.Lock()

    # -- evaluation ------------------------------------------------------

    def _value_at(self, t: int) -> float:
        if self._table is not None and t < self._table.shape[0]:
            return float(self._table[t])
        if self._generator is None:
            raise InvalidParameterError(
                f"schedule '{self.label}' has no value at index {t} "
                f"(table covers 0..{self._table.shape[0] - 1})"
            )
        v = float(self._generator(t))
        if not math.isfinite(v):
            raise ConstructionError(f"schedule '{self.label}' produced a non-finite stepsize at t={t}")
        if v < 0:
            raise ConstructionError(f"schedule '{self.label}' produced a negative stepsize at t={t}")
        return v

    def _ensure(self, n: int) -> None:
        if self._values.shape[0] >= n:
            return
        with self._lock:
            start = self._values.shape[0]
            if start >= n:
                return
            # grow geometrically so ascending scans stay linear overall;
            # table-only schedules extend exactly so range errors point at
            # the first missing index
            target = n if self._generator is None else max(n, 2 * start, 16)
            values = np.empty(target, dtype=np.float64)
            values[:start] = self._values
            for t in range(start, target):
                values[t] = self._value_at(t)
            prefix = np.empty(target + 1, dtype=np.float64)
            prefix[: start + 1] = self._prefix
            for t in range(start, target):
                prefix[t + 1] = prefix[t] + values[t]
            self._values = values
            self._prefix = prefix

    def rate(self, t: int) -> float:
        """Return ``eta_t``."""
        t = int(t)
        if t < 0:
            raise InvalidParameterError("step index must be nonnegative")
        self._ensure(t + 1)
        return float(self._values[t])

    def rates(self, n: int) -> np.ndarray:
        """Return ``[eta_0, ..., eta_{n-1}]`` as a fresh array."""
        n = int(n)
        if n < 0:
            raise InvalidParameterError("length must be nonnegative")
        if n == 0:
            return np.empty(0, dtype=np.float64)
        self._ensure(n)
        return self._values[:n].copy()

    def prefix_sum(self, t: int) -> float:
        """Return ``sum_{j=0}^{t-1} eta_j`` (empty sum is 0)."""
        t = int(t)
        if t < 0:
            raise InvalidParameterError("prefix length must be nonnegative")
        if t == 0:
            return 0.0
        self._ensure(t)
        return float(self._prefix[t])

    def __repr__(self) -> str:  # pragma: no cover - cosmetic
        return f"StepSchedule({self.label!r})"


# -- canonical builders --------------------------------------------------


def sqrt_decay(D: float, G: float) -> StepSchedule:
    """Schedule ``eta_t = D / (G * sqrt(t+1))``.

    ``D`` is the domain diameter scale and ``G`` the gradient scale; both
    must be positive.
    """
    D = float(D)
    G = float(G)
    if D <= 0 or G <= 0:
        raise InvalidParameterError("sqrt_decay requires D > 0 and G > 0")
    ratio = D / G
    return StepSchedule(
        generator=lambda t: ratio / math.sqrt(t + 1.0),
        label=f"sqrt_decay(D={D:g},G={G:g})",
    )


def constant(c: float) -> StepSchedule:
    """Schedule ``eta_t = c`` for all ``t`` (``c >= 0``)."""
    c = float(c)
    if c < 0:
        raise InvalidParameterError("constant schedule requires c >= 0")
    return StepSchedule(generator=lambda t: c, label=f"constant(c={c:g})")


def from_table(values: Sequence[float] | np.ndarray, label: str = "table") -> StepSchedule:
    """Schedule backed by a finite table only; queries past the end raise."""
    return StepSchedule(table=values, label=label)


def from_csv(path: str) -> StepSchedule:
    """Load a table schedule from a CSV file with header ``t,eta``.

    Indices must be 0-based and contiguous.  Lines starting with ``#`` are
    ignored.
    """
    rows: list[tuple[int, float]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["t", "eta"]:
            raise InvalidParameterError(f"schedule file {path!r} must start with header 't,eta'")
        for row in reader:
            if not row:
                continue
            rows.append((int(row[0]), float(row[1])))
    if not rows:
        raise InvalidParameterError(f"schedule file {path!r} contains no rows")
    rows.sort()
    indices = [t for t, _ in rows]
    if indices != list(range(len(rows))):
        raise InvalidParameterError(f"schedule file {path!r} must have contiguous 0-based indices")
    return from_table([v for _, v in rows], label=f"table({path})")


# -- doubling-trick concatenation ----------------------------------------


def doubling_block(t: int) -> tuple[int, int]:
    """Return ``(k, offset)`` for global index ``t``.

    Block ``k`` has length ``2^k`` and covers global indices
    ``[2^k - 1, 2^(k+1) - 2]``, so the blocks partition the naturals.
    """
    t = int(t)
    if t < 0:
        raise InvalidParameterError("step index must be nonnegative")
    k = (t + 1).bit_length() - 1
    return k, t - ((1 << k) - 1)


def doubling_concat(
    block_builder: Callable[[int], Sequence[float] | np.ndarray],
    label: str = "doubling",
) -> StepSchedule:
    """Concatenate per-horizon blocks of lengths 1, 2, 4, ...

    ``block_builder(n)`` must return exactly ``n`` nonnegative stepsizes;
    block ``k`` is ``block_builder(2^k)``.  Blocks are built lazily and
    cached, so each horizon is materialized once.
    """
    cache: dict[int, np.ndarray] = {}

    def block(k: int) -> np.ndarray:
        got = cache.get(k)
        if got is not None:
            return got
        n = 1 << k
        vals = np.asarray(list(block_builder(n)), dtype=np.float64)
        if vals.shape != (n,):
            raise ConstructionError(
                f"doubling block builder returned {vals.shape[0]} values for horizon {n}"
            )
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise ConstructionError(f"doubling block for horizon {n} has invalid stepsizes")
        cache[k] = vals
        return vals

    block(0)  # validate the builder eagerly on the cheapest block

    def gen(t: int) -> float:
        k, offset = doubling_block(t)
        return float(block(k)[offset])

    return StepSchedule(generator=gen, label=label)
