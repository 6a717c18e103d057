"""Step-size schedules for stochastic gradient descent.

Four families:

``paper_pl``
    ``eta_t = c (1 - sqrt(1 - (2(t+k)+1) / (c^2 (t+k+1)^2)))`` with
    ``k = 2/c^2 - 1`` by default. It solves
    ``1 - 2 c eta + eta^2 = ((t+k)/(t+k+1))^2`` for the PL constant ``c``.
``experiment``
    ``eta_t = 2 / (c (t + 2/c + 1))``, the constants used in the
    simulation studies (``c = 0.7`` well conditioned, ``c = 0.1`` poorly).
``constant``
    ``eta_t = c``.
``custom``
    An explicit finite sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .exceptions import InvalidSchedule, ScheduleExhausted

KINDS = ("paper_pl", "experiment", "constant", "custom")


@dataclass(frozen=True)
class StepSchedule:
    kind: str
    c: float = 1.0
    k: float = None
    values: tuple = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidSchedule(f"unknown schedule kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "custom":
            if self.values is None or len(self.values) == 0:
                raise InvalidSchedule("custom schedule needs a non-empty sequence of step sizes")
            vals = tuple(float(v) for v in self.values)
            bad = [i for i, v in enumerate(vals) if not 0.0 < v <= 1.0]
            if bad:
                raise InvalidSchedule(f"step size {vals[bad[0]]!r} at index {bad[0]} is outside (0, 1]")
            object.__setattr__(self, "values", vals)
            return
        if not (self.c > 0 and math.isfinite(self.c)):
            raise InvalidSchedule(f"schedule constant must be positive, got {self.c!r}")
        if self.kind == "paper_pl":
            if self.c > 1:
                raise InvalidSchedule(f"PL constant must lie in (0, 1], got {self.c!r}")
            k = 2.0 / self.c**2 - 1.0 if self.k is None else float(self.k)
            if k < 0 or self.c**2 * (k + 1) ** 2 < 2 * k + 1:
                raise InvalidSchedule(f"offset k={k!r} violates c^2 (k+1)^2 >= 2k+1 for c={self.c!r}")
            object.__setattr__(self, "k", k)
        elif self.kind == "constant" and self.c > 1:
            raise InvalidSchedule(f"constant step {self.c!r} exceeds 1")

    @classmethod
    def paper_pl(cls, c_pl: float, k: float = None):
        return cls("paper_pl", c=c_pl, k=k)

    @classmethod
    def experiment(cls, c_exp: float):
        return cls("experiment", c=c_exp)

    @classmethod
    def constant(cls, eta: float):
        return cls("constant", c=eta)

    @classmethod
    def custom(cls, values: Sequence[float]):
        return cls("custom", values=tuple(values))

    def __len__(self):
        if self.kind == "custom":
            return len(self.values)
        raise TypeError(f"{self.kind} schedules are unbounded")

    @property
    def finite(self) -> bool:
        return self.kind == "custom"

    def __call__(self, t: int) -> float:
        return step_size(self, t)

    def steps(self, n: int) -> np.ndarray:
        """The first ``n`` step sizes as an array."""
        if self.kind == "custom" and n > len(self.values):
            raise ScheduleExhausted(f"schedule has {len(self.values)} steps, {n} requested")
        return np.array([step_size(self, t) for t in range(n)])

    def spec(self) -> str:
        """Inverse of :func:`parse_schedule` (``custom`` is rendered inline)."""
        if self.kind == "paper_pl":
            return f"paper_pl:c={self.c!r},k={self.k!r}"
        if self.kind == "experiment":
            return f"exp:c={self.c!r}"
        if self.kind == "constant":
            return f"const:{self.c!r}"
        return "custom:" + ",".join(repr(v) for v in self.values)


def step_size(schedule: StepSchedule, t: int) -> float:
    if t < 0:
        raise ValueError(f"iteration index must be nonnegative, got {t}")
    kind, c = schedule.kind, schedule.c
    if kind == "paper_pl":
        u = t + schedule.k
        x = (2 * u + 1) / (c**2 * (u + 1) ** 2)
        if x > 1:
            raise InvalidSchedule(f"square-root argument 1 - {x!r} is negative at t={t}")
        # 1 - sqrt(1 - x) rewritten without cancellation
        return c * x / (1.0 + math.sqrt(1.0 - x))
    if kind == "experiment":
        return 2.0 / (c * (t + 2.0 / c + 1.0))
    if kind == "constant":
        return c
    if t >= len(schedule.values):
        raise ScheduleExhausted(f"schedule has {len(schedule.values)} steps, step {t} requested")
    return schedule.values[t]


def parse_schedule(spec: str) -> StepSchedule:
    """Parse the schedule mini-language.

    ``paper_pl:c=0.25`` (optionally ``,k=...``), ``exp:c=0.7``,
    ``const:0.1``, ``custom:0.5,0.25,...`` and ``file:path`` (one step
    size per line or whitespace separated).
    """
    kind, sep, rest = spec.strip().partition(":")
    if not sep:
        raise InvalidSchedule(f"schedule spec {spec!r} has no ':'")
    try:
        if kind == "paper_pl":
            kw = _keyvals(rest)
            return StepSchedule.paper_pl(kw.pop("c"), kw.pop("k", None))
        if kind in ("exp", "experiment"):
            return StepSchedule.experiment(_keyvals(rest)["c"])
        if kind in ("const", "constant"):
            return StepSchedule.constant(float(rest))
        if kind == "custom":
            return StepSchedule.custom([float(v) for v in rest.split(",") if v.strip()])
        if kind == "file":
            text = Path(rest).read_text()
            return StepSchedule.custom([float(v) for v in text.replace(",", " ").split()])
    except (KeyError, ValueError) as exc:
        if isinstance(exc, InvalidSchedule):
            raise
        raise InvalidSchedule(f"malformed schedule spec {spec!r}: {exc}") from exc
    raise InvalidSchedule(f"unknown schedule kind in {spec!r}")


def _keyvals(text):
    out = {}
    for item in text.split(","):
        if not item.strip():
            continue
        key, eq, val = item.partition("=")
        if not eq:
            raise ValueError(f"expected key=value, got {item!r}")
        out[key.strip()] = float(val)
    return out
