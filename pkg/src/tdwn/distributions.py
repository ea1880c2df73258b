"""TTL distributions and authoritative update processes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np



@dataclass(frozen=True)
class Constant:
    value: float

    def __post_init__(self):
        if self.value <= 0:
            raise ValueError("TTL must be positive")

    @property
    def mean(self) -> float:
        return self.value

    def sampler(self, rng) -> Callable[[], float]:
        value = self.value
        return lambda: value

    def __str__(self):
        return f"constant:{self.value:g}"


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not 0 < self.lo <= self.hi:
            raise ValueError("uniform TTL needs 0 < lo <= hi")

    @property
    def mean(self) -> float:
        return (self.lo + self.hi) / 2

    def sampler(self, rng) -> Callable[[], float]:
        lo, hi = self.lo, self.hi
        if isinstance(rng, np.random.Generator):
            # chunked draws, one numpy call per 4096 samples
            buf: list[float] = []

            def draw() -> float:
                if not buf:
                    buf.extend(rng.uniform(lo, hi, 4096).tolist()[::-1])
                return buf.pop()

            return draw
        return lambda: rng.uniform(lo, hi)

    def __str__(self):
        return f"uniform:{self.lo:g}:{self.hi:g}"


TtlDistribution = Constant | Uniform


@dataclass(frozen=True)
class NoUpdates:
    def __str__(self):
        return "none"


@dataclass(frozen=True)
class ExponentialUpdates:
    mean: float

    def __post_init__(self):
        if self.mean <= 0:
            raise ValueError("update mean must be positive")

    def __str__(self):
        return f"exp:{self.mean:g}"


@dataclass(frozen=True)
class ScriptedUpdates:
    times: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "times", tuple(sorted(float(t) for t in self.times)))
        if any(t < 0 for t in self.times):
            raise ValueError("update times must be >= 0")

    def __str__(self):
        return "scripted:" + ",".join(f"{t:g}" for t in self.times)


UpdateProcess = NoUpdates | ExponentialUpdates | ScriptedUpdates
