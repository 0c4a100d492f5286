"""Seeded Bernoulli energy-arrival streams.

Each slot independently delivers one quantum ``e_h`` of energy with
probability ``p`` (mean rate mu = p*e_h), credited at the end of the slot.
Streams are generated by the counter-based Philox generator keyed by
(seed, user_index): the same key always yields the bit-identical sequence,
on any platform, and distinct users get statistically independent streams
without shared state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["ArrivalModel", "mean_rate", "sample_stream", "stream_blocks"]


@dataclass(frozen=True, slots=True)
class ArrivalModel:
    """Bernoulli arrival parameters for one user.

    ``battery_capacity`` (B) is optional; when present it must be an integer
    multiple r of ``e_h``, the number of arrivals that fills one battery.
    """

    p: float
    e_h: float
    battery_capacity: float | None = None

    def __post_init__(self) -> None:
        if not (0.0 < self.p <= 1.0):
            raise ValueError(f"p must lie in (0, 1], got {self.p!r}")
        if not self.e_h > 0.0:
            raise ValueError(f"e_h must be positive, got {self.e_h!r}")
        if self.battery_capacity is not None:
            ratio = self.battery_capacity / self.e_h
            if self.battery_capacity <= 0 or abs(ratio - round(ratio)) > 1e-9:
                raise ValueError(
                    "battery_capacity must be a positive integer multiple of e_h"
                )

    @property
    def r(self) -> int:
        """Arrivals needed to fill one battery (requires battery_capacity)."""
        if self.battery_capacity is None:
            raise ValueError("battery_capacity not set on this model")
        return int(round(self.battery_capacity / self.e_h))


def mean_rate(model: ArrivalModel) -> float:
    """Average harvested energy per slot, mu = p * e_h."""
    return model.p * model.e_h


def _generator(seed: int, user_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=(int(seed), int(user_index))))


def sample_stream(
    model: ArrivalModel, num_slots: int, seed: int, user_index: int = 0
) -> np.ndarray:
    """Per-slot harvested energies: an array of 0.0 / e_h values."""
    if num_slots < 1:
        raise ValueError("num_slots must be >= 1")
    gen = _generator(seed, user_index)
    hits = gen.random(num_slots) < model.p
    return np.where(hits, model.e_h, 0.0)


def stream_blocks(
    model: ArrivalModel, seed: int, user_index: int = 0, block: int = 1 << 16
):
    """Yield successive blocks of the same stream ``sample_stream`` produces.

    Lets simulations of unknown length (warm-up periods) consume arrivals
    lazily while staying bit-identical to the eager sampler.
    """
    gen = _generator(seed, user_index)
    while True:
        hits = gen.random(block) < model.p
        yield np.where(hits, model.e_h, 0.0)
