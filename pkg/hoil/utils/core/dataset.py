"""
Mixing several frame sources into one training stream.

A source is drawn with probability proportional to ratio x size, so the
ratio acts as a per-sample weight; the item inside the source is uniform.
A lone source is passed through in order.
"""
from typing import Generic, Iterator, List, Sequence, Tuple, TypeVar

import numpy as np

from hoil.utils.core.errors import ContractError

T = TypeVar("T")


class DatasetMix(Generic[T]):
    def __init__(self, sources: Sequence[Sequence[T]], ratios: Sequence[float], seed: int = 0):
        ratios = np.asarray(ratios, dtype=np.float64)
        if len(sources) == 0:
            raise ContractError("mix-sources", "dataset mix needs at least one source")
        if ratios.shape != (len(sources),):
            raise ContractError("mix-ratios", f"{ratios.shape[0]} ratios for {len(sources)} sources")
        if np.any(ratios < 0) or not np.any(ratios > 0):
            raise ContractError("mix-ratios", "ratios must be non-negative and not all zero")
        for i, (source, ratio) in enumerate(zip(sources, ratios)):
            if ratio > 0 and len(source) == 0:
                raise ContractError("mix-empty-source", f"source {i} is empty but has ratio {ratio}")
        self.sources = [list(s) for s in sources]
        self.ratios = ratios
        weights = ratios * np.array([len(s) for s in self.sources], dtype=np.float64)
        self.probabilities = weights / weights.sum()
        self.seed = seed
        self.rng = np.random.default_rng([seed, 41])
        self._cursor = 0

    @property
    def passthrough(self) -> bool:
        return len(self.sources) == 1

    def draw_index(self) -> Tuple[int, int]:
        if self.passthrough:
            item = self._cursor % len(self.sources[0])
            self._cursor += 1
            return 0, item
        source = int(self.rng.choice(len(self.sources), p=self.probabilities))
        return source, int(self.rng.integers(len(self.sources[source])))

    def draw(self) -> T:
        source, item = self.draw_index()
        return self.sources[source][item]

    def take(self, count: int) -> List[T]:
        return [self.draw() for _ in range(count)]

    def __iter__(self) -> Iterator[T]:
        while True:
            yield self.draw()

    def batch(self, step: int, size: int) -> List[T]:
        """The batch for a training step; a pure function of (seed, step) so resumed runs draw the same frames."""
        if self.passthrough:
            source = self.sources[0]
            return [source[(step * size + i) % len(source)] for i in range(size)]
        rng = np.random.default_rng([self.seed, 43, step])
        picks = rng.choice(len(self.sources), size=size, p=self.probabilities)
        return [self.sources[s][int(rng.integers(len(self.sources[s])))] for s in picks]


def dataset_mix(sources: Sequence[Sequence[T]], ratios: Sequence[float], seed: int = 0) -> DatasetMix[T]:
    return DatasetMix(sources, ratios, seed)
