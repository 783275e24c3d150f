from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence

import pandas as pd

from srrdoc.errors import InvalidInputError
from srrdoc.models.relation import TrainingExample


class PruneStrategy(str, Enum):
    CONTIGUOUS_MIDDLE = "middle"
    SHALLOW = "shallow"
    DEEP = "deep"
    IMPORTANCE = "importance"

    @classmethod
    def parse(cls, value: str) -> "PruneStrategy":
        key = value.strip().lower().replace("-", "_")
        aliases = {"contiguous_middle": cls.CONTIGUOUS_MIDDLE, "contiguousmiddle": cls.CONTIGUOUS_MIDDLE}
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError as e:
            raise InvalidInputError(f"unknown pruning strategy: {value!r}") from e


@dataclass(frozen=True)
class PruneSpec:
    """
    Which layers to keep. `calibration` is required by the importance strategy
    and ignored by the others.
    """
    strategy: PruneStrategy
    keep: int
    calibration: Optional[Sequence[TrainingExample]] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.keep < 1:
            raise InvalidInputError(f"keep must be >= 1, got {self.keep}")
        if self.strategy == PruneStrategy.IMPORTANCE and not self.calibration:
            raise InvalidInputError("importance pruning needs a non-empty calibration set")


@dataclass
class SweepReport:
    """Metric drop when each single layer is bypassed"""
    baseline: float
    deltas: List[float]
    metric: str = "rank_accuracy"

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "layer": list(range(len(self.deltas))),
            "delta": self.deltas,
            self.metric: [self.baseline - d for d in self.deltas],
        })
