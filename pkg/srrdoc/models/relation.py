from dataclasses import asdict, dataclass
from typing import Sequence, Tuple

import numpy as np

from srrdoc.errors import InvalidInputError
from srrdoc.models.page import BBox, Category


@dataclass(frozen=True)
class RelationModelConfig:
    """
    Shape of the reading-order model. The model width is six coordinate
    embeddings side by side, so model_dim = 6 * coord_embed_dim.
    """
    coord_embed_dim: int = 32
    layers: int = 4
    heads: int = 4
    ffn_multiplier: int = 4
    max_elements: int = 64
    dropout: float = 0.1
    category_aware: bool = True

    def __post_init__(self):
        if self.coord_embed_dim < 1:
            raise InvalidInputError(f"coord_embed_dim must be >= 1, got {self.coord_embed_dim}")
        if self.layers < 0:
            raise InvalidInputError(f"layers must be >= 0, got {self.layers}")
        if self.heads < 1 or self.model_dim % self.heads != 0:
            raise InvalidInputError(f"model_dim {self.model_dim} is not divisible by {self.heads} heads")
        if self.max_elements < 1:
            raise InvalidInputError(f"max_elements must be >= 1, got {self.max_elements}")
        if not 0.0 <= self.dropout < 1.0:
            raise InvalidInputError(f"dropout {self.dropout} outside [0, 1)")

    @property
    def model_dim(self) -> int:
        return 6 * self.coord_embed_dim

    def with_layers(self, layers: int) -> "RelationModelConfig":
        data = self.to_dict()
        data["layers"] = layers
        return RelationModelConfig.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RelationModelConfig":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})


@dataclass(frozen=True)
class TrainingExample:
    """
    One page for the relation model: grid-normalized boxes, categories and the
    target rank of every element.
    """
    boxes: Tuple[BBox, ...]
    categories: Tuple[Category, ...]
    target: Tuple[int, ...]
    page_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        object.__setattr__(self, "categories", tuple(self.categories))
        object.__setattr__(self, "target", tuple(int(t) for t in self.target))
        if not (len(self.boxes) == len(self.categories) == len(self.target)):
            raise InvalidInputError("boxes, categories and target must have equal length")
        if sorted(self.target) != list(range(len(self.target))):
            raise InvalidInputError(f"target of {self.page_id or 'example'} is not a permutation")

    def __len__(self) -> int:
        return len(self.boxes)


@dataclass(frozen=True)
class OrderLogits:
    """N x P rank scores, one row per element"""
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise InvalidInputError(f"logits must be a matrix, got shape {values.shape}")
        if values.shape[0] > values.shape[1]:
            raise InvalidInputError(f"{values.shape[0]} elements exceed {values.shape[1]} rank columns")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("logits contain non-finite entries")
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


def check_permutation(ranks: Sequence[int], n: int):
    if sorted(ranks) != list(range(n)):
        raise InvalidInputError(f"{list(ranks)} is not a permutation of 0..{n - 1}")
