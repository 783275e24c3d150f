"""
Block-level reading-order model.

Each element is embedded from its grid-normalized box (six coordinate tables
for x1, y1, x2, y2, width and height, concatenated) plus an additive category
embedding. A pre-norm transformer stack mixes the elements and a bias-free
linear head scores every candidate rank. There is no sequence-index positional
encoding, so the model is permutation-equivariant in its input elements.
"""

import io
import json
import logging
import math
import pickle
import struct
from typing import AbstractSet, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn as nn

from srrdoc.errors import InvalidInputError, ModelFormatError
from srrdoc.models.page import BBox, Block, Category
from srrdoc.models.relation import OrderLogits, RelationModelConfig, check_permutation
from srrdoc.utils.geometry import GRID_SIZE, normalize_bbox

logger = logging.getLogger(__name__)

COORD_FIELDS = ("x1", "y1", "x2", "y2", "w", "h")
CATEGORY_INDEX = {category: index for index, category in enumerate(Category)}

MODEL_MAGIC = b"SRRM"
MODEL_FORMAT_VERSION = 1


class RelationLayer(nn.Module):
    """Pre-norm transformer block: self-attention and a GELU feed-forward, each with a residual"""

    def __init__(self, config: RelationModelConfig):
        super().__init__()
        dim = config.model_dim
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, config.heads, dropout=config.dropout, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        self.ffn = nn.Sequential(
            nn.Linear(dim, config.ffn_multiplier * dim),
            nn.GELU(),
            nn.Linear(config.ffn_multiplier * dim, dim),
        )
        self.dropout = nn.Dropout(config.dropout)

    def forward(self, x: torch.Tensor, padding_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        h = self.norm1(x)
        attended, _ = self.attn(h, h, h, key_padding_mask=padding_mask, need_weights=False)
        x = x + self.dropout(attended)
        x = x + self.dropout(self.ffn(self.norm2(x)))
        return x


class RelationModel(nn.Module):
    """
    Embeddings, transformer layers and rank classifier.

    `metadata` carries training provenance (seed, loss curve) and is written
    into the model file header.
    """

    def __init__(self, config: RelationModelConfig, seed: int = 0):
        super().__init__()
        self.config = config
        d, dim = config.coord_embed_dim, config.model_dim
        self.coord_embeddings = nn.ModuleDict({name: nn.Embedding(GRID_SIZE + 1, d) for name in COORD_FIELDS})
        self.category_embedding = nn.Embedding(len(Category), dim)
        self.layers = nn.ModuleList([RelationLayer(config) for _ in range(config.layers)])
        self.classifier = nn.Linear(dim, config.max_elements, bias=False)
        self.metadata: dict = {"seed": seed}
        self.reset_parameters(seed)

    def reset_parameters(self, seed: int):
        """Uniform +-1/sqrt(D) weights, zero biases, unit LayerNorm scales"""
        generator = torch.Generator().manual_seed(seed)
        bound = 1.0 / math.sqrt(self.config.model_dim)
        with torch.no_grad():
            for module in self.modules():
                if isinstance(module, nn.LayerNorm):
                    module.weight.fill_(1.0)
                    module.bias.zero_()
            for name, param in self.named_parameters():
                if "norm" in name:
                    continue
                if name.endswith("bias"):
                    param.zero_()
                else:
                    param.uniform_(-bound, bound, generator=generator)

    def embed(self, coords: torch.Tensor, categories: torch.Tensor) -> torch.Tensor:
        """
        Args:
            coords: (..., 6) integer grid indices in COORD_FIELDS order
            categories: (...) category indices

        Returns:
            (..., D) element features
        """
        parts = [self.coord_embeddings[name](coords[..., k]) for k, name in enumerate(COORD_FIELDS)]
        features = torch.cat(parts, dim=-1)
        if self.config.category_aware:
            features = features + self.category_embedding(categories)
        return features

    def encode_features(self, features: torch.Tensor, padding_mask: Optional[torch.Tensor] = None,
                        skip: AbstractSet[int] = frozenset(),
                        capture: Optional[List[Tuple[torch.Tensor, torch.Tensor]]] = None) -> torch.Tensor:
        """
        Run the layer stack and classifier on (B, N, D) features.

        Args:
            features: Element features
            padding_mask: (B, N) True where the element is padding
            skip: Layer indices bypassed (residual passthrough)
            capture: When given, receives (input, output) hidden states per executed layer

        Returns:
            (B, N, P) logits
        """
        h = features
        for index, layer in enumerate(self.layers):
            if index in skip:
                continue
            out = layer(h, padding_mask)
            if capture is not None:
                capture.append((h, out))
            h = out
        return self.classifier(h)

    def forward(self, coords: torch.Tensor, categories: torch.Tensor, padding_mask: Optional[torch.Tensor] = None,
                skip: AbstractSet[int] = frozenset()) -> torch.Tensor:
        return self.encode_features(self.embed(coords, categories), padding_mask, skip)


def element_indices(boxes: Sequence[BBox], categories: Sequence[Category]) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Grid boxes to embedding indices: (N, 6) coordinates with w = x2 - x1 and
    h = y2 - y1, and (N,) category indices.

    Raises:
        InvalidInputError: on length mismatch or coordinates outside 0..1000
    """
    if len(boxes) != len(categories):
        raise InvalidInputError(f"{len(boxes)} boxes but {len(categories)} categories")
    rows = []
    for box in boxes:
        coords = [box.x1, box.y1, box.x2, box.y2]
        if any(c != int(c) or not 0 <= c <= GRID_SIZE for c in coords):
            raise InvalidInputError(f"box {box.to_list()} is not on the 0..{GRID_SIZE} grid")
        x1, y1, x2, y2 = (int(c) for c in coords)
        rows.append([x1, y1, x2, y2, min(max(x2 - x1, 0), GRID_SIZE), min(max(y2 - y1, 0), GRID_SIZE)])
    coords = torch.tensor(rows, dtype=torch.long).reshape(len(boxes), len(COORD_FIELDS))
    cats = torch.tensor([CATEGORY_INDEX[c] for c in categories], dtype=torch.long)
    return coords, cats


def embed_elements(boxes: Sequence[BBox], categories: Sequence[Category], model: RelationModel) -> np.ndarray:
    """N x D feature matrix for grid-normalized boxes and their categories"""
    if len(boxes) > model.config.max_elements:
        raise InvalidInputError(f"{len(boxes)} elements exceed the model's {model.config.max_elements}")
    coords, cats = element_indices(boxes, categories)
    with torch.no_grad():
        return model.embed(coords, cats).numpy()


def encode(features: Union[np.ndarray, torch.Tensor], model: RelationModel,
           skip: AbstractSet[int] = frozenset()) -> OrderLogits:
    """
    Logits for an N x D feature matrix, computed without gradients.

    The model's train/eval mode is left as the caller set it, so a model
    shared between threads must be put in eval mode once beforehand
    (load_model and the trainer return it that way).

    Raises:
        InvalidInputError: when N exceeds the number of rank columns
    """
    features = torch.as_tensor(np.asarray(features), dtype=torch.float32)
    if features.ndim != 2 or features.shape[1] != model.config.model_dim:
        raise InvalidInputError(f"features must be N x {model.config.model_dim}, got {tuple(features.shape)}")
    if features.shape[0] > model.config.max_elements:
        raise InvalidInputError(f"{features.shape[0]} elements exceed the model's {model.config.max_elements}")

    with torch.no_grad():
        logits = model.encode_features(features.unsqueeze(0), skip=skip)[0]
    return OrderLogits(logits.double().numpy())


def greedy_decode(logits: Union[OrderLogits, np.ndarray]) -> List[int]:
    """
    Turn rank logits into a permutation.

    Every unplaced element claims its best free column among the first N; on
    each contested column the claimant with the highest logit keeps it and
    the others claim again in the next round. Ties go to the lower column and
    the lower element index.

    Returns:
        ranks, where ranks[i] is the position of element i
    """
    values = logits.values if isinstance(logits, OrderLogits) else OrderLogits(logits).values
    n = values.shape[0]
    scores = values[:, :n]
    ranks = [-1] * n
    free = np.ones(n, dtype=bool)
    pending = list(range(n))

    while pending:
        claims = {}
        for i in pending:
            masked = np.where(free, scores[i], -np.inf)
            column = int(np.argmax(masked))  # first maximum -> lower column
            claims.setdefault(column, []).append(i)
        for column, claimants in claims.items():
            # stable max keeps the lower index on equal logits
            winner = max(claimants, key=lambda i: (scores[i, column], -i))
            ranks[winner] = column
            free[column] = False
        pending = [i for i in pending if ranks[i] < 0]

    return ranks


def predict_order(blocks: Sequence[Block], model: RelationModel, page_w: float, page_h: float) -> List[int]:
    """Reading rank of every block: normalize, embed, encode and decode"""
    if not blocks:
        return []
    boxes = [normalize_bbox(b.bbox, page_w, page_h) for b in blocks]
    features = embed_elements(boxes, [b.category for b in blocks], model)
    ranks = greedy_decode(encode(features, model))
    check_permutation(ranks, len(blocks))
    return ranks


def save_model(model: RelationModel, path: str):
    """
    Write the model file: magic, format version, a length-prefixed JSON header
    (config, seed, loss curve, ...) and the torch state dict.
    """
    header = dict(model.metadata)
    header["config"] = model.config.to_dict()
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")

    state = io.BytesIO()
    torch.save(model.state_dict(), state)

    with open(path, "wb") as f:
        f.write(MODEL_MAGIC)
        f.write(struct.pack(">HI", MODEL_FORMAT_VERSION, len(header_bytes)))
        f.write(header_bytes)
        f.write(state.getvalue())
    logger.info(f"Saved relation model ({model.config.layers} layers) to {path}")


def load_model(path: str) -> RelationModel:
    """
    Read a model file written by save_model.

    Raises:
        ModelFormatError: on a bad magic, unsupported version or corrupt payload
    """
    with open(path, "rb") as f:
        data = f.read()

    if data[:4] != MODEL_MAGIC:
        raise ModelFormatError(f"{path} is not a relation model file")
    try:
        version, header_len = struct.unpack(">HI", data[4:10])
    except struct.error as e:
        raise ModelFormatError(f"{path}: truncated header") from e
    if version != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported format version {version}")

    try:
        header = json.loads(data[10:10 + header_len].decode("utf-8"))
        config = RelationModelConfig.from_dict(header.pop("config"))
        state = torch.load(io.BytesIO(data[10 + header_len:]), weights_only=True)
        model = RelationModel(config, seed=int(header.get("seed", 0)))
        model.load_state_dict(state)
    except (ValueError, KeyError, RuntimeError, EOFError, pickle.UnpicklingError) as e:
        raise ModelFormatError(f"{path}: corrupt model payload ({str(e)})") from e

    model.metadata = header
    model.eval()
    logger.info(f"Loaded relation model ({config.layers} layers) from {path}")
    return model
