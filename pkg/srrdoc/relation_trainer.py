import logging
import math
from dataclasses import asdict, dataclass, field
from typing import AbstractSet, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from sklearn.model_selection import train_test_split
from tqdm import tqdm

from srrdoc.errors import InvalidInputError
from srrdoc.metrics import kendall_tau
from srrdoc.models.corpus import CorpusRecord
from srrdoc.models.relation import RelationModelConfig, TrainingExample
from srrdoc.relation_model import RelationModel, element_indices, encode, greedy_decode, embed_elements
from srrdoc.utils.geometry import normalize_bbox

logger = logging.getLogger(__name__)

IGNORE_INDEX = -100


@dataclass
class TrainingConfig:
    """Optimizer and schedule settings (AdamW with cosine decay)"""
    learning_rate: float = 1e-3
    weight_decay: float = 0.01
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise InvalidInputError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 0 or self.batch_size < 1:
            raise InvalidInputError(f"bad epochs/batch_size: {self.epochs}/{self.batch_size}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainingResult:
    model: RelationModel
    loss_curve: List[float] = field(default_factory=list)  # initial loss, then one entry per epoch
    steps: int = 0


@dataclass
class Batch:
    coords: torch.Tensor  # (B, N, 6)
    categories: torch.Tensor  # (B, N)
    padding_mask: torch.Tensor  # (B, N), True on padding
    targets: torch.Tensor  # (B, N), IGNORE_INDEX on padding
    lengths: torch.Tensor  # (B,)


def examples_from_records(records: Sequence[CorpusRecord], max_elements: int) -> List[TrainingExample]:
    """
    Training examples from ground-truth pages; pages with more blocks than
    the model has rank columns are skipped with a warning.
    """
    examples = []
    for record in records:
        if len(record.blocks) > max_elements:
            logger.warning(f"Skipping {record.page_id}: {len(record.blocks)} blocks > {max_elements}")
            continue
        page = record.page
        examples.append(
            TrainingExample(
                boxes=[normalize_bbox(b.bbox, page.width, page.height) for b in record.blocks],
                categories=[b.category for b in record.blocks],
                target=record.gt_order,
                page_id=record.page_id,
            )
        )
    return examples


def split_records(records: Sequence[CorpusRecord], held_out_fraction: float = 0.1,
                  seed: int = 0) -> Tuple[List[CorpusRecord], List[CorpusRecord]]:
    """Train / held-out split"""
    if len(records) < 2 or held_out_fraction <= 0:
        return list(records), []
    train, held_out = train_test_split(list(records), test_size=held_out_fraction, random_state=seed)
    return train, held_out


def collate(examples: Sequence[TrainingExample]) -> Batch:
    """Pad a list of examples into one batch"""
    longest = max(len(e) for e in examples)
    size = len(examples)
    coords = torch.zeros(size, longest, 6, dtype=torch.long)
    categories = torch.zeros(size, longest, dtype=torch.long)
    padding_mask = torch.ones(size, longest, dtype=torch.bool)
    targets = torch.full((size, longest), IGNORE_INDEX, dtype=torch.long)

    for b, example in enumerate(examples):
        n = len(example)
        c, k = element_indices(example.boxes, example.categories)
        coords[b, :n] = c
        categories[b, :n] = k
        padding_mask[b, :n] = False
        targets[b, :n] = torch.tensor(example.target, dtype=torch.long)

    lengths = torch.tensor([len(e) for e in examples], dtype=torch.long)
    return Batch(coords, categories, padding_mask, targets, lengths)


def relation_loss(model: RelationModel, batch: Batch, skip: AbstractSet[int] = frozenset()) -> torch.Tensor:
    """
    Mean per-element cross-entropy between logit rows and target ranks, with
    rank columns at or beyond each page's element count masked out.
    """
    logits = model(batch.coords, batch.categories, batch.padding_mask, skip)
    columns = torch.arange(logits.shape[-1])
    column_mask = columns.unsqueeze(0) >= batch.lengths.unsqueeze(1)  # (B, P)
    logits = logits.masked_fill(column_mask.unsqueeze(1), float("-inf"))
    return F.cross_entropy(
        logits.reshape(-1, logits.shape[-1]),
        batch.targets.reshape(-1),
        ignore_index=IGNORE_INDEX,
    )


def evaluate_loss(model: RelationModel, examples: Sequence[TrainingExample], batch_size: int = 32) -> float:
    """Element-weighted mean loss in inference mode"""
    was_training = model.training
    model.eval()
    total, count = 0.0, 0
    try:
        with torch.no_grad():
            for start in range(0, len(examples), batch_size):
                chunk = examples[start:start + batch_size]
                elements = sum(len(e) for e in chunk)
                total += float(relation_loss(model, collate(chunk))) * elements
                count += elements
    finally:
        model.train(was_training)
    return total / max(count, 1)


def fit(model: RelationModel, examples: Sequence[TrainingExample], training: TrainingConfig,
        total_steps: int, show_progress: bool = False) -> TrainingResult:
    """
    Optimize `model` in place for `total_steps` minibatch steps.

    Returns:
        TrainingResult whose loss curve starts with the initial loss and adds
        the loss after every (possibly partial) epoch
    """
    if not examples:
        raise InvalidInputError("training set is empty")
    for example in examples:
        if len(example) > model.config.max_elements:
            raise InvalidInputError(
                f"{example.page_id or 'example'} has {len(example)} elements > {model.config.max_elements}"
            )

    torch.manual_seed(training.seed)
    rng = np.random.default_rng(training.seed)
    optimizer = torch.optim.AdamW(model.parameters(), lr=training.learning_rate,
                                  weight_decay=training.weight_decay)
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(optimizer, T_max=max(total_steps, 1))

    loss_curve = [evaluate_loss(model, examples, training.batch_size)]
    batches_per_epoch = math.ceil(len(examples) / training.batch_size)
    epochs = math.ceil(total_steps / batches_per_epoch) if total_steps else 0

    step = 0
    model.train()
    for epoch in tqdm(range(epochs), desc="Training", disable=not show_progress):
        order = rng.permutation(len(examples))
        for start in range(0, len(examples), training.batch_size):
            if step >= total_steps:
                break
            batch = collate([examples[int(i)] for i in order[start:start + training.batch_size]])
            optimizer.zero_grad()
            loss = relation_loss(model, batch)
            loss.backward()
            optimizer.step()
            scheduler.step()
            step += 1
        loss_curve.append(evaluate_loss(model, examples, training.batch_size))
        logger.debug(f"Epoch {epoch + 1}/{epochs}: loss {loss_curve[-1]:.4f}")

    model.eval()
    return TrainingResult(model=model, loss_curve=loss_curve, steps=step)


def steps_for(examples: Sequence[TrainingExample], training: TrainingConfig) -> int:
    return training.epochs * math.ceil(len(examples) / training.batch_size)


def train_relation_model(examples: Sequence[TrainingExample], model_config: RelationModelConfig,
                         training: Optional[TrainingConfig] = None, show_progress: bool = False) -> TrainingResult:
    """
    Train a fresh reading-order model.

    Args:
        examples: Training pages
        model_config: Model shape
        training: Optimizer settings
        show_progress: Show a progress bar over epochs

    Returns:
        TrainingResult with the trained model and its loss curve

    Raises:
        InvalidInputError: on an empty dataset or pages with too many elements
    """
    training = training or TrainingConfig()
    if not examples:
        raise InvalidInputError("training set is empty")
    model = RelationModel(model_config, seed=training.seed)

    logger.info(f"Training on {len(examples)} pages for {training.epochs} epochs")
    result = fit(model, examples, training, steps_for(examples, training), show_progress)
    model.metadata.update({
        "seed": training.seed,
        "loss_curve": result.loss_curve,
        "steps": result.steps,
        "training": training.to_dict(),
    })
    logger.info(f"Training done: loss {result.loss_curve[0]:.4f} -> {result.loss_curve[-1]:.4f}")
    return result


def predict_example(model: RelationModel, example: TrainingExample, skip: AbstractSet[int] = frozenset()) -> List[int]:
    """Predicted ranks for an already grid-normalized example"""
    features = embed_elements(example.boxes, example.categories, model)
    return greedy_decode(encode(features, model, skip))


def rank_accuracy(predictions: Sequence[Sequence[int]], targets: Sequence[Sequence[int]]) -> float:
    """Share of elements placed at exactly their target rank"""
    hits = sum(int(p == t) for pred, gold in zip(predictions, targets) for p, t in zip(pred, gold))
    total = sum(len(gold) for gold in targets)
    return hits / total if total else 1.0


def exact_order_rate(predictions: Sequence[Sequence[int]], targets: Sequence[Sequence[int]]) -> float:
    """Share of pages ordered entirely correctly"""
    if not targets:
        return 1.0
    return sum(int(list(p) == list(t)) for p, t in zip(predictions, targets)) / len(targets)


def mean_kendall_tau(predictions: Sequence[Sequence[int]], targets: Sequence[Sequence[int]]) -> float:
    if not targets:
        return 1.0
    return float(np.mean([kendall_tau(p, t) for p, t in zip(predictions, targets)]))


def evaluate_model(model: RelationModel, examples: Sequence[TrainingExample],
                   skip: AbstractSet[int] = frozenset()) -> Dict[str, float]:
    """Ordering quality on held-out examples, in the model's current mode"""
    predictions = [predict_example(model, e, skip) for e in examples]
    targets = [list(e.target) for e in examples]
    return {
        "rank_accuracy": rank_accuracy(predictions, targets),
        "exact_order_rate": exact_order_rate(predictions, targets),
        "kendall_tau": mean_kendall_tau(predictions, targets),
    }
