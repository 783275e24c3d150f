"""
Depth pruning of the relation transformer: single-layer skip sweeps, layer
removal strategies, post-prune fine-tuning and parameter accounting.
"""

import copy
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, Sequence, Tuple

import pandas as pd
import torch
import torch.nn as nn
import torch.nn.functional as F

from srrdoc.errors import InvalidInputError
from srrdoc.models.pruning import PruneSpec, PruneStrategy, SweepReport
from srrdoc.models.relation import TrainingExample
from srrdoc.relation_model import RelationModel
from srrdoc.relation_trainer import (
    TrainingConfig,
    TrainingResult,
    collate,
    evaluate_model,
    fit,
    steps_for,
)

logger = logging.getLogger(__name__)

DEFAULT_FINETUNE_FRACTION = 0.3
FINETUNE_LR_SCALE = 0.1


def skip_layer_sweep(model: RelationModel, eval_set: Sequence[TrainingExample], metric: str = "rank_accuracy",
                     parallelism: int = 1) -> SweepReport:
    """
    Evaluate the model once per layer with that layer bypassed.

    Args:
        model: Trained model (not modified)
        eval_set: Held-out examples
        metric: Key of evaluate_model's result to compare
        parallelism: Layer evaluations run concurrently

    Returns:
        SweepReport with delta = baseline - metric with the layer skipped
    """
    if not eval_set:
        raise InvalidInputError("sweep needs a non-empty evaluation set")
    baseline = evaluate_model(model, eval_set)[metric]

    def skipped(layer: int) -> float:
        return evaluate_model(model, eval_set, skip={layer})[metric]

    layers = range(model.config.layers)
    # workers share the model, so its mode must not flip mid-sweep
    was_training = model.training
    model.eval()
    try:
        if parallelism > 1:
            with ThreadPoolExecutor(max_workers=parallelism) as pool:
                scores = list(pool.map(skipped, layers))
        else:
            scores = [skipped(layer) for layer in layers]
    finally:
        model.train(was_training)

    deltas = [baseline - score for score in scores]
    logger.info(f"Skip sweep: baseline {metric} {baseline:.4f}, deltas {[round(d, 4) for d in deltas]}")
    return SweepReport(baseline=baseline, deltas=deltas, metric=metric)


def layer_importance(model: RelationModel, calibration: Sequence[TrainingExample]) -> List[float]:
    """
    Per-layer importance: mean over calibration elements of
    1 - cos(layer input, layer output). A layer that leaves its input
    unchanged scores 0.
    """
    if not calibration:
        raise InvalidInputError("calibration set is empty")

    totals = [0.0] * model.config.layers
    count = 0
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            for example in calibration:
                batch = collate([example])
                captured: List[Tuple[torch.Tensor, torch.Tensor]] = []
                model.encode_features(model.embed(batch.coords, batch.categories), capture=captured)
                for layer, (inputs, outputs) in enumerate(captured):
                    cosine = F.cosine_similarity(inputs[0], outputs[0], dim=-1)
                    totals[layer] += float((1.0 - cosine).sum())
                count += len(example)
    finally:
        model.train(was_training)
    return [total / count for total in totals]


def kept_layers(model: RelationModel, spec: PruneSpec) -> List[int]:
    """Indices of the layers a spec keeps, in original order"""
    total = model.config.layers
    if spec.keep > total:
        raise InvalidInputError(f"cannot keep {spec.keep} of {total} layers")
    removed_count = total - spec.keep
    if removed_count == 0:
        return list(range(total))

    if spec.strategy == PruneStrategy.CONTIGUOUS_MIDDLE:
        # layer 0 always stays
        start = min(max(removed_count // 2, 1), total - removed_count)
        removed = set(range(start, start + removed_count))
    elif spec.strategy == PruneStrategy.SHALLOW:
        removed = set(range(removed_count))
    elif spec.strategy == PruneStrategy.DEEP:
        removed = set(range(spec.keep, total))
    else:
        scores = layer_importance(model, spec.calibration)
        removed = set(sorted(range(total), key=lambda i: (scores[i], i))[:removed_count])
    return [i for i in range(total) if i not in removed]


def prune_layers(model: RelationModel, spec: PruneSpec) -> RelationModel:
    """
    A copy of the model with only the kept layers, reconnected in their
    original order.

    Raises:
        InvalidInputError: when keep exceeds the layer count
    """
    kept = kept_layers(model, spec)
    pruned = copy.deepcopy(model)
    pruned.layers = nn.ModuleList([pruned.layers[i] for i in kept])
    pruned.config = model.config.with_layers(len(kept))
    pruned.metadata = dict(model.metadata)
    pruned.metadata.update({"pruned_from": model.config.layers, "kept_layers": kept, "strategy": spec.strategy.value})
    logger.info(f"Pruned {model.config.layers} -> {len(kept)} layers ({spec.strategy.value}), kept {kept}")
    return pruned


def finetune(model: RelationModel, examples: Sequence[TrainingExample], fraction: float = DEFAULT_FINETUNE_FRACTION,
             training: TrainingConfig = None, original_steps: int = None) -> TrainingResult:
    """
    Recover a pruned model: train a copy for `fraction` of the original step
    count at a tenth of the original learning rate.

    Args:
        model: Pruned model (not modified)
        examples: Training examples
        fraction: Share of the original step budget, in (0, 1]
        training: The original training settings
        original_steps: Original step count; read from the model metadata or
            derived from `training` when omitted
    """
    if not 0.0 < fraction <= 1.0:
        raise InvalidInputError(f"fine-tune fraction {fraction} outside (0, 1]")
    training = training or TrainingConfig()
    if original_steps is None:
        original_steps = int(model.metadata.get("steps") or steps_for(examples, training))

    steps = max(1, int(round(fraction * original_steps)))
    settings = TrainingConfig(
        learning_rate=training.learning_rate * FINETUNE_LR_SCALE,
        weight_decay=training.weight_decay,
        epochs=training.epochs,
        batch_size=training.batch_size,
        seed=training.seed,
    )
    logger.info(f"Fine-tuning for {steps} steps at lr {settings.learning_rate:g}")
    result = fit(copy.deepcopy(model), examples, settings, steps)
    result.model.metadata["finetune_steps"] = result.steps
    return result


def estimate_params(total_params: float, total_layers: int, keep_layers: int, non_layer_params: float) -> float:
    """Parameter count after keeping `keep_layers` equally sized layers"""
    if total_layers <= 0:
        raise InvalidInputError("total_layers must be positive")
    if non_layer_params > total_params:
        raise InvalidInputError("non-layer parameters exceed the total")
    return non_layer_params + keep_layers * (total_params - non_layer_params) / total_layers


def count_parameters(model: RelationModel) -> Tuple[int, int]:
    """(total, non-layer) parameter counts"""
    total = sum(p.numel() for p in model.parameters())
    in_layers = sum(p.numel() for p in model.layers.parameters())
    return total, total - in_layers


def compare_strategies(model: RelationModel, train_set: Sequence[TrainingExample],
                       eval_set: Sequence[TrainingExample], keep: int, training: TrainingConfig,
                       fraction: float = DEFAULT_FINETUNE_FRACTION, calibration_size: int = 32) -> pd.DataFrame:
    """
    Prune with every strategy to the same depth, fine-tune each on the same
    budget, and add a model of that depth trained from scratch on that budget.
    """
    original_steps = int(model.metadata.get("steps") or steps_for(train_set, training))
    budget = max(1, int(round(fraction * original_steps)))
    rows = []

    for strategy in PruneStrategy:
        spec = PruneSpec(strategy=strategy, keep=keep, calibration=list(train_set[:calibration_size]))
        pruned = prune_layers(model, spec)
        before = evaluate_model(pruned, eval_set)
        tuned = finetune(pruned, train_set, fraction, training, original_steps).model
        after = evaluate_model(tuned, eval_set)
        rows.append({
            "strategy": strategy.value,
            "layers": keep,
            "kept": ",".join(str(i) for i in pruned.metadata["kept_layers"]),
            "rank_accuracy_pruned": before["rank_accuracy"],
            "rank_accuracy": after["rank_accuracy"],
            "kendall_tau": after["kendall_tau"],
        })

    scratch = RelationModel(model.config.with_layers(keep), seed=training.seed)
    scratch = fit(scratch, train_set, training, budget).model
    metrics = evaluate_model(scratch, eval_set)
    rows.append({
        "strategy": "scratch",
        "layers": keep,
        "kept": "",
        "rank_accuracy_pruned": float("nan"),
        "rank_accuracy": metrics["rank_accuracy"],
        "kendall_tau": metrics["kendall_tau"],
    })
    return pd.DataFrame(rows)


def degree_sweep(model: RelationModel, train_set: Sequence[TrainingExample], eval_set: Sequence[TrainingExample],
                 keeps: Sequence[int], training: TrainingConfig,
                 fraction: float = DEFAULT_FINETUNE_FRACTION) -> pd.DataFrame:
    """Contiguous-middle pruning to each depth in `keeps`, fine-tuned, with parameter counts"""
    total, non_layer = count_parameters(model)
    rows = []
    for keep in keeps:
        if keep == model.config.layers:
            tuned = model
        else:
            pruned = prune_layers(model, PruneSpec(PruneStrategy.CONTIGUOUS_MIDDLE, keep))
            tuned = finetune(pruned, train_set, fraction, training).model
        rows.append({
            "layers": keep,
            "params": count_parameters(tuned)[0],
            "estimated_params": int(math.floor(estimate_params(total, model.config.layers, keep, non_layer) + 0.5)),
            "rank_accuracy": evaluate_model(tuned, eval_set)["rank_accuracy"],
        })
    return pd.DataFrame(rows)
