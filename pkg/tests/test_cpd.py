import numpy as np
import pytest
import torch

from srrdoc.corpus_generator import synthesize_corpus
from srrdoc.cpd import (
    compare_strategies,
    count_parameters,
    degree_sweep,
    estimate_params,
    finetune,
    kept_layers,
    layer_importance,
    prune_layers,
    skip_layer_sweep,
)
from srrdoc.errors import InvalidInputError
from srrdoc.models.corpus import LayoutTemplate
from srrdoc.models.pruning import PruneSpec, PruneStrategy
from srrdoc.models.relation import RelationModelConfig
from srrdoc.relation_model import RelationModel, encode
from srrdoc.relation_trainer import TrainingConfig, evaluate_model, examples_from_records, train_relation_model


@pytest.fixture(scope="module")
def examples():
    records = synthesize_corpus([LayoutTemplate.SINGLE_COLUMN, LayoutTemplate.DOUBLE_COLUMN], 12, seed=33)
    return examples_from_records(records, 64)


@pytest.fixture
def four_layer_model():
    config = RelationModelConfig(coord_embed_dim=4, layers=4, heads=2, dropout=0.0)
    return RelationModel(config, seed=2)


def _zero_layer(model, index):
    with torch.no_grad():
        for param in model.layers[index].parameters():
            param.zero_()


def test_kept_layers_by_strategy(four_layer_model):
    assert kept_layers(four_layer_model, PruneSpec(PruneStrategy.CONTIGUOUS_MIDDLE, 2)) == [0, 3]
    assert kept_layers(four_layer_model, PruneSpec(PruneStrategy.DEEP, 2)) == [0, 1]
    assert kept_layers(four_layer_model, PruneSpec(PruneStrategy.SHALLOW, 2)) == [2, 3]
    assert kept_layers(four_layer_model, PruneSpec(PruneStrategy.CONTIGUOUS_MIDDLE, 4)) == [0, 1, 2, 3]
    assert kept_layers(four_layer_model, PruneSpec(PruneStrategy.CONTIGUOUS_MIDDLE, 3)) == [0, 2, 3]


def test_middle_pruning_always_keeps_the_first_layer():
    model = RelationModel(RelationModelConfig(coord_embed_dim=2, layers=6, heads=1))
    for keep in range(1, 7):
        kept = kept_layers(model, PruneSpec(PruneStrategy.CONTIGUOUS_MIDDLE, keep))
        assert kept[0] == 0 and len(kept) == keep
        removed = sorted(set(range(6)) - set(kept))
        # one contiguous window
        assert removed == list(range(removed[0], removed[0] + len(removed))) if removed else keep == 6


def test_keep_more_than_available(four_layer_model):
    with pytest.raises(InvalidInputError):
        kept_layers(four_layer_model, PruneSpec(PruneStrategy.DEEP, 5))
    with pytest.raises(InvalidInputError):
        PruneSpec(PruneStrategy.DEEP, 0)
    with pytest.raises(InvalidInputError):
        PruneSpec(PruneStrategy.IMPORTANCE, 2)


def test_strategy_names():
    assert PruneStrategy.parse("ContiguousMiddle") is PruneStrategy.CONTIGUOUS_MIDDLE
    assert PruneStrategy.parse("deep") is PruneStrategy.DEEP
    with pytest.raises(InvalidInputError):
        PruneStrategy.parse("random")


def test_prune_keeps_weights_of_kept_layers(four_layer_model):
    pruned = prune_layers(four_layer_model, PruneSpec(PruneStrategy.CONTIGUOUS_MIDDLE, 2))
    assert pruned.config.layers == 2
    assert len(pruned.layers) == 2
    assert torch.equal(pruned.layers[1].ffn[0].weight, four_layer_model.layers[3].ffn[0].weight)
    assert pruned.metadata["kept_layers"] == [0, 3]
    assert len(four_layer_model.layers) == 4


def test_pruned_model_matches_skipping(four_layer_model):
    pruned = prune_layers(four_layer_model, PruneSpec(PruneStrategy.DEEP, 2))
    features = torch.randn(5, four_layer_model.config.model_dim, generator=torch.Generator().manual_seed(0))
    skipped = encode(features.numpy(), four_layer_model, skip={2, 3}).values
    assert torch.allclose(torch.tensor(encode(features.numpy(), pruned).values), torch.tensor(skipped), atol=1e-6)


def test_pruned_model_stays_permutation_equivariant(four_layer_model):
    pruned = prune_layers(four_layer_model, PruneSpec(PruneStrategy.SHALLOW, 1))
    features = torch.randn(6, pruned.config.model_dim, generator=torch.Generator().manual_seed(1)).numpy()
    order = [3, 1, 5, 0, 2, 4]
    base = encode(features, pruned).values
    assert abs(encode(features[order], pruned).values - base[order]).max() < 1e-4


def test_sweep_has_one_delta_per_layer(four_layer_model, examples):
    report = skip_layer_sweep(four_layer_model, examples[:4])
    assert len(report.deltas) == 4
    frame = report.to_frame()
    assert list(frame.columns) == ["layer", "delta", "rank_accuracy"]
    assert frame["layer"].tolist() == [0, 1, 2, 3]


def test_sweep_in_parallel_matches_serial(four_layer_model, examples):
    serial = skip_layer_sweep(four_layer_model, examples[:4])
    parallel = skip_layer_sweep(four_layer_model, examples[:4], parallelism=4)
    assert serial.deltas == parallel.deltas


def test_zero_layer_is_inert(four_layer_model, examples):
    _zero_layer(four_layer_model, 2)
    report = skip_layer_sweep(four_layer_model, examples[:4])
    assert report.deltas[2] == 0.0
    importance = layer_importance(four_layer_model, examples[:4])
    assert importance[2] == pytest.approx(0.0, abs=1e-6)
    assert all(score > 1e-6 for i, score in enumerate(importance) if i != 2)


def test_importance_pruning_drops_the_inert_layer(four_layer_model, examples):
    _zero_layer(four_layer_model, 1)
    spec = PruneSpec(PruneStrategy.IMPORTANCE, 3, calibration=examples[:4])
    assert kept_layers(four_layer_model, spec) == [0, 2, 3]


def test_empty_inputs_raise(four_layer_model):
    with pytest.raises(InvalidInputError):
        skip_layer_sweep(four_layer_model, [])
    with pytest.raises(InvalidInputError):
        layer_importance(four_layer_model, [])


def test_estimate_params():
    assert estimate_params(3.0e9, 36, 12, 0.3e9) == pytest.approx(1.2e9)
    assert estimate_params(3.0e9, 36, 8, 0.3e9) == pytest.approx(0.9e9)
    assert estimate_params(3.0e9, 36, 4, 0.3e9) == pytest.approx(0.6e9)
    assert estimate_params(3.0e9, 36, 36, 0.3e9) == pytest.approx(3.0e9)
    with pytest.raises(InvalidInputError):
        estimate_params(1.0, 0, 0, 0.0)
    with pytest.raises(InvalidInputError):
        estimate_params(1.0, 4, 2, 2.0)


def test_estimate_matches_counted_parameters(four_layer_model):
    total, non_layer = count_parameters(four_layer_model)
    pruned = prune_layers(four_layer_model, PruneSpec(PruneStrategy.CONTIGUOUS_MIDDLE, 2))
    assert count_parameters(pruned)[0] == estimate_params(total, 4, 2, non_layer)
    assert count_parameters(pruned)[1] == non_layer


def test_finetune_trains_a_copy(four_layer_model, examples):
    pruned = prune_layers(four_layer_model, PruneSpec(PruneStrategy.CONTIGUOUS_MIDDLE, 2))
    before = pruned.classifier.weight.detach().clone()
    training = TrainingConfig(learning_rate=1e-2, epochs=2, batch_size=4)
    result = finetune(pruned, examples, 0.5, training, original_steps=10)
    assert result.steps == 5
    assert torch.equal(pruned.classifier.weight, before)
    assert not torch.equal(result.model.classifier.weight, before)
    assert result.model.metadata["finetune_steps"] == 5
    with pytest.raises(InvalidInputError):
        finetune(pruned, examples, 0.0, training)


def _first_layer_dominates(model, eval_set):
    deltas = skip_layer_sweep(model, eval_set).deltas
    return deltas[0] >= float(np.median(deltas[1:]))


def test_skipping_the_first_layer_hurts_most(trained_model):
    templates = [LayoutTemplate.SINGLE_COLUMN, LayoutTemplate.DOUBLE_COLUMN]
    eval_set = examples_from_records(synthesize_corpus(templates, 12, seed=700), 64)
    if _first_layer_dominates(trained_model, eval_set):
        return
    # one retry with a freshly seeded model
    train_set = examples_from_records(synthesize_corpus(templates, 40, seed=11), 64)
    training = TrainingConfig(learning_rate=3e-3, epochs=15, batch_size=8, seed=1)
    retrained = train_relation_model(train_set, trained_model.config, training).model
    assert _first_layer_dominates(retrained, eval_set)


def test_finetune_with_zero_learning_rate_changes_nothing(four_layer_model, examples):
    pruned = prune_layers(four_layer_model, PruneSpec(PruneStrategy.CONTIGUOUS_MIDDLE, 2))
    training = TrainingConfig(learning_rate=0.0, epochs=2, batch_size=4)
    result = finetune(pruned, examples, 1.0, training, original_steps=6)
    assert result.steps == 6
    tuned = result.model.state_dict()
    for name, value in pruned.state_dict().items():
        assert torch.equal(tuned[name], value), name


def test_finetune_only_improves_the_pruned_model(trained_model):
    records = synthesize_corpus([LayoutTemplate.SINGLE_COLUMN, LayoutTemplate.DOUBLE_COLUMN], 24, seed=800)
    examples = examples_from_records(records, 64)
    pruned = prune_layers(trained_model, PruneSpec(PruneStrategy.CONTIGUOUS_MIDDLE, 2))
    training = TrainingConfig(learning_rate=3e-3, epochs=15, batch_size=8, seed=0)
    result = finetune(pruned, examples, 1.0, training, original_steps=30)

    initial = result.loss_curve[0]
    assert len(result.loss_curve) > 2
    assert all(loss <= initial for loss in result.loss_curve)
    before = evaluate_model(pruned, examples)["rank_accuracy"]
    assert evaluate_model(result.model, examples)["rank_accuracy"] >= before


def test_degree_sweep(four_layer_model, examples):
    training = TrainingConfig(learning_rate=1e-3, epochs=1, batch_size=6)
    frame = degree_sweep(four_layer_model, examples, examples[:3], [4, 2], training)
    assert frame["layers"].tolist() == [4, 2]
    assert (frame["params"] == frame["estimated_params"]).all()


def test_compare_strategies_gives_one_row_each(four_layer_model, examples):
    training = TrainingConfig(learning_rate=1e-3, epochs=1, batch_size=6)
    frame = compare_strategies(four_layer_model, examples, examples[:3], 2, training, calibration_size=4)
    assert frame["strategy"].tolist() == ["middle", "shallow", "deep", "importance", "scratch"]
    assert frame["rank_accuracy"].between(0, 1).all()


@pytest.mark.slow
def test_pruned_and_finetuned_model_recovers():
    from srrdoc.relation_trainer import split_records

    records = synthesize_corpus(list(LayoutTemplate), 2000, seed=0)
    train, held_out = split_records(records, 0.1, seed=0)
    train_examples = examples_from_records(train, 64)
    held_out_examples = examples_from_records(held_out, 64)
    training = TrainingConfig(epochs=30, seed=0)
    model = train_relation_model(train_examples, RelationModelConfig(), training).model

    full = evaluate_model(model, held_out_examples)["rank_accuracy"]
    pruned = prune_layers(model, PruneSpec(PruneStrategy.CONTIGUOUS_MIDDLE, 2))
    tuned = finetune(pruned, train_examples, 0.3, training).model
    assert full - evaluate_model(tuned, held_out_examples)["rank_accuracy"] <= 0.05
