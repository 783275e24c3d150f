import pandas as pd
import pytest

from srrdoc.benchmark import BENCH_COLUMNS, speedup, throughput_bench
from srrdoc.corpus_generator import synthesize_corpus
from srrdoc.errors import ConfigError, InvalidInputError
from srrdoc.models.config import PipelineConfig
from srrdoc.models.corpus import LayoutTemplate


@pytest.fixture(scope="module")
def pages():
    return synthesize_corpus([LayoutTemplate.DOUBLE_COLUMN, LayoutTemplate.NEWSPAPER_3COL], 3, seed=60)


def test_block_parallelism_beats_full_page(pages):
    config = PipelineConfig(latency_per_request=0.03, latency_per_token=0.001)
    frame = throughput_bench(config, pages, [8])
    assert list(frame.columns) == BENCH_COLUMNS
    assert frame["mode"].tolist() == ["srr", "full_page"]
    assert frame["requests"].tolist() == [sum(len(p.blocks) for p in pages), len(pages)]
    assert speedup(frame) >= 1.5


def test_one_row_per_parallelism(pages):
    frame = throughput_bench(PipelineConfig(), pages[:1], [1, 2, 4], include_full_page=False)
    assert frame["parallelism"].tolist() == [1, 2, 4]
    assert (frame["pages_per_s"] > 0).all()
    with pytest.raises(InvalidInputError):
        speedup(frame)


def test_throughput_never_drops_with_more_workers(pages):
    config = PipelineConfig(latency_per_request=0.02)
    fewest = min(len(p.blocks) for p in pages)
    widths = [w for w in (1, 2, 4, 8) if w <= fewest]
    assert len(widths) >= 3
    rates = throughput_bench(config, pages, widths, include_full_page=False)["pages_per_s"].tolist()
    assert all(later >= earlier for earlier, later in zip(rates, rates[1:]))


def test_speedup_at_named_width():
    frame = pd.DataFrame([
        {"mode": "srr", "parallelism": 1, "pages_per_s": 2.0, "requests": 10, "seconds": 1.0},
        {"mode": "srr", "parallelism": 4, "pages_per_s": 6.0, "requests": 10, "seconds": 1.0},
        {"mode": "full_page", "parallelism": 1, "pages_per_s": 3.0, "requests": 2, "seconds": 1.0},
    ])
    assert speedup(frame) == 2.0
    assert speedup(frame, 1) == pytest.approx(2 / 3)
    with pytest.raises(InvalidInputError):
        speedup(frame, 8)


def test_bench_arguments(pages):
    with pytest.raises(InvalidInputError):
        throughput_bench(PipelineConfig(), [], [1])
    with pytest.raises(InvalidInputError):
        throughput_bench(PipelineConfig(), pages, [0])
    with pytest.raises(ConfigError):
        throughput_bench(PipelineConfig(recognizer="remote", api_base="http://127.0.0.1:9"), pages, [1])
