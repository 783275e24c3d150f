import logging
import time
from typing import List, Optional, Sequence

import pandas as pd

from srrdoc.block_scheduler import recognize_page_blocks, recognize_with_retry
from srrdoc.errors import ConfigError, InvalidInputError
from srrdoc.models.config import PipelineConfig
from srrdoc.models.corpus import CorpusRecord
from srrdoc.recognizer import DEFAULT_PROMPTS_PATH, MockRecognizer, full_page_request
from srrdoc.structure_detector import build_detector, detect_with_fallback

logger = logging.getLogger(__name__)

BENCH_COLUMNS = ["mode", "parallelism", "pages_per_s", "requests", "seconds"]


def _mock_recognizer(config: PipelineConfig) -> MockRecognizer:
    if config.recognizer != "mock":
        raise ConfigError("the throughput benchmark runs on the mock recognizer")
    if config.latency_per_request <= 0 and config.latency_per_token <= 0:
        logger.warning("No simulated latency configured; timings measure overhead only")
    return MockRecognizer(config.error_model(), config.latency_per_request, config.latency_per_token)


def _srr_row(config: PipelineConfig, records: Sequence[CorpusRecord], parallelism: int,
             recognizer: MockRecognizer) -> dict:
    detector = build_detector(config.detector, config.detections_path, config.gap_threshold,
                              config.top_k, config.score_threshold)
    prompts_path = config.prompts_path or DEFAULT_PROMPTS_PATH
    pages = [record.page for record in records]
    # detection is not part of the recognition timing
    detections = [detect_with_fallback(detector, page)[0] for page in pages]

    requests = 0
    started = time.perf_counter()
    for page, page_detections in zip(pages, detections):
        recognize_page_blocks(page, page_detections, recognizer, parallelism=parallelism,
                              max_attempts=config.max_attempts, backoff_base=config.backoff_base,
                              prompts_path=prompts_path)
        requests += len(page_detections)
    seconds = time.perf_counter() - started
    return {"mode": "srr", "parallelism": parallelism, "pages_per_s": len(pages) / seconds,
            "requests": requests, "seconds": seconds}


def _full_page_row(config: PipelineConfig, records: Sequence[CorpusRecord], recognizer: MockRecognizer) -> dict:
    prompts_path = config.prompts_path or DEFAULT_PROMPTS_PATH
    requests = [full_page_request(record.page, prompts_path) for record in records]

    started = time.perf_counter()
    for request in requests:
        recognize_with_retry(recognizer, request, config.max_attempts, config.backoff_base)
    seconds = time.perf_counter() - started
    return {"mode": "full_page", "parallelism": 1, "pages_per_s": len(requests) / seconds,
            "requests": len(requests), "seconds": seconds}


def throughput_bench(config: PipelineConfig, records: Sequence[CorpusRecord], parallelism_list: Sequence[int],
                     include_full_page: bool = True) -> pd.DataFrame:
    """
    Measure pages/s of block-parallel recognition against sequential
    full-page recognition on the mock recognizer.

    Args:
        config: Detector and simulated latency settings
        records: Annotated pages to recognize
        parallelism_list: Scheduler widths to measure in SRR mode
        include_full_page: Add the sequential full-page row

    Returns:
        DataFrame with columns mode, parallelism, pages_per_s, requests, seconds
    """
    if not records:
        raise InvalidInputError("throughput benchmark needs at least one page")
    if any(p < 1 for p in parallelism_list):
        raise InvalidInputError(f"parallelism values must be >= 1, got {list(parallelism_list)}")

    recognizer = _mock_recognizer(config)
    rows: List[dict] = []
    for parallelism in parallelism_list:
        row = _srr_row(config, records, parallelism, recognizer)
        logger.info(f"SRR at parallelism {parallelism}: {row['pages_per_s']:.2f} pages/s")
        rows.append(row)

    if include_full_page:
        row = _full_page_row(config, records, recognizer)
        logger.info(f"Full-page sequential: {row['pages_per_s']:.2f} pages/s")
        rows.append(row)

    return pd.DataFrame(rows, columns=BENCH_COLUMNS)


def speedup(frame: pd.DataFrame, parallelism: Optional[int] = None) -> float:
    """pages/s of SRR mode (at `parallelism`, else the widest measured) over full-page mode"""
    srr = frame[frame["mode"] == "srr"]
    full = frame[frame["mode"] == "full_page"]
    if srr.empty or full.empty:
        raise InvalidInputError("speedup needs both an SRR row and a full-page row")
    if parallelism is None:
        parallelism = int(srr["parallelism"].max())
    chosen = srr[srr["parallelism"] == parallelism]
    if chosen.empty:
        raise InvalidInputError(f"no SRR row at parallelism {parallelism}")
    return float(chosen["pages_per_s"].iloc[0] / full["pages_per_s"].iloc[0])
