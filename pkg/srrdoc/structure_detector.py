"""
Structure detection: the detector contract, an oracle and an XY-cut reference
detector, a sidecar-file detector with DETR-style query selection, and
detection noise for simulating fine-grained text detection.
"""

import json
import logging
import os
from abc import ABC, abstractmethod
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from srrdoc.corpus_hygiene import remove_nested_boxes
from srrdoc.errors import ConfigError, DetectionError, InvalidInputError, MissingGroundTruthError
from srrdoc.models.detection import Detection, NoiseConfig
from srrdoc.models.page import BBox, Category, Page
from srrdoc.utils.geometry import GRID_SIZE
from srrdoc.utils.text_utils import stable_seed

logger = logging.getLogger(__name__)

DEFAULT_GAP_THRESHOLD = 12  # grid units on the 0..1000 page scale
DEFAULT_TOP_K = 100
DEFAULT_SCORE_THRESHOLD = 0.3
FULL_PAGE_BLOCK_ID = "page"


class Detector(ABC):
    """Layout detector contract"""

    name = "detector"

    # Implementations that cannot serve concurrent detect() calls set this
    is_serial = False

    @abstractmethod
    def detect(self, page: Page) -> List[Detection]:
        """
        Detect layout blocks on a page.

        Raises:
            DetectionError: carrying the page id when the detector fails
        """


class OracleDetector(Detector):
    """Returns the ground-truth blocks with score 1.0"""

    name = "oracle"

    def detect(self, page: Page) -> List[Detection]:
        if not page.has_ground_truth:
            raise MissingGroundTruthError(f"oracle detection needs layout annotation (page {page.id})")
        return [
            Detection(bbox=b.bbox, category=b.category, score=1.0, block_id=b.id)
            for b in page.blocks
        ]


class XYCutDetector(Detector):
    """
    Recursive XY-cut over occupancy evidence.

    Evidence is the page's line boxes plus blocks no line falls into (figures,
    tables), or the block boxes alone when the page has no lines. Cuts
    alternate between the y axis and the x axis, starting with y; a whitespace
    run at least `gap_threshold` wide splits a group. Groups that cannot be
    split on either axis become Text detections with their tight bound.
    """

    name = "xycut"

    def __init__(self, gap_threshold: Optional[float] = None):
        """
        Args:
            gap_threshold: Minimum gap in pixels. Defaults to 12 units of the
                0..1000 page grid, scaled per axis to the page size.
        """
        if gap_threshold is not None and gap_threshold <= 0:
            raise InvalidInputError(f"gap_threshold must be positive, got {gap_threshold}")
        self.gap_threshold = gap_threshold

    def _thresholds(self, page: Page) -> Tuple[float, float]:
        if self.gap_threshold is not None:
            return self.gap_threshold, self.gap_threshold
        return (
            DEFAULT_GAP_THRESHOLD * page.width / GRID_SIZE,
            DEFAULT_GAP_THRESHOLD * page.height / GRID_SIZE,
        )

    @staticmethod
    def _evidence(page: Page) -> List[BBox]:
        boxes = [line.bbox for line in page.lines]
        for block in page.blocks or ():
            if not any(block.bbox.contains_point(*line.bbox.center) for line in page.lines):
                boxes.append(block.bbox)
        return boxes

    @staticmethod
    def _split(boxes: List[BBox], axis: int, threshold: float) -> List[List[BBox]]:
        """Partition boxes at projection gaps of at least `threshold` along `axis` (0=x, 1=y)"""
        def span(b: BBox) -> Tuple[float, float]:
            return (b.x1, b.x2) if axis == 0 else (b.y1, b.y2)

        ordered = sorted(boxes, key=lambda b: span(b))
        groups = [[ordered[0]]]
        end = span(ordered[0])[1]
        for box in ordered[1:]:
            start, stop = span(box)
            if start - end >= threshold:
                groups.append([box])
            else:
                groups[-1].append(box)
            end = max(end, stop)
        return groups

    def _cut(self, boxes: List[BBox], axis: int, thresholds: Tuple[float, float],
             other_failed: bool = False) -> List[BBox]:
        groups = self._split(boxes, axis, thresholds[axis])
        if len(groups) == 1:
            if other_failed:
                return [BBox.union_of(boxes)]
            return self._cut(boxes, 1 - axis, thresholds, other_failed=True)

        leaves = []
        for group in groups:
            leaves.extend(self._cut(group, 1 - axis, thresholds))
        return leaves

    def detect(self, page: Page) -> List[Detection]:
        boxes = self._evidence(page)
        if not boxes:
            return []
        try:
            leaves = self._cut(boxes, axis=1, thresholds=self._thresholds(page))
        except RecursionError as e:
            raise DetectionError(page.id, "XY-cut recursion too deep") from e

        leaves.sort(key=lambda b: (b.y1, b.x1))
        logger.debug(f"XY-cut found {len(leaves)} regions on page {page.id}")
        return [
            Detection(bbox=leaf, category=Category.TEXT, score=1.0, block_id=f"xy{k}")
            for k, leaf in enumerate(leaves)
        ]


def select_topk_queries(scores: Sequence[float], k: int) -> List[int]:
    """
    Indices of the k highest scores, descending by score, ties by lower index.

    Args:
        scores: Query confidences
        k: Number of queries to keep (k larger than the number of scores keeps all)

    Returns:
        Selected indices
    """
    if k < 0:
        raise InvalidInputError(f"K must be >= 0, got {k}")
    if k == 0 or len(scores) == 0:
        return []
    values = np.asarray(scores, dtype=float)
    # stable sort on the negated scores keeps equal scores in index order
    return [int(i) for i in np.argsort(-values, kind="stable")[:k]]


class ExternalDetector(Detector):
    """
    Reads detections produced by an external (neural) detector.

    The sidecar file is JSONL with one object per page:
    {"page_id": ..., "detections": [{"bbox": [...], "category": ..., "score": ...}, ...]}.
    Per page, the top-K queries by score are kept, then those below the score
    threshold are dropped.
    """

    name = "external"

    def __init__(self, detections_path: str, top_k: int = DEFAULT_TOP_K,
                 score_threshold: float = DEFAULT_SCORE_THRESHOLD):
        if not os.path.exists(detections_path):
            raise ConfigError(f"detections file not found: {detections_path}")
        self.detections_path = detections_path
        self.top_k = top_k
        self.score_threshold = score_threshold
        self.pages: Dict[str, List[dict]] = {}
        self._load()

    def _load(self):
        with open(self.detections_path, "r", encoding="utf-8") as f:
            for line_number, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    data = json.loads(line)
                    self.pages[str(data["page_id"])] = list(data.get("detections", []))
                except (json.JSONDecodeError, KeyError, TypeError) as e:
                    raise ConfigError(f"{self.detections_path} line {line_number}: {str(e)}") from e
        logger.info(f"Loaded external detections for {len(self.pages)} pages")

    def detect(self, page: Page) -> List[Detection]:
        if page.id not in self.pages:
            raise DetectionError(page.id, "no external detections for this page")
        try:
            raw = [Detection.from_dict(d) for d in self.pages[page.id]]
        except (KeyError, TypeError, ValueError) as e:
            raise DetectionError(page.id, f"malformed detection: {str(e)}") from e

        kept = [raw[i] for i in select_topk_queries([d.score for d in raw], self.top_k)]
        kept = [d for d in kept if d.score >= self.score_threshold]

        detections = []
        for k, det in enumerate(kept):
            if not page.contains(det.bbox):
                raise DetectionError(page.id, f"detection {det.bbox.to_list()} leaves the page")
            detections.append(
                Detection(bbox=det.bbox, category=det.category, score=det.score,
                          block_id=det.block_id or f"d{k}")
            )
        return detections


def build_detector(name: str, detections_path: Optional[str] = None, gap_threshold: Optional[float] = None,
                   top_k: int = DEFAULT_TOP_K, score_threshold: float = DEFAULT_SCORE_THRESHOLD) -> Detector:
    """Construct a detector by name ('oracle', 'xycut' or 'external')"""
    if name == "oracle":
        return OracleDetector()
    if name == "xycut":
        return XYCutDetector(gap_threshold)
    if name == "external":
        if not detections_path:
            raise ConfigError("the external detector needs a detections file")
        return ExternalDetector(detections_path, top_k=top_k, score_threshold=score_threshold)
    raise ConfigError(f"unknown detector: {name}")


def full_page_detection(page: Page) -> Detection:
    """The whole page as a single Text block"""
    return Detection(bbox=page.bbox, category=Category.TEXT, score=1.0, block_id=FULL_PAGE_BLOCK_ID)


def detect_with_fallback(detector: Detector, page: Page) -> Tuple[List[Detection], bool]:
    """
    Run the detector and clean nested detections. When detection fails the
    whole page is recognized as one block.

    Returns:
        (detections, fallback)
    """
    try:
        detections = detector.detect(page)
    except DetectionError as e:
        logger.warning(f"{str(e)}; recognizing the full page as one block")
        return [full_page_detection(page)], True
    return remove_nested_boxes(detections), False


def _jitter_box(box: BBox, jitter: int, rng: np.random.Generator, page: Page) -> BBox:
    if jitter == 0:
        return box
    dx1, dy1, dx2, dy2 = (int(v) for v in rng.integers(-jitter, jitter + 1, size=4))
    x1 = min(max(box.x1 + dx1, 0.0), page.width)
    y1 = min(max(box.y1 + dy1, 0.0), page.height)
    x2 = min(max(box.x2 + dx2, 0.0), page.width)
    y2 = min(max(box.y2 + dy2, 0.0), page.height)
    if x2 <= x1:
        x1, x2 = (x1, x1 + 1) if x1 + 1 <= page.width else (page.width - 1, page.width)
    if y2 <= y1:
        y1, y2 = (y1, y1 + 1) if y1 + 1 <= page.height else (page.height - 1, page.height)
    return BBox(x1, y1, x2, y2)


def perturb_detections(detections: Sequence[Detection], config: NoiseConfig, page: Page) -> List[Detection]:
    """
    Simulate a fine-grained text detection stage.

    Each Text detection is, with probability `split_probability`, replaced by
    the line boxes whose centers fall inside it (in line order), each boundary
    jittered by a uniform integer offset in +-boundary_jitter pixels and
    clamped to the page. Other detections pass through unchanged.

    Deterministic for (page id, seed).
    """
    if config.is_identity:
        return list(detections)

    rng = np.random.default_rng(stable_seed(page.id, config.seed))
    out = []
    for det in detections:
        if det.category != Category.TEXT or rng.random() >= config.split_probability:
            out.append(det)
            continue
        lines = sorted(
            (line for line in page.lines if det.bbox.contains_point(*line.bbox.center)),
            key=lambda line: line.order,
        )
        if not lines:
            out.append(det)
            continue
        for k, line in enumerate(lines):
            out.append(
                Detection(
                    bbox=_jitter_box(line.bbox, config.boundary_jitter, rng, page),
                    category=Category.TEXT,
                    score=det.score,
                    block_id=f"{det.block_id}.l{k}",
                    perturbed=True,
                )
            )
    logger.debug(f"Perturbed {len(detections)} detections into {len(out)} on page {page.id}")
    return out
