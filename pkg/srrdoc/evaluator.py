import json
import logging
import os
from typing import Dict, List, Optional, Sequence

import numpy as np
from jinja2 import Environment, FileSystemLoader

from srrdoc.metrics import normalized_edit_distance, order_edit, teds
from srrdoc.models.corpus import CorpusRecord
from srrdoc.models.document import ParsedDocument
from srrdoc.models.page import Block, Category
from srrdoc.models.report import METRIC_COLUMNS, MetricReport, PageScores
from srrdoc.utils.text_utils import normalize_text

logger = logging.getLogger(__name__)

TEMPLATES_DIR = os.path.join(os.path.dirname(__file__), "templates")
EDIT_METRICS = ("text_edit", "formula_edit", "table_edit", "order_edit")


def match_blocks(predicted: Sequence[Block], gt_blocks: Sequence[Block]) -> List[Optional[int]]:
    """
    Assign each predicted block to the GT block containing its center,
    picking the largest IoU when several do.

    Returns:
        GT index per predicted block, None when unmatched
    """
    matches = []
    for pred in predicted:
        cx, cy = pred.bbox.center
        best, best_iou = None, -1.0
        for index, gt in enumerate(gt_blocks):
            if not gt.bbox.contains_point(cx, cy):
                continue
            iou = pred.bbox.iou(gt.bbox)
            if iou > best_iou:
                best, best_iou = index, iou
        matches.append(best)
    return matches


def _mean(values: List[float]) -> Optional[float]:
    return float(np.mean(values)) if values else None


def score_page(parsed: ParsedDocument, gt: CorpusRecord) -> PageScores:
    """
    Score one parsed page against its ground truth.

    Predicted blocks are matched to GT blocks by center containment; a GT
    block's prediction is the content of its matched blocks in predicted
    order. Text-like blocks feed text_edit, formulas formula_edit, tables the
    TEDS scores and table_edit. The order score compares GT ids sorted by
    their first predicted rank (unmatched ids last) with the GT order.
    overall_edit is the mean of the available edit scores.
    """
    if parsed.page_id != gt.page_id:
        logger.warning(f"Scoring {parsed.page_id} against ground truth {gt.page_id}")

    gt_blocks = list(gt.blocks)
    matches = match_blocks(parsed.blocks, gt_blocks)

    pieces: Dict[int, List[str]] = {}
    first_rank: Dict[int, int] = {}
    for rank, (gt_index, content) in enumerate(zip(matches, parsed.contents)):
        if gt_index is None:
            continue
        pieces.setdefault(gt_index, []).append(content or "")
        first_rank.setdefault(gt_index, rank)

    text, formula, table_teds, table_teds_s, table_edit = [], [], [], [], []
    for index, block in enumerate(gt_blocks):
        if block.category == Category.FIGURE:
            continue
        truth = block.content or ""
        separator = "" if block.category == Category.TABLE else " "
        predicted = separator.join(pieces.get(index, []))

        if block.category == Category.TABLE:
            table_teds.append(teds(predicted, truth))
            table_teds_s.append(teds(predicted, truth, structure_only=True))
            table_edit.append(normalized_edit_distance(normalize_text(predicted), normalize_text(truth)))
        elif block.category == Category.FORMULA:
            formula.append(normalized_edit_distance(normalize_text(predicted), normalize_text(truth)))
        else:
            text.append(normalized_edit_distance(normalize_text(predicted), normalize_text(truth)))

    gt_ids = gt.id_sequence()
    position = {block.id: rank for rank, block in enumerate(gt.blocks_in_order())}
    matched = sorted(first_rank, key=lambda i: first_rank[i])
    unmatched = sorted((i for i in range(len(gt_blocks)) if i not in first_rank),
                       key=lambda i: position[gt_blocks[i].id])
    predicted_ids = [gt_blocks[i].id for i in matched + unmatched]

    scores = PageScores(
        page_id=gt.page_id,
        template=gt.template.value if gt.template else None,
        text_edit=_mean(text),
        formula_edit=_mean(formula),
        table_teds=_mean(table_teds),
        table_teds_s=_mean(table_teds_s),
        table_edit=_mean(table_edit),
        order_edit=order_edit(predicted_ids, gt_ids) if gt_ids else None,
    )
    scores.overall_edit = _mean([getattr(scores, m) for m in EDIT_METRICS if getattr(scores, m) is not None])
    return scores


def end_to_end_report(parsed: ParsedDocument, gt: CorpusRecord) -> MetricReport:
    """Single-page MetricReport"""
    return aggregate_reports([score_page(parsed, gt)])


def _average(pages: Sequence[PageScores]) -> Dict[str, Optional[float]]:
    averaged = {}
    for name in METRIC_COLUMNS:
        if name == "overall_edit":
            continue
        averaged[name] = _mean([getattr(p, name) for p in pages if getattr(p, name) is not None])
    # mean of the task means
    averaged["overall_edit"] = _mean([averaged[m] for m in EDIT_METRICS if averaged[m] is not None])
    return averaged


def aggregate_reports(pages: Sequence[PageScores]) -> MetricReport:
    """
    Average page scores, each metric over the pages defining it, with a
    per-template breakdown. overall_edit is the mean of the averaged edit
    metrics.
    """
    by_template: Dict[str, Dict[str, Optional[float]]] = {}
    templates = sorted({p.template for p in pages if p.template})
    for template in templates:
        members = [p for p in pages if p.template == template]
        by_template[template] = {"pages": len(members), **_average(members)}

    return MetricReport(**_average(pages), pages=list(pages), by_template=by_template)


def evaluate_documents(documents: Sequence[ParsedDocument], records: Sequence[CorpusRecord]) -> MetricReport:
    """Score parsed documents against the ground-truth records with the same page ids"""
    by_id = {record.page_id: record for record in records}
    pages = []
    for document in documents:
        record = by_id.get(document.page_id)
        if record is None:
            logger.warning(f"No ground truth for {document.page_id}, skipping")
            continue
        try:
            pages.append(score_page(document, record))
        except Exception as e:
            logger.error(f"Error scoring {document.page_id}: {str(e)}")
    logger.info(f"Evaluated {len(pages)} of {len(documents)} pages")
    return aggregate_reports(pages)


def _score_filter(value) -> str:
    return "-" if value is None else f"{value:.4f}"


def render_report_markdown(report: MetricReport, worst: int = 5) -> str:
    env = Environment(loader=FileSystemLoader(TEMPLATES_DIR), keep_trailing_newline=True)
    env.filters["score"] = _score_filter
    template = env.get_template("report_template.md")
    scored = [p for p in report.pages if p.overall_edit is not None]
    worst_pages = sorted(scored, key=lambda p: (-p.overall_edit, p.page_id))[:worst]
    return template.render(
        page_count=len(report.pages),
        overall=report.metrics(),
        by_template=report.by_template,
        worst_pages=[p for p in worst_pages if p.overall_edit > 0],
    )


def write_report(report: MetricReport, path: str) -> Dict[str, str]:
    """
    Write the report as JSON at `path`, the score table as CSV next to it and
    a markdown summary.

    Returns:
        Mapping of artifact kind to path
    """
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    stem, _ = os.path.splitext(path)
    paths = {"json": path, "csv": f"{stem}.csv", "markdown": f"{stem}.md"}

    with open(paths["json"], "w", encoding="utf-8", newline="\n") as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
    report.to_frame().to_csv(paths["csv"], index=False, float_format="%.6f")
    with open(paths["markdown"], "w", encoding="utf-8", newline="\n") as f:
        f.write(render_report_markdown(report))

    logger.info(f"Wrote report to {path}")
    return paths
