"""
The parse pipeline: detect, recognize, order and assemble every page, then
write the per-page artifacts, a manifest and (when ground truth is present)
a metric report.
"""

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

from tqdm import tqdm

from srrdoc import __version__
from srrdoc.block_scheduler import recognize_page_blocks
from srrdoc.document_assembler import DocumentAssembler, assemble_document
from srrdoc.evaluator import evaluate_documents, write_report
from srrdoc.models.config import PipelineConfig
from srrdoc.models.corpus import CorpusRecord
from srrdoc.models.document import ParsedDocument
from srrdoc.models.page import Page
from srrdoc.models.report import MetricReport
from srrdoc.order_labeler import autolabel_block_order
from srrdoc.recognizer import DEFAULT_PROMPTS_PATH, Recognizer, build_recognizer
from srrdoc.relation_model import RelationModel, load_model, predict_order
from srrdoc.structure_detector import Detector, build_detector, detect_with_fallback, perturb_detections

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"
REPORT_FILE = "report.json"


@dataclass
class PageOutcome:
    page_id: str
    status: str = "ok"
    fallback: bool = False
    blocks: int = 0
    failed_blocks: int = 0
    error: Optional[str] = None
    files: Dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        data = {
            "page_id": self.page_id,
            "status": self.status,
            "fallback": self.fallback,
            "blocks": self.blocks,
            "failed_blocks": self.failed_blocks,
            "files": dict(self.files),
        }
        if self.error is not None:
            data["error"] = self.error
        return data


@dataclass
class ParseResult:
    documents: List[ParsedDocument]
    outcomes: List[PageOutcome]
    report: Optional[MetricReport] = None
    manifest_path: Optional[str] = None

    @property
    def failed(self) -> int:
        return sum(1 for outcome in self.outcomes if outcome.status != "ok")

    @property
    def all_failed(self) -> bool:
        return bool(self.outcomes) and self.failed == len(self.outcomes)


class ParsePipeline:
    """
    One configured SRR pipeline. Stages run serially per page; only block
    recognition is parallel, bounded by config.parallelism.
    """

    def __init__(self, config: PipelineConfig, detector: Optional[Detector] = None,
                 recognizer: Optional[Recognizer] = None, model: Optional[RelationModel] = None):
        """
        Initialize the pipeline from a validated config.

        Args:
            config: Pipeline settings
            detector: Overrides the configured detector
            recognizer: Overrides the configured recognizer
            model: Overrides the relation model loaded from config.model_path
        """
        self.config = config
        self.detector = detector or build_detector(
            config.detector,
            detections_path=config.detections_path,
            gap_threshold=config.gap_threshold,
            top_k=config.top_k,
            score_threshold=config.score_threshold,
        )
        self.recognizer = recognizer or build_recognizer(
            config.recognizer,
            error_model=config.error_model(),
            latency_per_request=config.latency_per_request,
            latency_per_token=config.latency_per_token,
            api_base=config.api_base,
            api_key=config.api_key,
            model=config.remote_model,
            request_timeout=config.request_timeout,
        )
        self.model = model
        if self.model is None and config.order == "model":
            self.model = load_model(config.model_path)
        if self.model is not None:
            # pages share the model across workers
            self.model.eval()
        self.noise = config.noise_config()
        self.prompts_path = config.prompts_path or DEFAULT_PROMPTS_PATH

    def parse_page(self, page: Page, links: Optional[Dict[str, str]] = None) -> ParsedDocument:
        return self._parse(page, links)[0]

    def _parse(self, page: Page, links: Optional[Dict[str, str]]) -> Tuple[ParsedDocument, int]:
        """
        Run every stage on one page.

        Args:
            page: Page to parse
            links: Ground-truth caption links used by the 'gt' order mode

        Returns:
            The assembled document and the number of failed blocks
        """
        detections, fallback = detect_with_fallback(self.detector, page)
        if not self.noise.is_identity:
            detections = perturb_detections(detections, self.noise, page)

        results = recognize_page_blocks(
            page,
            detections,
            self.recognizer,
            parallelism=self.config.parallelism,
            max_attempts=self.config.max_attempts,
            backoff_base=self.config.backoff_base,
            prompts_path=self.prompts_path,
        )
        blocks = [det.to_block(result.content) for det, result in zip(detections, results)]
        contents = [result.content for result in results]

        if self.config.order == "model":
            order = predict_order(blocks, self.model, page.width, page.height)
        else:
            order = autolabel_block_order(blocks, page.lines, links)

        present = {block.id for block in blocks}
        kept_links = {c: t for c, t in (links or {}).items() if c in present and t in present}
        document = assemble_document(blocks, contents, order, kept_links, page_id=page.id, fallback=fallback)
        failed = sum(1 for result in results if result.failed)
        if failed:
            logger.warning(f"Page {page.id}: {failed} of {len(results)} blocks came back empty")
        return document, failed

    def run(self, inputs: Sequence[Union[CorpusRecord, Page]], show_progress: bool = False) -> ParseResult:
        """
        Parse every page and write artifacts under config.output_dir.

        A failing page is logged and recorded in the manifest; the batch
        continues. A metric report is written when any input carries
        ground truth.
        """
        assembler = DocumentAssembler(self.config.output_dir)
        documents, outcomes, records = [], [], []

        for item in tqdm(inputs, desc="Parsing", disable=not show_progress):
            record = item if isinstance(item, CorpusRecord) else None
            page = record.page if record is not None else item
            if record is not None:
                records.append(record)

            outcome = PageOutcome(page_id=page.id)
            try:
                document, failed = self._parse(page, record.links if record is not None else None)
                outcome.fallback = document.fallback
                outcome.blocks = len(document.items)
                outcome.failed_blocks = failed
                outcome.files = assembler.save(document)
                documents.append(document)
            except Exception as e:
                logger.error(f"Error parsing page {page.id}: {str(e)}")
                outcome.status = "failed"
                outcome.error = str(e)
            outcomes.append(outcome)

        report = None
        if records:
            report = evaluate_documents(documents, records)
            write_report(report, os.path.join(self.config.output_dir, REPORT_FILE))

        manifest_path = write_manifest(self.config, outcomes, self.model)
        logger.info(f"Parsed {len(documents)} of {len(outcomes)} pages into {self.config.output_dir}")
        return ParseResult(documents=documents, outcomes=outcomes, report=report, manifest_path=manifest_path)


def build_manifest(config: PipelineConfig, outcomes: Sequence[PageOutcome],
                   model: Optional[RelationModel] = None) -> dict:
    """Run description without timestamps: versions, seed, config hash and per-page status"""
    settings = config.to_dict()
    settings.pop("output_dir")
    manifest = {
        "version": __version__,
        "seed": config.seed,
        "config_hash": config.config_hash(),
        "config": settings,
        "pages": [outcome.to_dict() for outcome in outcomes],
        "failed_pages": sum(1 for outcome in outcomes if outcome.status != "ok"),
    }
    if model is not None:
        manifest["model"] = {
            "layers": model.config.layers,
            "seed": model.metadata.get("seed"),
            "kept_layers": model.metadata.get("kept_layers"),
        }
    return manifest


def write_manifest(config: PipelineConfig, outcomes: Sequence[PageOutcome],
                   model: Optional[RelationModel] = None) -> str:
    os.makedirs(config.output_dir, exist_ok=True)
    path = os.path.join(config.output_dir, MANIFEST_FILE)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(build_manifest(config, outcomes, model), f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def run_parse(config: PipelineConfig, inputs: Sequence[Union[CorpusRecord, Page]],
              show_progress: bool = False) -> ParseResult:
    """Validate the config, then parse the inputs"""
    config.validate()
    return ParsePipeline(config).run(inputs, show_progress)
