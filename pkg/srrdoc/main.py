#!/usr/bin/env python3

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from srrdoc.benchmark import speedup, throughput_bench
from srrdoc.corpus_generator import synthesize_corpus
from srrdoc.corpus_hygiene import select_diverse
from srrdoc.corpus_store import load_inputs, load_jsonl, resolve_corpus_path, save_jsonl
from srrdoc.cpd import compare_strategies, degree_sweep, finetune, prune_layers, skip_layer_sweep
from srrdoc.document_assembler import DocumentAssembler
from srrdoc.errors import ConfigError, SRRDocError
from srrdoc.evaluator import evaluate_documents, write_report
from srrdoc.models.config import load_config
from srrdoc.models.corpus import CorpusRecord, LayoutTemplate
from srrdoc.models.pruning import PruneSpec, PruneStrategy
from srrdoc.models.relation import RelationModelConfig
from srrdoc.pipeline import run_parse
from srrdoc.relation_model import load_model, predict_order, save_model
from srrdoc.relation_trainer import (
    TrainingConfig,
    evaluate_model,
    examples_from_records,
    split_records,
    train_relation_model,
)

logger = logging.getLogger("srrdoc")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def configure_logging(verbose: bool = False, log_file: Optional[str] = None):
    """Log to stderr (stdout carries CSV/JSON output) and optionally to a file"""
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )


def _show_progress() -> bool:
    return sys.stderr.isatty()


def _int_list(value: str) -> List[int]:
    try:
        return [int(v) for v in value.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {value!r}") from e


def _write_table(frame, out: Optional[str]):
    if out:
        directory = os.path.dirname(out)
        if directory:
            os.makedirs(directory, exist_ok=True)
        frame.to_csv(out, index=False, float_format="%.6f")
        logger.info(f"Wrote {out}")
    else:
        frame.to_csv(sys.stdout, index=False, float_format="%.6f")


def _training_config(args) -> TrainingConfig:
    return TrainingConfig(
        learning_rate=args.lr,
        weight_decay=args.weight_decay,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
    )


def cmd_synth(args) -> int:
    templates = LayoutTemplate.parse_list(args.template)
    records = synthesize_corpus(templates, args.count, args.seed, show_progress=_show_progress())
    if args.min_diversity > 0:
        records = select_diverse(records, args.min_diversity)
    path = resolve_corpus_path(args.out)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    count = save_jsonl(records, path)
    logger.info(f"Wrote {count} pages to {path}")
    return EXIT_OK


def cmd_train(args) -> int:
    records = load_jsonl(args.data)
    model_config = RelationModelConfig(
        coord_embed_dim=args.coord_dim,
        layers=args.layers,
        heads=args.heads,
        max_elements=args.max_elements,
        dropout=args.dropout,
        category_aware=not args.no_category,
    )
    train, held_out = split_records(records, args.held_out, args.seed)
    result = train_relation_model(
        examples_from_records(train, model_config.max_elements),
        model_config,
        _training_config(args),
        show_progress=_show_progress(),
    )
    if held_out:
        metrics = evaluate_model(result.model, examples_from_records(held_out, model_config.max_elements))
        result.model.metadata["held_out"] = metrics
        print(json.dumps(metrics, indent=2, sort_keys=True))
    save_model(result.model, args.out)
    return EXIT_OK


def cmd_parse(args) -> int:
    config = load_config(
        args.config,
        detector=args.detector,
        detections_path=args.detections,
        recognizer=args.recognizer,
        char_error_rate=args.char_error_rate,
        order=args.order,
        model_path=args.model,
        perturb=True if args.perturb else None,
        split_probability=args.split_probability,
        boundary_jitter=args.jitter,
        parallelism=args.parallelism,
        seed=args.seed,
        output_dir=args.out,
    )
    config.validate()
    inputs = load_inputs(args.input)
    result = run_parse(config, inputs, show_progress=_show_progress())
    if result.report is not None:
        print(json.dumps(result.report.metrics(), indent=2, sort_keys=True))
    if result.all_failed:
        logger.error("Every page failed")
        return EXIT_FAILURE
    return EXIT_OK


def cmd_order(args) -> int:
    if not os.path.isfile(args.model):
        raise ConfigError(f"model file does not exist: {args.model}")
    model = load_model(args.model)
    for item in load_inputs(args.page):
        page = item.page if isinstance(item, CorpusRecord) else item
        if not page.has_ground_truth:
            logger.warning(f"Page {page.id} has no blocks to order, skipping")
            continue
        ranks = predict_order(page.blocks, model, page.width, page.height)
        ordered = [b.id for _, b in sorted(zip(ranks, page.blocks), key=lambda pair: pair[0])]
        print(json.dumps({"page_id": page.id, "ranks": ranks, "order": ordered}, sort_keys=True))
    return EXIT_OK


def cmd_prune(args) -> int:
    if not os.path.isfile(args.model):
        raise ConfigError(f"model file does not exist: {args.model}")
    model = load_model(args.model)
    training = _training_config(args)
    records = load_jsonl(args.finetune_data) if args.finetune_data else []
    train, held_out = split_records(records, args.held_out, args.seed)
    train_set = examples_from_records(train, model.config.max_elements)
    eval_set = examples_from_records(held_out, model.config.max_elements)

    if args.compare or args.degrees:
        if not train_set or not eval_set:
            raise ConfigError("--compare and --degrees need --finetune-data with a held-out split")
        if args.compare:
            table = compare_strategies(model, train_set, eval_set, args.keep, training, args.fraction)
        else:
            table = degree_sweep(model, train_set, eval_set, args.degrees, training, args.fraction)
        _write_table(table, args.table)
        return EXIT_OK

    if not args.out:
        raise ConfigError("prune needs --out for the pruned model")
    strategy = PruneStrategy.parse(args.strategy)
    if strategy == PruneStrategy.IMPORTANCE and not train_set:
        raise ConfigError("importance pruning needs --finetune-data for calibration")
    spec = PruneSpec(strategy=strategy, keep=args.keep, calibration=train_set[:args.calibration_size] or None)
    pruned = prune_layers(model, spec)
    if train_set and args.fraction > 0:
        pruned = finetune(pruned, train_set, args.fraction, training).model
    if eval_set:
        print(json.dumps(evaluate_model(pruned, eval_set), indent=2, sort_keys=True))
    save_model(pruned, args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    if not os.path.isfile(args.model):
        raise ConfigError(f"model file does not exist: {args.model}")
    model = load_model(args.model)
    eval_set = examples_from_records(load_jsonl(args.eval), model.config.max_elements)
    report = skip_layer_sweep(model, eval_set, parallelism=args.parallelism)
    _write_table(report.to_frame(), args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    records = load_jsonl(args.gt)
    assembler = DocumentAssembler(args.pred, write_html=False)
    documents = []
    for record in records:
        try:
            documents.append(assembler.load(record.page_id))
        except FileNotFoundError:
            logger.warning(f"No prediction for {record.page_id}")
    report = evaluate_documents(documents, records)
    write_report(report, args.report)
    print(json.dumps(report.metrics(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_bench(args) -> int:
    config = load_config(
        args.config,
        detector=args.detector,
        latency_per_request=args.latency_per_request,
        latency_per_token=args.latency_per_token,
    ).with_overrides(recognizer="mock", order="gt")
    config.validate()
    records = load_jsonl(args.data)
    if args.pages:
        records = records[:args.pages]
    frame = throughput_bench(config, records, args.parallelism)
    _write_table(frame, args.out)
    logger.info(f"Speedup over full-page recognition: {speedup(frame):.2f}x")
    return EXIT_OK


def _add_training_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--lr", type=float, default=1e-3, help="Learning rate")
    parser.add_argument("--weight-decay", type=float, default=0.01)
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--held-out", type=float, default=0.1, help="Share of pages held out for evaluation")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="srrdoc",
        description="Structure-recognition-relation document parsing pipeline",
    )
    parser.add_argument("--verbose", action="store_true", help="Log at DEBUG level")
    parser.add_argument("--log-file", help="Also write the log to this file")
    commands = parser.add_subparsers(dest="command", required=True)

    synth = commands.add_parser("synth", help="Generate a synthetic ground-truth corpus")
    synth.add_argument("--template", default="all", help="Comma-separated layout templates, or 'all'")
    synth.add_argument("--count", type=int, default=100)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--min-diversity", type=float, default=0.0, help="Drop pages with lower element diversity")
    synth.add_argument("--out", required=True, help="Output directory or .jsonl file")
    synth.set_defaults(handler=cmd_synth)

    train = commands.add_parser("train", help="Train the reading-order model")
    train.add_argument("--data", required=True, help="Corpus directory or .jsonl file")
    train.add_argument("--out", required=True, help="Model file to write")
    train.add_argument("--coord-dim", type=int, default=32)
    train.add_argument("--layers", type=int, default=4)
    train.add_argument("--heads", type=int, default=4)
    train.add_argument("--max-elements", type=int, default=64)
    train.add_argument("--dropout", type=float, default=0.1)
    train.add_argument("--no-category", action="store_true", help="Disable category-aware embeddings")
    _add_training_flags(train)
    train.set_defaults(handler=cmd_train)

    parse = commands.add_parser("parse", help="Parse pages into ordered markdown")
    parse.add_argument("--input", required=True, help="Corpus directory or .jsonl file of pages")
    parse.add_argument("--out", help="Output directory")
    parse.add_argument("--config", help="YAML pipeline config")
    parse.add_argument("--detector", choices=["oracle", "xycut", "external"])
    parse.add_argument("--detections", help="JSONL detections for the external detector")
    parse.add_argument("--recognizer", choices=["mock", "remote"])
    parse.add_argument("--char-error-rate", type=float)
    parse.add_argument("--order", choices=["model", "gt"])
    parse.add_argument("--model", help="Relation model file for --order model")
    parse.add_argument("--perturb", action="store_true", help="Simulate fine-grained text detection")
    parse.add_argument("--split-probability", type=float)
    parse.add_argument("--jitter", type=int)
    parse.add_argument("--parallelism", type=int)
    parse.add_argument("--seed", type=int)
    parse.set_defaults(handler=cmd_parse)

    order = commands.add_parser("order", help="Predict reading order of annotated pages")
    order.add_argument("--model", required=True)
    order.add_argument("--page", required=True, help="JSONL file of pages")
    order.set_defaults(handler=cmd_order)

    prune = commands.add_parser("prune", help="Remove layers from a trained model")
    prune.add_argument("--model", required=True)
    prune.add_argument("--strategy", default="middle", help="middle, shallow, deep or importance")
    prune.add_argument("--keep", type=int, default=2, help="Layers to keep")
    prune.add_argument("--finetune-data", help="Corpus used for fine-tuning, calibration and evaluation")
    prune.add_argument("--fraction", type=float, default=0.3, help="Fine-tune budget as a share of training steps")
    prune.add_argument("--calibration-size", type=int, default=32)
    tables = prune.add_mutually_exclusive_group()
    tables.add_argument("--compare", action="store_true", help="Compare all strategies plus training from scratch")
    tables.add_argument("--degrees", type=_int_list, help="Comma-separated keep counts to sweep")
    prune.add_argument("--table", help="CSV file for --compare/--degrees (stdout by default)")
    prune.add_argument("--out", help="Pruned model file")
    _add_training_flags(prune)
    prune.set_defaults(handler=cmd_prune)

    sweep = commands.add_parser("sweep", help="Skip each layer in turn and report the accuracy drop")
    sweep.add_argument("--model", required=True)
    sweep.add_argument("--eval", required=True, help="Corpus to evaluate on")
    sweep.add_argument("--parallelism", type=int, default=1)
    sweep.add_argument("--out", help="CSV file (stdout by default)")
    sweep.set_defaults(handler=cmd_sweep)

    evaluate = commands.add_parser("eval", help="Score parsed output against ground truth")
    evaluate.add_argument("--pred", required=True, help="Directory written by parse")
    evaluate.add_argument("--gt", required=True, help="Ground-truth corpus")
    evaluate.add_argument("--report", required=True, help="Report JSON path; CSV and markdown go next to it")
    evaluate.set_defaults(handler=cmd_eval)

    bench = commands.add_parser("bench", help="Measure recognition throughput")
    bench.add_argument("--data", required=True, help="Corpus to recognize")
    bench.add_argument("--config", help="YAML pipeline config")
    bench.add_argument("--detector", choices=["oracle", "xycut", "external"])
    bench.add_argument("--parallelism", type=_int_list, default=[1, 2, 4, 8])
    bench.add_argument("--latency-per-request", type=float, default=0.03)
    bench.add_argument("--latency-per-token", type=float, default=0.001)
    bench.add_argument("--pages", type=int, help="Only use the first N pages")
    bench.add_argument("--out", help="CSV file (stdout by default)")
    bench.set_defaults(handler=cmd_bench)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.log_file)

    try:
        return args.handler(args)
    except ConfigError as e:
        logger.error(f"Configuration error: {str(e)}")
        return EXIT_CONFIG
    except (SRRDocError, OSError) as e:
        logger.error(f"{args.command} failed: {str(e)}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
