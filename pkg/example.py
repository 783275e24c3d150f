#!/usr/bin/env python3

"""
Example script to demonstrate the srrdoc parsing pipeline.
This script synthesizes a small corpus, trains a tiny reading-order model
and parses a few pages with it.
"""

import json
import logging
import sys

from srrdoc.corpus_generator import synthesize_corpus
from srrdoc.models.config import PipelineConfig
from srrdoc.models.corpus import LayoutTemplate
from srrdoc.models.relation import RelationModelConfig
from srrdoc.pipeline import ParsePipeline
from srrdoc.relation_trainer import TrainingConfig, evaluate_model, examples_from_records, split_records, train_relation_model

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=[
        logging.StreamHandler(sys.stdout)
    ]
)
logger = logging.getLogger(__name__)


def main():
    """Run a small end-to-end example"""
    logger.info("Running srrdoc example")

    records = synthesize_corpus(list(LayoutTemplate), 120, seed=0)
    train, held_out = split_records(records, 0.1, seed=0)
    logger.info(f"Synthesized {len(records)} pages ({len(held_out)} held out)")

    model_config = RelationModelConfig(coord_embed_dim=16, layers=2, heads=2, max_elements=64, dropout=0.0)
    training = TrainingConfig(learning_rate=3e-3, epochs=10, batch_size=16, seed=0)
    result = train_relation_model(examples_from_records(train, model_config.max_elements), model_config, training)
    logger.info(f"Training loss went from {result.loss_curve[0]:.3f} to {result.loss_curve[-1]:.3f}")

    metrics = evaluate_model(result.model, examples_from_records(held_out, model_config.max_elements))
    logger.info(f"Held-out reading order: {json.dumps(metrics, sort_keys=True)}")

    config = PipelineConfig(order="model", output_dir="output/example", parallelism=4, perturb=True)
    pipeline = ParsePipeline(config, model=result.model)
    parsed = pipeline.run(held_out)

    print("\nParsed pages written to output/example")
    print(json.dumps(parsed.report.metrics(), indent=2, sort_keys=True))

    if parsed.documents and sys.stdout.isatty():
        response = input("Would you like to see the first parsed page? (y/n): ")
        if response.lower() == 'y':
            print("\n" + "-" * 80)
            print(parsed.documents[0].markdown)
            print("-" * 80)


if __name__ == "__main__":
    main()
