"""
Flags and run preparation shared by every subcommand.
"""

import argparse
import json
import os
from dataclasses import dataclass
from typing import Any, Dict

import structlog
import torch

from app.core.config import PipelineConfig, load_config, parse_assignments, settings
from app.core.errors import GuidedError
from app.utils.file_utils import atomic_write_text, ensure_dir

logger = structlog.get_logger(__name__)


@dataclass
class RunContext:
    command: str
    config: PipelineConfig
    output_dir: str

    def path(self, *parts: str) -> str:
        return os.path.join(self.output_dir, *parts)


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML or JSON config file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="dotted config override, e.g. --set model.k=8 (repeatable)",
    )
    parser.add_argument("--seed", type=int, help="global seed (overrides config)")
    parser.add_argument(
        "--output", help=f"output directory (default: config output_dir or ${{GUIDED_OUTPUT_DIR}})"
    )
    parser.add_argument("--workers", type=int, help="parallel per-image workers")


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    """Flags > --set > config file > environment > defaults."""
    overrides: Dict[str, Any] = parse_assignments(getattr(args, "overrides", []) or [])
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "output", None):
        overrides["output_dir"] = args.output
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    return load_config(getattr(args, "config", None), overrides)


def prepare_run(args: argparse.Namespace) -> RunContext:
    """Resolve config, pin numerics, create the output dir and echo the config."""
    config = resolve_config(args)
    torch.manual_seed(config.seed)
    torch.set_num_threads(settings.TORCH_THREADS)
    output_dir = ensure_dir(config.output_dir)
    echo = {"command": args.command, "seed": config.seed, "config": config.model_dump(mode="json")}
    atomic_write_text(
        os.path.join(output_dir, "resolved_config.json"),
        json.dumps(echo, indent=2, sort_keys=True) + "\n",
    )
    logger.info("Run prepared", command=args.command, seed=config.seed, output_dir=output_dir)
    return RunContext(command=args.command, config=config, output_dir=output_dir)


def fail(command: str, error: Exception) -> int:
    """Log a failed subcommand and return its exit status."""
    if isinstance(error, GuidedError):
        logger.error(f"{command} failed", error=str(error), exit_code=error.exit_code)
        return error.exit_code
    logger.error(f"{command} failed unexpectedly", error=str(error), exc_info=error)
    return 1
