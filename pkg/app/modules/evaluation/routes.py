"""
Evaluation routes.
Registers the synth, eval and ablate subcommands.
"""

from app.cli.router import CommandRouter, arg

from .ablation import DEFAULT_SUITE
from .controller import evaluation_controller

router = CommandRouter()

router.add_command(
    "synth",
    evaluation_controller.synth,
    summary="Generate the synthetic benchmark",
    description="Write a seeded synthetic benchmark (manifest.json + images.jsonl) with "
    "difficulty and attribute-type tracks.",
    arguments=[
        arg("--data", help="benchmark directory to write (default: <output>/benchmark)"),
    ],
)

router.add_command(
    "eval",
    evaluation_controller.eval,
    summary="Compute per-track AP for prediction records",
    description="Evaluate prediction records against a benchmark and write "
    "results.json and results.txt.",
    arguments=[
        arg("--data", required=True, help="benchmark directory"),
        arg("--predictions", help="prediction records (JSONL) written by detect"),
        arg("--oracle", action="store_true", help="score the planted-direction oracle instead"),
    ],
)

router.add_command(
    "ablate",
    evaluation_controller.ablate,
    summary="Run the ablation suite",
    description="Train and evaluate architecture variants, re-score inference-time "
    "variants, and write ablation.json and ablation.txt.",
    arguments=[
        arg("--data", help="benchmark directory (default: generate one)"),
        arg(
            "--variants",
            help="comma-separated variants (default: " + ",".join(DEFAULT_SUITE) + ")",
        ),
    ],
)
