"""
Training routes.
Registers the train subcommand.
"""

from app.cli.router import CommandRouter, arg

from .controller import training_controller

router = CommandRouter()

router.add_command(
    "train",
    training_controller.train,
    summary="Train the detector and projection head",
    description="Stage 1 pretrains the detector on base classes with subject labels; "
    "stage 2 adds the fine-grained loss and unfreezes the projection head. Writes "
    "stage<N>.ckpt, stage<N>_log.jsonl and train_report.json.",
    arguments=[
        arg("--data", required=True, help="benchmark directory written by synth"),
        arg("--stage", choices=["1", "2", "both"], default="both", help="stages to run"),
        arg("--init", help="checkpoint to start from (e.g. stage1.ckpt for --stage 2)"),
        arg("--plot", action="store_true", help="also write loss.png"),
    ],
)
