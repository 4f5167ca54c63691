"""
Detection routes.
Registers the detect subcommand.
"""

from app.cli.router import CommandRouter, arg

from .controller import detection_controller

router = CommandRouter()

router.add_command(
    "detect",
    detection_controller.detect,
    summary="Detect and score benchmark images",
    description="Run the detector over a benchmark split and write predictions.jsonl "
    "(boxes with s_coarse, s_fine and s_final per caption).",
    arguments=[
        arg("--data", required=True, help="benchmark directory written by synth"),
        arg("--checkpoint", help="checkpoint written by train"),
        arg("--split", choices=["train", "test"], default="test", help="benchmark split"),
    ],
)
