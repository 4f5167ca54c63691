"""
Vocabulary routes.
Registers the parse subcommand.
"""

from app.cli.router import CommandRouter, arg

from .controller import vocabulary_controller

router = CommandRouter()

router.add_command(
    "parse",
    vocabulary_controller.parse,
    summary="Decompose class names into subjects and attributes",
    description="Parse a file of fine-grained class names (one per line) into "
    "vocabulary.jsonl and a failure-taxonomy report.",
    arguments=[
        arg("--names", required=True, help="text file with one class name per line"),
        arg("--backend", choices=["rules", "llm"], help="parser backend (default: llm.backend)"),
        arg("--cache", help="parse cache file (created if missing)"),
        arg("--lexicon", help="YAML/JSON hypernym lexicon mapping phrase -> subject"),
    ],
)
