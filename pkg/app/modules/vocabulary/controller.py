"""
Vocabulary controller.
Handles the parse subcommand and calls the subject identification service.
"""

import argparse
import asyncio

import structlog

from app.cli.common import fail, prepare_run
from app.utils.file_utils import read_lines, write_json, write_jsonl

from .cache import ParseCache
from .llm_client import get_llm_client
from .service import LLMParser, RuleBasedParser, VocabularyService, load_lexicon

logger = structlog.get_logger(__name__)


class VocabularyController:
    """Controller for the parse subcommand."""

    def parse(self, args: argparse.Namespace) -> int:
        """Decompose a file of class names into a vocabulary."""
        try:
            run = prepare_run(args)
            names = read_lines(args.names)
            backend = args.backend or run.config.llm.backend
            parser = LLMParser(get_llm_client(run.config.llm)) if backend == "llm" else RuleBasedParser()
            cache = ParseCache.load(args.cache) if args.cache else None
            service = VocabularyService(parser, cache, load_lexicon(args.lexicon))

            result = asyncio.run(service.build_vocabulary(names))
            if cache is not None:
                cache.save()

            write_jsonl(run.path("vocabulary.jsonl"), result.classes)
            write_json(
                run.path("parse_report.json"),
                {
                    "status": result.status,
                    "message": result.message,
                    "backend": backend,
                    "status_counts": result.status_counts,
                    "failures": result.failures,
                    "parser_invocations": result.parser_invocations,
                },
            )
            print(f"{'status':<16}{'count':>8}")
            for status, count in result.status_counts.items():
                print(f"{status:<16}{count:>8}")
            print(result.message)
            if result.status != "ok":
                logger.warning("Vocabulary incomplete", status=result.status, failures=len(result.failures))
            return 0
        except Exception as e:
            return fail("parse", e)


vocabulary_controller = VocabularyController()
