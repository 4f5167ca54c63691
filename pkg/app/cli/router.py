"""
Subcommand router.

Feature modules register their subcommands on a ``CommandRouter`` in their
``routes.py``; the top-level router includes them and builds the argparse tree.
"""

import argparse
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

Handler = Callable[[argparse.Namespace], int]


@dataclass(frozen=True)
class Argument:
    flags: Tuple[str, ...]
    options: Dict[str, Any] = field(default_factory=dict)


def arg(*flags: str, **options: Any) -> Argument:
    """Declare one subcommand flag with ``argparse.add_argument`` semantics."""
    return Argument(flags=flags, options=options)


@dataclass
class Command:
    name: str
    handler: Handler
    summary: str
    description: str
    arguments: List[Argument] = field(default_factory=list)


class CommandRouter:
    def __init__(self):
        self.commands: List[Command] = []

    def add_command(
        self,
        name: str,
        handler: Handler,
        summary: str,
        description: str,
        arguments: Sequence[Argument] = (),
    ) -> None:
        if any(c.name == name for c in self.commands):
            raise ValueError(f"Subcommand registered twice: {name}")
        self.commands.append(Command(name, handler, summary, description, list(arguments)))

    def include_router(self, router: "CommandRouter") -> None:
        for command in router.commands:
            self.add_command(
                command.name, command.handler, command.summary, command.description, command.arguments
            )

    def build_parser(
        self,
        prog: str,
        description: str,
        common: Optional[Callable[[argparse.ArgumentParser], None]] = None,
    ) -> argparse.ArgumentParser:
        parser = argparse.ArgumentParser(prog=prog, description=description)
        subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
        subparsers.required = True
        for command in self.commands:
            sub = subparsers.add_parser(
                command.name,
                help=command.summary,
                description=command.description,
                formatter_class=argparse.ArgumentDefaultsHelpFormatter,
            )
            if common is not None:
                common(sub)
            for argument in command.arguments:
                sub.add_argument(*argument.flags, **argument.options)
            sub.set_defaults(handler=command.handler)
        return parser
