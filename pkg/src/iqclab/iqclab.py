from __future__ import annotations

import argparse
import importlib
import json
import logging
import pkgutil
import sys
from typing import Optional, Sequence

from pydantic import BaseModel, ValidationError

from . import commands, version
from .core.errors import NumericalFailure, ValidationFailure
from .core.output import atomic_write, render_csv, render_json, scalar_table
from .core.router import Command, CommandResult, RunContext
from .core.settings import settings
from .schemas.command_schemas import ErrorReport

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


class UsageError(ValidationFailure):
    pass


class _Parser(argparse.ArgumentParser):
    """Reports usage problems as exceptions so they share the error JSON path."""

    def error(self, message: str):
        raise UsageError(message)


# Register all subcommands

# Loop through all modules in the commands package
COMMANDS: dict[str, Command] = {}
for _, module_name, _ in pkgutil.iter_modules(commands.__path__):
    module = importlib.import_module(f"{commands.__name__}.{module_name}")
    if hasattr(module, "router"):
        COMMANDS.update(module.router.commands)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog=version.PROJECT_NAME, description=version.DESCRIPTION)
    parser.add_argument("--version", action="version", version=f"{version.PROJECT_NAME_TEXT} {version.VERSION}")
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in sorted(COMMANDS):
        sub = subparsers.add_parser(name, help=COMMANDS[name].help, description=COMMANDS[name].help)
        sub.add_argument("--config", "-c", help="JSON config file")
        sub.add_argument("--output", "-o", help="output file (stdout when omitted)")
        sub.add_argument("--format", "-f", choices=("json", "csv"), default="json")
        sub.add_argument("--seed", type=int, help="overrides the config seed and IQCLAB_SEED")
        sub.add_argument("--jobs", "-j", type=int, help="worker count for eps ladders")
        sub.add_argument("--log-level", choices=("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"))
        sub.add_argument("--print-schema", action="store_true", help="print the config JSON schema and exit")
    return parser


def _provenance(name: str, config: BaseModel) -> dict:
    return {"command": name, "version": version.VERSION, **json.loads(config.model_dump_json())}


def _render(name: str, config: BaseModel, result: CommandResult, fmt: str) -> str:
    payload = json.loads(result.payload.model_dump_json())
    if fmt == "csv":
        table = result.table if result.table is not None else scalar_table(payload)
        return render_csv(table, _provenance(name, config))
    return render_json(payload, _provenance(name, config))


def _report(kind: str, message: str, details: Optional[list] = None) -> None:
    sys.stderr.write(ErrorReport(error=kind, message=message, details=details or []).model_dump_json() + "\n")


def run(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(
            level=args.log_level or settings.log_level_value,
            format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        )
        command = COMMANDS[args.command]
        if args.print_schema:
            sys.stdout.write(json.dumps(command.config.model_json_schema(), sort_keys=True, indent=2) + "\n")
            return EXIT_OK
        if args.config is None:
            raise UsageError("--config is required")
        if args.jobs is not None and args.jobs < 1:
            raise UsageError("--jobs must be positive")
        with open(args.config, encoding="utf-8") as handle:
            config = command.config.model_validate_json(handle.read())
        seed = settings.resolve_seed(args.seed, getattr(config, "seed", None))
        if "seed" in type(config).model_fields:
            config = config.model_copy(update={"seed": seed})
        context = RunContext(seed=seed, jobs=args.jobs or settings.JOBS, format=args.format)
        logger.info("running %s (seed %d)", args.command, seed)
        text = _render(args.command, config, command.handler(config, context), args.format)
        if args.output:
            atomic_write(args.output, text)
        else:
            sys.stdout.write(text)
    except ValidationError as exc:
        _report("validation", f"Config does not match the {exc.title} schema", json.loads(exc.json(include_url=False)))
        return EXIT_VALIDATION
    except (ValidationFailure, OSError) as exc:
        _report("validation", str(exc), [type(exc).__name__])
        return EXIT_VALIDATION
    except NumericalFailure as exc:
        _report("numerical", str(exc), [type(exc).__name__])
        return EXIT_NUMERICAL

    return EXIT_OK


def main() -> None:
    sys.exit(run())
