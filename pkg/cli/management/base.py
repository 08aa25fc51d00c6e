from __future__ import annotations

import logging

from django.core.management.base import BaseCommand, CommandError

from cli.runner import RunConfig, run
from core.constants import CommandName
from core.exc import KramersError

__all__ = ["KramersCommand"]

logger = logging.getLogger(__name__)


class KramersCommand(BaseCommand):
    command_name: CommandName

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--model", type=str, dest="model", help="built-in model name")
        parser.add_argument("--config", type=str, dest="config", help="JSON document {'model': name, 'params': {...}}")
        parser.add_argument("--param", type=str, dest="param", action="append", help="model parameter override name=value")
        parser.add_argument("--masses", type=str, dest="masses", help="descending mass ladder, e.g. 1e-1,1e-2")
        parser.add_argument("--eps", type=str, dest="eps", help="exceedance thresholds, e.g. 0.05,0.1")
        parser.add_argument("--T", type=str, dest="T", help="time horizon")
        parser.add_argument("--dt", type=str, dest="dt", help="time step")
        parser.add_argument("--paths", type=str, dest="paths", help="number of coupled paths")
        parser.add_argument("--seed", type=str, dest="seed", help="master seed")
        parser.add_argument("--threads", type=str, dest="threads", help="worker threads, 0 = auto")
        parser.add_argument("--x0", type=str, dest="x0", help="initial position, comma separated")
        parser.add_argument("--v0", type=str, dest="v0", help="initial velocity, comma separated")
        parser.add_argument("--out", type=str, dest="out", help="output file")
        parser.add_argument("--format", type=str, dest="format", help="csv or json")
        parser.add_argument("--stride", type=str, dest="stride", help="write every N-th trajectory row")

    def handle(self, *args, **options):
        try:
            config = RunConfig.from_options(self.command_name, options)
        except KramersError as e:
            logger.error(f"invalid configuration: {e}")
            raise CommandError(str(e), returncode=e.exit_code) from e

        outcome = run(config)
        if outcome.status != 0:
            raise CommandError(outcome.summary, returncode=outcome.status)
        self.stdout.write(outcome.summary)
