"""Shared flags and error handling of the simulator commands."""

import argparse
import logging
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from rest_framework import serializers

from lcra.design import XI_CONVENTIONS, from_db
from lcra.exceptions import LcraError

_VERBOSITY_LEVELS = {0: logging.WARNING, 1: logging.INFO, 2: logging.INFO, 3: logging.DEBUG}


_BOOLEAN = serializers.BooleanField()


def _bool_flag(text):
    try:
        return _BOOLEAN.to_internal_value(text)
    except serializers.ValidationError:
        raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}") from None


class LcraCommand(BaseCommand):
    """Base class adding the global flags and turning domain errors into CommandError."""

    def add_arguments(self, parser):
        parser.add_argument('--config', type=Path, help='Flat KEY=value configuration file')
        parser.add_argument('--seed', type=int, help='64-bit RNG seed (overrides the file)')
        parser.add_argument('--out', type=Path, help='Output CSV path (default: stdout)')
        parser.add_argument('--trials', type=int, help='Monte Carlo trials per point')
        parser.add_argument('--detector', help='cavi:<sweeps> or map')
        parser.add_argument('--known-b', type=_bool_flag, dest='known_b',
                            help='Select exactly the true number of devices per layer (true|false)')
        parser.add_argument('--xi-convention', choices=XI_CONVENTIONS, default='printed',
                            help='Scaling of the false-alarm statistic in the PEP formula')
        parser.add_argument('--workers', type=int, default=settings.LCRA['WORKERS'],
                            help='Parallel workers for Monte Carlo trials')
        parser.add_argument('--gamma-db', type=float, dest='gamma_db',
                            help='Target SNR in dB (overrides gamma_target)')
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def execute(self, *args, **options):
        verbosity = options.get('verbosity', 1)
        if verbosity != 1:
            logging.getLogger('lcra').setLevel(_VERBOSITY_LEVELS.get(verbosity, logging.DEBUG))
        try:
            return super().execute(*args, **options)
        except LcraError as exc:
            raise CommandError(str(exc)) from exc
        except OSError as exc:
            raise CommandError(str(exc)) from exc

    def config_overrides(self, options):
        overrides = {'seed': options.get('seed')}
        if options.get('gamma_db') is not None:
            overrides['gamma_target'] = from_db(options['gamma_db'])
        return overrides

    def write_frame(self, frame, out):
        """Write a DataFrame as CSV to ``out`` or to stdout."""
        if out is None:
            self.stdout.write(frame.to_csv(index=False, lineterminator='\n'), ending='')
            return
        frame.to_csv(out, index=False, encoding='utf-8', lineterminator='\n')
        self.stderr.write(f"wrote {out}")
