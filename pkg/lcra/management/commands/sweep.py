from lcra.exceptions import ConfigError
from lcra.harness import emit_csv, metrics_frame, run_experiment
from lcra.serializers import build_experiment_spec, build_system_config, read_config_file

from ._base import LcraCommand


class Command(LcraCommand):
    help = 'Run a parameter sweep described by a configuration file and emit the metrics CSV'

    def add_command_arguments(self, parser):
        parser.add_argument('--timing', action='store_true',
                            help='Fill the seconds column (output is then not reproducible)')

    def handle(self, *args, **options):
        if options['config'] is None:
            raise ConfigError('config', "a sweep needs a configuration file (--config)")
        values = read_config_file(options['config'])
        config = build_system_config(values, **self.config_overrides(options))
        spec = build_experiment_spec(
            values, config,
            trials=options['trials'], detector=options['detector'], known_b=options['known_b'],
        )

        rows = run_experiment(spec, workers=options['workers'])
        out = options['out'] or spec.out
        if out is None:
            self.write_frame(metrics_frame(rows, include_timing=options['timing']), None)
        else:
            emit_csv(rows, out, include_timing=options['timing'])
            self.stderr.write(f"wrote {out}")
