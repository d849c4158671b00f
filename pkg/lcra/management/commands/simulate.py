from django.conf import settings

from lcra.design import plan_power_levels
from lcra.detect import parse_detector
from lcra.harness import metrics_frame, simulate, trial_rng
from lcra.model import gen_spreading, synth_slot
from lcra.serializers import load_system_config

from ._base import LcraCommand


class Command(LcraCommand):
    help = 'Simulate one configuration and report per-layer MD/FA counts'

    def add_command_arguments(self, parser):
        parser.add_argument('--dump-slot', dest='dump_slot',
                            help='Write the first trial\'s slot realization to this .npz file')
        parser.add_argument('--cancellation', choices=('lmmse', 'oracle'), default='lmmse')

    def handle(self, *args, **options):
        defaults = settings.LCRA
        config = load_system_config(options['config'], **self.config_overrides(options))
        detector = parse_detector(options['detector'] or defaults['DEFAULT_DETECTOR'])
        n_trials = options['trials'] or defaults['DEFAULT_TRIALS']
        known_b = True if options['known_b'] is None else options['known_b']

        if options['dump_slot']:
            self.dump_first_slot(config, options['dump_slot'])

        row = simulate(config, detector, n_trials, known_b=known_b,
                       cancellation=options['cancellation'], workers=options['workers'])
        if not row.feasible:
            self.stdout.write(self.style.WARNING('infeasible power plan; nothing simulated'))
            return

        self.stdout.write(f"detector {detector}, known B: {known_b}, trials: {row.n_trials}")
        for q, (md, fa, se) in enumerate(zip(row.layer_md, row.layer_fa, row.layer_stderr), 1):
            self.stdout.write(f"layer {q}: mean MD {md:.4f}  mean FA {fa:.4f}  (stderr {se:.4f})")
        self.stdout.write(
            f"total: mean MD {row.total_md:.4f}  mean FA {row.total_fa:.4f}  "
            f"(stderr {row.total_stderr:.4f}), {row.seconds:.2f} s"
        )
        if options['out']:
            self.write_frame(metrics_frame([row], include_timing=True), options['out'])

    def dump_first_slot(self, config, path):
        plan = plan_power_levels(config)
        plan.require_feasible()
        rng = trial_rng(config.seed, 0, 0)
        ens = gen_spreading(config, rng)
        synth_slot(config, plan, ens, rng).save(path)
