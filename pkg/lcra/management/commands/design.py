import pandas as pd

from lcra.design import asymptotic_analysis, plan_power_levels
from lcra.serializers import load_system_config

from ._base import LcraCommand


def design_frame(plan, report):
    """One row per layer: geometry, power levels and asymptotic error probabilities."""
    return pd.DataFrame({
        'layer': [layer.layer for layer in report.layers],
        'R': plan.R,
        'V_dB': plan.V_db,
        'sigma2': plan.sigma2,
        'tx_dB': plan.tx_db,
        'beta': [layer.beta for layer in report.layers],
        'p_fa': [layer.p_fa for layer in report.layers],
        'p_md': [layer.p_md for layer in report.layers],
        'md_bound': [layer.md_bound for layer in report.layers],
    })


class Command(LcraCommand):
    help = 'Plan per-layer power levels and report the asymptotic FA/MD probabilities'

    def add_command_arguments(self, parser):
        parser.add_argument('--T', type=int, dest='slot_length',
                            help='Symbols per slot for the asymptotic probabilities')
        parser.add_argument('--format', choices=('table', 'csv', 'both'), default='both')

    def handle(self, *args, **options):
        config = load_system_config(options['config'], **self.config_overrides(options),
                                    T=options['slot_length'])
        plan = plan_power_levels(config)
        if not plan.feasible:
            self.stdout.write(self.style.WARNING(
                f"infeasible: target SNR {config.gamma_target:.6g} cannot guarantee V_Q >= 1"
            ))
            return

        frame = design_frame(plan, asymptotic_analysis(plan, config.T))
        if options['format'] in ('table', 'both'):
            self.stdout.write(frame.to_string(index=False, float_format=lambda v: f'{v:.6g}'))
            kappa = ', '.join(f'{k:.4f}' for k in plan.kappa)
            self.stdout.write(f"kappa = {kappa}; T = {config.T}")
        if options['format'] in ('csv', 'both'):
            self.write_frame(frame, options['out'])
