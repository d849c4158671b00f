import numpy as np
import pandas as pd

from lcra.design import pep_probabilities, plan_power_levels
from lcra.detect import empirical_pep, model_covariance
from lcra.exceptions import PreconditionError
from lcra.model import complex_gaussian
from lcra.serializers import load_system_config

from ._base import LcraCommand


def flip_alpha(G, b, flip_index, V, sigma2):
    """g^H R(b without flip_index)^{-1} g: alpha for an inactive device, alpha' for an active one."""
    g = G[:, flip_index]
    b = np.asarray(b, dtype=bool)
    reduced = b.copy()
    reduced[flip_index] = False
    covariance = model_covariance(G, reduced, V, sigma2)
    return float(np.real(np.vdot(g, np.linalg.solve(covariance, g))))


class Command(LcraCommand):
    help = 'Compare simulated single-flip error probabilities of the MAP test with the formulas'

    def add_command_arguments(self, parser):
        parser.add_argument('--layer', type=int, default=None,
                            help='Layer whose V_q and sigma_q^2 are used (default: the last)')
        parser.add_argument('--b0', type=int, help='Number of active devices in b')
        parser.add_argument('--t-values', dest='t_values', default='1,2,5,10,20',
                            help='Comma-separated slot lengths')

    def handle(self, *args, **options):
        config = load_system_config(options['config'], **self.config_overrides(options))
        plan = plan_power_levels(config)
        plan.require_feasible()
        q = (options['layer'] or config.Q) - 1
        if not 0 <= q < config.Q:
            raise PreconditionError(f"layer must lie in 1..{config.Q}")
        M, V, sigma2, rho = config.M, plan.V[q], plan.sigma2[q], plan.rho[q]
        B0 = options['b0'] if options['b0'] is not None else max(1, round(M * rho))
        if not 1 <= B0 < M:
            raise PreconditionError(f"b0 must lie in 1..{M - 1} so both flips exist")
        n_trials = options['trials'] or 10_000
        t_values = [int(t) for t in options['t_values'].split(',') if t.strip()]

        rng = np.random.default_rng(config.seed)
        G = complex_gaussian(rng, (config.N, M), 1.0 / config.N)
        b = np.zeros(M, dtype=bool)
        b[rng.choice(M, size=B0, replace=False)] = True
        fa_index = int(np.flatnonzero(~b)[0])
        md_index = int(np.flatnonzero(b)[0])
        alpha = flip_alpha(G, b, fa_index, V, sigma2)
        alpha_prime = flip_alpha(G, b, md_index, V, sigma2)

        records = []
        for T in t_values:
            formula = pep_probabilities(B0, M, rho, T, V, alpha, alpha_prime,
                                        xi_convention=options['xi_convention'])
            for direction, index, predicted in (('fa', fa_index, formula.p_fa),
                                                ('md', md_index, formula.p_md)):
                estimate = empirical_pep(G, b, index, V, sigma2, rho, T, n_trials, rng)
                records.append({
                    'direction': direction, 'T': T, 'V': V, 'alpha': estimate.alpha,
                    'p_formula': predicted, 'p_empirical': estimate.probability,
                    'stderr': estimate.stderr,
                })
        self.write_frame(pd.DataFrame.from_records(records), options['out'])
