import numpy as np
import pandas as pd

from lcra.stats import mgf_domination, random_sum_histogram, random_sum_moments, random_sum_sample

from ._base import LcraCommand


class Command(LcraCommand):
    help = 'Moments and histogram of a binomial number of Gaussian summands against a Gaussian'

    def add_command_arguments(self, parser):
        parser.add_argument('--M', type=int, default=100, dest='devices')
        parser.add_argument('--rho', type=float, default=0.05)
        parser.add_argument('--sigma2', type=float, default=1.0)
        parser.add_argument('--k-max', type=int, default=8, dest='k_max')
        parser.add_argument('--samples', type=int, default=1_000_000)
        parser.add_argument('--bins', type=int, default=81)
        parser.add_argument('--hist-out', dest='hist_out', help='Histogram CSV path')

    def handle(self, *args, **options):
        M, rho, sigma2 = options['devices'], options['rho'], options['sigma2']
        reports = random_sum_moments(M, rho, sigma2, options['k_max'])
        moments = pd.DataFrame({
            'k': [r.k for r in reports],
            'EY_k': [r.EY_k for r in reports],
            'EZ_k': [r.EZ_k for r in reports],
        })
        self.write_frame(moments, options['out'])

        exact, bound = mgf_domination(M, rho, sigma2, np.linspace(0.1, 1.0, 10))
        self.stderr.write(
            f"excess kurtosis {reports[0].excess_kurtosis:.4f}; "
            f"MGF bound holds on s-grid: {bool(np.all(exact <= bound))}"
        )

        if options['hist_out']:
            rng = np.random.default_rng(options['seed'] or 0)
            samples = random_sum_sample(M, rho, sigma2, options['samples'], rng)
            histogram = random_sum_histogram(samples, M, rho, sigma2, options['bins'])
            self.write_frame(histogram, options['hist_out'])
