"""
Monte Carlo experiment runner and metrics CSV output.

Every trial draws from its own generator, seeded with (seed, sweep index,
trial index), so a sweep gives the same numbers whatever the worker count or
execution order.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .design import from_db, plan_power_levels
from .detect import DetectorChoice, sic_pipeline
from .exceptions import ConfigError, UsageError
from .model import gen_spreading, synth_slot

logger = logging.getLogger(__name__)

SWEEP_VARIABLES = ('rho', 'N', 'gamma_db', 'n_sweeps', 'Q')
CSV_COLUMNS = ['sweep_name', 'sweep_value', 'layer', 'mean_md', 'mean_fa',
               'total', 'stderr', 'n_trials', 'seconds']


@dataclass(frozen=True)
class ExperimentSpec:
    config: object
    sweep: str
    values: tuple
    n_trials: int = 1000
    detector: DetectorChoice = field(default_factory=DetectorChoice)
    known_b: bool = True
    out: Path = None
    cancellation: str = 'lmmse'

    def __post_init__(self):
        if self.sweep not in SWEEP_VARIABLES:
            raise ConfigError('sweep', f"must be one of {', '.join(SWEEP_VARIABLES)}")
        if not self.values:
            raise ConfigError('values', "at least one sweep value is required")
        if self.n_trials < 1:
            raise ConfigError('trials', "must be at least 1")
        object.__setattr__(self, 'values', tuple(float(v) for v in self.values))

    def point(self, value):
        """Configuration and detector for one sweep value."""
        config, detector = self.config, self.detector
        if self.sweep == 'rho':
            config = config.with_changes(rho=(value,))
        elif self.sweep == 'N':
            config = config.with_changes(N=_as_int('values', value))
        elif self.sweep == 'gamma_db':
            config = config.with_changes(gamma_target=from_db(value))
        elif self.sweep == 'Q':
            config = config.with_changes(Q=_as_int('values', value))
        elif self.sweep == 'n_sweeps':
            detector = DetectorChoice(detector.kind, _as_int('values', value))
        return config, detector


def _as_int(key, value):
    if int(value) != value:
        raise ConfigError(key, f"expected an integer, got {value!r}")
    return int(value)


@dataclass(frozen=True)
class MetricsRow:
    """Averages of one sweep point. Per-trial error count is md + fa."""
    sweep_name: str
    sweep_value: float
    layer_md: tuple
    layer_fa: tuple
    layer_stderr: tuple
    total_md: float
    total_fa: float
    total_stderr: float
    n_trials: int
    seconds: float
    feasible: bool = True


def trial_rng(seed, sweep_index, trial_index):
    return np.random.default_rng([seed, sweep_index, trial_index])


def run_trial(config, plan, detector, known_b, cancellation, rng):
    """Per-layer (md, fa) counts of one slot."""
    ens = gen_spreading(config, rng)
    slot = synth_slot(config, plan, ens, rng)
    report = sic_pipeline(slot, ens, plan, detector,
                          assume_known_b=known_b, cancellation=cancellation)
    return [(layer.md_count, layer.fa_count) for layer in report.layers]


def _mean(values):
    return math.fsum(values) / len(values)


def _stderr(values):
    n = len(values)
    if n < 2:
        return 0.0
    mean = _mean(values)
    variance = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return math.sqrt(variance / n)


def _aggregate(sweep_name, value, counts, seconds):
    counts = np.asarray(counts, dtype=float)  # trials x layers x (md, fa)
    n_trials, n_layers, _ = counts.shape
    layer_md = tuple(_mean(counts[:, q, 0]) for q in range(n_layers))
    layer_fa = tuple(_mean(counts[:, q, 1]) for q in range(n_layers))
    layer_stderr = tuple(_stderr(counts[:, q, 0] + counts[:, q, 1]) for q in range(n_layers))
    per_trial = counts.sum(axis=(1, 2))
    return MetricsRow(
        sweep_name=sweep_name, sweep_value=float(value),
        layer_md=layer_md, layer_fa=layer_fa, layer_stderr=layer_stderr,
        total_md=math.fsum(layer_md), total_fa=math.fsum(layer_fa),
        total_stderr=_stderr(per_trial),
        n_trials=n_trials, seconds=seconds,
    )


def _infeasible_row(sweep_name, value, n_layers):
    nan = (math.nan,) * n_layers
    return MetricsRow(sweep_name, float(value), nan, nan, nan,
                      math.nan, math.nan, math.nan, 0, 0.0, feasible=False)


def _run_point(config, detector, known_b, cancellation, n_trials, sweep_index,
               sweep_name, value, workers):
    plan = plan_power_levels(config)
    if not plan.feasible:
        logger.warning("%s=%s: infeasible power plan, point skipped", sweep_name, value)
        return _infeasible_row(sweep_name, value, config.Q)

    started = time.perf_counter()
    counts = Parallel(n_jobs=workers)(
        delayed(run_trial)(config, plan, detector, known_b, cancellation,
                           trial_rng(config.seed, sweep_index, trial))
        for trial in range(n_trials)
    )
    row = _aggregate(sweep_name, value, counts, time.perf_counter() - started)
    logger.info("%s=%s: total md %.4f, fa %.4f over %d trials",
                sweep_name, value, row.total_md, row.total_fa, n_trials)
    return row


def run_experiment(spec, workers=1):
    rows = []
    for index, value in enumerate(spec.values):
        config, detector = spec.point(value)
        rows.append(_run_point(config, detector, spec.known_b, spec.cancellation,
                               spec.n_trials, index, spec.sweep, value, workers))
    return rows


def simulate(config, detector, n_trials, known_b=True, cancellation='lmmse', workers=1):
    """One configuration, no sweep; reported under the sweep name ``'none'``."""
    return _run_point(config, detector, known_b, cancellation, n_trials, 0,
                      'none', 0.0, workers)


def metrics_frame(rows, include_timing=False):
    if not rows:
        raise UsageError("no metrics rows to write")
    records = []
    for row in rows:
        seconds = row.seconds if include_timing else math.nan
        base = {'sweep_name': row.sweep_name, 'sweep_value': row.sweep_value,
                'n_trials': row.n_trials, 'seconds': seconds}
        for q, (md, fa, se) in enumerate(zip(row.layer_md, row.layer_fa, row.layer_stderr)):
            records.append({**base, 'layer': str(q + 1), 'mean_md': md, 'mean_fa': fa,
                            'total': md + fa, 'stderr': se})
        records.append({**base, 'layer': 'total', 'mean_md': row.total_md,
                        'mean_fa': row.total_fa, 'total': row.total_md + row.total_fa,
                        'stderr': row.total_stderr})
    return pd.DataFrame.from_records(records, columns=CSV_COLUMNS)


def emit_csv(rows, path, include_timing=False):
    """Write one line per layer plus a ``total`` line for every sweep point."""
    frame = metrics_frame(rows, include_timing)
    path = Path(path)
    try:
        frame.to_csv(path, index=False, encoding='utf-8', lineterminator='\n')
    except OSError as exc:
        raise OSError(f"cannot write metrics to {path}: {exc.strerror}") from exc
    logger.info("metrics written to %s", path)
    return path


def read_csv(path):
    """Re-parse an emitted metrics CSV into MetricsRows."""
    frame = pd.read_csv(path, dtype={'sweep_name': str, 'layer': str},
                        float_precision='round_trip')
    rows = []
    for (name, value), group in frame.groupby(['sweep_name', 'sweep_value'], sort=False):
        layers = group[group['layer'] != 'total']
        total = group[group['layer'] == 'total'].iloc[0]
        n_trials = int(total['n_trials'])
        rows.append(MetricsRow(
            sweep_name=name, sweep_value=float(value),
            layer_md=tuple(layers['mean_md'].astype(float)),
            layer_fa=tuple(layers['mean_fa'].astype(float)),
            layer_stderr=tuple(layers['stderr'].astype(float)),
            total_md=float(total['mean_md']), total_fa=float(total['mean_fa']),
            total_stderr=float(total['stderr']),
            n_trials=n_trials, seconds=float(total['seconds']),
            feasible=n_trials > 0,
        ))
    return rows
