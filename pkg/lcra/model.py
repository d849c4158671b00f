"""
Domain types and synthesis of the layered received-signal block for one slot.

Every device in layer q is power controlled so that its receive power is V_q.
Channel gain and transmit power are never drawn separately: only their
product (magnitude sqrt(V_q), uniform phase) reaches the receiver.
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, PreconditionError

logger = logging.getLogger(__name__)

SYMBOL_MODELS = ('gaussian', 'qpsk')

_QPSK = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2.0)


@dataclass(frozen=True)
class SystemConfig:
    """Scalar parameters of one experiment.

    ``rho`` may be given as a single probability; it is broadcast to all Q
    layers. ``gamma_target`` and ``n0`` are linear quantities.
    """
    K: int = 300
    Q: int = 3
    N: int = 30
    T: int = 100
    rho: tuple = (0.05,)
    gamma_target: float = 4.0
    eta: float = 3.5
    n0: float = 1.0
    seed: int = 0
    symbol_model: str = 'gaussian'

    def __post_init__(self):
        for key in ('K', 'Q', 'N', 'T'):
            value = getattr(self, key)
            if int(value) != value or value < 1:
                raise ConfigError(key, f"must be a positive integer, got {value!r}")
        if self.K % self.Q:
            raise ConfigError('Q', f"K={self.K} is not divisible by Q={self.Q}")

        rho = np.atleast_1d(np.asarray(self.rho, dtype=float))
        if rho.size == 1:
            rho = np.repeat(rho, self.Q)
        if rho.size != self.Q:
            raise ConfigError('rho', f"expected 1 or {self.Q} values, got {rho.size}")
        if np.any(rho < 0.0) or np.any(rho >= 1.0):
            raise ConfigError('rho', "access probabilities must lie in [0, 1)")
        object.__setattr__(self, 'rho', tuple(float(r) for r in rho))

        if not self.gamma_target > 0:
            raise ConfigError('gamma_target', "must be positive")
        if not self.n0 > 0:
            raise ConfigError('n0', "must be positive")
        if not self.eta >= 2:
            raise ConfigError('eta', "path-loss exponent must be at least 2")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError('seed', "must be an unsigned 64-bit integer")
        if self.symbol_model not in SYMBOL_MODELS:
            raise ConfigError('symbol_model', f"must be one of {', '.join(SYMBOL_MODELS)}")

    @property
    def M(self):
        return self.K // self.Q

    def with_changes(self, **changes):
        """Copy with some fields replaced; a uniform rho follows a change of Q."""
        if 'Q' in changes and 'rho' not in changes:
            if len(set(self.rho)) != 1:
                raise ConfigError('rho', "per-layer rho cannot follow a change of Q")
            changes['rho'] = (self.rho[0],)
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class SpreadingEnsemble:
    """Per-layer signature matrices; column m of ``matrices[q]`` is g_{q,m}."""
    matrices: tuple

    @property
    def Q(self):
        return len(self.matrices)

    @property
    def N(self):
        return self.matrices[0].shape[0]

    @property
    def M(self):
        return self.matrices[0].shape[1]

    def stacked(self):
        return np.hstack(self.matrices)


@dataclass(frozen=True, eq=False)
class SlotRealization:
    activity: tuple
    effective_symbols: tuple
    received: np.ndarray
    noise: np.ndarray
    noise_variance: float
    active_counts: tuple = field(init=False)

    def __post_init__(self):
        object.__setattr__(
            self, 'active_counts', tuple(int(b.sum()) for b in self.activity)
        )

    @property
    def T(self):
        return self.received.shape[1]

    def layer_signal(self, ens, q):
        """The noiseless contribution G_q S_q of layer q."""
        return ens.matrices[q] @ self.effective_symbols[q]

    def save(self, path):
        """Write a compressed ``.npz`` dump.

        Arrays: ``activity_<q>`` (uint8, M), ``symbols_<q>`` (complex, M x T)
        for q = 0..Q-1, ``received`` and ``noise`` (complex, N x T) and the
        scalar ``noise_variance``.
        """
        arrays = {'received': self.received, 'noise': self.noise,
                  'noise_variance': np.float64(self.noise_variance)}
        for q, (b, s) in enumerate(zip(self.activity, self.effective_symbols)):
            arrays[f'activity_{q}'] = b.astype(np.uint8)
            arrays[f'symbols_{q}'] = s
        np.savez_compressed(path, **arrays)
        logger.info("slot dump written to %s", path)

    @classmethod
    def load(cls, path):
        with np.load(Path(path)) as data:
            n_layers = sum(1 for name in data.files if name.startswith('activity_'))
            return cls(
                activity=tuple(data[f'activity_{q}'].astype(bool) for q in range(n_layers)),
                effective_symbols=tuple(data[f'symbols_{q}'] for q in range(n_layers)),
                received=data['received'],
                noise=data['noise'],
                noise_variance=float(data['noise_variance']),
            )


def complex_gaussian(rng, shape, variance=1.0):
    """Circularly symmetric complex Gaussian samples with the given variance."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def gen_spreading(config, rng):
    """Draw Q independent N x M Gaussian signature matrices, entries CN(0, 1/N)."""
    return SpreadingEnsemble(tuple(
        complex_gaussian(rng, (config.N, config.M), 1.0 / config.N)
        for _ in range(config.Q)
    ))


def synth_slot(config, plan, ens, rng, symbol_model=None):
    """Draw activity, effective symbols and the received block for one slot."""
    symbol_model = symbol_model or config.symbol_model
    if symbol_model not in SYMBOL_MODELS:
        raise PreconditionError(f"unknown symbol model {symbol_model!r}")
    if not plan.feasible or len(plan.V) != config.Q:
        raise PreconditionError("power plan does not provide one level per layer")
    if ens.Q != config.Q or ens.M != config.M or ens.N != config.N:
        raise PreconditionError("spreading ensemble does not match the configuration")

    M, T = config.M, config.T
    activity, symbols = [], []
    received = np.zeros((config.N, T), dtype=complex)
    for q in range(config.Q):
        b = rng.random(M) < config.rho[q]
        if symbol_model == 'gaussian':
            s = complex_gaussian(rng, (M, T), plan.V[q])
        else:
            phase = np.exp(2j * np.pi * rng.random(M))
            x = _QPSK[rng.integers(0, 4, size=(M, T))]
            s = np.sqrt(plan.V[q]) * phase[:, None] * x
        s[~b] = 0.0
        activity.append(b)
        symbols.append(s)
        received += ens.matrices[q] @ s

    noise = complex_gaussian(rng, (config.N, T), config.n0)
    return SlotRealization(
        activity=tuple(activity),
        effective_symbols=tuple(symbols),
        received=received + noise,
        noise=noise,
        noise_variance=config.n0,
    )
