"""
Device-activity detection per layer and successive interference cancellation.

Under the Gaussian approximation the block Y of layer q is zero-mean Gaussian
with covariance sigma^2 I + V G diag(b) G^H, so the activity vector b can be
scored exactly (``log_ap``), searched exhaustively for small M
(``map_bruteforce``) or approximated by mean-field coordinate ascent
(``cavi_detect``).
"""

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy import stats as sps
from scipy.special import expit, gammaln, xlogy

from .exceptions import PreconditionError
from .model import complex_gaussian

logger = logging.getLogger(__name__)

MAP_MAX_DEVICES = 16
DETECTORS = ('cavi', 'map')
CANCELLATIONS = ('lmmse', 'oracle')

_MAP_CHUNK = 2048


def model_covariance(G, weights, V, sigma2):
    """sigma2 I + V G diag(weights) G^H; weights are binary or mean-field beliefs."""
    weights = np.asarray(weights, dtype=float)
    N = G.shape[0]
    return sigma2 * np.eye(N) + V * (G * weights) @ G.conj().T


def log_prior(B, M, rho, prior='product'):
    """ln Pr(b) for |b| = B under independent activity with probability rho."""
    value = xlogy(B, rho) + xlogy(M - B, 1.0 - rho)
    if prior == 'binomial':
        value = value + gammaln(M + 1) - gammaln(B + 1) - gammaln(M - B + 1)
    elif prior != 'product':
        raise PreconditionError(f"unknown prior {prior!r}")
    return value


def _log_ap_rows(Y, G, rows, V, sigma2, rho, prior):
    """log_ap for every activity vector in ``rows`` (k x M), evaluated in batch."""
    N, M = G.shape
    T = Y.shape[1]
    rows = np.asarray(rows, dtype=float)
    cov = sigma2 * np.eye(N) + V * np.einsum('nm,km,pm->knp', G, rows, G.conj())
    _, logdet = np.linalg.slogdet(cov)
    solved = np.linalg.solve(cov, np.broadcast_to(Y, (len(rows), N, T)))
    quad = np.real(np.einsum('nt,knt->k', Y.conj(), solved))
    return -T * logdet - quad + log_prior(rows.sum(axis=1), M, rho, prior)


def log_ap(Y, G, b, V, sigma2, rho, prior='product'):
    """ln f(Y | b) + ln Pr(b), without the b-independent term -NT ln(pi)."""
    return float(_log_ap_rows(Y, G, np.asarray(b)[None, :], V, sigma2, rho, prior)[0])


def _candidate_supports(M, support_size=None):
    """All activity vectors ordered by support size, then lexicographically."""
    sizes = range(M + 1) if support_size is None else (support_size,)
    rows = []
    for size in sizes:
        for combo in itertools.combinations(range(M), size):
            row = np.zeros(M, dtype=np.int8)
            row[list(combo)] = 1
            rows.append(row)
    return np.array(rows)


def map_bruteforce(Y, G, V, sigma2, rho, support_size=None):
    """Exhaustive MAP activity vector; ``support_size`` restricts the search to |b| = B.

    Ties go to the smaller support, then to the lexicographically smallest
    index set.
    """
    M = G.shape[1]
    if M > MAP_MAX_DEVICES:
        raise PreconditionError(
            f"exhaustive MAP search is limited to {MAP_MAX_DEVICES} devices, got M={M}"
        )
    if support_size is not None and not 0 <= support_size <= M:
        raise PreconditionError(f"support size must lie in 0..{M}")

    candidates = _candidate_supports(M, support_size)
    scores = np.concatenate([
        _log_ap_rows(Y, G, candidates[start:start + _MAP_CHUNK], V, sigma2, rho, 'product')
        for start in range(0, len(candidates), _MAP_CHUNK)
    ])
    return candidates[int(np.argmax(scores))].astype(np.int8)


@dataclass(frozen=True, eq=False)
class PosteriorState:
    """Mean-field beliefs psi_m(1) after the last CAVI sweep.

    ``precision`` is the incrementally maintained inverse of the soft
    covariance built from ``beliefs``.
    """
    beliefs: np.ndarray
    iterations: int
    last_delta: float
    precision: np.ndarray


def _prior_logit(rho):
    with np.errstate(divide='ignore'):
        return float(np.log(rho) - np.log1p(-rho))


def cavi_detect(Y, G, V, sigma2, rho, n_sweeps, order=None):
    """Coordinate ascent over per-device activity beliefs.

    Device m is updated against the leave-one-out soft covariance
    R_{-m} = sigma2 I + V sum_{l != m} q_l g_l g_l^H, whose inverse is obtained
    from the cached inverse by a rank-one downdate and refreshed by a rank-one
    update once q_m changes. The cache is rebuilt from scratch at the start of
    every sweep. Cost per sweep is O(M (N^2 + N T)).
    """
    if n_sweeps < 1:
        raise PreconditionError("n_sweeps must be at least 1")
    M = G.shape[1]
    T = Y.shape[1]
    order = np.arange(M) if order is None else np.asarray(order)
    prior_logit = _prior_logit(rho)

    beliefs = np.full(M, float(rho))
    precision = None
    last_delta = 0.0
    for _ in range(n_sweeps):
        previous = beliefs.copy()
        precision = linalg.inv(model_covariance(G, beliefs, V, sigma2))
        for m in order:
            g = G[:, m]
            u = precision @ g
            c = np.real(np.vdot(g, u))
            removed = V * beliefs[m]
            shrink = 1.0 - removed * c
            w = u / shrink
            alpha = c / shrink
            z = float(np.sum(np.abs(w.conj() @ Y) ** 2))
            gain = V * alpha
            log_odds = prior_logit - T * math.log1p(gain) + V * z / (1.0 + gain)
            updated = float(expit(log_odds))

            added = V * updated
            precision = (precision
                         + (removed / shrink) * np.outer(u, u.conj())
                         - (added / (1.0 + added * alpha)) * np.outer(w, w.conj()))
            beliefs[m] = updated
        last_delta = float(np.max(np.abs(beliefs - previous))) if M else 0.0

    logger.debug("cavi: %d sweeps, last_delta=%.3g", n_sweeps, last_delta)
    return PosteriorState(beliefs=beliefs, iterations=n_sweeps,
                          last_delta=last_delta, precision=precision)


def select_topB(state, B):
    """Indices of the B largest beliefs, ties to the smallest index, sorted."""
    beliefs = state.beliefs if isinstance(state, PosteriorState) else np.asarray(state)
    if not 0 <= B <= beliefs.size:
        raise PreconditionError(f"B must lie in 0..{beliefs.size}, got {B}")
    ranked = np.argsort(-beliefs, kind='stable')
    return np.sort(ranked[:B])


def lmmse_reconstruct(Y, G_detected, V, sigma2):
    """Conditional-mean symbols V G_d^H (V G_d G_d^H + sigma2 I)^{-1} Y."""
    N, B = G_detected.shape
    if B == 0:
        return np.zeros((0, Y.shape[1]), dtype=complex)
    cov = V * (G_detected @ G_detected.conj().T) + sigma2 * np.eye(N)
    return V * (G_detected.conj().T @ linalg.solve(cov, Y, assume_a='pos'))


@dataclass(frozen=True)
class DetectorChoice:
    kind: str = 'cavi'
    n_sweeps: int = 5

    def __str__(self):
        return 'map' if self.kind == 'map' else f'cavi:{self.n_sweeps}'


def parse_detector(text):
    """``'cavi:<sweeps>'``, ``'cavi'`` or ``'map'``."""
    kind, _, sweeps = str(text).strip().lower().partition(':')
    if kind == 'map' and not sweeps:
        return DetectorChoice('map', 0)
    if kind == 'cavi':
        try:
            n_sweeps = int(sweeps) if sweeps else DetectorChoice.n_sweeps
        except ValueError:
            raise PreconditionError(f"invalid CAVI sweep count {sweeps!r}") from None
        if n_sweeps < 1:
            raise PreconditionError("CAVI needs at least one sweep")
        return DetectorChoice('cavi', n_sweeps)
    raise PreconditionError(f"unknown detector {text!r}; expected cavi:<sweeps> or map")


@dataclass(frozen=True, eq=False)
class LayerDetection:
    layer: int
    detected: np.ndarray
    true: np.ndarray
    beliefs: np.ndarray
    residual: np.ndarray

    @property
    def md_count(self):
        return int(np.setdiff1d(self.true, self.detected).size)

    @property
    def fa_count(self):
        return int(np.setdiff1d(self.detected, self.true).size)


@dataclass(frozen=True, eq=False)
class DetectionReport:
    layers: tuple

    @property
    def total_md(self):
        return sum(layer.md_count for layer in self.layers)

    @property
    def total_fa(self):
        return sum(layer.fa_count for layer in self.layers)


def sic_pipeline(slot, ens, plan, detector, assume_known_b=True, cancellation='lmmse'):
    """Detect layer 1 to Q in turn, cancelling each detected layer before the next.

    Detection scores layer q with the plan's sigma2[q]; reconstruction uses
    the per-entry level of the same interference, since the estimate is
    subtracted entry by entry.
    """
    plan.require_feasible()
    if cancellation not in CANCELLATIONS:
        raise PreconditionError(f"unknown cancellation mode {cancellation!r}")
    if detector.kind == 'map' and ens.M > MAP_MAX_DEVICES:
        raise PreconditionError(
            f"the MAP detector is limited to {MAP_MAX_DEVICES} devices per layer"
        )

    residual = slot.received
    layers = []
    for q in range(plan.Q):
        G = ens.matrices[q]
        V, sigma2, rho = plan.V[q], plan.sigma2[q], plan.rho[q]
        true = np.flatnonzero(slot.activity[q])
        known = true.size if assume_known_b else None

        if detector.kind == 'map':
            b_hat = map_bruteforce(residual, G, V, sigma2, rho, support_size=known)
            beliefs = b_hat.astype(float)
            detected = np.flatnonzero(b_hat)
        else:
            state = cavi_detect(residual, G, V, sigma2, rho, detector.n_sweeps)
            beliefs = state.beliefs
            if assume_known_b:
                detected = select_topB(state, known)
            else:
                detected = np.flatnonzero(beliefs > 0.5)

        if cancellation == 'oracle':
            residual = residual - slot.layer_signal(ens, q)
        else:
            G_detected = G[:, detected]
            S_hat = lmmse_reconstruct(residual, G_detected, V, plan.residual_variance(q))
            residual = residual - G_detected @ S_hat
        layers.append(LayerDetection(
            layer=q + 1, detected=detected, true=true, beliefs=beliefs, residual=residual,
        ))
    return DetectionReport(tuple(layers))


@dataclass(frozen=True)
class PepEstimate:
    direction: str
    probability: float
    stderr: float
    n_trials: int
    alpha: float
    ks_statistic: float
    ks_pvalue: float


def empirical_pep(G, b_true, flip_index, V, sigma2, rho, T, n_trials, rng,
                  prior='binomial', chunk=256):
    """Monte Carlo frequency of log_ap(b') > log_ap(b) for the single flip b' of b.

    Data are drawn from b under the Gaussian symbol model. The quadratic
    statistic sum_t y_t^H (R(b)^{-1} - R(b')^{-1}) y_t is rescaled to a
    chi-squared variable with 2T degrees of freedom and checked with a
    Kolmogorov-Smirnov test.
    """
    b_true = np.asarray(b_true).astype(bool)
    b_alt = b_true.copy()
    b_alt[flip_index] = not b_alt[flip_index]
    direction = 'md' if b_true[flip_index] else 'fa'
    N, M = G.shape

    cov = model_covariance(G, b_true, V, sigma2)
    cov_alt = model_covariance(G, b_alt, V, sigma2)
    precision, precision_alt = linalg.inv(cov), linalg.inv(cov_alt)
    delta = precision - precision_alt
    _, logdet = np.linalg.slogdet(cov)
    _, logdet_alt = np.linalg.slogdet(cov_alt)
    margin = (log_prior(b_true.sum(), M, rho, prior) - log_prior(b_alt.sum(), M, rho, prior)
              - T * (logdet - logdet_alt))

    active = G[:, b_true]
    statistic = []
    for start in range(0, n_trials, chunk):
        n = min(chunk, n_trials - start)
        S = complex_gaussian(rng, (n, active.shape[1], T), V)
        Y = active @ S + complex_gaussian(rng, (n, N, T), sigma2)
        statistic.append(np.real(np.einsum('knt,nm,kmt->k', Y.conj(), delta, Y)))
    statistic = np.concatenate(statistic)

    errors = statistic > margin
    probability = float(errors.mean())
    stderr = math.sqrt(probability * (1.0 - probability) / n_trials)

    g = G[:, flip_index]
    if direction == 'fa':
        alpha = float(np.real(np.vdot(g, precision @ g)))
        scale = V * alpha / (1.0 + V * alpha)
        sign = 1.0
    else:
        alpha = float(np.real(np.vdot(g, precision_alt @ g)))
        scale = V * alpha
        sign = -1.0
    if scale > 0:
        ks = sps.kstest(sign * 2.0 * statistic / scale, 'chi2', args=(2 * T,))
        ks_statistic, ks_pvalue = float(ks.statistic), float(ks.pvalue)
    else:
        ks_statistic = ks_pvalue = math.nan

    return PepEstimate(
        direction=direction, probability=probability, stderr=stderr,
        n_trials=n_trials, alpha=alpha,
        ks_statistic=ks_statistic, ks_pvalue=ks_pvalue,
    )
