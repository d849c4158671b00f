"""
Large-system design criteria for layered compressive random access.

Power levels are planned from the weakest layer upwards: layer Q sees only
background noise, every stronger layer q sees the layers below it as Gaussian
interference of variance sigma_q^2 = sum_{l>q} V_l M rho_l + N0, and V_q is
chosen so that V_q * beta(1/sigma_q^2, kappa_q) equals the target SNR.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .exceptions import InfeasiblePlanError, PreconditionError
from .stats import chi2_cdf, chi2_sf, md_tail_bound

logger = logging.getLogger(__name__)

XI_CONVENTIONS = ('printed', 'lemma2')
PRIORS = ('product', 'binomial')


def to_db(value):
    return 10.0 * math.log10(value)


def from_db(value_db):
    return 10.0 ** (value_db / 10.0)


def beta(gamma, kappa):
    """Large-system MMSE output SIR for random spreading at SNR gamma and load kappa."""
    a = (1.0 - kappa) * gamma
    return 0.5 * a - 0.5 + math.sqrt(0.25 * a * a + 0.5 * (1.0 + kappa) * gamma + 0.25)


@dataclass(frozen=True)
class PowerPlan:
    """Receive power levels and ring geometry, layer 1 (strongest) first.

    ``V``, ``sigma2``, ``gamma`` and ``tx`` are empty when the plan is
    infeasible. All powers are linear.
    """
    Q: int
    M: int
    N: int
    rho: tuple
    kappa: tuple
    R: tuple
    V: tuple
    sigma2: tuple
    gamma: tuple
    tx: tuple
    feasible: bool

    @property
    def V_db(self):
        return tuple(to_db(v) for v in self.V)

    @property
    def tx_db(self):
        return tuple(to_db(p) for p in self.tx)

    def residual_variance(self, q):
        """Per-entry variance of the weaker layers plus noise seen by layer q.

        ``sigma2[q]`` sums whole-signature powers; a unit-energy signature
        spreads them over N entries. The noise floor is already per entry.
        """
        n0 = self.sigma2[-1]
        return (self.sigma2[q] - n0) / self.N + n0

    def require_feasible(self):
        if not self.feasible:
            raise InfeasiblePlanError(
                "target SNR is below beta(1/N0, kappa): V_Q >= 1 cannot be guaranteed"
            )


def plan_power_levels(config):
    M, N, Q = config.M, config.N, config.Q
    kappa = tuple(r * M / N for r in config.rho)
    R = tuple(math.sqrt(q / Q) for q in range(1, Q + 1))

    floor = beta(1.0 / config.n0, kappa[-1])
    feasible = config.gamma_target >= floor
    if not feasible:
        logger.warning(
            "infeasible plan: gamma_target=%.6g < beta(1/N0, kappa)=%.6g",
            config.gamma_target, floor,
        )
        return PowerPlan(Q, M, N, config.rho, kappa, R, (), (), (), (), False)

    V = [0.0] * Q
    sigma2 = [0.0] * Q
    interference = config.n0
    for q in reversed(range(Q)):
        sigma2[q] = interference
        V[q] = config.gamma_target / beta(1.0 / interference, kappa[q])
        interference += V[q] * M * config.rho[q]

    tx = tuple(r ** config.eta * v for r, v in zip(R, V))
    logger.debug("power levels (dB): %s", ", ".join(f"{to_db(v):.3f}" for v in V))
    return PowerPlan(
        Q=Q, M=M, N=N, rho=config.rho, kappa=kappa, R=R,
        V=tuple(V), sigma2=tuple(sigma2),
        gamma=tuple(1.0 / s for s in sigma2),
        tx=tx, feasible=True,
    )


@dataclass(frozen=True)
class LayerAsymptotics:
    layer: int
    beta: float
    product: float
    fa_threshold: float
    md_threshold: float
    p_fa: float
    p_md: float
    md_bound: float
    cond_vbeta: bool
    cond_v: bool

    @property
    def cond_ok(self):
        return self.cond_vbeta and self.cond_v


@dataclass(frozen=True)
class AsymptoticReport:
    T: int
    layers: tuple


def asymptotic_analysis(plan, T):
    """Asymptotic single-FA and single-MD probabilities of every layer for slot length T."""
    plan.require_feasible()
    layers = []
    for q in range(plan.Q):
        b = beta(plan.gamma[q], plan.kappa[q])
        v = plan.V[q]
        product = v * b
        log_gain = math.log1p(product)
        fa_threshold = (1.0 + b) * log_gain / b
        md_threshold = log_gain / product
        layers.append(LayerAsymptotics(
            layer=q + 1,
            beta=b,
            product=product,
            fa_threshold=fa_threshold,
            md_threshold=md_threshold,
            p_fa=chi2_sf(2 * T, 2 * T * fa_threshold),
            p_md=chi2_cdf(2 * T, 2 * T * md_threshold),
            md_bound=md_tail_bound(T, md_threshold) if md_threshold < 1.0 else 1.0,
            cond_vbeta=product > 1.0,
            cond_v=v >= 1.0,
        ))
    return AsymptoticReport(T=T, layers=tuple(layers))


def mmse_sir(g, G_active, sigma2):
    """gamma g^H (I + gamma G G^H)^{-1} g with gamma = 1/sigma2."""
    g = np.asarray(g)
    gamma = 1.0 / sigma2
    N = g.shape[0]
    gram = np.eye(N) + gamma * (G_active @ G_active.conj().T)
    return float(gamma * np.real(np.vdot(g, linalg.solve(gram, g, assume_a='pos'))))


@dataclass(frozen=True)
class PepReport:
    alpha: float
    alpha_prime: float
    xi: float
    d_fa: float
    d_md: float
    p_fa: float
    p_md: float
    B0: int
    fa_possible: bool = True
    md_possible: bool = True


def pep_probabilities(B0, M, rho, T, V, alpha, alpha_prime,
                      xi_convention='printed', prior='binomial'):
    """Single-flip FA and MD pairwise error probabilities of the MAP detector.

    ``xi_convention='printed'`` scales the FA statistic by alpha/(1+alpha);
    ``'lemma2'`` uses V alpha/(1+V alpha), the coefficient of the quadratic
    form. ``prior='product'`` drops the binomial-coefficient terms.
    """
    if not 0 <= B0 <= M:
        raise PreconditionError(f"B0 must lie in 0..{M}, got {B0}")
    if not 0.0 < rho < 1.0:
        raise PreconditionError(f"access probability must lie in (0, 1), got {rho!r}")
    if alpha <= 0 or alpha_prime <= 0:
        raise PreconditionError("alpha and alpha_prime must be positive")
    if xi_convention not in XI_CONVENTIONS:
        raise PreconditionError(f"unknown xi convention {xi_convention!r}")
    if prior not in PRIORS:
        raise PreconditionError(f"unknown prior {prior!r}")

    xi = alpha / (1.0 + alpha) if xi_convention == 'printed' else V * alpha / (1.0 + V * alpha)
    log_odds = math.log(rho / (1.0 - rho))

    fa_possible = B0 < M
    if fa_possible:
        d_fa = T * math.log1p(V * alpha) - log_odds
        if prior == 'binomial':
            d_fa += math.log((B0 + 1) / (M - B0))
        p_fa = 1.0 if d_fa < 0 else chi2_sf(2 * T, 2.0 * d_fa / xi)
    else:
        d_fa = p_fa = math.nan

    md_possible = B0 > 0
    if md_possible:
        d_md = T * math.log1p(V * alpha_prime) - log_odds
        if prior == 'binomial':
            d_md -= math.log((M - B0 + 1) / B0)
        p_md = 0.0 if d_md < 0 else chi2_cdf(2 * T, 2.0 * d_md / (V * alpha_prime))
    else:
        d_md = p_md = math.nan

    return PepReport(
        alpha=alpha, alpha_prime=alpha_prime, xi=xi,
        d_fa=d_fa, d_md=d_md, p_fa=p_fa, p_md=p_md, B0=B0,
        fa_possible=fa_possible, md_possible=md_possible,
    )
