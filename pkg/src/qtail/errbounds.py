"""Closed-form bounds on the accumulated decay-rate error of censoring.

The accumulated error is the l1 distance between the log tail curves of the
full chain and its censored restriction to [0, alpha].  For tails of
log-linear, Pareto-over-threshold, or extreme-value form, its large-alpha
limit admits the closed-form bounds implemented here; the numeric
``accumulated_error`` and its decomposition validate them on synthetic
chains.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .augment import censored_stationary_oracle
from .errors import ConfigError, DomainError


class BoundRegime(enum.Enum):
    LDT_GENERAL_P = "LdtGeneralP"
    LDT_P0 = "LdtP0"
    GPD_XI0 = "GpdXi0"
    GPD_XI_POS = "GpdXiPos"
    GEV_XI_01 = "GevXi01"
    GEV_XI_1 = "GevXi1"
    GEV_XI_0 = "GevXi0"
    GEV_XI_GT1 = "GevXiGt1"


@dataclass(frozen=True)
class ErrorBoundReport:
    """Lower/upper bounds on the limiting accumulated error.

    ``unbounded`` regimes carry no finite upper bound; ``upper`` is None
    there rather than an infinity that could leak into arithmetic.
    """

    regime: BoundRegime
    lower: float
    upper: Optional[float]
    params: dict

    @property
    def unbounded(self) -> bool:
        return self.upper is None

    def __post_init__(self):
        if self.upper is not None and self.lower > self.upper:
            raise ConfigError("bound report with lower > upper")


def ldt_bounds(theta: float, p: float) -> ErrorBoundReport:
    """Bounds for tails exp(-theta*q + b*q**p): the pure-exponential case
    p = 0 also has a positive lower bound."""
    if theta <= 0:
        raise DomainError("ldt_bounds requires theta > 0")
    if p >= 1:
        raise DomainError("ldt_bounds requires p < 1")
    upper = 1.0 / (math.expm1(theta) * -math.expm1(-theta))
    if p == 0:
        return ErrorBoundReport(regime=BoundRegime.LDT_P0,
                                lower=1.0 / math.expm1(theta), upper=upper,
                                params={"theta": theta, "p": p})
    return ErrorBoundReport(regime=BoundRegime.LDT_GENERAL_P, lower=0.0,
                            upper=upper, params={"theta": theta, "p": p})


def gpd_bounds(xi_t: float, sigma_t: float) -> ErrorBoundReport:
    """Bounds for Pareto-over-threshold tails; heavy tails (positive shape)
    make the accumulated error unbounded."""
    if sigma_t <= 0:
        raise DomainError("gpd_bounds requires sigma_t > 0")
    if xi_t < 0:
        raise DomainError("negative shape is out of scope (bounded support)")
    if xi_t > 0:
        return ErrorBoundReport(regime=BoundRegime.GPD_XI_POS, lower=0.0,
                                upper=None, params={"xi_t": xi_t, "sigma_t": sigma_t})
    inner = ldt_bounds(1.0 / sigma_t, 0.0)
    return ErrorBoundReport(regime=BoundRegime.GPD_XI0, lower=inner.lower,
                            upper=inner.upper, params={"xi_t": xi_t, "sigma_t": sigma_t})


def gev_bounds(xi: float, mu: float, sigma: float) -> ErrorBoundReport:
    """Bounds for extreme-value tails 1 - exp(-(1 + xi(y-mu)/sigma)**(-1/xi))."""
    if sigma <= 0:
        raise DomainError("gev_bounds requires sigma > 0")
    if xi < 0:
        raise DomainError("negative shape is out of scope (bounded support)")
    params = {"xi": xi, "mu": mu, "sigma": sigma}
    if xi > 1:
        return ErrorBoundReport(regime=BoundRegime.GEV_XI_GT1, lower=0.0,
                                upper=None, params=params)
    if xi == 1:
        return ErrorBoundReport(regime=BoundRegime.GEV_XI_1, lower=0.0,
                                upper=sigma + sigma * sigma, params=params)
    if xi > 0:
        return ErrorBoundReport(regime=BoundRegime.GEV_XI_01, lower=0.0,
                                upper=sigma * sigma / xi, params=params)
    upper = math.exp(-(1.0 - mu) / sigma) / -math.expm1(-1.0 / sigma)
    return ErrorBoundReport(regime=BoundRegime.GEV_XI_0, lower=0.0,
                            upper=upper, params=params)


def _tail_sums(pi: np.ndarray) -> np.ndarray:
    return np.cumsum(pi[::-1])[::-1]


def _validated(pi_full, alpha: int):
    pi = np.asarray(pi_full, dtype=float)
    if pi.ndim != 1 or alpha < 1 or alpha >= pi.size:
        raise DomainError("need a 1-d pmf extending strictly past alpha")
    if abs(pi.sum() - 1.0) > 1e-8:
        raise DomainError("pi_full must sum to 1")
    tails = _tail_sums(pi)
    if np.any(tails[1:alpha + 1] <= 0):
        raise DomainError("tail sums vanish inside [1, alpha]")
    return pi, tails


def accumulated_error(pi_full, alpha: int) -> float:
    """Sum over k < alpha of |log tail(k+1) - log censored-tail(k+1)|."""
    pi, tails = _validated(pi_full, alpha)
    cens = censored_stationary_oracle(pi, alpha)
    cens_tails = _tail_sums(cens)
    total = 0.0
    for k in range(alpha):
        total += abs(math.log(tails[k + 1]) - math.log(cens_tails[k + 1]))
    return total


def iota_decomposition(pi_full, alpha: int):
    """Split of the accumulated error: iota1 = alpha*log(1 - tail mass) <= 0,
    iota2 = the log-ratio sum >= 0, with its elementary comparators
    chi1 <= iota2 <= chi2.

    The identity accumulated_error = iota1 + iota2 holds because censoring
    never increases tail sums, so every summand keeps the same sign.
    """
    pi, tails = _validated(pi_full, alpha)
    t = float(tails[alpha + 1]) if alpha + 1 < tails.size else 0.0
    if t == 0.0:
        return 0.0, 0.0, 0.0, 0.0
    iota1 = alpha * math.log1p(-t)
    iota2 = 0.0
    chi1 = 0.0
    chi2 = 0.0
    for k in range(alpha):
        tk = float(tails[k + 1])
        iota2 += math.log1p(t / (tk - t))
        chi1 += t / tk
        chi2 += t / (tk - t)
    return iota1, iota2, chi1, chi2


def pmf_from_qvp(qvp: Callable[[int], float], n: int) -> np.ndarray:
    """Probability vector on {0..n} whose violation curve P{q > k} matches
    ``qvp`` for k < n; the residual tail mass is folded into state n.

    Differencing a specified curve guarantees the synthetic chain conforms
    exactly to the assumed tail shape.
    """
    if n < 1:
        raise DomainError("need at least two states")
    eps = np.array([qvp(k) for k in range(n)], dtype=float)
    if np.any(eps < 0) or np.any(eps > 1):
        raise DomainError("qvp values must lie in [0, 1]")
    if np.any(np.diff(eps) > 0):
        raise DomainError("qvp curve must be nonincreasing")
    pi = np.empty(n + 1)
    pi[0] = 1.0 - eps[0]
    pi[1:n] = eps[:-1] - eps[1:]
    pi[n] = eps[-1]
    return pi
