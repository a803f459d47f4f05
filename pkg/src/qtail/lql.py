"""Large-queue-regime machinery: effective bandwidth and capacity, QoS
exponents, the Rayleigh/drift closed form, and piecewise tail assembly.

All decay exponents are per packet of queue length.  The closed-form
effective capacity is evaluated in the gain variable normalized by the mean
channel gain, which reduces the defining integral to an upper incomplete
gamma function with (generally negative) first argument.
"""

from __future__ import annotations

import enum
import math
from bisect import bisect_left
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .augment import SqlBounds
from .errors import ConfigError, DomainError, NoRootError, NumericError, UnstableError
from .models import (ArrivalModel, DeterministicArrivals, FadingModel,
                     LyapunovPolicy, Rayleigh, SystemParams, LOG2_E,
                     lyapunov_segment_rate)
from .tolerances import QOS_RESIDUAL_TOL, TAIL_UNDERFLOW


class ThetaMethod(enum.Enum):
    BINARY_SEARCH = "BinarySearch"
    THEOREM6 = "Theorem6"
    COROLLARY1 = "Corollary1"
    LOOSE = "Loose"


@dataclass(frozen=True)
class QosExponent:
    theta: float
    residual: float
    method: ThetaMethod


def effective_bandwidth(arr: ArrivalModel, theta: float) -> float:
    """Log-moment rate of the arrival process at decay parameter theta."""
    if theta <= 0:
        raise DomainError("effective_bandwidth requires theta > 0")
    if isinstance(arr, DeterministicArrivals):
        return float(arr.lam)
    logits = [math.log(p) + theta * k for k, p in arr.atoms()]
    return special.logsumexp(logits) / theta


def effective_capacity(rate_map: Callable[[float], float], fade: FadingModel,
                       theta: float) -> float:
    """-(1/theta) log E[exp(-theta * service)] for a queue-independent rate map.

    Quadrature splits at the rate map's power cutoff (attribute ``cutoff``)
    where the integrand has a kink.
    """
    if theta <= 0:
        raise DomainError("effective_capacity requires theta > 0")
    points = []
    cutoff = getattr(rate_map, "cutoff", None)
    if cutoff is not None:
        points.append(cutoff)
    val = fade.expectation(lambda x: math.exp(-theta * rate_map(x)), points=points)
    if not 0.0 < val <= 1.0 + 1e-9:
        raise NumericError(f"effective-capacity integrand mass {val!r} outside (0, 1]")
    return max(0.0, -math.log(min(val, 1.0)) / theta)


def gamma_upper_product(phi: float, x: float) -> float:
    """x**phi * Gamma(1 - phi, x) for x > 0, stable for large positive phi.

    For moderate x the negative-argument incomplete gamma is reduced by the
    downward recurrence Gamma(s-1, x) = (Gamma(s, x) - x**(s-1) e**-x)/(s-1),
    carried out on the x**phi-scaled quantity so every inhomogeneous term is
    a bounded power of x.  Integer 1 - phi <= 0 lands on the exponential
    integral, so the combined expression has no poles.  For large x the
    recurrence cancels badly and the evaluation switches to the standard
    continued fraction, which converges fast there for any real order.
    """
    if x <= 0:
        raise DomainError("gamma_upper_product requires x > 0")
    s0 = 1.0 - phi
    if s0 > 0:
        return math.exp(phi * math.log(x)) * special.gammaincc(s0, x) * special.gamma(s0)
    if x >= 10.0 and x >= 0.25 * (-s0):
        return _gamma_product_cf(s0, x)
    if abs(s0 - round(s0)) < 1e-12:
        m = int(-round(s0))
        g = math.exp(phi * math.log(x)) * special.exp1(x)
    else:
        m = int(math.ceil(-s0))
        s_top = s0 + m
        g = (math.exp(phi * math.log(x)) * special.gammaincc(s_top, x)
             * special.gamma(s_top))
    ex = math.exp(-x)
    for j in range(m, 0, -1):
        g = (g - x ** j * ex) / (s0 + j - 1.0)
    if not math.isfinite(g):
        raise NumericError(f"incomplete-gamma recurrence overflowed at phi={phi}, x={x}")
    return g


def _gamma_product_cf(s: float, x: float) -> float:
    """x**(1-s) * Gamma(s, x) by the modified-Lentz continued fraction."""
    tiny = 1e-300
    b = x + 1.0 - s
    c = 1.0 / tiny
    d = 1.0 / b if b != 0.0 else 1.0 / tiny
    h = d
    for i in range(1, 10000):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    else:
        raise NumericError(f"incomplete-gamma continued fraction stalled at s={s}, x={x}")
    return x * math.exp(-x) * h


def psi_norm(pol: LyapunovPolicy, params: SystemParams, fade: Rayleigh,
             omega: int) -> float:
    """Zero-power cutoff of the segment frozen at backlog omega*delta, in
    units of the mean channel gain."""
    if omega < 1:
        raise ConfigError("omega must be a positive integer")
    drive = omega * pol.delta + pol.lam
    return (params.noise_psd_w_per_hz * pol.v_param * params.packet_bits
            / (2.0 * params.slot_s * drive * fade.mean_gain))


def ec_lyapunov_rayleigh(pol: LyapunovPolicy, params: SystemParams, fade: Rayleigh,
                         omega: int, theta: float) -> float:
    """Closed-form effective capacity of the drift policy's segment at
    backlog omega*delta under Rayleigh fading, with the capacity floor
    replaced by the identity."""
    if theta <= 0:
        raise DomainError("ec_lyapunov_rayleigh requires theta > 0")
    psi = psi_norm(pol, params, fade, omega)
    phi = params.blocklength / params.packet_bits * theta * LOG2_E
    val = -math.expm1(-psi) + gamma_upper_product(phi, psi)
    if not val > 0 or math.isnan(val):
        raise NumericError(f"closed-form EC produced nonpositive mass {val!r}")
    return max(0.0, -math.log(min(val, 1.0)) / theta)


def solve_qos_exponent(ec: Callable[[float], float], eb: Callable[[float], float],
                       theta_lo: float = 1e-8, theta_cap: float = 1e6,
                       max_iter: int = 200) -> QosExponent:
    """Root of EC(theta) = EB(theta) by bracket expansion and bisection.

    The gap EC - EB is scanned from theta_lo with doubling steps until it
    changes sign.  A gap that never crosses zero means either the segment
    never binds (EC above EB everywhere) or the segment is unstable (EB above
    EC everywhere, i.e. mean service does not exceed mean arrivals).
    """
    gap = lambda t: ec(t) - eb(t)
    g_lo = gap(theta_lo)
    if g_lo == 0.0:
        return QosExponent(theta=theta_lo, residual=0.0, method=ThetaMethod.BINARY_SEARCH)
    lo, hi = theta_lo, max(1.0, 2.0 * theta_lo)
    g_hi = gap(hi)
    while g_hi * g_lo > 0 and hi < theta_cap:
        lo, g_lo_prev = hi, g_hi
        hi *= 2.0
        g_lo = g_lo_prev
        g_hi = gap(hi)
    if g_hi * g_lo > 0:
        if g_hi > 0:
            raise NoRootError(
                f"EC exceeds EB on the whole bracket (gap {g_hi:.3e} at theta={hi:.3e}); "
                "the segment never binds")
        raise UnstableError(
            f"EB exceeds EC on the whole bracket (gap {g_hi:.3e} at theta={hi:.3e}); "
            "mean service does not exceed mean arrivals")
    theta, g_mid = hi, g_hi
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        g_mid = gap(mid)
        theta = mid
        if abs(g_mid) <= QOS_RESIDUAL_TOL:
            break
        if g_mid * g_lo > 0:
            lo, g_lo = mid, g_mid
        else:
            hi = mid
    if abs(g_mid) > QOS_RESIDUAL_TOL:
        raise NumericError(f"QoS bisection stalled with residual {abs(g_mid):.3e}")
    return QosExponent(theta=theta, residual=abs(g_mid), method=ThetaMethod.BINARY_SEARCH)


def solve_theta_theorem6(pol: LyapunovPolicy, params: SystemParams, fade: Rayleigh,
                         omega: int, arr: ArrivalModel) -> QosExponent:
    """QoS exponent from the closed-form effective capacity."""
    root = solve_qos_exponent(
        lambda t: ec_lyapunov_rayleigh(pol, params, fade, omega, t),
        lambda t: effective_bandwidth(arr, t))
    return QosExponent(theta=root.theta, residual=root.residual,
                       method=ThetaMethod.THEOREM6)


def corollary1_theta(psi: float, lam: float, bt_over_a_log2e: float,
                     upsilon: float = 0.5, max_iter: int = 200) -> QosExponent:
    """Root of theta - (1/lam) log(1 - 1/(bt_over_a_log2e * theta)) =
    -(1/lam) log(psi), the small-psi reduction of the closed-form equation.

    The bracket is [max(lower-domain edge, upsilon * loose), loose] where
    loose = -(1/lam) log(psi); upsilon = 0.5 keeps the bracket valid well
    outside the asymptotic regime at the cost of a few extra bisections.
    """
    if psi <= 0 or lam <= 0 or bt_over_a_log2e <= 0:
        raise DomainError("corollary1_theta requires positive psi, lam, and rate factor")
    upper = -math.log(psi) / lam
    lower = max((1.0 + 1e-9) / bt_over_a_log2e, upsilon * upper)
    if not lower < upper:
        raise NoRootError(f"corollary bracket empty: psi={psi!r} too large")

    def gap(t):
        return t - math.log1p(-1.0 / (bt_over_a_log2e * t)) / lam + math.log(psi) / lam

    g_lo, g_hi = gap(lower), gap(upper)
    if g_lo > 0 or g_hi < 0:
        raise NoRootError(
            f"no sign change on corollary bracket [{lower:.6g}, {upper:.6g}]")
    lo, hi = lower, upper
    theta, g_mid = lo, g_lo
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        g_mid = gap(mid)
        theta = mid
        if abs(g_mid) <= QOS_RESIDUAL_TOL:
            break
        if g_mid < 0:
            lo = mid
        else:
            hi = mid
    return QosExponent(theta=theta, residual=abs(g_mid), method=ThetaMethod.COROLLARY1)


def loose_theta(psi: float, lam: float) -> QosExponent:
    """Zeroth-order approximation -(1/lam) log(psi)."""
    if psi <= 0 or lam <= 0:
        raise DomainError("loose_theta requires positive psi and lam")
    return QosExponent(theta=-math.log(psi) / lam, residual=math.nan,
                       method=ThetaMethod.LOOSE)


@dataclass(frozen=True)
class TailApprox:
    """Piecewise log-linear tail beyond alpha, anchored on the lattice curves.

    ``boundaries`` lists the segment starts zeta_{K-l+1} = alpha, ...; segment
    k applies exponent thetas[k] on (boundaries[k], boundaries[k+1]].  Anchor
    probabilities chain multiplicatively across segments for both families.
    """

    sql: SqlBounds
    boundaries: tuple
    thetas: tuple
    anchors_u: tuple
    anchors_l: tuple

    @property
    def alpha(self) -> float:
        return self.boundaries[0]

    def eval_upper(self, q: float) -> float:
        return self._eval(q, self.sql.eps_upper, self.anchors_u)

    def eval_lower(self, q: float) -> float:
        return self._eval(q, self.sql.eps_lower, self.anchors_l)

    def log_eval_upper(self, q: float) -> float:
        return self._log_eval(q, self.sql.eps_upper, self.anchors_u)

    def log_eval_lower(self, q: float) -> float:
        return self._log_eval(q, self.sql.eps_lower, self.anchors_l)

    def decay_between(self, q_from: float, q_to: float) -> float:
        """Sum of theta * length over (q_from, q_to], chained across segments."""
        if q_to < q_from:
            raise DomainError("decay_between needs q_to >= q_from")
        lo = max(q_from, self.alpha)
        total = 0.0
        for k, theta in enumerate(self.thetas):
            seg_lo = self.boundaries[k]
            seg_hi = self.boundaries[k + 1] if k + 1 < len(self.boundaries) else math.inf
            a = max(lo, seg_lo)
            b = min(q_to, seg_hi)
            if b > a:
                total += theta * (b - a)
        return total

    def _sql_value(self, q: float, curve: np.ndarray) -> float:
        j = int(math.ceil(q / self.sql.kappa - 1e-12))
        return float(curve[max(j, 0)])

    def _eval(self, q: float, curve, anchors) -> float:
        if q <= self.alpha:
            return self._sql_value(q, curve)
        val = math.exp(self._log_eval(q, curve, anchors))
        return 0.0 if val < TAIL_UNDERFLOW else val

    def _log_eval(self, q: float, curve, anchors) -> float:
        if q <= self.alpha:
            v = self._sql_value(q, curve)
            return math.log(v) if v > 0 else -math.inf
        k = bisect_left(self.boundaries, q) - 1
        k = min(max(k, 0), len(self.thetas) - 1)
        anchor = anchors[k]
        if anchor <= 0:
            return -math.inf
        return math.log(anchor) - self.thetas[k] * (q - self.boundaries[k])


def assemble_tail(sql: SqlBounds, segments: Sequence, alpha: float) -> TailApprox:
    """Chain per-segment exponents onto the lattice curves.

    ``segments`` is a sequence of (zeta_k, theta_k) pairs with the first
    boundary equal to alpha; anchors for interior boundaries are generated
    multiplicatively from the preceding segment.
    """
    if not segments:
        raise ConfigError("assemble_tail needs at least one segment")
    bounds = tuple(float(z) for z, _ in segments)
    thetas = tuple(float(t) for _, t in segments)
    if abs(bounds[0] - alpha) > 1e-9:
        raise ConfigError(f"first segment boundary {bounds[0]!r} must equal alpha={alpha!r}")
    if any(b <= a for a, b in zip(bounds[:-1], bounds[1:])):
        raise ConfigError("segment boundaries must be strictly increasing")
    if any(not math.isfinite(t) or t <= 0 for t in thetas):
        raise ConfigError("every segment needs a finite positive theta")
    anchors_u = [sql.psi_u]
    anchors_l = [sql.psi_l]
    for k in range(len(bounds) - 1):
        step = math.exp(-thetas[k] * (bounds[k + 1] - bounds[k]))
        anchors_u.append(anchors_u[-1] * step)
        anchors_l.append(anchors_l[-1] * step)
    return TailApprox(sql=sql, boundaries=bounds, thetas=thetas,
                      anchors_u=tuple(anchors_u), anchors_l=tuple(anchors_l))


def gev_tail(xi: float, mu: float, sigma: float, z: float) -> float:
    """Generalized-extreme-value CDF P{M <= z}."""
    if sigma <= 0:
        raise DomainError("gev_tail requires sigma > 0")
    if xi == 0.0:
        return math.exp(-math.exp(-(z - mu) / sigma))
    t = 1.0 + xi * (z - mu) / sigma
    if t <= 0:
        return 0.0 if xi > 0 else 1.0
    return math.exp(-t ** (-1.0 / xi))


def gev_exceedance(xi: float, mu: float, sigma: float, z: float) -> float:
    """Complement 1 - CDF, the tail-probability form."""
    if sigma <= 0:
        raise DomainError("gev_exceedance requires sigma > 0")
    if xi == 0.0:
        return -math.expm1(-math.exp(-(z - mu) / sigma))
    t = 1.0 + xi * (z - mu) / sigma
    if t <= 0:
        return 1.0 if xi > 0 else 0.0
    return -math.expm1(-t ** (-1.0 / xi))


def gpd_tail(xi_t: float, sigma_t: float, y: float) -> float:
    """Generalized-Pareto exceedance P{Y > y | over threshold}."""
    if sigma_t <= 0:
        raise DomainError("gpd_tail requires sigma_t > 0")
    if xi_t < 0:
        raise DomainError("negative shape is out of scope (bounded support)")
    if y < 0:
        raise DomainError("gpd_tail requires y >= 0")
    if xi_t == 0.0:
        return math.exp(-y / sigma_t)
    return (1.0 + xi_t * y / sigma_t) ** (-1.0 / xi_t)
