"""Physical/link-layer model, fading and arrival distributions, and
buffer-aware scheduling policies.

Gains and powers are linear (watts) everywhere in this package; dB conversion
happens only at the CLI boundary.  Queue lengths and service amounts are in
packets, and live on a lattice of step ``kappa`` (one kappa per regime).
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
from scipy import integrate

from .errors import ConfigError, DomainError
from .tolerances import PDF_MASS_TOL, PMF_TOL

LOG2_E = math.log2(math.e)

# Rayleigh survival e^{-x/mean} underflows to exact 0.0 past this many means;
# gain intervals beyond carry no float-representable probability.
_RAYLEIGH_HARD_CUT = 746.0


@dataclass(frozen=True)
class SystemParams:
    """Static system parameters of the point-to-point link.

    bandwidth_hz * slot_s is the blocklength; it must be at least 1 for the
    capacity formula to be a meaningful per-slot bit budget.
    """

    bandwidth_hz: float
    slot_s: float
    noise_psd_w_per_hz: float
    packet_bits: float
    s_max_packets: float = math.inf
    kappa_sql: float = 1.0
    kappa_lql: float = 1.0

    def __post_init__(self):
        for name in ("bandwidth_hz", "slot_s", "noise_psd_w_per_hz",
                     "packet_bits", "s_max_packets", "kappa_sql", "kappa_lql"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"SystemParams.{name} must be > 0")
        if self.blocklength < 1:
            raise ConfigError("blocklength B*T must be >= 1")

    @property
    def blocklength(self) -> float:
        return self.bandwidth_hz * self.slot_s

    @property
    def bits_per_packet_unit(self) -> float:
        """Capacity-to-packets conversion: packets per slot = capacity / packet_bits."""
        return self.packet_bits


@dataclass(frozen=True)
class Rayleigh:
    """Exponential channel-power-gain distribution with the given mean."""

    mean_gain: float = 1.0

    def __post_init__(self):
        if not self.mean_gain > 0:
            raise ConfigError("Rayleigh mean_gain must be > 0")

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, np.exp(-x / self.mean_gain) / self.mean_gain, 0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, -np.expm1(-x / self.mean_gain), 0.0)

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, np.exp(-x / self.mean_gain), 1.0)

    def ppf(self, u):
        return -self.mean_gain * np.log1p(-np.asarray(u, dtype=float))

    def interval_mass(self, a: float, b: float) -> float:
        """Probability of the gain falling in [a, b)."""
        a = max(a, 0.0)
        if b <= a:
            return 0.0
        hi = 0.0 if math.isinf(b) else math.exp(-b / self.mean_gain)
        return math.exp(-a / self.mean_gain) - hi

    @property
    def support_hi(self) -> float:
        """1 - 1e-12 quantile, the default truncation for grid evaluations."""
        return -self.mean_gain * math.log(1e-12)

    @property
    def bisect_hi(self) -> float:
        """Gain beyond which the survival function underflows to exact zero."""
        return self.mean_gain * _RAYLEIGH_HARD_CUT

    def expectation(self, fn: Callable[[float], float], points: Sequence[float] = ()) -> float:
        """E[fn(X)] by adaptive quadrature in the normalized variable u = x/mean."""
        g = self.mean_gain
        pts = sorted(p / g for p in points if 0 < p / g < _RAYLEIGH_HARD_CUT)

        def integrand(u):
            return fn(g * u) * math.exp(-u)

        total = 0.0
        edges = [0.0] + pts
        for lo, hi in zip(edges[:-1], edges[1:]):
            total += integrate.quad(integrand, lo, hi, epsabs=1e-14, epsrel=1e-11, limit=200)[0]
        total += integrate.quad(integrand, edges[-1], np.inf,
                                epsabs=1e-14, epsrel=1e-11, limit=200)[0]
        return total


class CustomPdf:
    """Channel-gain distribution given by an arbitrary pdf on (0, support_hi].

    The pdf must integrate to 1 over the truncated support within 1e-8; any
    residual mass is folded into the last integration cell.
    """

    def __init__(self, pdf: Callable[[float], float], support_hi: float):
        if not support_hi > 0:
            raise ConfigError("CustomPdf support_hi must be > 0")
        self._pdf = pdf
        self.support_hi = float(support_hi)
        total = integrate.quad(pdf, 0.0, self.support_hi, epsabs=1e-12, limit=400)[0]
        if abs(total - 1.0) > PDF_MASS_TOL:
            raise ConfigError(f"custom pdf mass {total!r} differs from 1 beyond {PDF_MASS_TOL}")
        self._residual = max(0.0, 1.0 - total)

    def pdf(self, x):
        return self._pdf(x)

    def interval_mass(self, a: float, b: float) -> float:
        a = max(a, 0.0)
        if b <= a:
            return 0.0
        hi = min(b, self.support_hi)
        mass = 0.0
        if hi > a:
            mass = integrate.quad(self._pdf, a, hi, epsabs=1e-13, limit=200)[0]
        if b >= self.support_hi:
            mass += self._residual
        return mass

    def cdf(self, x):
        return self.interval_mass(0.0, float(x))

    def sf(self, x):
        return self.interval_mass(float(x), math.inf)

    @property
    def bisect_hi(self) -> float:
        return self.support_hi

    def expectation(self, fn: Callable[[float], float], points: Sequence[float] = ()) -> float:
        pts = sorted(p for p in points if 0 < p < self.support_hi)

        def integrand(x):
            return fn(x) * self._pdf(x)

        total = 0.0
        edges = [0.0] + pts + [self.support_hi]
        for lo, hi in zip(edges[:-1], edges[1:]):
            total += integrate.quad(integrand, lo, hi, epsabs=1e-14, epsrel=1e-11, limit=200)[0]
        return total + self._residual * fn(self.support_hi)


FadingModel = Union[Rayleigh, CustomPdf]


@dataclass(frozen=True)
class DeterministicArrivals:
    """Fixed number of packets arriving every slot."""

    lam: float

    def __post_init__(self):
        if self.lam < 0 or self.lam != math.floor(self.lam):
            raise ConfigError("deterministic arrival rate must be a nonnegative integer")

    @property
    def mean(self) -> float:
        return float(self.lam)

    @property
    def a_max(self) -> int:
        return int(self.lam)

    def atoms(self):
        return ((int(self.lam), 1.0),)


@dataclass(frozen=True)
class PmfArrivals:
    """Arrival counts distributed on {0..a_max} with the given pmf."""

    probs: tuple

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ConfigError("arrival pmf must be a nonempty 1-d sequence")
        if np.any(p < 0):
            raise ConfigError("arrival pmf entries must be nonnegative")
        if abs(p.sum() - 1.0) > PMF_TOL:
            raise ConfigError(f"arrival pmf sums to {p.sum()!r}, not 1")
        object.__setattr__(self, "probs", tuple(float(x) for x in p))

    @property
    def mean(self) -> float:
        return float(sum(k * p for k, p in enumerate(self.probs)))

    @property
    def a_max(self) -> int:
        return len(self.probs) - 1

    def atoms(self):
        return tuple((k, p) for k, p in enumerate(self.probs) if p > 0.0)


ArrivalModel = Union[DeterministicArrivals, PmfArrivals]


@dataclass(frozen=True)
class PolicySpec:
    """Piecewise buffer-aware scheduling map.

    ``thresholds`` are the strictly increasing queue-length breakpoints
    zeta_1..zeta_K; ``segments`` holds K+1 rate maps gain -> service packets,
    one per interval [zeta_k, zeta_{k+1}) with zeta_0 = 0 and zeta_{K+1} = inf.
    Rate maps must be nondecreasing in the gain and already quantized to the
    lattice they are meant for; the queue/S_max clamp is applied at evaluation.
    """

    thresholds: tuple
    segments: tuple

    def __post_init__(self):
        th = tuple(float(t) for t in self.thresholds)
        if any(t < 0 for t in th):
            raise ConfigError("policy thresholds must be nonnegative")
        if any(b <= a for a, b in zip(th[:-1], th[1:])):
            raise ConfigError("policy thresholds must be strictly increasing")
        if len(self.segments) != len(th) + 1:
            raise ConfigError("need exactly one rate map per queue segment (K+1)")
        object.__setattr__(self, "thresholds", th)
        object.__setattr__(self, "segments", tuple(self.segments))

    def segment_index(self, q: float) -> int:
        """Index k of the segment containing q; boundaries belong to the upper segment."""
        return bisect_right(self.thresholds, q)

    def rate_map(self, q: float) -> Callable[[float], float]:
        return self.segments[self.segment_index(q)]


@dataclass(frozen=True)
class LyapunovPolicy:
    """Drift-based power control: the power grows linearly with the
    delta-quantized queue length, scaled by 1/V, with a positive-part clamp.
    """

    v_param: float
    delta: int
    lam: float

    def __post_init__(self):
        if not self.v_param > 0:
            raise ConfigError("LyapunovPolicy v_param must be > 0")
        if self.delta < 1 or int(self.delta) != self.delta:
            raise ConfigError("LyapunovPolicy delta must be a positive integer")
        if self.lam < 0:
            raise ConfigError("LyapunovPolicy lam must be >= 0")

    def drive(self, q: float) -> float:
        """Quantized backlog term floor(q/delta)*delta + lam driving the power."""
        return math.floor(q / self.delta) * self.delta + self.lam

    def power_cutoff_gain(self, params: SystemParams, q: float) -> float:
        """Gain below which the transmit power (and hence the rate) is zero."""
        return (params.noise_psd_w_per_hz * self.v_param * params.packet_bits
                / (2.0 * params.slot_s * self.drive(q)))


def capacity(params: SystemParams, gain: float, snr_norm: float) -> float:
    """Shannon bits per slot at the given channel power gain and normalized power."""
    return params.blocklength * math.log2(1.0 + gain * snr_norm)


def service_packets(params: SystemParams, q: float, cap_bits: float, kappa: float) -> float:
    """Packets sent in one slot: the capacity budget floored to the kappa
    lattice, clamped by the queue content and the transmitter limit."""
    budget = math.floor(cap_bits / (kappa * params.packet_bits)) * kappa
    return min(q, budget, params.s_max_packets)


def lyapunov_power(pol: LyapunovPolicy, params: SystemParams, q: float, gain: float) -> float:
    """Transmit power (watts) of the drift policy at queue q and channel gain."""
    if gain <= 0:
        raise DomainError("lyapunov_power requires gain > 0")
    coef = 2.0 * params.blocklength / (pol.v_param * params.packet_bits)
    p = coef * pol.drive(q) - params.noise_psd_w_per_hz * params.bandwidth_hz / gain
    return max(p, 0.0)


def policy_eval(pol: PolicySpec, params: SystemParams, q: float, gain: float) -> float:
    """Service packets for queue q and gain: the active segment's rate map,
    clamped to [0, min(q, S_max)]."""
    s = pol.rate_map(q)(gain)
    return min(max(s, 0.0), q, params.s_max_packets)


def lyapunov_rate_map(pol: LyapunovPolicy, params: SystemParams, block: int,
                      kappa: float) -> Callable[[float], float]:
    """Rate map of the drift policy frozen on the queue block
    [block*delta, (block+1)*delta): kappa-floored capacity packets.

    The returned callable carries its zero-power gain cutoff in ``.cutoff``
    (the integrand kink used by quadrature).
    """
    drive = block * pol.delta + pol.lam
    psi = (params.noise_psd_w_per_hz * pol.v_param * params.packet_bits
           / (2.0 * params.slot_s * drive))
    n_over_ka = params.blocklength / (kappa * params.packet_bits)

    def rate(gain: float) -> float:
        if gain <= psi:
            return 0.0
        return math.floor(n_over_ka * math.log2(gain / psi)) * kappa

    rate.cutoff = psi
    return rate


def lyapunov_segment_rate(pol: LyapunovPolicy, params: SystemParams,
                          omega: int) -> Callable[[float], float]:
    """Quantization-free rate map of the drift policy frozen at backlog
    omega*delta: capacity packets without the lattice floor.  Used for
    effective-capacity integrals in the large-queue regime."""
    drive = omega * pol.delta + pol.lam
    psi = (params.noise_psd_w_per_hz * pol.v_param * params.packet_bits
           / (2.0 * params.slot_s * drive))
    n_over_a = params.blocklength / params.packet_bits

    def rate(gain: float) -> float:
        if gain <= psi:
            return 0.0
        return n_over_a * math.log2(gain / psi)

    rate.cutoff = psi
    return rate


def lyapunov_as_policy(pol: LyapunovPolicy, params: SystemParams, kappa: float,
                       q_max: float) -> PolicySpec:
    """Wrap the drift policy as an explicit piecewise map valid on [0, q_max].

    Thresholds sit at every multiple of delta up to q_max, so each segment's
    rate map is queue-independent.
    """
    blocks = int(math.floor(q_max / pol.delta)) + 1
    thresholds = tuple(float(m * pol.delta) for m in range(1, blocks))
    segments = tuple(lyapunov_rate_map(pol, params, m, kappa) for m in range(blocks))
    return PolicySpec(thresholds=thresholds, segments=segments)


def threshold_property_check(pol: PolicySpec, params: SystemParams, alpha: float,
                             gains: Sequence[float]) -> bool:
    """True iff the service map steps by exactly 0 or kappa between adjacent
    lattice queue states, at every supplied gain.

    This is the structural precondition under which last-column augmentation
    is already stochastically monotone.
    """
    gains = np.atleast_1d(np.asarray(gains, dtype=float))
    if gains.size == 0:
        raise DomainError("threshold_property_check needs a nonempty gain grid")
    kappa = params.kappa_sql
    n = _lattice_index(alpha, kappa, "alpha")
    tol = 1e-9 * max(1.0, kappa)
    for m in range(n):
        q_lo, q_hi = m * kappa, (m + 1) * kappa
        for g in gains:
            d = policy_eval(pol, params, q_hi, g) - policy_eval(pol, params, q_lo, g)
            if not (abs(d) <= tol or abs(d - kappa) <= tol):
                return False
    return True


def path_loss_mean_gain(distance_m: float, carrier_ghz: float) -> float:
    """Mean channel power gain from the urban-microcell path-loss fit
    (non-line-of-sight), distance in meters and carrier in GHz.

    The unit convention is documented, not asserted: treat the result as a
    convenience default and prefer configuring the mean gain directly.
    """
    if distance_m <= 0 or carrier_ghz <= 0:
        raise DomainError("distance and carrier frequency must be > 0")
    db = -36.7 * math.log10(distance_m) - 22.7 - 26.0 * math.log10(carrier_ghz)
    return 10.0 ** (db / 10.0)


def _lattice_index(value: float, kappa: float, name: str) -> int:
    """value/kappa as an exact integer, or ConfigError."""
    idx = value / kappa
    n = round(idx)
    if abs(idx - n) > 1e-9:
        raise ConfigError(f"{name}={value!r} is not a multiple of kappa={kappa!r}")
    return int(n)
