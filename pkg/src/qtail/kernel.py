"""Construction of the truncated one-step transition matrix over the
small-queue-length states 0, kappa, ..., alpha.

Two builders are provided: a generic one that works for any piecewise policy
and fading model by decomposing the gain axis into the maximal intervals on
which the service is constant, and a closed-form one for the Lyapunov drift
policy under Rayleigh fading where every interval endpoint is explicit.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError
from .models import (ArrivalModel, FadingModel, LyapunovPolicy, PolicySpec,
                     Rayleigh, SystemParams, _lattice_index, policy_eval)
from .tolerances import DEFICIT_TOL, MASS_ACCOUNTING_TOL, ROWSUM_TOL


class KernelKind(enum.Enum):
    RAW_SUBSTOCHASTIC = "RawSubstochastic"
    FCA = "FCA"
    LCA = "LCA"
    MONOTONE_UPPER = "MonotoneUpper"
    MONOTONE_LOWER = "MonotoneLower"


@dataclass(frozen=True)
class TruncatedKernel:
    """(alpha/kappa + 1)-state transition matrix with provenance tag.

    Raw kernels are substochastic (row sums <= 1); every augmented kind must
    have rows summing to 1 within tolerance.
    """

    entries: np.ndarray
    kind: KernelKind
    alpha: float
    kappa: float

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ConfigError("kernel entries must be a square matrix")
        n = _lattice_index(self.alpha, self.kappa, "alpha")
        if m.shape[0] != n + 1:
            raise ConfigError(
                f"kernel dim {m.shape[0]} != alpha/kappa + 1 = {n + 1}")
        if np.any(m < -1e-12) or np.any(m > 1.0 + 1e-12):
            raise NumericError("kernel entries outside [0, 1]")
        rows = m.sum(axis=1)
        if self.kind is KernelKind.RAW_SUBSTOCHASTIC:
            if np.any(rows > 1.0 + 1e-12):
                raise NumericError("substochastic kernel has row sum > 1")
        else:
            if np.any(np.abs(rows - 1.0) > ROWSUM_TOL):
                raise NumericError(
                    f"{self.kind.value} kernel row sums deviate from 1 by "
                    f"{np.max(np.abs(rows - 1.0)):.3e}")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def with_entries(self, entries: np.ndarray, kind: KernelKind) -> "TruncatedKernel":
        return TruncatedKernel(entries=entries, kind=kind, alpha=self.alpha, kappa=self.kappa)


def kernel_mass_deficit(k: TruncatedKernel) -> np.ndarray:
    """Per-row missing mass 1 - row-sum, i.e. the one-step overflow
    probability past alpha."""
    if k.kind is not KernelKind.RAW_SUBSTOCHASTIC:
        raise ConfigError("mass deficit is defined for the raw substochastic kernel")
    deficit = 1.0 - k.entries.sum(axis=1)
    if np.any(deficit < -DEFICIT_TOL):
        raise NumericError(f"row sum exceeds 1 by {-deficit.min():.3e}")
    return np.clip(deficit, 0.0, None)


def build_qaa_generic(pol: PolicySpec, arr: ArrivalModel, fade: FadingModel,
                      params: SystemParams, alpha: float) -> TruncatedKernel:
    """Truncated kernel for an arbitrary piecewise policy.

    For each state the service is a nondecreasing step function of the gain;
    the breakpoints are located by bisection and the exact pdf mass of each
    constant-service interval is accumulated into the arrival-shifted columns.
    """
    kappa = params.kappa_sql
    n = _lattice_index(alpha, kappa, "alpha")
    atoms = [( _lattice_index(k, kappa, f"arrival atom {k}"), p) for k, p in arr.atoms()]
    if math.isfinite(params.s_max_packets):
        _lattice_index(params.s_max_packets, kappa, "s_max_packets")

    dim = n + 1
    mat = np.zeros((dim, dim))
    hi = fade.bisect_hi
    for i in range(dim):
        q = i * kappa
        masses = _service_masses(pol, params, fade, q, kappa, hi)
        total = sum(m for _, m in masses)
        if abs(total - 1.0) > MASS_ACCOUNTING_TOL:
            raise NumericError(
                f"state {i}: service intervals account for mass {total!r}")
        for ku, p in atoms:
            for v, m in masses:
                j = i - v + ku
                if j <= n:
                    mat[i, j] += p * m
    return TruncatedKernel(entries=mat, kind=KernelKind.RAW_SUBSTOCHASTIC,
                           alpha=alpha, kappa=kappa)


def _service_masses(pol, params, fade, q, kappa, hi):
    """[(service lattice units, probability mass)] for one queue state."""
    s_hi = policy_eval(pol, params, q, hi)
    v_top = int(round(s_hi / kappa))
    cuts = [0.0]
    for v in range(1, v_top + 1):
        cuts.append(_service_threshold(pol, params, q, v * kappa, cuts[-1], hi))
    out = []
    for v in range(v_top + 1):
        upper = cuts[v + 1] if v < v_top else math.inf
        m = fade.interval_mass(cuts[v], upper)
        if m > 0.0:
            out.append((v, m))
    return out


def _service_threshold(pol, params, q, target, lo, hi):
    """Smallest gain at which the clamped service reaches ``target``."""
    if policy_eval(pol, params, q, lo) >= target:
        return lo
    a, b = lo, hi
    for _ in range(200):
        mid = 0.5 * (a + b)
        if mid <= a or mid >= b:
            break
        if policy_eval(pol, params, q, mid) >= target:
            b = mid
        else:
            a = mid
    return b


def build_qaa_lyapunov(pol: LyapunovPolicy, params: SystemParams, fade: Rayleigh,
                       alpha: float) -> TruncatedKernel:
    """Closed-form truncated kernel for the drift policy under Rayleigh fading.

    Entry (i, j) is the Rayleigh mass of an explicit union of gain intervals:
    the window where the capacity floor yields exactly i - j + lam/kappa
    packets, the zero-power cell for the no-service transition, and the
    buffer-emptying tail for the reset-to-lam transition.
    """
    if not isinstance(fade, Rayleigh):
        raise ConfigError("closed-form builder requires Rayleigh fading")
    kappa = params.kappa_sql
    n = _lattice_index(alpha, kappa, "alpha")
    lam_u = _lattice_index(pol.lam, kappa, "lam")
    if lam_u > n:
        raise ConfigError("arrival burst exceeds the truncation threshold")
    smax = params.s_max_packets
    if math.isfinite(smax) and smax < alpha:
        raise ConfigError("closed-form builder assumes a non-binding s_max over [0, alpha]")

    # exponent unit: one kappa-packet of capacity in units of the blocklength
    e_unit = kappa * params.packet_bits / params.blocklength
    dim = n + 1
    mat = np.zeros((dim, dim))
    for i in range(dim):
        psi = pol.power_cutoff_gain(params, i * kappa)
        top = 2.0 ** (e_unit * (i + 1))  # capacity floor first exceeds the queue
        for j in range(0, min(i + lam_u, n) + 1):
            mass = 0.0
            units_served = i - j + lam_u
            lo = psi * 2.0 ** (e_unit * units_served)
            up = psi * min(2.0 ** (e_unit * (units_served + 1)), top)
            if up > lo:
                mass += fade.interval_mass(lo, up)
            if j == i + lam_u:
                mass += fade.interval_mass(0.0, psi)
            if j == lam_u:
                mass += fade.interval_mass(psi * top, math.inf)
            if mass < -1e-12:
                raise NumericError(f"negative interval mass at entry ({i}, {j})")
            mat[i, j] = mass
    return TruncatedKernel(entries=mat, kind=KernelKind.RAW_SUBSTOCHASTIC,
                           alpha=alpha, kappa=kappa)


def kernel_to_csv(k: TruncatedKernel) -> str:
    """Row-major CSV with a comment header carrying dim/alpha/kappa/kind."""
    buf = io.StringIO()
    buf.write(f"# dim={k.dim}\n# alpha={k.alpha!r}\n# kappa={k.kappa!r}\n"
              f"# kind={k.kind.value}\n")
    for row in k.entries:
        buf.write(",".join(repr(float(x)) for x in row) + "\n")
    return buf.getvalue()


def kernel_from_csv(text: str) -> TruncatedKernel:
    meta = {}
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            meta[key.strip()] = val.strip()
        else:
            rows.append([float(x) for x in line.split(",")])
    try:
        kind = KernelKind(meta["kind"])
        alpha = float(meta["alpha"])
        kappa = float(meta["kappa"])
        dim = int(meta["dim"])
    except KeyError as exc:
        raise ConfigError(f"kernel CSV is missing header field {exc}") from exc
    mat = np.asarray(rows, dtype=float)
    if mat.shape != (dim, dim):
        raise ConfigError(f"kernel CSV body {mat.shape} does not match dim={dim}")
    return TruncatedKernel(entries=mat, kind=kind, alpha=alpha, kappa=kappa)
