"""Augmentations of the truncated kernel and the small-queue-regime bounds.

The missing row mass of the raw kernel is redirected to the first or last
column (buffer-flush / packet-drop extremes), the augmented kernels are
wrapped in stochastically monotone envelopes, and the stationary laws of the
envelopes give the upper/lower tail curves on [0, alpha].
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, OrderingViolation, SolverError
from .kernel import KernelKind, TruncatedKernel, kernel_mass_deficit
from .tolerances import (CURVE_ORDER_TOL, ORDER_TOL, ROWSUM_TOL,
                         STATIONARY_RESIDUAL_TOL)


class Ordering(enum.Enum):
    LESS_EQUAL = "<=st"
    GREATER_EQUAL = ">=st"
    EQUAL = "equal"
    INCOMPARABLE = "incomparable"


@dataclass(frozen=True)
class StationaryDist:
    """Stationary probability vector together with the kernel kind it solves."""

    probs: np.ndarray
    source: KernelKind

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float).copy()
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    def tail_sums(self) -> np.ndarray:
        """T[j] = P{state >= j}; T[0] = 1."""
        return np.cumsum(self.probs[::-1])[::-1]


@dataclass(frozen=True)
class SqlBounds:
    """Upper/lower approximations of P{q >= j} on the lattice j = 0..alpha/kappa."""

    eps_upper: np.ndarray
    eps_lower: np.ndarray
    alpha: float
    kappa: float

    @property
    def psi_u(self) -> float:
        return float(self.eps_upper[-1])

    @property
    def psi_l(self) -> float:
        return float(self.eps_lower[-1])


def last_column_augment(k: TruncatedKernel) -> TruncatedKernel:
    """Redirect each row's deficit to the highest state (drop excess packets)."""
    deficit = kernel_mass_deficit(k)
    m = k.entries.copy()
    m[:, -1] += deficit
    return k.with_entries(m, KernelKind.LCA)


def first_column_augment(k: TruncatedKernel) -> TruncatedKernel:
    """Redirect each row's deficit to the empty state (flush the buffer)."""
    deficit = kernel_mass_deficit(k)
    m = k.entries.copy()
    m[:, 0] += deficit
    return k.with_entries(m, KernelKind.FCA)


def st_compare_rows(u, v, tol: float = ORDER_TOL) -> Ordering:
    """Strong stochastic order between two distributions via tail sums."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.ndim != 1:
        raise ConfigError("st_compare_rows needs two equal-length vectors")
    for w in (u, v):
        if abs(w.sum() - 1.0) > 1e-8:
            raise ConfigError("st_compare_rows operands must be probability vectors")
    tu = np.cumsum(u[::-1])[::-1]
    tv = np.cumsum(v[::-1])[::-1]
    leq = bool(np.all(tu <= tv + tol))
    geq = bool(np.all(tv <= tu + tol))
    if leq and geq:
        return Ordering.EQUAL
    if leq:
        return Ordering.LESS_EQUAL
    if geq:
        return Ordering.GREATER_EQUAL
    return Ordering.INCOMPARABLE


def is_stochastically_monotone(k: TruncatedKernel, tol: float = ORDER_TOL) -> bool:
    """True iff every row is stochastically dominated by the next one."""
    _require_stochastic(k)
    tails = np.cumsum(k.entries[:, ::-1], axis=1)[:, ::-1]
    diffs = tails[1:] - tails[:-1]
    return bool(np.all(diffs >= -tol))


def monotone_upper_envelope(k: TruncatedKernel) -> TruncatedKernel:
    """Smallest row-wise stochastic upper bound that is monotone.

    Tail sums are swept top-down with a running maximum, then differenced
    back to probabilities.  A kernel that is already monotone is returned
    unchanged (entrywise).
    """
    _require_stochastic(k)
    tails = np.cumsum(k.entries[:, ::-1], axis=1)[:, ::-1]
    np.maximum.accumulate(tails, axis=0, out=tails)
    return k.with_entries(_tails_to_rows(tails), KernelKind.MONOTONE_UPPER)


def monotone_lower_envelope(k: TruncatedKernel) -> TruncatedKernel:
    """Largest row-wise stochastic lower bound that is monotone (bottom-up
    running minimum of tail sums)."""
    _require_stochastic(k)
    tails = np.cumsum(k.entries[:, ::-1], axis=1)[:, ::-1]
    rev = np.ascontiguousarray(tails[::-1])
    np.minimum.accumulate(rev, axis=0, out=rev)
    return k.with_entries(_tails_to_rows(rev[::-1]), KernelKind.MONOTONE_LOWER)


def _tails_to_rows(tails: np.ndarray) -> np.ndarray:
    rows = tails.copy()
    rows[:, :-1] -= tails[:, 1:]
    if np.any(rows < -1e-12) or np.any(rows > 1.0 + 1e-12):
        raise SolverError("envelope construction produced entries outside [0, 1]")
    return np.clip(rows, 0.0, 1.0)


def _require_stochastic(k: TruncatedKernel):
    if np.any(np.abs(k.entries.sum(axis=1) - 1.0) > ROWSUM_TOL):
        raise ConfigError(f"{k.kind.value} kernel is not stochastic")


def solve_stationary(k: TruncatedKernel) -> StationaryDist:
    """Stationary law from the dense full-rank system pi^T (K - I + E) = 1^T."""
    _require_stochastic(k)
    n = k.dim
    m = (k.entries - np.eye(n) + np.ones((n, n))).T
    try:
        pi = np.linalg.solve(m, np.ones(n))
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"stationary solve failed for {k.kind.value} kernel: {exc}") from exc
    residual = np.max(np.abs(pi @ k.entries - pi))
    if (residual > STATIONARY_RESIDUAL_TOL or abs(pi.sum() - 1.0) > ROWSUM_TOL
            or np.any(pi < -1e-10)):
        raise SolverError(
            f"stationary solve for {k.kind.value} kernel did not converge "
            f"(residual {residual:.3e}); kernel is likely not ergodic")
    return StationaryDist(probs=np.clip(pi, 0.0, None), source=k.kind)


def sql_bounds(upper: StationaryDist, lower: StationaryDist, alpha: float,
               kappa: float = 1.0) -> SqlBounds:
    """Tail curves eps(j) = 1 - sum_{i<j} pi_i from the two envelope laws.

    Curves are clipped to [0, 1] and forced nonincreasing; an upper curve
    falling below the lower one beyond tolerance signals an upstream bug.
    """
    if upper.source is not KernelKind.MONOTONE_UPPER:
        raise ConfigError("upper argument must come from the MonotoneUpper kernel")
    if lower.source is not KernelKind.MONOTONE_LOWER:
        raise ConfigError("lower argument must come from the MonotoneLower kernel")
    eps_u = _tail_curve(upper.probs)
    eps_l = _tail_curve(lower.probs)
    if np.any(eps_u < eps_l - CURVE_ORDER_TOL):
        worst = float(np.max(eps_l - eps_u))
        raise OrderingViolation(
            f"upper tail curve fell below lower curve by {worst:.3e}")
    return SqlBounds(eps_upper=eps_u, eps_lower=eps_l, alpha=alpha, kappa=kappa)


def _tail_curve(probs: np.ndarray) -> np.ndarray:
    eps = 1.0 - np.concatenate(([0.0], np.cumsum(probs[:-1])))
    eps = np.minimum.accumulate(np.clip(eps, 0.0, 1.0))
    return eps


def censored_stationary_oracle(full, alpha_index: int) -> np.ndarray:
    """Exact stationary law of the chain watched only on {0..alpha}: the
    conditional law of the full stationary vector."""
    full = np.asarray(full, dtype=float)
    if alpha_index >= full.size:
        raise DomainError("censoring index must lie inside the support")
    head = full[:alpha_index + 1]
    mass = head.sum()
    if mass <= 0:
        raise DomainError("no stationary mass at or below the censoring threshold")
    return head / mass


def l1_error_minimum(full_tail_mass: float) -> float:
    """Smallest achievable l1 distance between the stationary laws of the
    full chain and any chain on the truncated states: twice the tail mass."""
    if not 0.0 <= full_tail_mass <= 1.0:
        raise DomainError("tail mass must lie in [0, 1]")
    return 2.0 * full_tail_mass
