"""Central numeric tolerances.

Every comparison tolerance used by the analysis lives here so that tests and
library code agree on a single set of values.
"""

# Strong-stochastic-order comparisons: tail-sum differences inside this band
# count as equality, so weakly-monotone kernels pass the monotonicity check.
ORDER_TOL = 1e-12

# Row sums of stochastic kernels and stationary-vector normalization.
ROWSUM_TOL = 1e-10

# Stationary solve residual: max |pi^T K - pi^T|.
STATIONARY_RESIDUAL_TOL = 1e-10

# Upper/lower tail curves may cross by at most this much before we raise.
CURVE_ORDER_TOL = 1e-10

# QoS-exponent bisection: |EC(theta) - EB(theta)| at the returned root.
QOS_RESIDUAL_TOL = 1e-10

# Per-row probability-mass accounting in kernel construction.
MASS_ACCOUNTING_TOL = 1e-8

# Substochastic row deficits may be negative by at most this much.
DEFICIT_TOL = 1e-9

# Arrival pmf normalization.
PMF_TOL = 1e-12

# Custom fading pdf normalization over its truncated support.
PDF_MASS_TOL = 1e-8

# Tail probabilities below this are reported as exact zero.
TAIL_UNDERFLOW = 1e-300
