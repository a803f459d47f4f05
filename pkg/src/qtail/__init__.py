"""Queue-tail analysis for buffer-aware wireless scheduling.

Analytic upper/lower approximations of the queue-length-violation probability
from a truncated transition kernel (censored-chain stochastic bounds on the
small-queue regime) chained onto a piecewise effective-capacity tail, with an
embedded Monte-Carlo validator and closed-form error bounds.
"""

from .augment import (Ordering, SqlBounds, StationaryDist,
                      censored_stationary_oracle, first_column_augment,
                      is_stochastically_monotone, l1_error_minimum,
                      last_column_augment, monotone_lower_envelope,
                      monotone_upper_envelope, solve_stationary, sql_bounds,
                      st_compare_rows)
from .errbounds import (BoundRegime, ErrorBoundReport, accumulated_error,
                        gev_bounds, gpd_bounds, iota_decomposition, ldt_bounds,
                        pmf_from_qvp)
from .errors import (ConfigError, DomainError, NoRootError, NumericError,
                     OrderingViolation, QtailError, SolverError, SpliceError,
                     UnstableError)
from .kernel import (KernelKind, TruncatedKernel, build_qaa_generic,
                     build_qaa_lyapunov, kernel_from_csv, kernel_mass_deficit,
                     kernel_to_csv)
from .lql import (QosExponent, TailApprox, ThetaMethod, assemble_tail,
                  corollary1_theta, ec_lyapunov_rayleigh, effective_bandwidth,
                  effective_capacity, gamma_upper_product, gev_exceedance,
                  gev_tail, gpd_tail, loose_theta, psi_norm,
                  solve_qos_exponent, solve_theta_theorem6)
from .models import (ArrivalModel, CustomPdf, DeterministicArrivals,
                     FadingModel, LyapunovPolicy, PmfArrivals, PolicySpec,
                     Rayleigh, SystemParams, capacity, lyapunov_as_policy,
                     lyapunov_power, lyapunov_rate_map, lyapunov_segment_rate,
                     path_loss_mean_gain, policy_eval, service_packets,
                     threshold_property_check)
from .pipeline import (AnalysisResult, RunConfig, default_drift_config,
                       load_config, parse_config, run_analysis)
from .sim import (EmpiricalKernel, HybridCurve, QvpEstimate, SimConfig,
                  empirical_matches_kernel, hybrid_mc_ldt,
                  one_step_empirical_kernel, simulate_queue, splice_hybrid)

__version__ = "0.1.0"
