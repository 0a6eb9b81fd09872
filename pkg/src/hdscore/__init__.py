"""Score-based significance tests for high-dimensional linear models.

Tests whether a (possibly very wide) block of regression coefficients is
zero in the presence of an equally wide nuisance block, via quadratic
score statistics with lasso-estimated nuisance parameters, an
orthogonalized variant that tolerates strong correlation between the two
covariate blocks, U-statistic variance estimators, theoretical power
calculators, and a reproducible Monte Carlo harness.
"""

from .data import (CornerW, CovarianceParts, Dataset, DesignSpec, Identity,
                   SparsePattern, Toeplitz, build_coefficients, covariance_parts,
                   design_from_dict, design_to_dict, generate_dataset, ingest_csv,
                   sample_corner_design, sample_covariates, sample_toeplitz_normal,
                   toeplitz_matrix)
from .lasso import (CvCurve, LassoFit, VarianceEstimate, cv_select_lambda,
                    estimate_w, estimate_w_column, kkt_violation, lasso_fit,
                    lasso_objective, scaled_lasso_sigma, soft_threshold)
from .simulate import (MonteCarloCell, MonteCarloReport, ScenarioConfig,
                       corner_scenario, ks_distance_to_normal,
                       null_density_diagnostic, relative_efficiency, run_scenario,
                       scenario_from_dict, scenario_to_dict, signal_grid,
                       theoretical_power_mn, theoretical_power_tn,
                       toeplitz_scenario)
from .streams import DEFAULT_SEED, derive_rng
from .testing import (TestResult, normal_cdf, normal_upper_quantile, run_mn_test,
                      run_tn_test)
from .ustat import (DegenerateVarianceError, cross_kernel_mean,
                    quartic_sum_enumerated, quartic_variance_core, stat_mn,
                    stat_mn_enumerated, stat_tn, stat_tn_enumerated, trace_sigma_sq,
                    var_est_r1n, var_est_rn)

__version__ = "0.1.0"
