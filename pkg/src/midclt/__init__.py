"""Midpoint (Stratonovich) Riemann sums of Gaussian processes: kernels,
covariance-condition audits, limit constants and Monte Carlo CLT checks."""

from .conditions import Partition, audit_condition, eta_estimate, eta_n_minus, eta_n_plus
from .constants import eta_eval, eta_model_for, quantile_coefficient, series_a, series_b1, series_b2
from .kernels import (
    BifBmParams,
    CovarianceKernel,
    QuantileKernelSpec,
    bifbm_kernel,
    brownian_kernel,
    median_kernel,
    quantile_kernel,
)
from .riemann import clt_experiment, phi_n, psi_n, taylor_remainder, test_function
from .stats import ks_one_sample, ks_two_sample, moment_summary

__version__ = "0.1.0"
