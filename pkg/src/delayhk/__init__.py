"""Simulation and verification tools for the delayed Hegselmann-Krause
opinion model and its mean-field limit."""

from .delay import DelaySpec, constant_delay, deviating_argument, tau_eval
from .diagnostics import (DiagnosticsSeries, check_inequalities, compute_series,
                          count_clusters, diameter, fit_decay_rate, lyapunov_F, sigma_tau,
                          time_to_threshold)
from .dynamics import HistorySpec, ModelConfig, rhs
from .integrator import DivergenceError, Trajectory, history_eval, solve
from .kernel import KernelSpec, RateForm, psi_eval, rate_matrix
from .meanfield import (EmpiricalMeasure, MeasurePath, consistency_gap, convergence_study,
                        stability_experiment, velocity_field, wasserstein, wasserstein_oracle)
from .theory import TheoryInputs, beta_window, delay_bound, delay_bound_improved

__version__ = "0.1.0"
