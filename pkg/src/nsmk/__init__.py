"""Galerkin pseudo-spectral simulator and equilibrium diagnostics for the 3D
stochastic Navier-Stokes equations on the periodic torus."""

from .bilinear import nonlinearity, nonlinearity_oracle, nonlinearity_self
from .config import ConfigError, EnsembleSpec, RunConfig, load_config
from .dynamics import (CutoffShape, IntegrationDivergedError, Trajectory,
                       residual_v, simulate, step_cutoff, step_full, stopping_time)
from .field import (SpaceTag, SpectralField, apply_power, heat_regularize, inner,
                    leray_project, norm, project_modes, shell_spectrum, theta_map,
                    translate, zero_field)
from .noise import (AssumptionReport, CovarianceSpec, check_assumptions,
                    mode_variance, sample_increment, trace, trace_regularized)

__version__ = "0.1.0"
