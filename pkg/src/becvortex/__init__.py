"""Vortex dynamics in a 2D harmonically trapped condensate: closed-form
solutions, a split-step spectral solver and a vortex tracker."""
from .field import (
    ComplexField2D,
    DegenerateStateError,
    GridSpec,
    PhysicalParams,
    beta_from_physical,
    current_density,
    energy,
    norm,
    normalize,
    read_snapshot,
    write_snapshot,
)
from .basis import BasisState, SpectralState, evolve, mu_constant, project, sigma_broadening, synthesize
from .closed_form import VortexConfig, closed_form, precession_frequency, zeros_of_closed_form
from .solver import SolverError, SolverParams, StationaryStates, build_initial_state, evolve_scenario
from .tracking import associate, average_count, count_series, detect

__version__ = "0.1.0"
