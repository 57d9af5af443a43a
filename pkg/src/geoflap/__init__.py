"""Geometric multibody dynamics and control of a flapping-wing vehicle."""

from .aero import AeroModel
from .kinematics import (AbdomenWaveform, PrescribedMotion, WingWaveform,
                         symmetric_motion)
from .liegroup import AlgebraElement, GroupElement
from .morphology import Morphology, default_morphology, load_morphology
from .optimization import (DeltaSchedule, MpcOptions, MpcWeights,
                           OrbitOptions, OrbitParameterVector, ReferenceOrbit,
                           compare_abdomen, default_seed, find_periodic_orbit,
                           mpc_objective, orbit_objective, sensitivity_table,
                           stabilize)
from .simulation import (FullState, ReducedState, SimulationError, Simulator,
                         Trajectory)

__version__ = "0.1.0"

__all__ = [
    "AbdomenWaveform", "AeroModel", "AlgebraElement", "DeltaSchedule",
    "FullState", "GroupElement", "Morphology", "MpcOptions", "MpcWeights",
    "OrbitOptions", "OrbitParameterVector", "PrescribedMotion",
    "ReducedState", "ReferenceOrbit", "SimulationError", "Simulator",
    "Trajectory", "WingWaveform", "compare_abdomen", "default_morphology",
    "default_seed", "find_periodic_orbit", "load_morphology",
    "mpc_objective", "orbit_objective", "sensitivity_table",
    "stabilize", "symmetric_motion",
]
