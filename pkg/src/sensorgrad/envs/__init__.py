"""Simulated tasks producing trial records."""

from .arm import ArmState, ArmWorld, DartEnv, dart_trial, dart_trials
from .cannon import CannonEnv, CannonWorld, cannon_range, cannon_trial, cannon_true_value
from .synthetic import (
    SyntheticEnv,
    SyntheticWorld,
    correlated_sensor_trial,
    synthetic_trial,
)

__all__ = [
    "ArmState",
    "ArmWorld",
    "DartEnv",
    "dart_trial",
    "dart_trials",
    "CannonEnv",
    "CannonWorld",
    "cannon_range",
    "cannon_trial",
    "cannon_true_value",
    "SyntheticEnv",
    "SyntheticWorld",
    "correlated_sensor_trial",
    "synthetic_trial",
]
