"""Randomized construction and verification of d-Galvin families.

A family of ``n/d``-subsets of ``[n]`` is d-Galvin when, for every
``n/2``-subset ``A``, some ``d`` members partition ``[n]`` and each is split
evenly by ``A``.
"""
from .construct import BuildConfig, build_galvin, compose_families, interval_galvin
from .core import (
    BudgetExceeded,
    CalibrationError,
    GalvinError,
    GalvinFamily,
    ParameterError,
    PartitionWitness,
    SubsetMask,
)
from .familyfile import read_family, write_family
from .verify import check_witness, exhaustive_check, find_witness, monte_carlo_handle_prob

__version__ = "0.1.0"

__all__ = [
    "BudgetExceeded",
    "BuildConfig",
    "CalibrationError",
    "GalvinError",
    "GalvinFamily",
    "ParameterError",
    "PartitionWitness",
    "SubsetMask",
    "build_galvin",
    "check_witness",
    "compose_families",
    "exhaustive_check",
    "find_witness",
    "interval_galvin",
    "monte_carlo_handle_prob",
    "read_family",
    "write_family",
]
