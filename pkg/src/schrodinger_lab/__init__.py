"""Numerical laboratory for curve-shifted Schrodinger evolution: propagator,
wave packets, broad norms, polynomial partitioning and tube geometry."""

from .errors import ContractError, DegeneracyError, DomainError, InvalidGridError, LabError, RangeError
from .field_core import FrequencySupport, GridSpec, SampledField
from .propagator import CurveParams, TimeCutoffs, TimeWindow, evolve, maximal_function

__version__ = "0.1.0"
