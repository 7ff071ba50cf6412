"""
Data models for grids, interfaces, momenta, groupoid arrows and registration runs.
"""

from .field_models import Grid2, ScalarField, VectorField, make_grid
from .interface_models import (
    BoundaryFunction,
    BoundarySamples,
    Interface,
    PiecewiseCovector,
    PiecewiseScalar,
    PiecewiseVector,
    RegionMasks,
)
from .algebroid_models import DVectField, InertiaOperator, OneFormDensity
from .groupoid_models import CotangentDualElement, GroupoidElement, MomentumTrajectory
from .registration_models import (
    EnergyTerms,
    RegistrationProblem,
    RegistrationResult,
    ReportRow,
    Scenario,
)

__all__ = [
    'Grid2',
    'ScalarField',
    'VectorField',
    'make_grid',
    'BoundaryFunction',
    'BoundarySamples',
    'Interface',
    'PiecewiseCovector',
    'PiecewiseScalar',
    'PiecewiseVector',
    'RegionMasks',
    'DVectField',
    'InertiaOperator',
    'OneFormDensity',
    'CotangentDualElement',
    'GroupoidElement',
    'MomentumTrajectory',
    'EnergyTerms',
    'RegistrationProblem',
    'RegistrationResult',
    'ReportRow',
    'Scenario',
]
