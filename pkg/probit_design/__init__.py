"""Locally D-optimal designs for multinomial probit choice experiments."""

from .choice_model import Alternative, Beta, ChoiceSet, ModelKind, ModelSpec
from .design_space import Design, OrbitResult, OrbitTriple
from .errors import (
    DegenerateCorrelationError,
    InfiniteInformationError,
    InvalidInputError,
    NoFiniteOptimumError,
    OptimalityRefutedError,
    ProbitDesignError,
)

__all__ = [
    'Alternative', 'Beta', 'ChoiceSet', 'ModelKind', 'ModelSpec',
    'Design', 'OrbitResult', 'OrbitTriple',
    'DegenerateCorrelationError', 'InfiniteInformationError', 'InvalidInputError',
    'NoFiniteOptimumError', 'OptimalityRefutedError', 'ProbitDesignError',
]
