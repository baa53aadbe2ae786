"""Boltzmann samplers compiled from combinatorial specifications."""

from .errors import (
    BoltzgenError,
    DivergenceError,
    InternalError,
    ModeError,
    ParameterError,
    ResourceError,
    SpecError,
    ValidationError,
)
from .parser import ParseError, format_spec, parse_file, parse_spec
from .spec import Spec, validate_spec

__version__ = "0.1.0"

__all__ = [
    "BoltzgenError", "DivergenceError", "InternalError", "ModeError", "ParameterError",
    "ResourceError", "SpecError", "ValidationError", "ParseError", "format_spec",
    "parse_file", "parse_spec", "Spec", "validate_spec",
]
