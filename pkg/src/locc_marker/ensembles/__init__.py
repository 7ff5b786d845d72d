"""Ensemble model, named builders and JSON codec."""

from locc_marker.ensembles.base import (
    Ensemble,
    EnsembleBuilder,
    EnsembleMember,
    PartyStructure,
    ValidationReport,
    Violation,
    validate,
)
from locc_marker.ensembles.codec import parse_ensemble, serialize_ensemble
from locc_marker.ensembles.mixed import smolin_identity_residual
from locc_marker.ensembles.registry import EnsembleRegistry, build_named, get_registry

__all__ = [
    "Ensemble",
    "EnsembleBuilder",
    "EnsembleMember",
    "EnsembleRegistry",
    "PartyStructure",
    "ValidationReport",
    "Violation",
    "build_named",
    "get_registry",
    "parse_ensemble",
    "serialize_ensemble",
    "smolin_identity_residual",
    "validate",
]
