"""Certificate documents: JSON with a schema version, and a text rendering."""

from __future__ import annotations

import dataclasses
import json
import math
from collections.abc import Mapping
from enum import Enum
from typing import Any

import numpy as np

from locc_marker.claims import ClaimRecord
from locc_marker.detect import CLSDVerdict
from locc_marker.ensembles.codec import to_pairs
from locc_marker.numkernel import StateVector
from locc_marker.protocol import SimulationReport
from locc_marker.upb import UBClassification

SCHEMA_VERSION = 1


def to_jsonable(value: Any) -> Any:
    """Convert report objects to plain JSON values."""
    if isinstance(value, StateVector):
        return {"dims": list(value.dims), "amplitudes": to_pairs(value.amplitudes)}
    if isinstance(value, Enum):
        return value.value
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: to_jsonable(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, Mapping):
        return {_key(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        if np.iscomplexobj(value):
            return to_pairs(value)
        return to_jsonable(value.tolist())
    if isinstance(value, (complex, np.complexfloating)):
        return [float(value.real), float(value.imag)]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def _key(key: Any) -> str:
    if isinstance(key, tuple):
        return ",".join(str(k) for k in key)
    return str(key)


def document(kind: str, payload: Mapping[str, Any]) -> dict[str, Any]:
    return {"schema_version": SCHEMA_VERSION, "kind": kind, **to_jsonable(payload)}


def verdict_payload(v: CLSDVerdict) -> dict[str, Any]:
    per_state = {}
    for label, state in v.per_state.items():
        per_state[label] = {
            "status": state.status.value,
            "method": state.method,
            "evidence_kind": type(state.evidence).__name__,
            "evidence": state.evidence,
        }
    return {
        "ensemble": v.ensemble,
        "overall": v.overall.value,
        "independent": v.independent,
        "rank": v.rank,
        "per_state": per_state,
    }


def classification_payload(c: UBClassification) -> dict[str, Any]:
    return {
        "ensemble": c.ensemble,
        "flags": {
            "is_ub": c.is_ub,
            "is_gub": c.is_gub,
            "is_upb": c.is_upb,
            "is_gupb": c.is_gupb,
            "spans_full_space": c.spans_full_space,
        },
        "complement_dim": c.complement_dim,
        "method": c.method,
        "decidable": c.decidable,
        "partition_convention": "set_a is annihilated on party A's factor, set_b on party B's",
        "maximal_subset_reports": c.maximal_subset_reports,
    }


def simulation_payload(r: SimulationReport) -> dict[str, Any]:
    return {
        "hypotheses": r.hypotheses,
        "zero_error": r.zero_error,
        "max_error_declaration": r.max_error_declaration,
        "per_hypothesis": {
            label: {
                "distribution": o.distribution,
                "success_probability": o.success_probability,
                "error_probability": o.error_probability,
            }
            for label, o in r.per_hypothesis.items()
        },
    }


def claims_payload(records: list[ClaimRecord]) -> dict[str, Any]:
    """Claim records without durations, so repeated runs serialize identically."""
    return {
        "claims": [
            {
                "id": r.id,
                "description": r.description,
                "expected": r.expected,
                "observed": r.observed,
                "status": r.status.value,
            }
            for r in records
        ]
    }


def dumps(doc: Mapping[str, Any]) -> str:
    return json.dumps(doc, indent=2, sort_keys=True)


def render_text(doc: Mapping[str, Any]) -> str:
    """Indented ``key: value`` lines; complex arrays are summarized by shape."""
    lines: list[str] = []
    _render(doc, 0, lines)
    return "\n".join(lines)


def _is_numeric_array(value: Any) -> bool:
    return isinstance(value, list) and bool(value) and all(
        isinstance(v, (int, float)) or _is_numeric_array(v) for v in value
    )


def _shape(value: Any) -> list[int]:
    shape = []
    while isinstance(value, list) and value:
        shape.append(len(value))
        value = value[0]
    return shape


def _render(value: Any, depth: int, lines: list[str]) -> None:
    pad = "  " * depth
    if isinstance(value, Mapping):
        for key in sorted(value):
            item = value[key]
            if isinstance(item, (Mapping, list)) and item and not _is_scalar_list(item):
                if _is_numeric_array(item):
                    lines.append(f"{pad}{key}: <array {'x'.join(map(str, _shape(item)))}>")
                    continue
                lines.append(f"{pad}{key}:")
                _render(item, depth + 1, lines)
            else:
                lines.append(f"{pad}{key}: {_scalar(item)}")
    elif isinstance(value, list):
        for item in value:
            if isinstance(item, (Mapping, list)) and not _is_scalar_list(item):
                lines.append(f"{pad}-")
                _render(item, depth + 1, lines)
            else:
                lines.append(f"{pad}- {_scalar(item)}")


def _is_scalar_list(value: Any) -> bool:
    return isinstance(value, list) and len(value) <= 8 and all(
        not isinstance(v, (Mapping, list)) for v in value
    )


def _scalar(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.12g}"
    if isinstance(value, list):
        return "[" + ", ".join(_scalar(v) for v in value) + "]"
    if value is None:
        return "-"
    return str(value)
