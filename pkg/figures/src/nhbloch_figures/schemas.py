"""JSON schemas for figure specs and the nhbloch CLI artifacts consumed
by the renderers.  Validation failures surface as SchemaError with a
path-qualified message."""

import csv
import json

import jsonschema

FIGURE_KINDS = ("surface3d", "complex_plane", "sweep_curve")

FIGURE_SPEC_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind", "inputs", "out"],
    "properties": {
        "kind": {"enum": list(FIGURE_KINDS)},
        "inputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "spectrum_csv": {"type": "string"},
                "features_json": {"type": "string"},
                "loop_class_json": {"type": "string"},
                "sweep_csv": {"type": "string"},
            },
        },
        "bands": {"type": "array", "items": {"type": "integer",
                                             "minimum": 1}},
        "component": {"enum": ["real", "imag"]},
        "overlays": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "phl": {"type": "boolean"},
                "ep": {"type": "boolean"},
                "branch_cut": {"type": "boolean"},
            },
        },
        "out": {"type": "string"},
    },
}

FEATURES_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["eps", "phls", "relations"],
    "properties": {
        "eps": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["kx", "ky", "bands", "residual", "order"],
                "properties": {
                    "kx": {"type": "number"},
                    "ky": {"type": "number"},
                    "bands": {"type": "array",
                              "items": {"type": "integer"},
                              "minItems": 2, "maxItems": 2},
                    "residual": {"type": "number"},
                    "order": {"type": "integer", "minimum": 2},
                },
            },
        },
        "phls": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["kind", "bands", "homology", "endpoints",
                             "points", "exceptional_line"],
                "properties": {
                    "kind": {"enum": ["real", "imag", "exceptional"]},
                    "bands": {"type": "array",
                              "items": {"type": "integer"}},
                    "homology": {"type": "array",
                                 "items": {"type": "integer"},
                                 "minItems": 2, "maxItems": 2},
                    "endpoints": {},
                    "exceptional_line": {"type": "boolean"},
                    "points": {
                        "type": "array",
                        "items": {"type": "array",
                                  "items": {"type": "number"},
                                  "minItems": 2, "maxItems": 2},
                    },
                },
            },
        },
        "relations": {"type": "array"},
    },
}

LOOP_CLASS_SCHEMA = {
    "type": "object",
    "required": ["cycle_type", "permutation", "basepoint", "loops"],
    "properties": {
        "cycle_type": {"type": "string"},
        "permutation": {"type": "array", "items": {"type": "integer"}},
        "basepoint": {"type": "array", "items": {"type": "number"}},
        "loops": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["cycle_type", "trajectories"],
                "properties": {
                    "trajectories": {"type": "array"},
                    "cycles": {"type": "array"},
                },
            },
        },
    },
}


class SchemaError(ValueError):
    """An artifact or figure spec failed validation."""


def validate(instance, schema, label: str):
    try:
        jsonschema.validate(instance, schema)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaError(f"{label}: {exc.message} (at {path})") from exc


def load_json(path: str, schema, label: str):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{label}: cannot load {path}: {exc}") from exc
    validate(doc, schema, label)
    return doc


SPECTRUM_HEADER = ["kx", "ky", "band", "re_e", "im_e"]


def load_spectrum_csv(path: str):
    """Rows of spectrum.csv as float columns, header-checked."""
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != SPECTRUM_HEADER:
                raise SchemaError(
                    f"spectrum csv: unexpected header {header}")
            rows = [[float(v) for v in row] for row in reader]
    except OSError as exc:
        raise SchemaError(f"spectrum csv: cannot read {path}: {exc}") \
            from exc
    except ValueError as exc:
        raise SchemaError(f"spectrum csv: non-numeric cell: {exc}") from exc
    if not rows:
        raise SchemaError("spectrum csv: no data rows")
    return rows


def load_sweep_csv(path: str):
    """(parameter values, {observable name: column values})."""
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = list(reader)
    except OSError as exc:
        raise SchemaError(f"sweep csv: cannot read {path}: {exc}") from exc
    if not header or header[0] != "parameter" or len(header) < 2:
        raise SchemaError(f"sweep csv: unexpected header {header}")
    if not rows:
        raise SchemaError("sweep csv: no data rows")
    params = [float(r[0]) for r in rows]
    columns = {}
    for idx, name in enumerate(header[1:], start=1):
        columns[name.strip('"')] = [r[idx] for r in rows]
    return params, columns
