"""Load and save model graphs and resource catalogs as JSON files.

Model graph schema::

    {"name": str, "total_samples": int, "epochs": int, "batch_size": int,
     "profile_batch_size": int,
     "layers": [{"index": int, "kind": str, "input_size": num,
                 "weight_size": num, "oct": {"<type_id>": sec, ...},
                 "odt": {...}, "alpha": {...}, "beta": {...}}, ...]}

Catalog schema::

    {"types": [{"id": int, "name": str, "price_per_hour": num, "unit": str,
                "quota": int, "is_cpu": bool}, ...],
     "layer_kinds": [str, ...]}        # optional

Loaders raise :class:`ParseError` with file/position context on malformed
JSON or missing fields, and let :class:`InvariantError` from the domain types
propagate with the offending field named.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from .domain import LayerSpec, ModelGraph, ResourceCatalog, ResourceType
from .errors import ParseError

_DATA_PACKAGE = "layersched.data"


def _read_json(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(path, f"cannot read file: {exc}") from exc
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(path, f"line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(payload, dict):
        raise ParseError(path, "top-level JSON value must be an object")
    return payload


def _require(payload: dict, key: str, path, where: str = "") -> object:
    if key not in payload:
        place = f" in {where}" if where else ""
        raise ParseError(path, f"missing field '{key}'{place}")
    return payload[key]


def _int_keyed(table: object, path, where: str) -> dict[int, float]:
    if not isinstance(table, dict):
        raise ParseError(path, f"{where} must be an object keyed by type id")
    out: dict[int, float] = {}
    for key, value in table.items():
        try:
            out[int(key)] = float(value)
        except (TypeError, ValueError) as exc:
            raise ParseError(path, f"{where}[{key!r}]: {exc}") from exc
    return out


def load_model_graph(path) -> ModelGraph:
    """Parse and validate a model graph file."""
    payload = _read_json(path)
    raw_layers = _require(payload, "layers", path)
    if not isinstance(raw_layers, list):
        raise ParseError(path, "'layers' must be a list")
    layers = []
    for position, raw in enumerate(raw_layers):
        where = f"layers[{position}]"
        if not isinstance(raw, dict):
            raise ParseError(path, f"{where} must be an object")
        layers.append(
            LayerSpec(
                index=int(_require(raw, "index", path, where)),
                layer_kind=str(_require(raw, "kind", path, where)),
                input_size=float(_require(raw, "input_size", path, where)),
                weight_size=float(_require(raw, "weight_size", path, where)),
                per_type_oct=_int_keyed(_require(raw, "oct", path, where), path, f"{where}.oct"),
                per_type_odt=_int_keyed(_require(raw, "odt", path, where), path, f"{where}.odt"),
                per_type_alpha=_int_keyed(
                    _require(raw, "alpha", path, where), path, f"{where}.alpha"
                ),
                per_type_beta=_int_keyed(
                    _require(raw, "beta", path, where), path, f"{where}.beta"
                ),
            )
        )
    return ModelGraph(
        name=str(_require(payload, "name", path)),
        layers=tuple(layers),
        total_samples=int(_require(payload, "total_samples", path)),
        epochs=int(_require(payload, "epochs", path)),
        batch_size=int(_require(payload, "batch_size", path)),
        profile_batch_size=int(_require(payload, "profile_batch_size", path)),
    )


def load_catalog(path) -> ResourceCatalog:
    """Parse and validate a resource catalog file."""
    payload = _read_json(path)
    raw_types = _require(payload, "types", path)
    if not isinstance(raw_types, list):
        raise ParseError(path, "'types' must be a list")
    types = []
    for position, raw in enumerate(raw_types):
        where = f"types[{position}]"
        if not isinstance(raw, dict):
            raise ParseError(path, f"{where} must be an object")
        types.append(
            ResourceType(
                id=int(_require(raw, "id", path, where)),
                name=str(_require(raw, "name", path, where)),
                price_per_hour=float(_require(raw, "price_per_hour", path, where)),
                unit=str(_require(raw, "unit", path, where)),
                quota=int(_require(raw, "quota", path, where)),
                is_cpu=bool(_require(raw, "is_cpu", path, where)),
            )
        )
    kinds = payload.get("layer_kinds", [])
    if not isinstance(kinds, list):
        raise ParseError(path, "'layer_kinds' must be a list of strings")
    return ResourceCatalog(types=tuple(types), layer_kinds=tuple(str(k) for k in kinds))


def graph_to_dict(graph: ModelGraph) -> dict:
    return {
        "name": graph.name,
        "total_samples": graph.total_samples,
        "epochs": graph.epochs,
        "batch_size": graph.batch_size,
        "profile_batch_size": graph.profile_batch_size,
        "layers": [
            {
                "index": layer.index,
                "kind": layer.layer_kind,
                "input_size": layer.input_size,
                "weight_size": layer.weight_size,
                "oct": {str(t): v for t, v in sorted(layer.per_type_oct.items())},
                "odt": {str(t): v for t, v in sorted(layer.per_type_odt.items())},
                "alpha": {str(t): v for t, v in sorted(layer.per_type_alpha.items())},
                "beta": {str(t): v for t, v in sorted(layer.per_type_beta.items())},
            }
            for layer in graph.layers
        ],
    }


def catalog_to_dict(catalog: ResourceCatalog) -> dict:
    payload = {
        "types": [
            {
                "id": t.id,
                "name": t.name,
                "price_per_hour": t.price_per_hour,
                "unit": t.unit,
                "quota": t.quota,
                "is_cpu": t.is_cpu,
            }
            for t in catalog.types
        ]
    }
    if catalog.layer_kinds:
        payload["layer_kinds"] = list(catalog.layer_kinds)
    return payload


def save_model_graph(graph: ModelGraph, path) -> None:
    Path(path).write_text(json.dumps(graph_to_dict(graph), indent=2) + "\n")


def save_catalog(catalog: ResourceCatalog, path) -> None:
    Path(path).write_text(json.dumps(catalog_to_dict(catalog), indent=2) + "\n")


def bundled_path(name: str) -> Path:
    """Path of a bundled data file, e.g. ``bundled_path('ctrdnn16.json')``."""
    return Path(resources.files(_DATA_PACKAGE).joinpath(name))


def list_bundled() -> list[str]:
    root = resources.files(_DATA_PACKAGE)
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".json"))


def load_bundled_graph(name: str) -> ModelGraph:
    """Load a bundled model graph by short name, e.g. ``'ctrdnn16'``."""
    if not name.endswith(".json"):
        name = name + ".json"
    return load_model_graph(bundled_path(name))


def load_bundled_catalog(name: str = "catalog_default") -> ResourceCatalog:
    if not name.endswith(".json"):
        name = name + ".json"
    return load_catalog(bundled_path(name))
