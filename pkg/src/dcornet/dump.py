"""
DCFD feature-dump container.

Layout, little-endian throughout:

    b"DCFD" | u32 format version | u64 manifest length | manifest (UTF-8 JSON) | payload

Layer offsets in the manifest are relative to the start of the payload and
each layer is a row-major n×p matrix of f32 or f64. Model parameters are
stored in the same container with `extra.kind == "mlp"`.
"""
from __future__ import annotations

import json
import logging
import struct
from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence

import numpy as np
import pandas as pd
from marshmallow import ValidationError

from dcornet.models import NUMPY_DTYPES, FeatureDump, LayerEntry, MLPParams
from dcornet.schemas.manifest_schema import ManifestSchema
from dcornet.utils import DumpError, InvalidInputError, as_matrix

logger = logging.getLogger(__name__)

MAGIC = b"DCFD"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sIQ")

def build_dump(model_name: str, arrays: Mapping[str, np.ndarray],
               sample_ids: Optional[Sequence[str]] = None, dtype: str = "f64",
               extra: Optional[dict] = None) -> FeatureDump:
    """Pack named matrices contiguously, in insertion order."""
    if dtype not in NUMPY_DTYPES:
        raise InvalidInputError(f"dtype must be one of {sorted(NUMPY_DTYPES)}, got {dtype!r}")
    if not arrays:
        raise InvalidInputError("a dump needs at least one layer")
    layers, stored = [], {}
    offset = 0
    for name, values in arrays.items():
        mat = as_matrix(np.asarray(values).reshape(len(values), -1), name)
        mat = np.ascontiguousarray(mat, dtype=NUMPY_DTYPES[dtype])
        entry = LayerEntry(name, mat.shape[0], mat.shape[1], dtype, offset)
        layers.append(entry)
        stored[name] = mat
        offset += entry.nbytes
    if sample_ids is None:
        sample_ids = [str(i) for i in range(layers[0].n)]
    return FeatureDump(model_name, layers, [str(s) for s in sample_ids], stored, dict(extra or {}))


def _manifest(dump: FeatureDump) -> dict:
    return {
        "format_version": dump.format_version,
        "model_name": dump.model_name,
        "layers": [{"name": e.name, "n": e.n, "p": e.p, "dtype": e.dtype, "offset": e.offset}
                   for e in dump.layers],
        "sample_ids": list(dump.sample_ids),
        "extra": dump.extra,
    }


def _validate_manifest(raw: dict) -> dict:
    try:
        return ManifestSchema().load(raw)
    except ValidationError as err:
        raise DumpError(f"invalid manifest: {err.messages}", code="bad_manifest",
                        payload={"messages": err.messages})


def _check_offsets(layers: Sequence[LayerEntry]) -> None:
    end, previous = 0, None
    for entry in sorted(layers, key=lambda e: e.offset):
        if previous is not None and entry.offset < end:
            raise DumpError(f"layers {previous!r} and {entry.name!r} overlap in the payload",
                            code="offset_overlap", payload={"layers": [previous, entry.name]})
        end = entry.offset + entry.nbytes
        previous = entry.name


def write_dump(path, dump: FeatureDump) -> None:
    manifest = _validate_manifest(_manifest(dump))
    _check_offsets(dump.layers)
    size = max(e.offset + e.nbytes for e in dump.layers)
    payload = bytearray(size)
    for entry in dump.layers:
        data = np.ascontiguousarray(dump.arrays[entry.name], dtype=NUMPY_DTYPES[entry.dtype])
        if data.shape != (entry.n, entry.p):
            raise DumpError(f"layer {entry.name!r} holds {data.shape}, manifest says "
                            f"{(entry.n, entry.p)}", code="bad_manifest")
        payload[entry.offset:entry.offset + entry.nbytes] = data.tobytes(order="C")
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, dump.format_version, len(blob)))
        fh.write(blob)
        fh.write(payload)
    logger.debug("wrote %s: %d layers, %d payload bytes", path, len(dump.layers), size)


def read_dump(path) -> FeatureDump:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise DumpError(f"{path}: not a DCFD file", code="bad_magic")
    if len(raw) < HEADER.size:
        raise DumpError(f"{path}: header is truncated", code="truncated", payload={"layer": None})
    _, version, manifest_len = HEADER.unpack_from(raw)
    if version != FORMAT_VERSION:
        raise DumpError(f"{path}: format version {version}, expected {FORMAT_VERSION}",
                        code="version_mismatch", payload={"version": version})
    start = HEADER.size + manifest_len
    if len(raw) < start:
        raise DumpError(f"{path}: manifest is truncated", code="truncated", payload={"layer": None})
    try:
        manifest = json.loads(raw[HEADER.size:start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DumpError(f"{path}: manifest is not valid JSON ({exc})", code="bad_manifest")
    if not isinstance(manifest, dict):
        raise DumpError(f"{path}: manifest must be a JSON object", code="bad_manifest")
    manifest = _validate_manifest(manifest)
    if manifest["format_version"] != version:
        raise DumpError(f"{path}: header says version {version}, manifest "
                        f"{manifest['format_version']}", code="version_mismatch")

    layers = [LayerEntry(**entry) for entry in manifest["layers"]]
    _check_offsets(layers)
    payload = memoryview(raw)[start:]
    arrays = {}
    for entry in layers:
        if entry.offset + entry.nbytes > len(payload):
            raise DumpError(f"{path}: payload of layer {entry.name!r} is truncated",
                            code="truncated", payload={"layer": entry.name})
        arrays[entry.name] = np.frombuffer(
            payload, dtype=NUMPY_DTYPES[entry.dtype], count=entry.n * entry.p,
            offset=entry.offset).reshape(entry.n, entry.p).copy()
    return FeatureDump(manifest["model_name"], layers, manifest["sample_ids"], arrays,
                       manifest["extra"], manifest["format_version"])


def read_csv_dump(path, layer_name: str = "features", model_name: Optional[str] = None) -> FeatureDump:
    """One-layer dump from a CSV of numeric columns; a `sample_id` column becomes the ids."""
    frame = pd.read_csv(path)
    sample_ids = None
    if "sample_id" in frame.columns:
        sample_ids = frame.pop("sample_id").astype(str).tolist()
    try:
        values = frame.to_numpy(dtype=np.float64)
    except ValueError as exc:
        raise InvalidInputError(f"{path}: non-numeric feature columns ({exc})")
    return build_dump(model_name or Path(path).stem, {layer_name: values}, sample_ids)


def load_features(path) -> FeatureDump:
    if str(path).lower().endswith(".csv"):
        return read_csv_dump(path)
    return read_dump(path)


# --- model parameters

def save_model(path, params: MLPParams, model_name: str = "mlp") -> None:
    arrays: Dict[str, np.ndarray] = {}
    for i, (w, b) in enumerate(params.layers):
        arrays[f"layer{i}.weight"] = w
        arrays[f"layer{i}.bias"] = b[None, :]
    extra = {"kind": "mlp", "feature_tap": params.feature_tap, "activation": params.activation}
    write_dump(path, build_dump(model_name, arrays, sample_ids=[], extra=extra))


def load_model(path) -> MLPParams:
    dump = read_dump(path)
    if dump.extra.get("kind") != "mlp":
        raise DumpError(f"{path} does not hold model parameters", code="bad_manifest")
    layers = []
    i = 0
    while f"layer{i}.weight" in dump.arrays:
        bias = dump.features(f"layer{i}.bias").ravel()
        layers.append((dump.features(f"layer{i}.weight"), bias))
        i += 1
    if not layers:
        raise DumpError(f"{path} holds no layers", code="missing_layer")
    return MLPParams(layers, int(dump.extra["feature_tap"]), dump.extra.get("activation", "relu"))
