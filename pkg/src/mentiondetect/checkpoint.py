"""Checkpoints: a JSON manifest plus one raw little-endian blob per tensor.

Layout of a checkpoint directory::

    manifest.json
    tensors/<tensor name>.bin

Blobs hold float32 values for ``precision: float32`` models (the default)
and float64 for ``float64`` models, so a round trip is always bit-exact.
"""

import json
from pathlib import Path

import numpy as np

from .exceptions import FormatError
from .model import SpanModel

FORMAT_VERSION = 1
_BLOB_DTYPES = {"float32": "<f4", "float64": "<f8"}


def save_checkpoint(model, path, seed=0, metadata=None):
    path = Path(path)
    (path / "tensors").mkdir(parents=True, exist_ok=True)
    precision = model.arch["precision"]
    entries = []
    for name, tensor in model.named_parameters():
        blob = f"tensors/{name}.bin"
        (path / blob).write_bytes(np.ascontiguousarray(tensor.data, _BLOB_DTYPES[precision]).tobytes())
        entries.append({"name": name, "shape": list(tensor.shape), "file": blob})
    manifest = {
        "format_version": FORMAT_VERSION,
        "architecture": model.arch,
        "precision": precision,
        "seed": seed,
        "tensors": entries,
        "metadata": metadata or {},
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return path


def read_manifest(path):
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
    except FileNotFoundError:
        raise FormatError(f"{path}: no manifest.json") from None
    except json.JSONDecodeError as err:
        raise FormatError(f"{path}/manifest.json: {err.msg}") from None
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version!r}")
    return manifest


def load_checkpoint(path, expected_head=None):
    """Rebuild the model described by the manifest and restore every tensor.

    ``expected_head`` refuses checkpoints of another architecture.
    Returns ``(model, manifest)``.
    """
    path = Path(path)
    manifest = read_manifest(path)
    arch = manifest["architecture"]
    if expected_head is not None and arch["head"] != expected_head:
        raise FormatError(f"architecture mismatch: checkpoint holds a {arch['head']!r} head, "
                          f"expected {expected_head!r}")
    precision = manifest.get("precision")
    if precision not in _BLOB_DTYPES or precision != arch["precision"]:
        raise FormatError(f"{path}: bad precision {precision!r}")
    model = SpanModel(arch, seed=manifest.get("seed", 0))
    params = dict(model.named_parameters())
    listed = {e["name"]: e for e in manifest["tensors"]}
    if set(listed) != set(params):
        diff = sorted(set(listed) ^ set(params))[:3]
        raise FormatError(f"architecture mismatch: tensor names differ, e.g. {diff}")
    for name, tensor in params.items():
        entry = listed[name]
        if tuple(entry["shape"]) != tensor.shape:
            raise FormatError(f"tensor {name!r}: manifest shape {entry['shape']} does not "
                              f"match architecture shape {list(tensor.shape)}")
        raw = (path / entry["file"]).read_bytes()
        values = np.frombuffer(raw, dtype=_BLOB_DTYPES[precision])
        if values.size != tensor.data.size:
            raise FormatError(f"tensor {name!r}: blob holds {values.size} values, "
                              f"shape needs {tensor.data.size}")
        tensor.data[...] = values.reshape(tensor.shape)
    return model, manifest
