"""Plain-text snapshots: a JSON manifest next to CSV payloads.

CSV files follow RFC 4180 with '.' decimals; floats are written with
``repr`` so every double round-trips exactly.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MANIFEST = "manifest.json"


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def read_rows(path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def write_matrix(path, matrix) -> Path:
    a = np.atleast_2d(np.asarray(matrix, dtype=float))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        for row in a:
            writer.writerow([repr(float(v)) for v in row])
    return path


def read_matrix(path) -> np.ndarray:
    with Path(path).open(newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    return np.array(rows, dtype=float)


def write_vector(path, vector) -> Path:
    return write_matrix(path, np.asarray(vector, dtype=float)[:, None])


def read_vector(path) -> np.ndarray:
    return read_matrix(path)[:, 0]


def write_manifest(directory, payload: dict) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / MANIFEST
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default))
    return path


def read_manifest(directory) -> dict:
    return json.loads((Path(directory) / MANIFEST).read_text())


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def save_network(directory, layers, header: dict | None = None) -> Path:
    """Write a list of LayerWeights as ``layer_<l>_w.csv`` / ``layer_<l>_b.csv``."""
    directory = Path(directory)
    entries = []
    for l, lw in enumerate(layers, start=1):
        wname, bname = f"layer_{l}_w.csv", f"layer_{l}_b.csv"
        write_matrix(directory / wname, lw.w)
        write_vector(directory / bname, lw.b)
        entries.append({"index": l, "w": wname, "b": bname})
    return write_manifest(directory, {"kind": "deep-net", "header": header or {}, "layers": entries})


def load_network(directory):
    from deepmf.ensembles import LayerWeights

    directory = Path(directory)
    manifest = read_manifest(directory)
    layers = [
        LayerWeights(read_matrix(directory / e["w"]), read_vector(directory / e["b"]))
        for e in manifest["layers"]
    ]
    return layers, manifest["header"]


def save_moments(directory, moments, header: dict | None = None) -> Path:
    """Write LayerMoments per layer as ``layer_<l>_m.csv`` / ``layer_<l>_C.csv``."""
    directory = Path(directory)
    entries = []
    for l, mo in enumerate(moments):
        mname, cname = f"layer_{l}_m.csv", f"layer_{l}_C.csv"
        write_vector(directory / mname, mo.mean)
        write_matrix(directory / cname, mo.cov)
        entries.append({"index": l, "m": mname, "C": cname})
    return write_manifest(directory, {"kind": "layer-moments", "header": header or {}, "layers": entries})


def load_moments(directory):
    from deepmf.meanfield import LayerMoments

    directory = Path(directory)
    manifest = read_manifest(directory)
    moments = [
        LayerMoments(read_vector(directory / e["m"]), read_matrix(directory / e["C"]))
        for e in manifest["layers"]
    ]
    return moments, manifest["header"]


def save_rbm(directory, model, header: dict | None = None) -> Path:
    directory = Path(directory)
    write_matrix(directory / "w.csv", model.w)
    write_vector(directory / "bv.csv", model.bv)
    write_vector(directory / "bh.csv", model.bh)
    return write_manifest(
        directory,
        {
            "kind": "rbm",
            "header": header or {},
            "n_visible": model.n_visible,
            "n_hidden": model.n_hidden,
            "w": "w.csv",
            "bv": "bv.csv",
            "bh": "bh.csv",
        },
    )


def load_rbm(directory):
    from deepmf.rbm import RbmModel

    directory = Path(directory)
    manifest = read_manifest(directory)
    model = RbmModel(
        read_matrix(directory / manifest["w"]),
        read_vector(directory / manifest["bv"]),
        read_vector(directory / manifest["bh"]),
    )
    return model, manifest["header"]
