"""Versioned binary persistence for fitted detectors.

Layout: magic, then a sequence of named fields. Each field is
``u16 name_len | name | kind byte | payload`` with kinds A (ndarray,
little-endian), F (float64), I (int64), S (utf-8 string). Field order is
fixed at write time, so files are byte-deterministic.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError
from .dbscan import DbscanResult
from .gbdt import GbdtModel, Tree
from .kmeans import KMeansModel
from .logreg import LogRegModel
from .scaling import ScalerParams

DETECTOR_MAGIC = b"AGDM0001"


def _pack_field(name: str, value) -> bytes:
    nb = name.encode("utf-8")
    head = struct.pack("<H", len(nb)) + nb
    if isinstance(value, np.ndarray):
        arr = np.ascontiguousarray(value)
        dt = arr.dtype.newbyteorder("<").str.encode()
        body = (
            struct.pack("<B", len(dt))
            + dt
            + struct.pack("<B", arr.ndim)
            + struct.pack(f"<{arr.ndim}q", *arr.shape)
            + arr.astype(arr.dtype.newbyteorder("<")).tobytes()
        )
        return head + b"A" + struct.pack("<Q", len(body)) + body
    if isinstance(value, bool) or isinstance(value, (int, np.integer)):
        return head + b"I" + struct.pack("<q", int(value))
    if isinstance(value, (float, np.floating)):
        return head + b"F" + struct.pack("<d", float(value))
    if isinstance(value, str):
        sb = value.encode("utf-8")
        return head + b"S" + struct.pack("<Q", len(sb)) + sb
    raise ConfigurationError(f"cannot serialize field '{name}' of type {type(value)}")


def write_blob(fields: list[tuple[str, object]], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    out = [DETECTOR_MAGIC, struct.pack("<I", len(fields))]
    out.extend(_pack_field(k, v) for k, v in fields)
    path.write_bytes(b"".join(out))


def read_blob(path) -> dict[str, object]:
    raw = Path(path).read_bytes()
    if raw[: len(DETECTOR_MAGIC)] != DETECTOR_MAGIC:
        raise ConfigurationError(f"{path}: not a detector model file")
    off = len(DETECTOR_MAGIC)
    (count,) = struct.unpack_from("<I", raw, off)
    off += 4
    fields: dict[str, object] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off : off + nlen].decode("utf-8")
        off += nlen
        kind = raw[off : off + 1]
        off += 1
        if kind == b"A":
            (blen,) = struct.unpack_from("<Q", raw, off)
            off += 8
            end = off + blen
            (dlen,) = struct.unpack_from("<B", raw, off)
            off += 1
            dt = raw[off : off + dlen].decode()
            off += dlen
            (ndim,) = struct.unpack_from("<B", raw, off)
            off += 1
            shape = struct.unpack_from(f"<{ndim}q", raw, off)
            off += 8 * ndim
            arr = np.frombuffer(raw[off:end], dtype=dt).reshape(shape).copy()
            off = end
            fields[name] = arr
        elif kind == b"I":
            (fields[name],) = struct.unpack_from("<q", raw, off)
            off += 8
        elif kind == b"F":
            (fields[name],) = struct.unpack_from("<d", raw, off)
            off += 8
        elif kind == b"S":
            (slen,) = struct.unpack_from("<Q", raw, off)
            off += 8
            fields[name] = raw[off : off + slen].decode("utf-8")
            off += slen
        else:
            raise ConfigurationError(f"{path}: unknown field kind {kind!r}")
    return fields


def _scaler_fields(prefix: str, scaler: ScalerParams | None) -> list[tuple[str, object]]:
    if scaler is None:
        return [(f"{prefix}.mode", "none")]
    out: list[tuple[str, object]] = [(f"{prefix}.mode", scaler.mode)]
    if scaler.col_min is not None:
        out.append((f"{prefix}.col_min", scaler.col_min))
        out.append((f"{prefix}.col_max", scaler.col_max))
    out.append((f"{prefix}.mean", scaler.mean))
    out.append((f"{prefix}.std", scaler.std))
    return out


def _scaler_from(fields: dict, prefix: str) -> ScalerParams | None:
    mode = fields[f"{prefix}.mode"]
    if mode == "none":
        return None
    return ScalerParams(
        mode,
        fields.get(f"{prefix}.col_min"),
        fields.get(f"{prefix}.col_max"),
        fields[f"{prefix}.mean"],
        fields[f"{prefix}.std"],
    )


def detector_fields(model) -> list[tuple[str, object]]:
    """Flatten a fitted detector into serializable fields."""
    if isinstance(model, KMeansModel):
        return [
            ("kind", "kmeans"),
            ("centroids", model.centroids),
            ("seed", model.seed),
            ("n_iter", model.n_iter),
            *_scaler_fields("scaler", model.scaler),
        ]
    if isinstance(model, LogRegModel):
        return [
            ("kind", "logreg"),
            ("weights", model.weights),
            ("bias", model.bias),
            ("l2", model.l2),
            *_scaler_fields("scaler", model.scaler),
        ]
    if isinstance(model, GbdtModel):
        fields: list[tuple[str, object]] = [
            ("kind", "gbdt"),
            ("base_score", model.base_score),
            ("learning_rate", model.learning_rate),
            ("gamma", model.gamma),
            ("depth", model.depth),
            ("n_trees", len(model.trees)),
            ("n_features", len(model.bin_edges)),
        ]
        for j, edges in enumerate(model.bin_edges):
            fields.append((f"edges.{j}", edges))
        for t, tree in enumerate(model.trees):
            fields.append((f"tree.{t}.feature", tree.feature))
            fields.append((f"tree.{t}.threshold", tree.threshold_bin))
            fields.append((f"tree.{t}.left", tree.left))
            fields.append((f"tree.{t}.right", tree.right))
            fields.append((f"tree.{t}.value", tree.value))
        return fields
    if isinstance(model, DbscanResult):
        return [
            ("kind", "dbscan"),
            ("labels", model.labels),
            ("n_clusters", model.n_clusters),
            ("n_noise", model.n_noise),
        ]
    raise ConfigurationError(f"cannot serialize detector of type {type(model)}")


def detector_from_fields(fields: dict):
    kind = fields["kind"]
    if kind == "kmeans":
        return KMeansModel(
            fields["centroids"], _scaler_from(fields, "scaler"), int(fields["seed"]),
            int(fields["n_iter"]),
        )
    if kind == "logreg":
        return LogRegModel(
            fields["weights"], float(fields["bias"]), _scaler_from(fields, "scaler"),
            float(fields["l2"]),
        )
    if kind == "gbdt":
        edges = [fields[f"edges.{j}"] for j in range(int(fields["n_features"]))]
        trees = [
            Tree(
                fields[f"tree.{t}.feature"],
                fields[f"tree.{t}.threshold"],
                fields[f"tree.{t}.left"],
                fields[f"tree.{t}.right"],
                fields[f"tree.{t}.value"],
            )
            for t in range(int(fields["n_trees"]))
        ]
        return GbdtModel(
            trees, edges, float(fields["base_score"]), float(fields["learning_rate"]),
            float(fields["gamma"]), int(fields["depth"]),
        )
    if kind == "dbscan":
        labels = fields["labels"]
        return DbscanResult(
            labels, int(fields["n_clusters"]), int(fields["n_noise"]),
            np.zeros(labels.shape[0], dtype=bool),
        )
    raise ConfigurationError(f"unknown detector kind '{kind}'")


def save_detector(model, path) -> None:
    write_blob(detector_fields(model), path)


def load_detector(path):
    return detector_from_fields(read_blob(path))


def describe_fields(fields: dict) -> str:
    """Human-readable one-line-per-field rendering for the describe verb."""
    lines = []
    for name in fields:
        v = fields[name]
        if isinstance(v, np.ndarray):
            lines.append(f"{name}: array{v.shape} dtype={v.dtype}")
        else:
            lines.append(f"{name}: {v}")
    return "\n".join(lines)
