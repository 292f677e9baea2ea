"""Versioned JSON checkpoints.

Envelope::

    {"format_version": 1, "kind": ..., "shapes": [{"name", "shape"}...],
     "meta": {...}, "checksum": <FNV-1a 64 of payload bytes>,
     "payload": <base64 of little-endian float64 blocks in declared order>}

Writes go to a temporary file in the target directory and are renamed into
place, so readers never observe a half-written checkpoint.
"""
from __future__ import annotations

import base64
import binascii
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from latentcond._fnv import fnv1a64
from latentcond.diffcore import Mlp
from latentcond.errors import ChecksumMismatchError, MalformedCheckpointError, VersionMismatchError
from latentcond.models import AuxModel, Generator, PairDataset, Prior, TaskData
from latentcond.translator import TranslatorParams

FORMAT_VERSION = 1


def _mlp_blocks(prefix: str, mlp: Mlp):
    blocks = []
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        blocks += [(f"{prefix}W{i}", w), (f"{prefix}b{i}", b)]
    return blocks


def _mlp_from(blocks: dict, prefix: str, activations) -> Mlp:
    n = len(activations)
    return Mlp(
        tuple(blocks[f"{prefix}W{i}"] for i in range(n)),
        tuple(blocks[f"{prefix}b{i}"] for i in range(n)),
        tuple(activations),
    )


def _encode(obj):
    """(kind, meta, [(name, array)])"""
    if isinstance(obj, Prior):
        return "prior", {"latent_dim": obj.latent_dim}, [("scale", obj.scales)]
    if isinstance(obj, Generator):
        meta = {"activations": list(obj.body.activations), "box": obj.box}
        return "generator", meta, _mlp_blocks("", obj.body)
    if isinstance(obj, AuxModel):
        meta = {"activations": list(obj.body.activations), "aux_kind": obj.kind}
        return "aux", meta, _mlp_blocks("", obj.body)
    if isinstance(obj, TranslatorParams):
        meta = {
            "n_components": obj.n_components,
            "latent_dim": obj.latent_dim,
            "cond_dim": obj.cond_dim,
            "deterministic": obj.deterministic,
            "box": obj.box,
            "history": list(obj.history),
        }
        return "translator", meta, [(k, obj.arrays[k]) for k in obj.names]
    if isinstance(obj, PairDataset):
        meta = dict(obj.meta, n=len(obj), latent_dim=obj.z.shape[1], cond_dim=obj.c.shape[1])
        records = np.concatenate([obj.z, obj.c], axis=1)
        return "pairs", meta, [("records", records)]
    if isinstance(obj, TaskData):
        blocks = [("x", obj.x), ("labels", obj.labels), ("x_val", obj.x_val), ("labels_val", obj.labels_val)]
        return "taskdata", {}, blocks
    raise TypeError(f"cannot checkpoint {type(obj).__name__}")


def _decode(kind, meta, blocks):
    if kind == "prior":
        scale = blocks["scale"]
        s = float(scale[0]) if np.all(scale == scale[0]) else tuple(float(v) for v in scale)
        return Prior(meta["latent_dim"], s)
    if kind == "generator":
        return Generator(_mlp_from(blocks, "", meta["activations"]), box=meta["box"])
    if kind == "aux":
        return AuxModel(meta["aux_kind"], _mlp_from(blocks, "", meta["activations"]))
    if kind == "translator":
        return TranslatorParams(
            dict(blocks), meta["n_components"], meta["latent_dim"], meta["cond_dim"],
            meta["deterministic"], meta["box"], tuple(meta["history"]),
        )
    if kind == "pairs":
        rec = blocks["records"]
        d = meta["latent_dim"]
        extra = {k: v for k, v in meta.items() if k not in ("n", "latent_dim", "cond_dim")}
        return PairDataset(rec[:, :d].copy(), rec[:, d:].copy(), extra)
    if kind == "taskdata":
        lab = lambda a: a.astype(np.int64)
        return TaskData(blocks["x"], lab(blocks["labels"]), blocks["x_val"], lab(blocks["labels_val"]))
    raise MalformedCheckpointError(f"unknown checkpoint kind {kind!r}")


def dumps(obj) -> str:
    kind, meta, blocks = _encode(obj)
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for _, a in blocks)
    env = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "shapes": [{"name": n, "shape": list(np.shape(a))} for n, a in blocks],
        "meta": meta,
        "checksum": fnv1a64(payload),
        "payload": base64.b64encode(payload).decode("ascii"),
    }
    return json.dumps(env, sort_keys=True, indent=1)


def loads(text: str):
    try:
        env = json.loads(text)
        version = env["format_version"]
        kind, shapes, meta = env["kind"], env["shapes"], env["meta"]
        checksum, payload_b64 = env["checksum"], env["payload"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise MalformedCheckpointError(f"not a checkpoint envelope: {exc}") from exc
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"checkpoint format {version}, this build reads {FORMAT_VERSION}")
    try:
        payload = base64.b64decode(payload_b64, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise MalformedCheckpointError(f"payload is not valid base64: {exc}") from exc
    if fnv1a64(payload) != checksum:
        raise ChecksumMismatchError("payload checksum does not match envelope")
    blocks, offset = {}, 0
    for entry in shapes:
        shape = tuple(entry["shape"])
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(payload):
            raise MalformedCheckpointError("payload shorter than declared shapes")
        blocks[entry["name"]] = np.frombuffer(payload[offset:offset + nbytes], dtype="<f8").reshape(shape).astype(np.float64)
        offset += nbytes
    if offset != len(payload):
        raise MalformedCheckpointError("payload longer than declared shapes")
    return _decode(kind, meta, blocks)


def save(path, obj) -> Path:
    path = Path(path)
    text = dumps(obj)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def load(path):
    return loads(Path(path).read_text())
