"""Single-file checkpoints and plain-text embedding export.

A checkpoint is one JSON manifest line (keys sorted, so identical inputs
give identical bytes) followed by the payload: every array as little-endian
float64, concatenated in manifest order.
"""

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from hypkg.data import INVERSE_MARKER
from hypkg.errors import CheckpointError, DomainError
from hypkg.model import ARRAY_FIELDS, ModelParams, softplus
from hypkg.train import OptimizerState

log = logging.getLogger(__name__)

FORMAT = "hypkg-checkpoint"
VERSION = 1
_LE = "<f8"


def dictionary_hash(entities, relations):
    """sha256 over entity names then base relation names, newline-separated."""
    h = hashlib.sha256()
    for names in (entities, relations):
        h.update(("\n".join(names) + "\n\x00").encode("utf-8"))
    return h.hexdigest()


@dataclass
class Checkpoint:
    params: ModelParams
    entities: list
    relations: list
    config: dict | None
    opt_state: object | None
    manifest: dict


def _arrays(params, opt_state):
    out = [(name, getattr(params, name)) for name in ARRAY_FIELDS]
    if opt_state is not None:
        for key, arr in sorted(opt_state.arrays().items()):
            out.append((f"opt.{key}", arr))
    return out


def save(path, params, entities, relations, config=None, opt_state=None):
    """Write params (and optionally optimizer state) to ``path``.

    ``relations`` are the base relation names; inverse relations are implied.
    """
    entities, relations = list(entities), list(relations)
    if len(entities) != params.n_entities or 2 * len(relations) != params.n_relations:
        raise DomainError("dictionary sizes do not match the parameter shapes")
    directory, chunks, offset = [], [], 0
    for name, arr in _arrays(params, opt_state):
        data = np.ascontiguousarray(arr, dtype=_LE)
        directory.append({"name": name, "offset": offset, "shape": list(arr.shape)})
        chunks.append(data.tobytes())
        offset += data.nbytes
    manifest = {
        "format": FORMAT,
        "version": VERSION,
        "kind": params.kind,
        "dim": params.dim,
        "n_entities": params.n_entities,
        "n_base_relations": len(relations),
        "curvature": "trainable" if params.fixed_curvature is None else {"fixed": params.fixed_curvature},
        "config": config,
        "optimizer": None if opt_state is None else opt_state.kind,
        "entities": entities,
        "relations": relations,
        "dictionary_sha256": dictionary_hash(entities, relations),
        "arrays": directory,
        "payload_bytes": offset,
    }
    header = json.dumps(manifest, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    path = Path(path)
    try:
        with open(path, "wb") as fh:
            fh.write(header.encode("utf-8") + b"\n")
            for chunk in chunks:
                fh.write(chunk)
    except OSError as err:
        raise CheckpointError(f"cannot write checkpoint {path}: {err}") from err
    log.info("saved checkpoint %s (%d payload bytes)", path, offset)


def load(path, dataset=None):
    """Read a checkpoint; with ``dataset`` given, refuse a dictionary mismatch."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as err:
        raise CheckpointError(f"cannot read checkpoint {path}: {err}") from err
    head, sep, payload = raw.partition(b"\n")
    try:
        manifest = json.loads(head.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise CheckpointError(f"{path}: unreadable manifest ({err})") from err
    if not sep or manifest.get("format") != FORMAT:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if manifest.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported format version {manifest.get('version')}")
    if len(payload) != manifest["payload_bytes"]:
        raise CheckpointError(
            f"{path}: payload is {len(payload)} bytes, manifest declares {manifest['payload_bytes']} (truncated or corrupt)"
        )
    if dictionary_hash(manifest["entities"], manifest["relations"]) != manifest["dictionary_sha256"]:
        raise CheckpointError(f"{path}: manifest dictionaries do not match their hash")
    if dataset is not None:
        expected = dictionary_hash(dataset.entities, dataset.base_relations)
        if expected != manifest["dictionary_sha256"]:
            raise CheckpointError(f"{path}: checkpoint was trained on different entity/relation dictionaries")

    arrays = {}
    for entry in manifest["arrays"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        end = entry["offset"] + 8 * count
        if end > len(payload):
            raise CheckpointError(f"{path}: array {entry['name']} runs past the payload")
        arr = np.frombuffer(payload, dtype=_LE, count=count, offset=entry["offset"])
        arrays[entry["name"]] = arr.astype(np.float64).reshape(entry["shape"])

    missing = [f for f in ARRAY_FIELDS if f not in arrays]
    if missing:
        raise CheckpointError(f"{path}: missing arrays {missing}")
    curv = manifest["curvature"]
    params = ModelParams(
        kind=manifest["kind"],
        fixed_curvature=None if curv == "trainable" else curv["fixed"],
        **{f: arrays[f] for f in ARRAY_FIELDS},
    )
    opt_state = None
    if manifest["optimizer"] is not None:
        opt_state = OptimizerState(manifest["optimizer"])
        for key, arr in arrays.items():
            if not key.startswith("opt."):
                continue
            field_name, slot = key[4:].rsplit(".", 1)
            if slot == "steps":
                opt_state.steps[field_name] = arr.astype(np.int64)
            else:
                opt_state.slots.setdefault(field_name, {})[slot] = arr
    return Checkpoint(params, manifest["entities"], manifest["relations"], manifest["config"], opt_state, manifest)


def relation_curvatures(params):
    n = params.n_relations
    if not params.hyperbolic:
        return np.zeros(n)
    if params.fixed_curvature is not None:
        return np.full(n, float(params.fixed_curvature))
    return softplus(params.curvature_raw)


def export_embeddings(path, params, entities, relations):
    """Write ``name<TAB>x_1 ... x_d`` tangent coordinates per entity.

    Ball coordinates depend on the relation's curvature, so the per-relation
    curvatures go to a ``<path>.curvatures.tsv`` sidecar instead.
    """
    path = Path(path)
    names = list(relations) + [r + INVERSE_MARKER for r in relations]
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for name, row in zip(entities, params.entity):
                fh.write(name + "\t" + "\t".join(repr(float(x)) for x in row) + "\n")
        with open(_sidecar(path), "w", encoding="utf-8") as fh:
            for name, c in zip(names, relation_curvatures(params)):
                fh.write(f"{name}\t{float(c)!r}\n")
    except OSError as err:
        raise CheckpointError(f"cannot write export {path}: {err}") from err
    return path, _sidecar(path)


def _sidecar(path):
    return path.with_name(path.name + ".curvatures.tsv")


def import_embeddings(path):
    """Inverse of :func:`export_embeddings`: (names, tangent matrix, {relation: c})."""
    path = Path(path)
    names, rows = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            name, *vals = line.rstrip("\n").split("\t")
            names.append(name)
            rows.append([float(v) for v in vals])
    curv = {}
    with open(_sidecar(path), encoding="utf-8") as fh:
        for line in fh:
            name, c = line.rstrip("\n").split("\t")
            curv[name] = float(c)
    return names, np.array(rows, dtype=np.float64).reshape(len(names), -1), curv
