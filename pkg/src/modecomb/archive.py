"""On-disk formats for model weights and permutation sets.

Weight archive layout (all integers little-endian)::

    bytes 0..3    magic b"MCW1"
    bytes 4..7    header length H, unsigned 32-bit
    bytes 8..8+H  UTF-8 JSON header
    rest          float32 payload, arrays concatenated in header order

The header carries ``architecture`` (the Architecture fields), ``entries``
(``name``, ``shape``, ``dtype`` = ``"f32"`` per array, in flatten order) and
free-form ``metadata``.

Permutation files are JSON: ``{"format": "mcperm1", "perms": [[...], ...]}``
with one index array per hidden layer.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, is_dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, FormatError, ValidationError
from .nets import Architecture, ModelWeights, PermutationSet, flatten, unflatten

MAGIC = b"MCW1"
PERM_FORMAT = "mcperm1"
_HEAD = struct.Struct("<4sI")


def config_digest(obj) -> str:
    """Stable sha256 of a (possibly nested) dataclass or JSON-able object."""
    def plain(x):
        if is_dataclass(x):
            return {"type": type(x).__name__, **{k: plain(v) for k, v in asdict(x).items()}}
        if isinstance(x, dict):
            return {k: plain(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [plain(v) for v in x]
        return x
    text = json.dumps(plain(obj), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def encode_weights(theta: ModelWeights, metadata: dict | None = None) -> bytes:
    header = {
        "architecture": asdict(theta.arch),
        "entries": [{"name": n, "shape": list(a.shape), "dtype": "f32"} for n, a in theta.arrays()],
        "metadata": metadata or {},
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = flatten(theta).astype("<f4", copy=False).tobytes()
    return _HEAD.pack(MAGIC, len(head)) + head + payload


def decode_weights(blob: bytes) -> tuple[ModelWeights, dict]:
    """Parse an archive; returns the model and its metadata."""
    if len(blob) < _HEAD.size:
        raise FormatError(f"archive truncated: {len(blob)} bytes, need at least {_HEAD.size}", len(blob))
    magic, head_len = _HEAD.unpack_from(blob, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    end = _HEAD.size + head_len
    if end > len(blob):
        raise FormatError(f"header of {head_len} bytes runs past end of file", len(blob))
    try:
        header = json.loads(blob[_HEAD.size:end].decode("utf-8"))
        arch = Architecture(**header["architecture"])
        entries = header["entries"]
        metadata = header.get("metadata", {})
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"unreadable header: {exc}", _HEAD.size) from exc

    expected = [(n, list(s)) for n, _, s in arch.param_layout()]
    try:
        found = [(e["name"], list(e["shape"])) for e in entries]
        dtypes = {e["dtype"] for e in entries}
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed header entry: {exc}", _HEAD.size) from exc
    if dtypes - {"f32"}:
        raise ValidationError(f"unsupported dtypes {sorted(dtypes - {'f32'})}")
    if found != expected:
        raise ValidationError("header entries do not match the declared architecture")

    payload = blob[end:]
    if len(payload) % 4:
        raise FormatError(f"payload of {len(payload)} bytes is not a whole number of float32 values", end)
    count = len(payload) // 4
    claimed = sum(int(np.prod(s)) for _, s in found)
    if count != claimed:
        raise DimensionError(f"header declares {claimed} values but payload holds {count}")
    vector = np.frombuffer(payload, dtype="<f4").astype(np.float32)
    return unflatten(vector, arch), metadata


def save_weights(theta: ModelWeights, path, metadata: dict | None = None) -> None:
    Path(path).write_bytes(encode_weights(theta, metadata))


def load_weights(path) -> ModelWeights:
    return decode_weights(Path(path).read_bytes())[0]


def load_weights_with_metadata(path) -> tuple[ModelWeights, dict]:
    return decode_weights(Path(path).read_bytes())


def encode_permutation(pi: PermutationSet) -> str:
    doc = {"format": PERM_FORMAT, "perms": [p.tolist() for p in pi.perms]}
    return json.dumps(doc, indent=1) + "\n"


def decode_permutation(text: str) -> PermutationSet:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"permutation file is not valid JSON: {exc}", exc.pos) from exc
    if not isinstance(doc, dict) or doc.get("format") != PERM_FORMAT:
        raise FormatError(f"not a {PERM_FORMAT} permutation file", 0)
    perms = doc.get("perms")
    if not isinstance(perms, list) or not all(isinstance(p, list) for p in perms):
        raise ValidationError("'perms' must be a list of index arrays")
    return PermutationSet(tuple(np.asarray(p, dtype=np.int64) for p in perms))


def save_permutation(pi: PermutationSet, path) -> None:
    Path(path).write_text(encode_permutation(pi))


def load_permutation(path) -> PermutationSet:
    return decode_permutation(Path(path).read_text())
