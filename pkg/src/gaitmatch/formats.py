"""On-disk formats: pose sequences, silhouettes, embeddings and dense tensors.

Every text format opens with a magic/version line. Floats are written with
``repr``, the shortest decimal string that parses back to the same double,
so write -> read -> write is byte-stable.

Pose file (``.pose``)::

    GAITMATCH-POSE 1
    units m
    frame_rate 30.0
    joints 3
    0 pelvis -1 -
    1 spine 0 2
    2 l_hip 0 1
    frames 2
    <3*J floats for frame 0>
    <3*J floats for frame 1>

Each joint line is ``index name parent reference`` with ``-1``/``-`` for none.

Tensor file (``.ten``)::

    GAITMATCH-TENSOR 1
    shape N C H W
    <W floats per line, N*C*H lines, row-major>
"""
from __future__ import annotations

import csv
import io
import math
import re
from pathlib import Path

import numpy as np

from .clothing import Silhouette
from .errors import (
    FormatError,
    NonFiniteError,
    TopologyError,
    TreeViolationError,
    TruncatedError,
    UnsupportedFormatError,
    VersionError,
    StructuralError,
)
from .evaluation import EmbeddingSet
from .skeleton import PoseSequence, RestPose, SkeletonTopology

POSE_MAGIC = "GAITMATCH-POSE"
POSE_VERSION = 1
TENSOR_MAGIC = "GAITMATCH-TENSOR"
TENSOR_VERSION = 1
_NAME_RE = re.compile(r"^\S+$")


def fmt_float(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialise non-finite value {x!r}")
    return repr(x)


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


class _Lines:
    """Line cursor that reports 1-based locations."""

    def __init__(self, text: str, path):
        self.lines = text.split("\n")
        if self.lines and self.lines[-1] == "":
            self.lines.pop()
        self.path = path
        self.pos = 0

    def next(self, what: str) -> tuple[int, str]:
        if self.pos >= len(self.lines):
            raise TruncatedError(f"unexpected end of file, expected {what}", self.path, self.pos + 1, what)
        self.pos += 1
        return self.pos, self.lines[self.pos - 1]

    def keyed(self, key: str) -> tuple[int, list[str]]:
        lineno, line = self.next(key)
        parts = line.split()
        if not parts or parts[0] != key:
            raise FormatError(f"expected {key!r} line, got {line!r}", self.path, lineno, key)
        return lineno, parts[1:]

    def error(self, cls, msg, lineno, field, **kw):
        return cls(msg, self.path, lineno, field, **kw)


def _parse_float(tok: str, path, lineno: int, field: str) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise FormatError(f"not a number: {tok!r}", path, lineno, field) from None
    if not math.isfinite(v):
        raise NonFiniteError(f"non-finite value {tok!r}", path, lineno, field)
    return v


def _parse_int(tok: str, path, lineno: int, field: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise FormatError(f"not an integer: {tok!r}", path, lineno, field) from None


def _check_magic(cur: _Lines, magic: str, version: int) -> None:
    lineno, line = cur.next("magic")
    parts = line.split()
    if len(parts) != 2 or parts[0] != magic:
        raise VersionError(f"expected '{magic} {version}' header, got {line!r}", cur.path, lineno, "magic")
    if parts[1] != str(version):
        raise VersionError(f"unsupported {magic} version {parts[1]!r} (supported: {version})",
                           cur.path, lineno, "version")


def dumps_pose_sequence(seq: PoseSequence) -> str:
    topo = seq.topology
    out = [f"{POSE_MAGIC} {POSE_VERSION}", "units m", f"frame_rate {fmt_float(seq.frame_rate)}",
           f"joints {topo.n_joints}"]
    for j, name in enumerate(topo.joint_names):
        if not _NAME_RE.match(name):
            raise StructuralError(f"joint name {name!r} contains whitespace")
        ref = topo.reference_joints[j]
        out.append(f"{j} {name} {topo.parents[j]} {'-' if ref is None else ref}")
    out.append(f"frames {len(seq)}")
    for frame in seq.frames:
        out.append(" ".join(fmt_float(v) for v in frame.reshape(-1)))
    return "\n".join(out) + "\n"


def loads_pose_sequence(text: str, path=None) -> PoseSequence:
    cur = _Lines(text, path)
    _check_magic(cur, POSE_MAGIC, POSE_VERSION)
    lineno, args = cur.keyed("units")
    if args != ["m"]:
        raise FormatError(f"units must be 'm', got {' '.join(args)!r}", path, lineno, "units")
    lineno, args = cur.keyed("frame_rate")
    if len(args) != 1:
        raise FormatError("frame_rate takes one value", path, lineno, "frame_rate")
    frame_rate = _parse_float(args[0], path, lineno, "frame_rate")
    if frame_rate <= 0:
        raise FormatError("frame_rate must be positive", path, lineno, "frame_rate")
    lineno, args = cur.keyed("joints")
    if len(args) != 1:
        raise FormatError("joints takes one value", path, lineno, "joints")
    n = _parse_int(args[0], path, lineno, "joints")
    if n < 1:
        raise FormatError("joint count must be >= 1", path, lineno, "joints")

    names, parents, refs, joint_lines = [], [], [], []
    for j in range(n):
        lineno, line = cur.next(f"joint {j}")
        parts = line.split()
        if len(parts) != 4:
            raise FormatError(f"joint line needs 'index name parent reference', got {line!r}", path, lineno, "joint")
        idx = _parse_int(parts[0], path, lineno, "index")
        if idx != j:
            raise FormatError(f"joint index {idx} out of sequence (expected {j})", path, lineno, "index")
        parent = _parse_int(parts[2], path, lineno, "parent")
        ref = None if parts[3] == "-" else _parse_int(parts[3], path, lineno, "reference")
        names.append(parts[1])
        parents.append(parent)
        refs.append(ref)
        joint_lines.append(lineno)
    try:
        topo = SkeletonTopology(tuple(names), tuple(parents), tuple(refs))
    except TopologyError as exc:
        j = names.index(exc.joint) if exc.joint in names else 0
        raise TreeViolationError(str(exc), path, joint_lines[j], "parent", joint=exc.joint) from None
    except StructuralError as exc:
        raise FormatError(str(exc), path, joint_lines[0], "joint") from None

    lineno, args = cur.keyed("frames")
    if len(args) != 1:
        raise FormatError("frames takes one value", path, lineno, "frames")
    t = _parse_int(args[0], path, lineno, "frames")
    if t < 1:
        raise FormatError("frame count must be >= 1", path, lineno, "frames")
    data = np.empty((t, n * 3))
    for f in range(t):
        lineno, line = cur.next(f"frame {f}")
        toks = line.split()
        if len(toks) != 3 * n:
            raise FormatError(f"frame {f} has {len(toks)} values, expected {3 * n}", path, lineno, f"frame {f}")
        for k, tok in enumerate(toks):
            data[f, k] = _parse_float(tok, path, lineno, f"{names[k // 3]}.{'xyz'[k % 3]}")
    if cur.pos != len(cur.lines):
        raise FormatError("trailing content after last frame", path, cur.pos + 1, "frames")
    return PoseSequence(topo, data.reshape(t, n, 3), frame_rate)


def write_pose_sequence(seq: PoseSequence, path) -> None:
    _write_text(path, dumps_pose_sequence(seq))


def read_pose_sequence(path) -> PoseSequence:
    return loads_pose_sequence(Path(path).read_text(encoding="utf-8"), path)


def read_rest_pose(path) -> RestPose:
    """Rest pose stored as a pose file; its first frame is used."""
    seq = read_pose_sequence(path)
    return RestPose(seq.topology, seq.frames[0])


def write_rest_pose(rest: RestPose, path, frame_rate: float = 30.0) -> None:
    write_pose_sequence(PoseSequence(rest.topology, rest.positions[None], frame_rate), path)


# --- silhouettes (binary PGM) ----------------------------------------------

def _pgm_tokens(data: bytes, path, n_tokens: int) -> tuple[list[bytes], int]:
    tokens: list[bytes] = []
    i = 0
    while len(tokens) < n_tokens:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if i < len(data) and data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        if i >= len(data):
            raise TruncatedError("PGM header ends early", path, field="header", offset=i)
        start = i
        while i < len(data) and not data[i : i + 1].isspace() and data[i : i + 1] != b"#":
            i += 1
        tokens.append(data[start:i])
    return tokens, i


def decode_pgm(data: bytes, path=None) -> Silhouette:
    """Decode a binary (P5) PGM; any pixel > 0 is foreground."""
    if data[:2] in (b"P2",):
        raise UnsupportedFormatError("ASCII PGM (P2) is not supported; use binary P5", path, field="magic",
                                     offset=0)
    if data[:2] != b"P5":
        raise FormatError(f"not a PGM file (magic {data[:2]!r})", path, field="magic", offset=0)
    (magic, w_tok, h_tok, max_tok), end = _pgm_tokens(data, path, 4)
    fields = {"width": w_tok, "height": h_tok, "maxval": max_tok}
    vals = {}
    for name, tok in fields.items():
        if not tok.isdigit():
            raise FormatError(f"{name} is not a positive integer: {tok!r}", path, field=name, offset=end)
        vals[name] = int(tok)
    w, h, maxval = vals["width"], vals["height"], vals["maxval"]
    if w < 1 or h < 1:
        raise FormatError("width and height must be >= 1", path, field="width" if w < 1 else "height", offset=end)
    if not 1 <= maxval <= 255:
        raise UnsupportedFormatError(f"maxval {maxval} unsupported (1..255 only)", path, field="maxval", offset=end)
    if end >= len(data) or not data[end : end + 1].isspace():
        raise TruncatedError("missing whitespace after PGM header", path, field="header", offset=end)
    start = end + 1
    payload = data[start : start + w * h]
    if len(payload) < w * h:
        raise TruncatedError(f"payload has {len(payload)} bytes, expected {w * h}", path, field="pixels",
                             offset=start + len(payload))
    pix = np.frombuffer(payload, dtype=np.uint8).reshape(h, w)
    return Silhouette(pix > 0)


def encode_pgm(sil: Silhouette) -> bytes:
    header = f"P5\n{sil.width} {sil.height}\n255\n".encode("ascii")
    return header + (sil.mask.astype(np.uint8) * 255).tobytes()


def read_silhouette(path) -> Silhouette:
    return decode_pgm(Path(path).read_bytes(), path)


def write_silhouette(sil: Silhouette, path) -> None:
    Path(path).write_bytes(encode_pgm(sil))


# --- embeddings (CSV) ------------------------------------------------------

def loads_embeddings(text: str, path=None) -> EmbeddingSet:
    """Parse ``subject_id,covariate,d0..dK`` CSV; a header-only file is an empty set."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise FormatError("missing header", path, 1, "header")
    header = [c.strip() for c in rows[0]]
    if header[:2] != ["subject_id", "covariate"]:
        raise FormatError("header must start with 'subject_id,covariate'", path, 1, "header")
    dims = header[2:]
    if not dims:
        raise FormatError("header declares no vector columns", path, 1, "header")
    for k, name in enumerate(dims):
        if name != f"d{k}":
            raise FormatError(f"vector column {k} must be named 'd{k}', got {name!r}", path, 1, name)
    d = len(dims)
    ids, covs, vecs = [], [], []
    for r, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != d + 2:
            raise FormatError(f"row {r} has {len(row)} cells, expected {d + 2}", path, r, "row")
        if not row[0].strip():
            raise FormatError(f"row {r} has an empty subject_id", path, r, "subject_id")
        ids.append(row[0].strip())
        covs.append(row[1].strip() or None)
        vecs.append([_parse_float(c.strip(), path, r, dims[k]) for k, c in enumerate(row[2:])])
    return EmbeddingSet(tuple(ids), tuple(covs), np.array(vecs, dtype=float).reshape(len(vecs), d))


def dumps_embeddings(emb: EmbeddingSet) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["subject_id", "covariate"] + [f"d{k}" for k in range(emb.dim)])
    for sid, cov, vec in zip(emb.subject_ids, emb.covariates, emb.vectors):
        w.writerow([sid, cov or ""] + [fmt_float(v) for v in vec])
    return buf.getvalue()


def read_embeddings(path) -> EmbeddingSet:
    return loads_embeddings(Path(path).read_text(encoding="utf-8"), path)


def write_embeddings(emb: EmbeddingSet, path) -> None:
    _write_text(path, dumps_embeddings(emb))


# --- dense tensors ---------------------------------------------------------

def dumps_tensor(x: np.ndarray) -> str:
    x = np.asarray(x, dtype=float)
    if x.ndim != 4:
        raise StructuralError(f"tensor files hold (N, C, H, W) arrays, got {x.ndim}-D")
    out = [f"{TENSOR_MAGIC} {TENSOR_VERSION}", "shape " + " ".join(str(s) for s in x.shape)]
    for row in x.reshape(-1, x.shape[3]):
        out.append(" ".join(fmt_float(v) for v in row))
    return "\n".join(out) + "\n"


def loads_tensor(text: str, path=None) -> np.ndarray:
    cur = _Lines(text, path)
    _check_magic(cur, TENSOR_MAGIC, TENSOR_VERSION)
    lineno, args = cur.keyed("shape")
    if len(args) != 4:
        raise FormatError("shape needs four dimensions N C H W", path, lineno, "shape")
    shape = [_parse_int(a, path, lineno, "shape") for a in args]
    if min(shape) < 1:
        raise FormatError("all tensor dimensions must be >= 1", path, lineno, "shape")
    n, c, h, w = shape
    data = np.empty((n * c * h, w))
    for r in range(n * c * h):
        lineno, line = cur.next(f"row {r}")
        toks = line.split()
        if len(toks) != w:
            raise FormatError(f"row has {len(toks)} values, expected {w}", path, lineno, f"row {r}")
        data[r] = [_parse_float(t, path, lineno, f"row {r}") for t in toks]
    if cur.pos != len(cur.lines):
        raise FormatError("trailing content after last row", path, cur.pos + 1, "rows")
    return data.reshape(n, c, h, w)


def read_tensor(path) -> np.ndarray:
    return loads_tensor(Path(path).read_text(encoding="utf-8"), path)


def write_tensor(x: np.ndarray, path) -> None:
    _write_text(path, dumps_tensor(x))


# --- flat key/value documents ---------------------------------------------

def dumps_keyvalue(doc: dict) -> str:
    lines = []
    for k, v in doc.items():
        if isinstance(v, float):
            v = repr(v)
        lines.append(f"{k}={v}")
    return "\n".join(lines) + "\n"
