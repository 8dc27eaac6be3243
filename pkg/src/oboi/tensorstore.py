"""Bit-exact binary tensor container and dataset manifest.

Tensor file layout (little-endian throughout):

    offset  size          field
    0       8             magic "OBOITNSR"
    8       4             version, u32 (currently 1)
    12      4             rank, u32 (1 for logits, 3 for feature maps)
    16      rank*8        dims, u64 each
    ...     prod(dims)*4  payload, float32, row-major

Declared size must match file length exactly. Payloads are stored as
float32; all arithmetic downstream happens in float64 after load.

The dataset manifest is UTF-8 JSON with significant array ordering (see
docs/FORMATS.md); relative tensor paths resolve against the manifest's
directory.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    CorruptTensor,
    InvalidManifest,
    MissingTensor,
    NotATensorFile,
    RejectedValue,
    ShapeMismatch,
    VersionMismatch,
)
from .model import BoundingBox, LabelSpace, Sample, validate_label_space

MAGIC = b"OBOITNSR"
VERSION = 1
SUPPORTED_RANKS = (1, 3)
MANIFEST_SCHEMA_VERSION = 1


def tensor_bytes(dims, values) -> bytes:
    """Encode (dims, values) into the container layout; values -> float32."""
    dims = tuple(int(d) for d in dims)
    if len(dims) not in SUPPORTED_RANKS:
        raise ShapeMismatch(f"rank must be one of {SUPPORTED_RANKS}, got {len(dims)}")
    if any(d < 1 for d in dims):
        raise ShapeMismatch(f"dims must all be >= 1, got {dims}")
    arr = np.asarray(values, dtype=np.float64)
    n = 1
    for d in dims:
        n *= d
    if arr.size != n:
        raise ShapeMismatch(f"got {arr.size} values for dims {dims} (need {n})")
    if not np.isfinite(arr).all():
        raise RejectedValue("tensor values must be finite")
    with np.errstate(over="ignore"):
        payload = arr.reshape(-1).astype("<f4")
    if not np.isfinite(payload).all():
        # finite in float64 but overflowing float32
        raise RejectedValue("tensor values overflow float32 storage")
    header = MAGIC + struct.pack("<II", VERSION, len(dims))
    header += struct.pack(f"<{len(dims)}Q", *dims)
    return header + payload.tobytes()


def write_tensor(path, dims, values) -> None:
    """Write one tensor file; write followed by read is the identity."""
    data = tensor_bytes(dims, values)
    Path(path).write_bytes(data)


def _parse_header(buf: bytes, where: str):
    if len(buf) < 16 or buf[:8] != MAGIC:
        raise NotATensorFile(f"{where}: bad magic")
    version, rank = struct.unpack_from("<II", buf, 8)
    if version != VERSION:
        raise VersionMismatch(f"{where}: unsupported version {version}")
    if rank not in SUPPORTED_RANKS:
        raise CorruptTensor(f"{where}: unsupported rank {rank}")
    if len(buf) < 16 + 8 * rank:
        raise CorruptTensor(f"{where}: truncated header")
    dims = struct.unpack_from(f"<{rank}Q", buf, 16)
    if any(d < 1 for d in dims):
        raise CorruptTensor(f"{where}: zero-sized dim in {dims}")
    return dims, 16 + 8 * rank


def read_tensor_header(path) -> tuple[int, ...]:
    """Parse and validate the header only; returns dims.

    Also checks that the file length matches the declared payload size, so a
    truncated file is caught without reading the payload.
    """
    p = Path(path)
    with open(p, "rb") as fh:
        buf = fh.read(16 + 8 * max(SUPPORTED_RANKS))
    dims, offset = _parse_header(buf, str(p))
    expected = offset + 4 * int(np.prod(dims, dtype=np.uint64))
    actual = p.stat().st_size
    if actual != expected:
        raise CorruptTensor(f"{p}: file is {actual} bytes, header declares {expected}")
    return dims


def read_tensor(path) -> tuple[tuple[int, ...], np.ndarray]:
    """Read one tensor file; returns (dims, float64 array shaped dims)."""
    p = Path(path)
    buf = p.read_bytes()
    dims, offset = _parse_header(buf, str(p))
    n = int(np.prod(dims, dtype=np.uint64))
    expected = offset + 4 * n
    if len(buf) != expected:
        raise CorruptTensor(f"{p}: file is {len(buf)} bytes, header declares {expected}")
    payload = np.frombuffer(buf, dtype="<f4", count=n, offset=offset)
    if not np.isfinite(payload).all():
        raise CorruptTensor(f"{p}: non-finite payload values")
    values = payload.astype(np.float64).reshape(dims)
    values.flags.writeable = False
    return dims, values


@dataclass(frozen=True)
class Dataset:
    """A validated manifest: label space, sequences, samples, lazy tensors."""

    label_space: LabelSpace
    sequences: tuple[str, ...]
    samples: tuple[Sample, ...]
    base_dir: Path | None = None

    def __post_init__(self):
        object.__setattr__(self, "sequences", tuple(self.sequences))
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(
            self, "_by_id", {s.sample_id: s for s in self.samples}
        )

    def sample(self, sample_id: str) -> Sample:
        return self._by_id[sample_id]

    def resolve(self, ref: str) -> Path:
        return (self.base_dir / ref) if self.base_dir is not None else Path(ref)

    def feature_map(self, sample_id: str) -> np.ndarray:
        """Load one sample's (H', W', D) feature map as float64."""
        s = self.sample(sample_id)
        _, values = read_tensor(self.resolve(s.feature_ref))
        return values

    def logits(self, sample_id: str) -> np.ndarray | None:
        s = self.sample(sample_id)
        if s.logits_ref is None:
            return None
        _, values = read_tensor(self.resolve(s.logits_ref))
        return values

    def samples_of(self, instance: str) -> list[Sample]:
        return [s for s in self.samples if s.instance_label == instance]


def _sample_from_dict(d: dict) -> Sample:
    bbox = d["bbox"]
    h, w = d["image_size"]
    return Sample(
        sample_id=str(d["sample_id"]),
        instance_label=str(d["instance_label"]),
        sequence_id=str(d["sequence_id"]),
        image_size=(int(h), int(w)),
        bbox=BoundingBox(float(bbox[0]), float(bbox[1]), float(bbox[2]), float(bbox[3])),
        predicted_object=str(d["predicted_object"]),
        feature_ref=str(d["feature_path"]),
        logits_ref=(str(d["logits_path"]) if d.get("logits_path") else None),
    )


def sample_to_dict(s: Sample) -> dict:
    return {
        "sample_id": s.sample_id,
        "instance_label": s.instance_label,
        "sequence_id": s.sequence_id,
        "image_size": [int(s.image_size[0]), int(s.image_size[1])],
        "bbox": s.bbox.as_list(),
        "predicted_object": s.predicted_object,
        "feature_path": s.feature_ref,
        "logits_path": s.logits_ref,
    }


def _check_manifest(manifest_path) -> tuple[Dataset | None, list[dict]]:
    """Shared validator: returns (dataset or None, list of problem records).

    Problems are dicts with keys code/where/detail. Tensor headers are
    verified eagerly; payloads are not read. Unknown top-level manifest keys
    are ignored (forward compatibility; the extractor bridge adds notes).
    """
    problems = []
    path = Path(manifest_path)

    def problem(code, where, detail):
        problems.append({"code": code, "where": where, "detail": detail})

    try:
        raw = path.read_text(encoding="utf-8")
        doc = json.loads(raw)
    except OSError as e:
        problem("UnreadableManifest", str(path), str(e))
        return None, problems
    except json.JSONDecodeError as e:
        problem("MalformedJson", str(path), str(e))
        return None, problems
    if not isinstance(doc, dict):
        problem("MalformedJson", str(path), "top level must be an object")
        return None, problems
    if doc.get("schema_version") != MANIFEST_SCHEMA_VERSION:
        problem(
            "UnsupportedSchema",
            str(path),
            f"schema_version must be {MANIFEST_SCHEMA_VERSION}",
        )
        return None, problems

    label_space = LabelSpace.from_dict(doc.get("label_space", {}))
    for v in validate_label_space(label_space):
        problem("InvalidLabelSpace", "label_space", v)

    sequences = [str(s) for s in doc.get("sequences", [])]
    if len(set(sequences)) != len(sequences):
        problem("InvalidSequences", "sequences", "duplicate sequence ids")

    samples = []
    seen_ids = set()
    feature_d = None
    logits_d = None
    base = path.parent
    for idx, sd in enumerate(doc.get("samples", [])):
        try:
            s = _sample_from_dict(sd)
        except (KeyError, TypeError, ValueError, IndexError) as e:
            problem("MalformedSample", f"samples[{idx}]", str(e))
            continue
        where = s.sample_id
        if s.sample_id in seen_ids:
            problem("DuplicateSampleId", where, "sample id appears twice")
        seen_ids.add(s.sample_id)
        if s.instance_label not in set(label_space.instance_classes):
            problem("UnknownInstance", where, f"instance {s.instance_label!r}")
        if s.predicted_object not in set(label_space.object_classes):
            problem("UnknownObject", where, f"object {s.predicted_object!r}")
        if s.sequence_id not in set(sequences):
            problem("UnknownSequence", where, f"sequence {s.sequence_id!r}")
        if s.image_size[0] < 1 or s.image_size[1] < 1:
            problem("InvalidImageSize", where, f"{s.image_size}")
        else:
            try:
                s.bbox.validate(s.image_size)
            except Exception as e:
                problem("InvalidBox", where, str(e))

        fpath = base / s.feature_ref
        if not fpath.is_file():
            problem("MissingTensor", where, str(fpath))
        else:
            try:
                dims = read_tensor_header(fpath)
                if len(dims) != 3:
                    problem("WrongRank", where, f"feature map has rank {len(dims)}")
                elif feature_d is None:
                    feature_d = dims[2]
                elif dims[2] != feature_d:
                    problem("DimMismatch", where, f"D={dims[2]} but dataset has D={feature_d}")
            except Exception as e:
                problem("BadTensor", where, str(e))
        if s.logits_ref is not None:
            lpath = base / s.logits_ref
            if not lpath.is_file():
                problem("MissingTensor", where, str(lpath))
            else:
                try:
                    dims = read_tensor_header(lpath)
                    if len(dims) != 1:
                        problem("WrongRank", where, f"logits have rank {len(dims)}")
                    elif logits_d is None:
                        logits_d = dims[0]
                    elif dims[0] != logits_d:
                        problem(
                            "DimMismatch",
                            where,
                            f"logits length {dims[0]} but dataset has {logits_d}",
                        )
                except Exception as e:
                    problem("BadTensor", where, str(e))
        samples.append(s)

    dataset = Dataset(
        label_space=label_space,
        sequences=tuple(sequences),
        samples=tuple(samples),
        base_dir=base,
    )
    return dataset, problems


def load_dataset(manifest_path) -> Dataset:
    """Load and fully validate a manifest; raises on any violation."""
    dataset, problems = _check_manifest(manifest_path)
    missing = [p for p in problems if p["code"] == "MissingTensor"]
    if missing:
        raise MissingTensor(missing[0]["where"], missing[0]["detail"])
    if problems:
        raise InvalidManifest(
            [f"{p['code']} at {p['where']}: {p['detail']}" for p in problems]
        )
    assert dataset is not None
    return dataset


def validate_dataset(manifest_path) -> dict:
    """As load_dataset, but never raises: accumulates all problems."""
    _, problems = _check_manifest(manifest_path)
    return {
        "manifest": str(manifest_path),
        "ok": not problems,
        "problem_count": len(problems),
        "problems": problems,
    }


def dataset_to_manifest_dict(dataset: Dataset) -> dict:
    return {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "label_space": dataset.label_space.to_dict(),
        "sequences": list(dataset.sequences),
        "samples": [sample_to_dict(s) for s in dataset.samples],
    }
