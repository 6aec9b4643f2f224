"""File formats: binary heatmap stacks, JSON landmark files, run configs.

Heatmap stack (``.hmf``): magic ``HMF1``, then count, height, width as
little-endian uint32, then count*height*width little-endian float32 values,
row-major, one heatmap after another.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from wassmark.metrics import LandmarkSet, NormalizationRule

MAGIC = b"HMF1"
_HEADER = struct.Struct("<4sIII")
SCHEMA_VERSION = 1


class FormatError(ValueError):
    pass


# --- heatmap stacks ---------------------------------------------------------


def encode_heatmaps(stack) -> bytes:
    arr = np.asarray(stack)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise FormatError(f"heatmap stack must be (count, height, width), got shape {arr.shape}")
    f32 = arr.astype("<f4")
    if not np.isfinite(f32).all():
        raise FormatError("heatmap stack has non-finite values (after float32 conversion)")
    n, h, w = f32.shape
    return _HEADER.pack(MAGIC, n, h, w) + f32.tobytes(order="C")


def decode_heatmaps(data: bytes) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise FormatError(f"heatmap file too short for a header ({len(data)} bytes)")
    magic, n, h, w = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    expected = _HEADER.size + 4 * n * h * w
    if len(data) != expected:
        raise FormatError(f"payload length mismatch: header says {n}x{h}x{w} ({expected} bytes), file has {len(data)}")
    arr = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(n, h, w)
    if not np.isfinite(arr).all():
        k = int(np.argwhere(~np.isfinite(arr))[0, 0])
        raise FormatError(f"heatmap {k} has non-finite values")
    return arr.astype(np.float32)


def write_heatmaps(path, stack) -> None:
    Path(path).write_bytes(encode_heatmaps(stack))


def read_heatmaps(path) -> np.ndarray:
    return decode_heatmaps(Path(path).read_bytes())


# --- landmark files ---------------------------------------------------------


@dataclass
class LandmarkRecord:
    image_id: str
    landmarks: LandmarkSet
    path: str | None = None
    normalization: NormalizationRule | None = None


@dataclass
class LandmarkFile:
    records: list[LandmarkRecord]
    format: str | None = None  # "mixed" allows differing landmark counts

    def __post_init__(self):
        ids = [r.image_id for r in self.records]
        if len(set(ids)) != len(ids):
            dup = next(i for i in ids if ids.count(i) > 1)
            raise FormatError(f"duplicate image id {dup!r}")
        counts = {len(r.landmarks) for r in self.records}
        if len(counts) > 1 and self.format != "mixed":
            raise FormatError(f"records disagree on the landmark count {sorted(counts)}; tag the file format 'mixed'")

    def by_id(self) -> dict[str, LandmarkRecord]:
        return {r.image_id: r for r in self.records}


def _norm_to_dict(rule: NormalizationRule) -> dict:
    if rule.eyes is not None:
        return {"kind": rule.kind.value, "eyes": [list(e) for e in rule.eyes]}
    return {"kind": rule.kind.value, "value": rule.value}


def _norm_from_dict(d: dict, where: str) -> NormalizationRule:
    _check_keys(d, {"kind", "eyes", "value"}, where)
    return NormalizationRule(d["kind"], eyes=d.get("eyes"), value=d.get("value"))


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise FormatError(f"{where}: expected a mapping, got {type(d).__name__}")
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise FormatError(f"{where}: unknown key {unknown[0]!r}")


def landmarks_to_json(lf: LandmarkFile) -> str:
    images = []
    for r in lf.records:
        rec: dict[str, Any] = {"id": r.image_id, "landmarks": r.landmarks.points.tolist()}
        if r.path is not None:
            rec["path"] = r.path
        if r.landmarks.visible is not None:
            rec["visible"] = r.landmarks.visible.tolist()
        if r.normalization is not None:
            rec["normalization"] = _norm_to_dict(r.normalization)
        images.append(rec)
    doc: dict[str, Any] = {"schema_version": SCHEMA_VERSION, "images": images}
    if lf.format is not None:
        doc["format"] = lf.format
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def landmarks_from_json(text: str) -> LandmarkFile:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"landmark file is not valid JSON: {e}") from None
    _check_keys(doc, {"schema_version", "images", "format"}, "landmark file")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise FormatError(f"unsupported schema_version {doc.get('schema_version')!r}, expected {SCHEMA_VERSION}")
    records = []
    for k, rec in enumerate(doc.get("images", [])):
        where = f"image record {k}"
        _check_keys(rec, {"id", "path", "landmarks", "visible", "normalization"}, where)
        if "id" not in rec or "landmarks" not in rec:
            raise FormatError(f"{where}: 'id' and 'landmarks' are required")
        try:
            lms = LandmarkSet(np.asarray(rec["landmarks"], dtype=np.float64).reshape(-1, 2), rec.get("visible"))
        except ValueError as e:
            raise FormatError(f"{where} ({rec['id']!r}): {e}") from None
        norm = rec.get("normalization")
        records.append(
            LandmarkRecord(
                str(rec["id"]),
                lms,
                rec.get("path"),
                None if norm is None else _norm_from_dict(norm, f"{where} normalization"),
            )
        )
    return LandmarkFile(records, doc.get("format"))


def write_landmarks(path, lf: LandmarkFile) -> None:
    Path(path).write_text(landmarks_to_json(lf))


def read_landmarks(path) -> LandmarkFile:
    return landmarks_from_json(Path(path).read_text())


# --- run configuration ------------------------------------------------------


@dataclass
class TargetSection:
    sigma: float = 1.5
    height: int = 64
    width: int = 64
    amplitude: str = "normalized"
    scale: float = 4.0  # image px per heatmap px


@dataclass
class SinkhornSection:
    epsilon: float = 0.01
    max_iterations: int = 1000
    marginal_tolerance: float = 1e-6


@dataclass
class EvalSection:
    thresholds: list[float] = field(default_factory=lambda: [0.08, 0.1])
    ced_grid_max: float = 0.1
    ced_grid_points: int = 1001  # step 1e-4; a coarse grid caps AUC below 1 for any nonzero error
    auc_ceilings: list[float] | None = None
    image_wise_ced: bool = False
    normalization: dict | None = None  # used when a record has none


@dataclass
class DecodeSection:
    method: str = "get_bc"
    scale: float = 4.0
    logits: bool = False


@dataclass
class PerturbSection:
    kind: str = "occlusion"
    protocol: str = "medium"
    semi_axis_range: list[float] | None = None
    blur_multiplier: float | None = None
    blur_cap: int | None = None
    nose_index: int = 33


@dataclass
class FitSection:
    loss: str = "wasserstein"
    distance: float = 20.0
    sigma: float = 3.0
    size: int = 64
    iterations: int | None = None
    step: float | None = None


@dataclass
class RunConfig:
    seed: int = 0
    threads: int = 1
    output_dir: str | None = None
    target: TargetSection = field(default_factory=TargetSection)
    sinkhorn: SinkhornSection = field(default_factory=SinkhornSection)
    eval: EvalSection = field(default_factory=EvalSection)
    decode: DecodeSection = field(default_factory=DecodeSection)
    perturb: PerturbSection = field(default_factory=PerturbSection)
    fit: FitSection = field(default_factory=FitSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _build(cls, data, where: str):
    names = {f.name: f for f in dataclasses.fields(cls)}
    _check_keys(data, names, where)
    kwargs = {}
    for key, value in data.items():
        sub = names[key].default_factory if names[key].default_factory is not dataclasses.MISSING else None
        if sub is not None and dataclasses.is_dataclass(sub):
            kwargs[key] = _build(sub, value or {}, f"{where}.{key}")
        else:
            kwargs[key] = value
    return cls(**kwargs)


def parse_config(text: str, suffix: str = ".yaml") -> RunConfig:
    """Strictly parse a YAML or JSON run config; unknown keys are errors."""
    if suffix.lower() == ".json":
        data = json.loads(text)
    else:
        import yaml

        data = yaml.safe_load(text)
    return _build(RunConfig, data or {}, "config")


def load_config(path) -> RunConfig:
    p = Path(path)
    return parse_config(p.read_text(), p.suffix)
