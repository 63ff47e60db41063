"""On-disk artifact formats: ACTF tensors, label maps, detections, manifests.

ACTF is the single binary container for depth rasters, embeddings and
feature stacks: magic "ACTF", u32 version=1, u32 dtype (0 = f32),
u32 ndim, ndim * u32 dims, then the raw little-endian f32 payload in
row-major order. Everything here reads and writes bit-exactly.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import ValidationError

ACTF_MAGIC = b"ACTF"
ACTF_VERSION = 1
DTYPE_F32 = 0

# Cityscapes-style trainIds. 255 is the ignore label.
TRAIN_ID_NAMES = (
    "road", "sidewalk", "building", "wall", "fence", "pole",
    "traffic light", "traffic sign", "vegetation", "terrain", "sky",
    "person", "rider", "car", "truck", "bus", "train", "motorcycle",
    "bicycle",
)
NUM_CLASSES = len(TRAIN_ID_NAMES)
IGNORE_LABEL = 255

# Open-vocabulary detection targets (14 traffic-object classes).
DETECTION_CLASSES = (
    "car", "truck", "bus", "motorcycle", "bicycle", "person",
    "pedestrian", "traffic light", "traffic sign", "stop sign",
    "speed limit sign", "crosswalk sign", "construction sign",
    "traffic cone",
)

# Subset whose boxes extend the edge-metric mask.
SIGN_CLASSES = frozenset({
    "traffic sign", "stop sign", "speed limit sign", "crosswalk sign",
    "construction sign",
})


@dataclass
class Tensor:
    """A dense tensor with explicit row-major dims. Only f32 exists in v1."""

    dims: tuple[int, ...]
    data: np.ndarray  # 1-d contiguous f32 buffer
    dtype: str = "f32"

    def __post_init__(self):
        if self.dtype != "f32":
            raise ValidationError(f"unsupported dtype {self.dtype!r}")
        if len(self.dims) == 0:
            raise ValidationError("tensor dims must be non-empty")
        for d in self.dims:
            if d < 1:
                raise ValidationError(f"extent < 1 in dims {list(self.dims)}")
        n = int(np.prod(self.dims))
        if self.data.size != n:
            raise ValidationError(
                f"dims {list(self.dims)} imply {n} elements, buffer has {self.data.size}"
            )

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "Tensor":
        a = np.ascontiguousarray(arr, dtype="<f4")
        return cls(dims=tuple(int(d) for d in a.shape), data=a.reshape(-1))

    def to_array(self) -> np.ndarray:
        return self.data.reshape(self.dims)


def read_tensor_file(path: str | os.PathLike) -> Tensor:
    """Parse an ACTF file. Raises ValidationError on any malformation."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 16:
        raise ValidationError(f"{path}: truncated header ({len(blob)} bytes)")
    if blob[:4] != ACTF_MAGIC:
        raise ValidationError(f"{path}: bad magic {blob[:4]!r}")
    version, dtype, ndim = struct.unpack_from("<III", blob, 4)
    if version != ACTF_VERSION:
        raise ValidationError(f"{path}: unsupported version {version}")
    if dtype != DTYPE_F32:
        raise ValidationError(f"{path}: unsupported dtype code {dtype}")
    if ndim < 1:
        raise ValidationError(f"{path}: ndim must be >= 1, got {ndim}")
    header_end = 16 + 4 * ndim
    if len(blob) < header_end:
        raise ValidationError(f"{path}: truncated dims")
    dims = struct.unpack_from(f"<{ndim}I", blob, 16)
    for d in dims:
        if d < 1:
            raise ValidationError(f"{path}: extent < 1 in dims {list(dims)}")
    count = 1
    for d in dims:
        count *= d
    expected = header_end + 4 * count
    if len(blob) != expected:
        raise ValidationError(
            f"{path}: payload length mismatch (got {len(blob)} bytes, expected {expected})"
        )
    data = np.frombuffer(blob, dtype="<f4", count=count, offset=header_end)
    return Tensor(dims=tuple(dims), data=data)


def write_tensor_file(tensor: Tensor, path: str | os.PathLike) -> None:
    """Serialize a Tensor to ACTF. Payload bits are preserved exactly."""
    ndim = len(tensor.dims)
    header = ACTF_MAGIC + struct.pack(
        f"<III{ndim}I", ACTF_VERSION, DTYPE_F32, ndim, *tensor.dims
    )
    payload = np.ascontiguousarray(tensor.data, dtype="<f4").tobytes()
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)


def read_array(path: str | os.PathLike) -> np.ndarray:
    """ACTF file as a shaped numpy array."""
    return read_tensor_file(path).to_array()


def write_array(arr: np.ndarray, path: str | os.PathLike) -> None:
    write_tensor_file(Tensor.from_array(arr), path)


def read_label_map(path: str | os.PathLike) -> np.ndarray:
    """8-bit single-channel PNG with values in {0..18, 255}.

    Returns a (H, W) uint8 array. Any other value is rejected.
    """
    with Image.open(path) as im:
        if im.mode not in ("L", "P"):
            raise ValidationError(f"{path}: label map must be 8-bit gray, mode={im.mode}")
        labels = np.asarray(im.convert("L"), dtype=np.uint8)
    bad = (labels >= NUM_CLASSES) & (labels != IGNORE_LABEL)
    if bad.any():
        values = sorted(int(v) for v in np.unique(labels[bad]))
        raise ValidationError(f"{path}: invalid label values {values}")
    return labels


def write_label_map(labels: np.ndarray, path: str | os.PathLike) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    bad = (labels >= NUM_CLASSES) & (labels != IGNORE_LABEL)
    if bad.any():
        raise ValidationError("label map contains values outside {0..18, 255}")
    Image.fromarray(labels, mode="L").save(path, format="PNG")


@dataclass(frozen=True)
class Box:
    cls: str
    score: float
    x1: float
    y1: float
    x2: float
    y2: float

    def coords(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


@dataclass
class DetectionSet:
    boxes: list[Box] = field(default_factory=list)

    def validate(self, width: int | None = None, height: int | None = None) -> None:
        for i, b in enumerate(self.boxes):
            if b.cls not in DETECTION_CLASSES:
                raise ValidationError(f"box {i}: unknown class {b.cls!r}")
            if not (0.0 <= b.score <= 1.0):
                raise ValidationError(f"box {i}: score {b.score} outside [0, 1]")
            if not (b.x1 < b.x2 and b.y1 < b.y2):
                raise ValidationError(f"box {i}: degenerate extent {b.coords()}")
            if width is not None and height is not None:
                if b.x1 < 0 or b.y1 < 0 or b.x2 > width or b.y2 > height:
                    raise ValidationError(
                        f"box {i}: {b.coords()} outside {width}x{height} image"
                    )


def read_detections(path: str | os.PathLike) -> DetectionSet:
    """Detections as JSONL, one object per box."""
    boxes = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                coords = rec["box"]
                boxes.append(Box(
                    cls=str(rec["cls"]), score=float(rec["score"]),
                    x1=float(coords[0]), y1=float(coords[1]),
                    x2=float(coords[2]), y2=float(coords[3]),
                ))
            except (KeyError, IndexError, TypeError, ValueError) as e:
                raise ValidationError(f"{path}:{lineno}: malformed box record: {e}") from e
    return DetectionSet(boxes=boxes)


def write_detections(dets: DetectionSet, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for b in dets.boxes:
            f.write(json.dumps(
                {"cls": b.cls, "score": b.score, "box": [b.x1, b.y1, b.x2, b.y2]}
            ) + "\n")


# Per-pair artifact path fields a manifest entry may carry, besides the
# mandatory image paths. All paths are relative to the manifest file.
ENTRY_ARTIFACTS = (
    "seg_src", "seg_gen", "depth_src", "depth_gen",
    "boxes_src", "boxes_gen", "embed_src", "embed_gen",
    "feats_gen", "prompt",
)


@dataclass
class PairEntry:
    pair_id: int
    original: str
    generated: str
    artifacts: dict[str, str] = field(default_factory=dict)

    def path(self, key: str) -> str | None:
        return self.artifacts.get(key)


@dataclass
class PairManifest:
    entries: list[PairEntry]
    root: str
    # Optional dataset-level artifacts (stacked embeddings, text records).
    embeddings_src: str | None = None
    embeddings_gen: str | None = None
    records: str | None = None

    def __len__(self) -> int:
        return len(self.entries)

    def resolve(self, relpath: str) -> str:
        return os.path.normpath(os.path.join(self.root, relpath))


def load_pair_manifest(path: str | os.PathLike) -> PairManifest:
    """Load and structurally validate a manifest.

    Checks id uniqueness/ordering and that every referenced file exists.
    Content validation (label values, shapes, box bounds) is done by the
    `validate` subcommand.
    """
    path = os.fspath(path)
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ValidationError(f"{path}: not valid JSON: {e}") from e
    if not isinstance(doc, dict) or "entries" not in doc:
        raise ValidationError(f"{path}: manifest must be an object with an 'entries' list")
    root = os.path.dirname(os.path.abspath(path))
    entries: list[PairEntry] = []
    last_id = None
    for rec in doc["entries"]:
        try:
            pair_id = int(rec["id"])
            original = str(rec["original"])
            generated = str(rec["generated"])
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"{path}: malformed entry {rec!r}: {e}") from e
        if last_id is not None and pair_id <= last_id:
            raise ValidationError(
                f"{path}: pair id {pair_id} duplicates or reorders id {last_id}"
            )
        last_id = pair_id
        artifacts = {k: str(rec[k]) for k in ENTRY_ARTIFACTS if k in rec and rec[k]}
        entries.append(PairEntry(pair_id, original, generated, artifacts))
    manifest = PairManifest(
        entries=entries,
        root=root,
        embeddings_src=doc.get("embeddings_src"),
        embeddings_gen=doc.get("embeddings_gen"),
        records=doc.get("records"),
    )
    missing = []
    for entry in entries:
        for rel in (entry.original, entry.generated, *entry.artifacts.values()):
            p = manifest.resolve(rel)
            if not os.path.isfile(p):
                missing.append((entry.pair_id, rel))
    for key in ("embeddings_src", "embeddings_gen"):
        rel = getattr(manifest, key)
        if rel and not os.path.isfile(manifest.resolve(rel)):
            missing.append((-1, rel))
    if manifest.records:
        for suffix in (".actf", ".jsonl"):
            p = manifest.resolve(manifest.records) + suffix
            if not os.path.isfile(p):
                missing.append((-1, manifest.records + suffix))
    if missing:
        pair_id, rel = missing[0]
        where = f"pair {pair_id}" if pair_id >= 0 else "manifest"
        raise ValidationError(
            f"{path}: {len(missing)} referenced file(s) missing, first: {rel} ({where})"
        )
    return manifest


def atomic_write_json(doc: dict, path: str | os.PathLike, *, indent: int = 2) -> None:
    """Write JSON via a temp file and rename so partial files never appear."""
    path = os.fspath(path)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=indent, sort_keys=True)
        f.write("\n")
    os.replace(tmp, path)
