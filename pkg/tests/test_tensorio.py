import json
import struct

import numpy as np
import pytest

from augeval.errors import ValidationError
from augeval.tensorio import (
    DetectionSet,
    Box,
    Tensor,
    load_pair_manifest,
    read_detections,
    read_label_map,
    read_tensor_file,
    write_detections,
    write_label_map,
    write_tensor_file,
)


def header_size_oracle(dims):
    # magic + version + dtype + ndim + dims + payload, all 4-byte fields
    count = 1
    for d in dims:
        count *= d
    return 16 + 4 * len(dims) + 4 * count


def test_roundtrip_2x2(tmp_path):
    t = Tensor.from_array(np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32))
    path = tmp_path / "t.actf"
    write_tensor_file(t, path)
    back = read_tensor_file(path)
    assert back.dims == (2, 2)
    assert np.array_equal(back.data, np.array([1, 2, 3, 4], dtype=np.float32))


def test_roundtrip_large_grid_byte_compare(tmp_path):
    # 192x64x64 is the production local-feature-grid size.
    rng = np.random.default_rng(0)
    arr = rng.standard_normal((192, 64, 64)).astype(np.float32)
    p1 = tmp_path / "a.actf"
    p2 = tmp_path / "b.actf"
    write_tensor_file(Tensor.from_array(arr), p1)
    write_tensor_file(read_tensor_file(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert np.array_equal(read_tensor_file(p2).to_array(), arr)


@pytest.mark.parametrize("dims", [(1,), (1, 1), (3, 4), (2, 3, 5)])
def test_file_size_matches_header_arithmetic(tmp_path, dims):
    arr = np.zeros(dims, dtype=np.float32)
    path = tmp_path / "t.actf"
    write_tensor_file(Tensor.from_array(arr), path)
    assert path.stat().st_size == header_size_oracle(dims)


def test_single_element_file_is_24_bytes(tmp_path):
    path = tmp_path / "t.actf"
    write_tensor_file(Tensor(dims=(1,), data=np.zeros(1, dtype="<f4")), path)
    assert path.stat().st_size == 24


def test_write_is_deterministic(tmp_path):
    t = Tensor.from_array(np.array([0.25, -1.5], dtype=np.float32))
    p1 = tmp_path / "a.actf"
    p2 = tmp_path / "b.actf"
    write_tensor_file(t, p1)
    write_tensor_file(t, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_nan_preserved_bit_exactly(tmp_path):
    # A NaN with a distinctive payload must survive the round trip.
    weird = np.array([np.float32(np.nan), 1.0], dtype=np.float32)
    weird[0] = np.frombuffer(struct.pack("<I", 0x7FC01234), dtype=np.float32)[0]
    path = tmp_path / "t.actf"
    write_tensor_file(Tensor.from_array(weird), path)
    back = read_tensor_file(path).data
    assert back.tobytes() == weird.tobytes()


def test_zero_extent_rejected():
    with pytest.raises(ValidationError, match="extent < 1"):
        Tensor(dims=(0,), data=np.zeros(0, dtype="<f4"))


def test_zero_extent_file_rejected(tmp_path):
    path = tmp_path / "bad.actf"
    path.write_bytes(b"ACTF" + struct.pack("<IIII", 1, 0, 1, 0))
    with pytest.raises(ValidationError, match="extent < 1"):
        read_tensor_file(path)


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.actf"
    path.write_bytes(b"NOPE" + b"\x00" * 20)
    with pytest.raises(ValidationError, match="magic"):
        read_tensor_file(path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "bad.actf"
    path.write_bytes(b"ACTF" + struct.pack("<IIII", 1, 0, 1, 4) + b"\x00" * 8)
    with pytest.raises(ValidationError, match="payload length mismatch"):
        read_tensor_file(path)


def test_unsupported_dtype(tmp_path):
    path = tmp_path / "bad.actf"
    path.write_bytes(b"ACTF" + struct.pack("<IIII", 1, 7, 1, 1) + b"\x00" * 4)
    with pytest.raises(ValidationError, match="dtype"):
        read_tensor_file(path)


def test_label_map_roundtrip(tmp_path):
    labels = np.array([[0, 5, 18], [255, 1, 2]], dtype=np.uint8)
    path = tmp_path / "seg.png"
    write_label_map(labels, path)
    assert np.array_equal(read_label_map(path), labels)


def test_label_map_rejects_invalid_values(tmp_path):
    from PIL import Image
    bad = np.full((2, 2), 37, dtype=np.uint8)
    path = tmp_path / "seg.png"
    Image.fromarray(bad, mode="L").save(path)
    with pytest.raises(ValidationError, match=r"\[37\]"):
        read_label_map(path)


def test_detections_roundtrip(tmp_path):
    dets = DetectionSet([
        Box("car", 0.9, 1.0, 2.0, 5.0, 6.0),
        Box("traffic sign", 0.5, 0.0, 0.0, 3.0, 3.0),
    ])
    path = tmp_path / "boxes.jsonl"
    write_detections(dets, path)
    back = read_detections(path)
    assert back.boxes == dets.boxes
    back.validate(width=10, height=10)


def test_detections_validate_bounds_and_class():
    dets = DetectionSet([Box("car", 0.9, 0.0, 0.0, 12.0, 5.0)])
    with pytest.raises(ValidationError, match="outside"):
        dets.validate(width=10, height=10)
    with pytest.raises(ValidationError, match="unknown class"):
        DetectionSet([Box("llama", 0.5, 0, 0, 1, 1)]).validate()
    with pytest.raises(ValidationError, match="degenerate"):
        DetectionSet([Box("car", 0.5, 2, 0, 2, 1)]).validate()


def _write_manifest(tmp_path, entries, **top):
    for e in entries:
        for key, rel in e.items():
            if key == "id":
                continue
            (tmp_path / rel).write_bytes(b"x")
    doc = {"entries": entries, **top}
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(doc))
    return path


def test_manifest_loads_in_order(tmp_path):
    entries = [
        {"id": i, "original": f"o{i}.png", "generated": f"g{i}.png"}
        for i in range(3)
    ]
    m = load_pair_manifest(_write_manifest(tmp_path, entries))
    assert len(m) == 3
    assert [e.pair_id for e in m.entries] == [0, 1, 2]


def test_manifest_duplicate_id_names_the_id(tmp_path):
    entries = [
        {"id": 7, "original": "a.png", "generated": "b.png"},
        {"id": 7, "original": "c.png", "generated": "d.png"},
    ]
    with pytest.raises(ValidationError, match="7"):
        load_pair_manifest(_write_manifest(tmp_path, entries))


def test_manifest_missing_file(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"entries": [
        {"id": 0, "original": "gone.png", "generated": "also_gone.png"},
    ]}))
    with pytest.raises(ValidationError, match="missing"):
        load_pair_manifest(path)


def test_manifest_evaluation_set_scale(tmp_path):
    # Full evaluation-set size: 3,048 front-camera pairs.
    (tmp_path / "o.png").write_bytes(b"x")
    (tmp_path / "g.png").write_bytes(b"x")
    entries = [{"id": i, "original": "o.png", "generated": "g.png"}
               for i in range(3048)]
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"entries": entries}))
    assert len(load_pair_manifest(path)) == 3048
