import json

import numpy as np
import pytest

from hoil.utils.core.errors import DataError
from hoil.utils.core.pointcloud import KeypointSet, LabeledPointCloud, PointCloud
from hoil.utils.core.records import (
    MANIFEST_FILE, SEQUENCE_FILE, FrameRecord, decode_sequence, encode_sequence, read_sequence, write_sequence,
)


def make_record(frame_index=0, n=5, n_k=3):
    rng = np.random.default_rng(frame_index)
    return FrameRecord(
        frame_index,
        rng.standard_normal((n, 3)),
        rng.integers(0, 26, n),
        rng.integers(0, 2, n),
        rng.standard_normal((n_k, 3)),
        np.ones(n_k),
        np.zeros(n_k),
    )


def assert_same_record(a, b):
    assert a.frame_index == b.frame_index
    for name in ("points", "part", "contact", "keypoints", "kp_valid", "kp_contact"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
        assert getattr(a, name).dtype == getattr(b, name).dtype


def test_sequence_roundtrip():
    records = [make_record(0), make_record(1, n=0), make_record(7, n=12, n_k=16)]
    decoded = decode_sequence(encode_sequence(records))
    assert len(decoded) == 3
    for a, b in zip(records, decoded):
        assert_same_record(a, b)
    assert encode_sequence(decoded) == encode_sequence(records)


def test_record_stores_little_endian_floats():
    record = make_record()
    assert record.points.dtype == np.dtype("<f4")
    assert record.part.dtype == np.uint8
    assert record.num_points == 5


def test_record_validation():
    with pytest.raises(DataError, match="part"):
        FrameRecord(0, np.zeros((2, 3)), [0], [0, 0], np.zeros((1, 3)), [1], [0])
    with pytest.raises(DataError, match="out of range"):
        FrameRecord(0, np.zeros((1, 3)), [26], [0], np.zeros((1, 3)), [1], [0])
    with pytest.raises(DataError, match="0 or 1"):
        FrameRecord(0, np.zeros((1, 3)), [0], [2], np.zeros((1, 3)), [1], [0])


def test_record_from_labeled_frame():
    cloud = LabeledPointCloud(PointCloud(np.array([[0.0, 1.0, 2.0], [3.0, 4.0, 5.0]])), [20, 24], [True, False])
    keypoints = KeypointSet(np.array([[0.5, 0.5, 0.5]]), valid=[True], contact=[True])
    record = FrameRecord.from_frame(3, cloud, keypoints)
    back = record.labeled_cloud()
    np.testing.assert_array_equal(back.part, [20, 24])
    np.testing.assert_array_equal(back.contact, [True, False])
    np.testing.assert_allclose(back.coords, cloud.coords)
    kp = record.keypoint_set()
    assert kp.valid.tolist() == [True] and kp.contact.tolist() == [True]


def test_decode_rejects_corrupt_files():
    blob = encode_sequence([make_record()])
    with pytest.raises(DataError):
        decode_sequence(b"NOTASEQ!" + blob[8:])
    with pytest.raises(DataError, match="truncated"):
        decode_sequence(blob[:-1])
    with pytest.raises(DataError, match="trailing"):
        decode_sequence(blob + b"\x00")
    with pytest.raises(DataError):
        decode_sequence(blob[:12])


def test_write_and_read_sequence(tmp_path):
    records = [make_record(i) for i in range(3)]
    write_sequence(str(tmp_path), records, {"seed": 4})
    manifest = json.loads((tmp_path / MANIFEST_FILE).read_text())
    assert manifest["frame_count"] == 3 and manifest["format"] == "HOILSEQ1" and manifest["seed"] == 4
    loaded, loaded_manifest = read_sequence(str(tmp_path))
    assert loaded_manifest == manifest
    for a, b in zip(records, loaded):
        assert_same_record(a, b)


def test_read_sequence_errors(tmp_path):
    with pytest.raises(DataError, match="no sequence file"):
        read_sequence(str(tmp_path))
    write_sequence(str(tmp_path), [make_record()], {})
    (tmp_path / MANIFEST_FILE).write_text(json.dumps({"frame_count": 5}))
    with pytest.raises(DataError, match="manifest lists 5"):
        read_sequence(str(tmp_path))
    assert (tmp_path / SEQUENCE_FILE).exists()
