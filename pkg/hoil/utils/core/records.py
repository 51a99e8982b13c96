"""
Sequence files.

A sequence directory holds `sequence.bin` and `manifest.json`. The binary
starts with magic "HOILSEQ1", a u32 version and a u32 frame count; each
frame is a u32 header (frame_index, N, N_k) followed by points (N x 3 f32),
part (N u8), contact (N u8), keypoints (N_k x 3 f32), kp_valid (N_k u8) and
kp_contact (N_k u8). All values are little-endian.
"""
import os
import struct
from dataclasses import dataclass
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from hoil.utils.core.config_loader import dump_json_file, load_json_file
from hoil.utils.core.errors import DataError
from hoil.utils.core.pointcloud import NUM_CLASSES, KeypointSet, LabeledPointCloud, PointCloud

MAGIC = b"HOILSEQ1"
VERSION = 1
SEQUENCE_FILE = "sequence.bin"
MANIFEST_FILE = "manifest.json"


@dataclass(frozen=True)
class FrameRecord:
    frame_index: int
    points: np.ndarray
    part: np.ndarray
    contact: np.ndarray
    keypoints: np.ndarray
    kp_valid: np.ndarray
    kp_contact: np.ndarray

    def __post_init__(self):
        n = np.shape(self.points)[0]
        n_k = np.shape(self.keypoints)[0]
        object.__setattr__(self, "points", np.asarray(self.points, dtype="<f4").reshape(n, 3))
        object.__setattr__(self, "keypoints", np.asarray(self.keypoints, dtype="<f4").reshape(n_k, 3))
        for name, length in (("part", n), ("contact", n), ("kp_valid", n_k), ("kp_contact", n_k)):
            value = np.asarray(getattr(self, name), dtype=np.uint8)
            if value.shape != (length,):
                raise DataError(f"frame {self.frame_index}: section '{name}' has shape {value.shape}, expected ({length},)")
            object.__setattr__(self, name, value)
        if np.any(self.part >= NUM_CLASSES):
            raise DataError(f"frame {self.frame_index}: part label out of range")
        if np.any(self.contact > 1) or np.any(self.kp_valid > 1) or np.any(self.kp_contact > 1):
            raise DataError(f"frame {self.frame_index}: flags must be 0 or 1")

    @classmethod
    def from_frame(cls, frame_index: int, cloud: LabeledPointCloud, keypoints: KeypointSet) -> "FrameRecord":
        return cls(frame_index, cloud.coords, cloud.part, cloud.contact, keypoints.coords, keypoints.valid,
                   keypoints.contact)

    @property
    def num_points(self) -> int:
        return self.points.shape[0]

    def labeled_cloud(self) -> LabeledPointCloud:
        return LabeledPointCloud(PointCloud(self.points.astype(np.float64)), self.part.astype(np.int64),
                                 self.contact.astype(bool))

    def keypoint_set(self) -> KeypointSet:
        return KeypointSet(self.keypoints.astype(np.float64), self.kp_valid.astype(bool), self.kp_contact.astype(bool))

    def encode(self) -> bytes:
        return b"".join([
            struct.pack("<III", self.frame_index, self.num_points, self.keypoints.shape[0]),
            self.points.tobytes(), self.part.tobytes(), self.contact.tobytes(),
            self.keypoints.tobytes(), self.kp_valid.tobytes(), self.kp_contact.tobytes(),
        ])


def _take(blob: bytes, offset: int, count: int, dtype: str) -> Tuple[np.ndarray, int]:
    size = np.dtype(dtype).itemsize * count
    if offset + size > len(blob):
        raise DataError("truncated sequence file")
    return np.frombuffer(blob, dtype=dtype, count=count, offset=offset).copy(), offset + size


def encode_sequence(records: Sequence[FrameRecord]) -> bytes:
    return MAGIC + struct.pack("<II", VERSION, len(records)) + b"".join(r.encode() for r in records)


def decode_sequence(blob: bytes) -> List[FrameRecord]:
    if blob[:8] != MAGIC:
        raise DataError("not a HOILSEQ1 sequence file")
    if len(blob) < 16:
        raise DataError("truncated sequence header")
    version, count = struct.unpack_from("<II", blob, 8)
    if version != VERSION:
        raise DataError(f"unsupported sequence version {version}")
    offset = 16
    records = []
    for _ in range(count):
        if offset + 12 > len(blob):
            raise DataError("truncated frame header")
        frame_index, n, n_k = struct.unpack_from("<III", blob, offset)
        offset += 12
        points, offset = _take(blob, offset, 3 * n, "<f4")
        part, offset = _take(blob, offset, n, "u1")
        contact, offset = _take(blob, offset, n, "u1")
        keypoints, offset = _take(blob, offset, 3 * n_k, "<f4")
        kp_valid, offset = _take(blob, offset, n_k, "u1")
        kp_contact, offset = _take(blob, offset, n_k, "u1")
        records.append(FrameRecord(frame_index, points.reshape(n, 3), part, contact,
                                   keypoints.reshape(n_k, 3), kp_valid, kp_contact))
    if offset != len(blob):
        raise DataError("trailing bytes after the last frame")
    return records


def write_sequence(directory: str, records: Sequence[FrameRecord], manifest: Dict[str, Any]):
    try:
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, SEQUENCE_FILE), "wb") as f:
            f.write(encode_sequence(records))
    except OSError as e:
        raise DataError(f"cannot write sequence to {directory}: {e}")
    manifest = dict(manifest)
    manifest["frame_count"] = len(records)
    manifest["format"] = MAGIC.decode("ascii")
    dump_json_file(os.path.join(directory, MANIFEST_FILE), manifest)


def read_sequence(directory: str) -> Tuple[List[FrameRecord], Dict[str, Any]]:
    path = os.path.join(directory, SEQUENCE_FILE)
    if not os.path.isfile(path):
        raise DataError(f"no sequence file in {directory}")
    with open(path, "rb") as f:
        records = decode_sequence(f.read())
    manifest_path = os.path.join(directory, MANIFEST_FILE)
    manifest = load_json_file(manifest_path, default={}) if os.path.isfile(manifest_path) else {}
    if manifest and manifest.get("frame_count") != len(records):
        raise DataError(f"manifest lists {manifest.get('frame_count')} frames, file holds {len(records)}")
    return records, manifest
