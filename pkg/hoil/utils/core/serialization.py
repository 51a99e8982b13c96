"""
Space-filling-curve ordering of point clouds.

Coordinates are quantized against the cloud's own bounding box and encoded
with either a Z-order (Morton) code or a 3-D Hilbert index; sorting by the
code gives the locality-preserving sequence consumed by patch attention.
All encoders operate on numpy arrays of uint64 and also accept scalars.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Tuple

import numpy as np

from hoil.utils.core.errors import ContractError, ShapeError
from hoil.utils.core.pointcloud import PointCloud

MAX_BIT_DEPTH = 21
DEFAULT_BIT_DEPTH = 16


class CurveVariant(str, Enum):
    ZORDER = "zorder"
    HILBERT = "hilbert"


@dataclass(frozen=True)
class CurveKind:
    variant: CurveVariant = CurveVariant.HILBERT
    bit_depth: int = DEFAULT_BIT_DEPTH

    def __post_init__(self):
        object.__setattr__(self, "variant", CurveVariant(self.variant))
        _check_bit_depth(self.bit_depth)


@dataclass(frozen=True)
class SerializationResult:
    permutation: np.ndarray
    codes: np.ndarray


def _check_bit_depth(bit_depth: int):
    if not 1 <= int(bit_depth) <= MAX_BIT_DEPTH:
        raise ContractError("bit-depth", f"bit_depth must lie in [1, {MAX_BIT_DEPTH}], got {bit_depth}")


def _as_grid(values, bit_depth: int, axis: str) -> np.ndarray:
    array = np.asarray(values)
    if np.any(array < 0) or np.any(array >= (1 << bit_depth)):
        raise ContractError("coordinate-overflow", f"{axis} coordinate outside [0, 2^{bit_depth})")
    return array.astype(np.uint64)


def quantize(cloud: PointCloud, bit_depth: int = DEFAULT_BIT_DEPTH) -> np.ndarray:
    """Maps each axis affinely from the bounding box to [0, 2^b - 1] with floor rounding."""
    _check_bit_depth(bit_depth)
    coords = np.asarray(cloud.coords, dtype=np.float64)
    if not np.all(np.isfinite(coords)):
        raise ContractError("coords-finite", "cannot quantize non-finite coordinates")
    lo = coords.min(axis=0)
    extent = coords.max(axis=0) - lo
    top = (1 << bit_depth) - 1
    grid = np.zeros(coords.shape, dtype=np.int64)
    for axis in range(3):
        if extent[axis] > 0:
            scaled = np.floor((coords[:, axis] - lo[axis]) * (top / extent[axis]))
            grid[:, axis] = np.clip(scaled, 0, top).astype(np.int64)
    return grid


def morton_encode(ix, iy, iz, bit_depth: int = DEFAULT_BIT_DEPTH):
    """Interleaves bits with x in the least significant position of each triple."""
    _check_bit_depth(bit_depth)
    x = _as_grid(ix, bit_depth, "x")
    y = _as_grid(iy, bit_depth, "y")
    z = _as_grid(iz, bit_depth, "z")
    code = np.zeros(np.broadcast(x, y, z).shape, dtype=np.uint64)
    one = np.uint64(1)
    for bit in range(bit_depth):
        b = np.uint64(bit)
        code |= ((x >> b) & one) << np.uint64(3 * bit)
        code |= ((y >> b) & one) << np.uint64(3 * bit + 1)
        code |= ((z >> b) & one) << np.uint64(3 * bit + 2)
    return code if code.ndim else int(code)


def morton_decode(code, bit_depth: int = DEFAULT_BIT_DEPTH) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    _check_bit_depth(bit_depth)
    code = np.asarray(code).astype(np.uint64)
    axes = [np.zeros(code.shape, dtype=np.uint64) for _ in range(3)]
    one = np.uint64(1)
    for bit in range(bit_depth):
        for axis in range(3):
            axes[axis] |= ((code >> np.uint64(3 * bit + axis)) & one) << np.uint64(bit)
    return axes[0], axes[1], axes[2]


def _axes_to_transpose(axes, bit_depth: int):
    # Skilling's in-place transform from axis coordinates to the transposed Hilbert index.
    x = [a.copy() for a in axes]
    n = len(x)
    m = np.uint64(1 << (bit_depth - 1))
    q = m
    while q > 1:
        p = q - np.uint64(1)
        for i in range(n):
            flip = (x[i] & q) != 0
            x[0] = np.where(flip, x[0] ^ p, x[0])
            t = np.where(flip, np.uint64(0), (x[0] ^ x[i]) & p)
            x[0] = x[0] ^ t
            x[i] = x[i] ^ t
        q = q >> np.uint64(1)
    for i in range(1, n):
        x[i] = x[i] ^ x[i - 1]
    t = np.zeros_like(x[0])
    q = m
    while q > 1:
        t = np.where((x[n - 1] & q) != 0, t ^ (q - np.uint64(1)), t)
        q = q >> np.uint64(1)
    return [xi ^ t for xi in x]


def _transpose_to_axes(x, bit_depth: int):
    x = [a.copy() for a in x]
    n = len(x)
    top = np.uint64(2 << (bit_depth - 1))
    t = x[n - 1] >> np.uint64(1)
    for i in range(n - 1, 0, -1):
        x[i] = x[i] ^ x[i - 1]
    x[0] = x[0] ^ t
    q = np.uint64(2)
    while q != top:
        p = q - np.uint64(1)
        for i in range(n - 1, -1, -1):
            flip = (x[i] & q) != 0
            x[0] = np.where(flip, x[0] ^ p, x[0])
            t = np.where(flip, np.uint64(0), (x[0] ^ x[i]) & p)
            x[0] = x[0] ^ t
            x[i] = x[i] ^ t
        q = q << np.uint64(1)
    return x


def hilbert_encode(ix, iy, iz, bit_depth: int = DEFAULT_BIT_DEPTH):
    _check_bit_depth(bit_depth)
    axes = [_as_grid(v, bit_depth, name) for v, name in ((ix, "x"), (iy, "y"), (iz, "z"))]
    axes = list(np.broadcast_arrays(*axes))
    x = _axes_to_transpose(axes, bit_depth)
    code = np.zeros(axes[0].shape, dtype=np.uint64)
    one = np.uint64(1)
    for bit in range(bit_depth - 1, -1, -1):
        for i in range(3):
            code = (code << one) | ((x[i] >> np.uint64(bit)) & one)
    return code if code.ndim else int(code)


def hilbert_decode(code, bit_depth: int = DEFAULT_BIT_DEPTH) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    _check_bit_depth(bit_depth)
    code = np.asarray(code).astype(np.uint64)
    if np.any(code >= np.uint64(1) << np.uint64(3 * bit_depth)):
        raise ContractError("code-overflow", f"Hilbert code outside [0, 2^{3 * bit_depth})")
    x = [np.zeros(code.shape, dtype=np.uint64) for _ in range(3)]
    one = np.uint64(1)
    position = 3 * bit_depth - 1
    for bit in range(bit_depth - 1, -1, -1):
        for i in range(3):
            x[i] |= ((code >> np.uint64(position)) & one) << np.uint64(bit)
            position -= 1
    axes = _transpose_to_axes(x, bit_depth)
    return axes[0], axes[1], axes[2]


def encode(grid: np.ndarray, curve: CurveKind) -> np.ndarray:
    grid = np.asarray(grid)
    if grid.ndim != 2 or grid.shape[1] != 3:
        raise ShapeError("encode", grid.shape, detail="expected N x 3 grid coordinates")
    encoder = hilbert_encode if curve.variant == CurveVariant.HILBERT else morton_encode
    return np.atleast_1d(encoder(grid[:, 0], grid[:, 1], grid[:, 2], curve.bit_depth))


def serialize(cloud: PointCloud, curve: CurveKind = CurveKind(), tie_break: str = "index") -> SerializationResult:
    """Orders points by curve code.

    Equal codes keep their input order (`tie_break="index"`); the model uses
    `tie_break="coords"` so that ties fall back to lexicographic coordinates
    and the ordering does not depend on how the input was listed.
    """
    codes = encode(quantize(cloud, curve.bit_depth), curve)
    if tie_break == "index":
        permutation = np.argsort(codes, kind="stable")
    elif tie_break == "coords":
        coords = cloud.coords
        permutation = np.lexsort((coords[:, 2], coords[:, 1], coords[:, 0], codes))
    else:
        raise ValueError(f"unknown tie_break '{tie_break}'")
    return SerializationResult(permutation=permutation.astype(np.int64), codes=codes)


def apply_permutation(items: Sequence, permutation: np.ndarray):
    permutation = np.asarray(permutation, dtype=np.int64)
    if len(items) != permutation.shape[0]:
        raise ShapeError("apply_permutation", (len(items),), permutation.shape)
    if isinstance(items, np.ndarray):
        return items[permutation]
    if hasattr(items, "gather"):
        return items.gather(permutation)
    return [items[int(i)] for i in permutation]


def inverse_permutation(permutation: np.ndarray) -> np.ndarray:
    permutation = np.asarray(permutation, dtype=np.int64)
    inverse = np.empty_like(permutation)
    inverse[permutation] = np.arange(permutation.shape[0], dtype=np.int64)
    return inverse


def is_bijection(permutation: np.ndarray) -> bool:
    permutation = np.asarray(permutation)
    return bool(np.array_equal(np.sort(permutation), np.arange(permutation.shape[0])))
