"""
Voxel-grid pooling.

`assign_cells` partitions points into axis-aligned cells and records the
fine-to-coarse mapping that the decoder later reuses to unpool. Two
reductions are offered: the channel-wise max, and CPPool, a per-cell
softmax over logits that combine a learned importance score with a
part prior and a contact prior.
"""
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from hoil.utils.core.errors import ContractError, NumericalError, ShapeError
from hoil.utils.core.pointcloud import NUM_CLASSES, check_part_weights, default_part_weights
from hoil.utils.core.tensor import (
    Tensor, add, as_tensor, broadcast_to, clamp_min, concat, div, exp, gather, log, matmul, mul, reshape,
    segment_max, segment_sum, sigmoid, softmax, sub,
)

Head = Callable[[Tensor], Tensor]


@dataclass(frozen=True)
class PoolMapping:
    cell_of_point: np.ndarray
    points_of_cell: Tuple[np.ndarray, ...]
    cell_centroids: np.ndarray
    cell_keys: np.ndarray

    @property
    def num_points(self) -> int:
        return self.cell_of_point.shape[0]

    @property
    def num_cells(self) -> int:
        return self.cell_centroids.shape[0]

    def check(self):
        seen = np.zeros(self.num_points, dtype=np.int64)
        for cell, members in enumerate(self.points_of_cell):
            if members.size == 0:
                raise ContractError("empty-cell", f"cell {cell} has no members")
            if np.any(self.cell_of_point[members] != cell):
                raise ContractError("mapping-consistency", f"cell {cell} lists points assigned elsewhere")
            seen[members] += 1
        if np.any(seen != 1):
            raise ContractError("mapping-partition", "every point must belong to exactly one cell")


@dataclass(frozen=True)
class CPPoolConfig:
    temperature: float = 1.0
    lambda_part: float = 1.0
    lambda_contact: float = 1.0
    part_weights: Optional[Tuple[float, ...]] = None
    log_epsilon: float = 1e-8
    use_part: bool = True
    use_contact: bool = True

    def __post_init__(self):
        if not self.temperature > 0:
            raise ContractError("cppool-temperature", "T must be positive")
        if self.part_weights is not None:
            check_part_weights(np.asarray(self.part_weights))
            object.__setattr__(self, "part_weights", tuple(float(w) for w in self.part_weights))

    def weights(self) -> np.ndarray:
        if self.part_weights is None:
            return default_part_weights()
        return np.asarray(self.part_weights, dtype=np.float64)


@dataclass
class PoolLogits:
    importance: Tensor
    part_score: Tensor
    contact_score: Tensor
    combined: Tensor
    part_logits: Optional[Tensor] = None
    contact_logits: Optional[Tensor] = None


@dataclass
class PoolWeights:
    w: Tensor

    def cell_sums(self, mapping: PoolMapping) -> np.ndarray:
        sums = np.zeros(mapping.num_cells)
        np.add.at(sums, mapping.cell_of_point, self.w.data)
        return sums


def assign_cells(points: np.ndarray, grid_size: float) -> PoolMapping:
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ShapeError("assign_cells", points.shape, detail="expected N x 3")
    if not grid_size > 0:
        raise ContractError("grid-size", f"grid_size must be positive, got {grid_size}")
    if not np.all(np.isfinite(points)):
        raise ContractError("coords-finite", "cannot assign non-finite coordinates to cells")
    keys = np.floor(points / grid_size).astype(np.int64)
    cell_keys, cell_of_point = np.unique(keys, axis=0, return_inverse=True)
    cell_of_point = cell_of_point.reshape(-1).astype(np.int64)
    num_cells = cell_keys.shape[0]
    counts = np.bincount(cell_of_point, minlength=num_cells)
    centroids = np.zeros((num_cells, 3))
    np.add.at(centroids, cell_of_point, points)
    centroids /= counts[:, None]
    order = np.argsort(cell_of_point, kind="stable")
    members = tuple(np.split(order, np.cumsum(counts)[:-1]))
    return PoolMapping(cell_of_point, members, centroids, cell_keys)


def _check_rows(op: str, rows: int, mapping: PoolMapping):
    if rows != mapping.num_points:
        raise ShapeError(op, (rows,), (mapping.num_points,), detail="row count must match the mapping")


def max_pool(features, mapping: PoolMapping) -> Tensor:
    features = as_tensor(features)
    _check_rows("max_pool", features.shape[0], mapping)
    return segment_max(features, mapping.cell_of_point, mapping.num_cells)


def _checked(name: str, out: Tensor) -> Tensor:
    if not np.all(np.isfinite(out.data)):
        raise NumericalError(f"{name} produced non-finite output")
    return out


def _broadcast_row(vector: Tensor, rows: int) -> Tensor:
    width = vector.shape[-1]
    return broadcast_to(reshape(vector, (1, width)), (rows, width))


def cppool_logits(point_feats: Tensor, global_feat: Tensor, keypoint_feat: Tensor,
                  part_head: Head, contact_head: Head, imp_head: Head, cfg: CPPoolConfig) -> PoolLogits:
    n = point_feats.shape[0]
    part_logits = _checked("part_head", part_head(point_feats))
    if part_logits.shape != (n, NUM_CLASSES):
        raise ShapeError("part_head", part_logits.shape, (n, NUM_CLASSES))
    contact_logits = reshape(_checked("contact_head", contact_head(point_feats)), (n,))
    fused = concat([point_feats, _broadcast_row(global_feat, n), _broadcast_row(keypoint_feat, n)], axis=1)
    importance = reshape(_checked("imp_head", imp_head(fused)), (n,))

    weights = Tensor(cfg.weights().reshape(NUM_CLASSES, 1))
    part_score = reshape(matmul(softmax(part_logits, axis=-1), weights), (n,))
    contact_score = sigmoid(contact_logits)

    combined = mul(importance, 1.0 / cfg.temperature)
    if cfg.use_part:
        combined = add(combined, mul(log(clamp_min(part_score, cfg.log_epsilon)), cfg.lambda_part))
    if cfg.use_contact:
        combined = add(combined, mul(log(clamp_min(contact_score, cfg.log_epsilon)), cfg.lambda_contact))
    return PoolLogits(importance, part_score, contact_score, combined, part_logits, contact_logits)


def cppool_weights(logits: PoolLogits, mapping: PoolMapping) -> PoolWeights:
    combined = logits.combined
    _check_rows("cppool_weights", combined.shape[0], mapping)
    if any(members.size == 0 for members in mapping.points_of_cell):
        raise ContractError("empty-cell", "pool mapping contains an empty cell")
    cells = mapping.cell_of_point
    # Per-cell shift leaves the softmax unchanged and keeps exp in range.
    peak = np.full(mapping.num_cells, -np.inf)
    np.maximum.at(peak, cells, combined.data)
    e = exp(sub(combined, Tensor(peak[cells])))
    total = segment_sum(e, cells, mapping.num_cells)
    return PoolWeights(div(e, gather(total, cells)))


def cppool_aggregate(feats: Tensor, weights: PoolWeights, mapping: PoolMapping, proj_pool: Head) -> Tensor:
    _check_rows("cppool_aggregate", feats.shape[0], mapping)
    if weights.w.shape != (feats.shape[0],):
        raise ShapeError("cppool_aggregate", feats.shape, weights.w.shape)
    projected = proj_pool(feats)
    w = broadcast_to(reshape(weights.w, (feats.shape[0], 1)), projected.shape)
    return segment_sum(mul(projected, w), mapping.cell_of_point, mapping.num_cells)


def unpool(coarse_feats, mapping: PoolMapping) -> Tensor:
    coarse_feats = as_tensor(coarse_feats)
    if coarse_feats.shape[0] != mapping.num_cells:
        raise ShapeError("unpool", coarse_feats.shape, (mapping.num_cells,), detail="one row per cell expected")
    return gather(coarse_feats, mapping.cell_of_point)


def skip_fuse(decoder_feats, encoder_feats, proj_decoder: Optional[Head] = None,
              proj_encoder: Optional[Head] = None) -> Tensor:
    dec = as_tensor(decoder_feats) if proj_decoder is None else proj_decoder(decoder_feats)
    enc = as_tensor(encoder_feats) if proj_encoder is None else proj_encoder(encoder_feats)
    if dec.shape != enc.shape:
        raise ShapeError("skip_fuse", dec.shape, enc.shape)
    return add(dec, enc)


def pool_labels(part: np.ndarray, contact: np.ndarray, mapping: PoolMapping) -> Tuple[np.ndarray, np.ndarray]:
    """Majority part per cell (ties to the smaller class) and any-member contact."""
    part = np.asarray(part, dtype=np.int64)
    contact = np.asarray(contact, dtype=bool)
    _check_rows("pool_labels", part.shape[0], mapping)
    votes = np.zeros((mapping.num_cells, NUM_CLASSES), dtype=np.int64)
    np.add.at(votes, (mapping.cell_of_point, part), 1)
    pooled_contact = np.zeros(mapping.num_cells, dtype=bool)
    np.logical_or.at(pooled_contact, mapping.cell_of_point, contact)
    return votes.argmax(axis=1), pooled_contact


def voxelize(points: np.ndarray, grid_size: float) -> np.ndarray:
    """Keeps one point per voxel, the lexicographically smallest; returns sorted indices."""
    points = np.asarray(points, dtype=np.float64)
    cells = assign_cells(points, grid_size).cell_of_point
    order = np.lexsort((points[:, 2], points[:, 1], points[:, 0], cells))
    leading = np.ones(order.shape[0], dtype=bool)
    leading[1:] = cells[order[1:]] != cells[order[:-1]]
    return np.sort(order[leading]).astype(np.int64)
