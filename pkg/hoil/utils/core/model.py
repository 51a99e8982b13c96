"""
The toy-scale pose network.

Points are embedded, attended within space-filling-curve patches, pooled
stage by stage (max or CPPool), decoded back through the stored pool
mappings with additive skips, and read out by per-point heads. A set of
learnable keypoint queries cross-attends to the decoded point features at
every decoder stage and feeds the keypoint heads.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from hoil.utils.core.errors import ConfigError, ContractError, ShapeError
from hoil.utils.core.gridpool import (
    CPPoolConfig, PoolMapping, assign_cells, cppool_aggregate, cppool_logits, cppool_weights, max_pool, skip_fuse,
    unpool,
)
from hoil.utils.core.layers import (
    MLP, CrossAttentionBlock, Linear, Module, PatchAttentionBlock, PointwiseBlock,
)
from hoil.utils.core.logging import debug, log
from hoil.utils.core.pointcloud import NUM_CLASSES, GridConfig, PointCloud
from hoil.utils.core.serialization import CurveKind, apply_permutation, inverse_permutation, serialize
from hoil.utils.core.tensor import (
    Tensor, add, gather, l2_normalize, log_softmax, matmul, mean, reshape, softmax,
)


class Mode(str, Enum):
    PRETRAIN = "pretrain"
    FINETUNE = "finetune"


class Pooling(str, Enum):
    MAX = "max"
    CPPOOL = "cppool"


@dataclass(frozen=True)
class ModelConfig:
    channels: Tuple[int, ...] = (32, 64)
    num_keypoints: int = 16
    num_parts: int = NUM_CLASSES
    projection_dim: int = 64
    num_heads: int = 2
    patch_size: int = 64
    curve: CurveKind = CurveKind()
    grid: GridConfig = GridConfig(base_grid_size=0.05, num_stages=1)
    pooling: Pooling = Pooling.CPPOOL
    heatmap_bins: int = 64
    heatmap_half_extent: float = 1.5
    per_stage_queries: bool = True
    use_intensity: bool = False

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        object.__setattr__(self, "pooling", Pooling(self.pooling))
        if len(self.channels) < 2:
            raise ConfigError("model.channels needs at least two widths (embedding plus one pooling stage)")
        if self.grid.num_stages != len(self.channels) - 1:
            object.__setattr__(self, "grid", GridConfig(self.grid.base_grid_size, self.grid.stage_multiplier,
                                                        len(self.channels) - 1))
        if self.num_parts != NUM_CLASSES:
            raise ConfigError(f"model.num_parts must be {NUM_CLASSES}")
        if self.num_keypoints < 1 or self.patch_size < 1 or self.heatmap_bins < 2:
            raise ConfigError("model.num_keypoints, patch_size and heatmap_bins must be positive")
        for width in self.channels:
            if width % self.num_heads:
                raise ConfigError(f"channel width {width} is not divisible by num_heads={self.num_heads}")

    @property
    def num_stages(self) -> int:
        return len(self.channels) - 1


@dataclass(frozen=True)
class HeatmapGrid:
    origin: np.ndarray
    half_extent: float
    bins: int

    @property
    def bin_width(self) -> float:
        return 2.0 * self.half_extent / self.bins

    def centers(self) -> np.ndarray:
        return -self.half_extent + self.bin_width * (np.arange(self.bins) + 0.5)

    def continuous_bin(self, coords: np.ndarray) -> np.ndarray:
        return (np.asarray(coords) - self.origin + self.half_extent) / self.bin_width - 0.5


@dataclass
class StageTrace:
    mapping: PoolMapping
    permutation: np.ndarray
    part_logits: Optional[Tensor] = None
    contact_logits: Optional[Tensor] = None


@dataclass
class HeadOutputs:
    seg: Tensor
    point_contact: Tensor
    keypoints: Tensor
    keypoint_contact: Tensor
    embeddings: Optional[Tensor] = None
    heatmaps: Optional[Tensor] = None
    heatmap_log: Optional[Tensor] = None
    heatmap_grid: Optional[HeatmapGrid] = None
    stages: List[StageTrace] = field(default_factory=list)
    level0_index: Optional[np.ndarray] = None
    tsc_targets: Optional[np.ndarray] = None


class PoolingStage(Module):
    def __init__(self, in_dim: int, out_dim: int, query_dim: int, pooling: Pooling, rng: np.random.Generator):
        super().__init__()
        self.pooling = pooling
        self.proj_pool = self.add_module("proj_pool", Linear(in_dim, out_dim, rng))
        if pooling == Pooling.CPPOOL:
            self.part_head = self.add_module("part_head", MLP(in_dim, NUM_CLASSES, rng))
            self.contact_head = self.add_module("contact_head", MLP(in_dim, 1, rng))
            self.imp_head = self.add_module("imp_head", MLP(3 * in_dim, 1, rng))
            self.keypoint_proj = self.add_module("keypoint_proj", Linear(query_dim, in_dim, rng))

    def forward(self, feats: Tensor, mapping: PoolMapping, queries: Tensor, cfg: CPPoolConfig):
        if self.pooling == Pooling.MAX:
            return max_pool(self.proj_pool(feats), mapping), None
        global_feat = mean(feats, axis=0)
        keypoint_feat = reshape(self.keypoint_proj(reshape(mean(queries, axis=0), (1, queries.shape[1]))),
                                (feats.shape[1],))
        logits = cppool_logits(feats, global_feat, keypoint_feat, self.part_head, self.contact_head,
                               self.imp_head, cfg)
        weights = cppool_weights(logits, mapping)
        return cppool_aggregate(feats, weights, mapping, self.proj_pool), logits


class DecoderStage(Module):
    def __init__(self, coarse_dim: int, fine_dim: int, query_dim: int, num_heads: int,
                 rng: np.random.Generator, with_queries: bool):
        super().__init__()
        self.proj_decoder = self.add_module("proj_decoder", Linear(coarse_dim, fine_dim, rng))
        self.proj_encoder = self.add_module("proj_encoder", Linear(fine_dim, fine_dim, rng))
        self.block = self.add_module("block", PointwiseBlock(fine_dim, rng))
        self.keypoint_decoder = None
        if with_queries:
            self.keypoint_decoder = self.add_module(
                "keypoint_decoder", KeypointDecoder(query_dim, fine_dim, num_heads, rng))

    def forward(self, coarse_cells: Tensor, mapping: PoolMapping, skip: Tensor) -> Tensor:
        fine = unpool(coarse_cells, mapping)
        if fine.shape[0] != skip.shape[0]:
            raise ShapeError("decoder_stage", fine.shape, skip.shape, detail="mapping from a different stage")
        return self.block(skip_fuse(fine, skip, self.proj_decoder, self.proj_encoder))


class KeypointDecoder(Module):
    """Queries cross-attend to point features plus a learned map of point coordinates."""

    def __init__(self, query_dim: int, point_dim: int, num_heads: int, rng: np.random.Generator):
        super().__init__()
        self.point_proj = self.add_module("point_proj", Linear(point_dim, query_dim, rng))
        self.position = self.add_module("position", MLP(3, query_dim, rng, hidden=query_dim))
        self.block = self.add_module("block", CrossAttentionBlock(query_dim, num_heads, rng))

    def forward(self, queries: Tensor, point_feats: Tensor, point_coords: np.ndarray) -> Tensor:
        if point_feats.shape[0] == 0:
            raise ShapeError("keypoint_decoder", queries.shape, point_feats.shape, detail="no points")
        memory = add(self.point_proj(point_feats), self.position(Tensor(point_coords)))
        return self.block(queries, memory)


class HoilModel(Module):
    def __init__(self, cfg: ModelConfig, mode: Mode = Mode.PRETRAIN, cppool: CPPoolConfig = CPPoolConfig(),
                 seed: int = 0, tsc_targets: Optional[np.ndarray] = None):
        super().__init__()
        self.cfg = cfg
        self.mode = Mode(mode)
        self.cppool = cppool
        self.tsc_targets = tsc_targets
        rng = np.random.default_rng([seed, 17])
        c = cfg.channels
        query_dim = c[0]
        in_dim = 4 if cfg.use_intensity else 3

        self.queries = self.add_parameter("queries", rng.normal(0.0, 0.02, size=(cfg.num_keypoints, query_dim)))
        self.embed_mlp = self.add_module("embed", MLP(in_dim, c[0], rng, hidden=c[0]))
        self.blocks = [self.add_module(f"block{i}", PatchAttentionBlock(c[i], cfg.num_heads, rng, cfg.patch_size))
                       for i in range(len(c))]
        self.pool_stages = [self.add_module(f"pool{i}", PoolingStage(c[i - 1], c[i], query_dim, cfg.pooling, rng))
                            for i in range(1, len(c))]
        self.decoder_stages = []
        for i in range(len(c) - 1, 0, -1):
            with_queries = cfg.per_stage_queries or i == 1
            self.decoder_stages.append(self.add_module(
                f"decoder{i}", DecoderStage(c[i], c[i - 1], query_dim, cfg.num_heads, rng, with_queries)))

        self.seg_head = self.add_module("seg_head", MLP(c[0], NUM_CLASSES, rng))
        self.contact_head = self.add_module("contact_head", MLP(c[0], 1, rng))
        self.keypoint_contact_head = self.add_module("keypoint_contact_head", MLP(query_dim, 1, rng))
        if self.mode == Mode.PRETRAIN:
            self.coord_head = self.add_module("coord_head", MLP(query_dim, 3, rng))
            self.proj_cl = self.add_module("proj_cl", MLP(c[0], cfg.projection_dim, rng))
        else:
            self.heatmap_head = self.add_module("heatmap_head", MLP(query_dim, 3 * cfg.heatmap_bins, rng))

    def embed(self, cloud: PointCloud, centroid: Optional[np.ndarray] = None) -> Tensor:
        centroid = cloud.coords.mean(axis=0) if centroid is None else centroid
        inputs = cloud.coords - centroid
        if self.cfg.use_intensity:
            intensity = np.zeros(len(cloud)) if cloud.intensity is None else cloud.intensity
            inputs = np.concatenate([inputs, intensity[:, None]], axis=1)
        return self.embed_mlp(Tensor(inputs))

    def encoder_stage(self, stage: int, points: np.ndarray, feats: Tensor, queries: Tensor):
        """Pools level `stage` into level `stage + 1`, serializes, attends."""
        if not 0 <= stage < self.cfg.num_stages:
            raise ShapeError("encoder_stage", (stage,), (self.cfg.num_stages,), detail="stage out of range")
        mapping = assign_cells(points, self.cfg.grid.grid_size(stage + 1))
        pooled, logits = self.pool_stages[stage](feats, mapping, queries, self.cppool)
        if pooled.shape[0] == 0:
            raise ContractError("empty-pool", f"stage {stage} pooled to an empty set")
        order = serialize(PointCloud(mapping.cell_centroids), self.cfg.curve, tie_break="coords").permutation
        pooled_points = mapping.cell_centroids[order]
        feats_out = self.blocks[stage + 1](gather(pooled, order))
        trace = StageTrace(mapping, order,
                           None if logits is None else logits.part_logits,
                           None if logits is None else logits.contact_logits)
        debug(f"stage {stage}: {mapping.num_points} -> {mapping.num_cells} points")
        return pooled_points, feats_out, trace

    def decoder_stage(self, level: int, coarse: Tensor, trace: StageTrace, skip: Tensor) -> Tensor:
        """Restores level `level` from level `level + 1` through the stored mapping."""
        if trace.mapping.num_cells != coarse.shape[0]:
            raise ShapeError("decoder_stage", coarse.shape, (trace.mapping.num_cells,), detail="stage mismatch")
        cells = gather(coarse, inverse_permutation(trace.permutation))
        decoder = self.decoder_stages[self.cfg.num_stages - 1 - level]
        return decoder(cells, trace.mapping, skip)

    def keypoint_decoder(self, decoder: DecoderStage, queries: Tensor, point_feats: Tensor,
                         point_coords: np.ndarray) -> Tensor:
        if decoder.keypoint_decoder is None:
            return queries
        return decoder.keypoint_decoder(queries, point_feats, point_coords)

    def forward(self, cloud: PointCloud) -> HeadOutputs:
        canonical = np.lexsort((cloud.coords[:, 2], cloud.coords[:, 1], cloud.coords[:, 0]))
        ordered = cloud.subset(canonical)
        centroid = ordered.coords.mean(axis=0)
        feats = self.embed(ordered, centroid)

        serial0 = serialize(ordered, self.cfg.curve, tie_break="coords").permutation
        points = ordered.coords[serial0] - centroid
        feats = self.blocks[0](apply_permutation(feats, serial0))
        level0_index = canonical[serial0]

        queries = self.queries
        level_points = [points]
        level_feats = [feats]
        traces: List[StageTrace] = []
        for stage in range(self.cfg.num_stages):
            points, feats, trace = self.encoder_stage(stage, points, feats, queries)
            level_points.append(points)
            level_feats.append(feats)
            traces.append(trace)

        for level in range(self.cfg.num_stages - 1, -1, -1):
            feats = self.decoder_stage(level, feats, traces[level], level_feats[level])
            decoder = self.decoder_stages[self.cfg.num_stages - 1 - level]
            queries = self.keypoint_decoder(decoder, queries, feats, level_points[level])

        restore = np.argsort(level0_index)
        point_feats = gather(feats, restore)
        n_k = self.cfg.num_keypoints
        outputs = HeadOutputs(
            seg=self.seg_head(point_feats),
            point_contact=reshape(self.contact_head(point_feats), (len(cloud),)),
            keypoints=None,
            keypoint_contact=reshape(self.keypoint_contact_head(queries), (n_k,)),
            stages=traces if self.cfg.pooling == Pooling.CPPOOL else [],
            level0_index=level0_index,
            tsc_targets=self.tsc_targets,
        )
        if self.mode == Mode.PRETRAIN:
            outputs.keypoints = add(self.coord_head(queries), Tensor(centroid))
            outputs.embeddings = l2_normalize(self.proj_cl(point_feats), axis=-1)
        else:
            grid = HeatmapGrid(centroid, self.cfg.heatmap_half_extent, self.cfg.heatmap_bins)
            logits = reshape(self.heatmap_head(queries), (n_k * 3, self.cfg.heatmap_bins))
            probs = softmax(logits, axis=-1)
            expected = matmul(probs, Tensor(grid.centers().reshape(-1, 1)))
            outputs.keypoints = add(reshape(expected, (n_k, 3)), Tensor(centroid))
            outputs.heatmaps = reshape(probs, (n_k, 3, self.cfg.heatmap_bins))
            outputs.heatmap_log = log_softmax(logits, axis=-1)
            outputs.heatmap_grid = grid
        return outputs

    def load_state(self, entries: Dict[str, np.ndarray], reinit_queries: bool = False):
        """Copies matching parameters; a query-count mismatch needs `reinit_queries`."""
        own = dict(self.named_parameters())
        stored = entries.get("queries")
        if stored is not None and stored.shape != own["queries"].shape:
            if not reinit_queries:
                raise ConfigError(
                    f"checkpoint has {stored.shape[0]} keypoint queries but the model expects "
                    f"{own['queries'].shape[0]}; pass --reinit-queries to re-initialize them")
            log(f"Re-initializing keypoint queries: {stored.shape[0]} -> {own['queries'].shape[0]}")
            entries = {k: v for k, v in entries.items() if k != "queries"}
        skipped = []
        for name, param in own.items():
            if name not in entries:
                skipped.append(name)
                continue
            if entries[name].shape != param.shape:
                raise ConfigError(f"checkpoint entry '{name}' has shape {entries[name].shape}, expected {param.shape}")
            param.data[...] = entries[name]
        if skipped:
            debug(f"Parameters left at initialization: {', '.join(skipped)}")
        if "tsc_targets" in entries:
            self.tsc_targets = np.array(entries["tsc_targets"])
