"""
Training objectives.

Classification terms, the supervised-contrastive family (SupCon, the
hierarchical and targeted variants, and the human-object composite built
from them), the auxiliary pooling losses, the heatmap KL and the limb loss,
plus the two phase-level sums. Every composite returns a `LossResult` whose
breakdown recombines to the total exactly.
"""
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from hoil.utils.core.errors import ContractError, ShapeError
from hoil.utils.core.gridpool import pool_labels
from hoil.utils.core.logging import debug, warn
from hoil.utils.core.pointcloud import (
    NUM_BODY_PARTS, NUM_CLASSES, OBJECT_CLASS, KeypointSet, Skeleton, load_part_catalog,
)
from hoil.utils.core.tensor import (
    Tensor, add, as_tensor, broadcast_to, clamp_min, div, gather, log_softmax, logsumexp, matmul, mean, mul, neg,
    reshape, smooth_l1, softplus, sqrt, sub, sum_, transpose,
)

NEG_FILL = -1e9


class DegenerateBatch(ContractError):
    def __init__(self, message: str):
        super().__init__("degenerate-batch", message)


@dataclass
class LossResult:
    total: Tensor
    breakdown: Dict[str, float] = field(default_factory=dict)
    terms: Dict[str, Tensor] = field(default_factory=dict)


def _combine(weighted: List[Tuple[str, Tensor]]) -> LossResult:
    if not weighted:
        raise DegenerateBatch("no loss term could be evaluated")
    total = weighted[0][1]
    for _, term in weighted[1:]:
        total = add(total, term)
    return LossResult(total, {name: term.item() for name, term in weighted}, dict(weighted))


# ---------------------------------------------------------------------------
# Basic terms
# ---------------------------------------------------------------------------

def cross_entropy(logits: Tensor, targets: np.ndarray, class_weights: Optional[np.ndarray] = None) -> Tensor:
    """Mean (optionally class-weighted) softmax cross-entropy over rows."""
    targets = np.asarray(targets, dtype=np.int64)
    n, c = logits.shape
    if targets.shape != (n,):
        raise ShapeError("cross_entropy", logits.shape, targets.shape)
    if n == 0:
        raise DegenerateBatch("cross_entropy on zero rows")
    onehot = np.zeros((n, c))
    onehot[np.arange(n), targets] = 1.0
    if class_weights is None:
        row_weight = np.full(n, 1.0 / n)
    else:
        w = np.asarray(class_weights, dtype=np.float64)[targets]
        row_weight = w / w.sum()
    picked = sum_(mul(log_softmax(logits, axis=-1), Tensor(onehot)), axis=1)
    return neg(sum_(mul(picked, Tensor(row_weight))))


def balanced_binary_ce(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Binary CE on single logits; each class present in the batch carries half the mass."""
    targets = np.asarray(targets, dtype=bool)
    logits = reshape(logits, (logits.shape[0],))
    n = logits.shape[0]
    if targets.shape != (n,):
        raise ShapeError("balanced_binary_ce", logits.shape, targets.shape)
    if n == 0:
        raise DegenerateBatch("binary CE on zero rows")
    n_pos = int(targets.sum())
    n_neg = n - n_pos
    if n_pos and n_neg:
        weight = np.where(targets, 0.5 / n_pos, 0.5 / n_neg)
    else:
        weight = np.full(n, 1.0 / n)
    per_row = sub(softplus(logits), mul(logits, Tensor(targets.astype(np.float64))))
    return sum_(mul(per_row, Tensor(weight)))


def masked_mse(pred: Tensor, target: np.ndarray, valid: np.ndarray) -> Tensor:
    valid = np.asarray(valid, dtype=bool)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError("masked_mse", pred.shape, target.shape)
    if not valid.any():
        raise DegenerateBatch("no valid keypoints for the coordinate loss")
    rows = np.flatnonzero(valid)
    diff = sub(gather(pred, rows), Tensor(target[rows]))
    return mean(mul(diff, diff))


# ---------------------------------------------------------------------------
# Contrastive family
# ---------------------------------------------------------------------------

@dataclass
class ContrastiveBatch:
    embeddings: Tensor
    mask: np.ndarray
    temperature: float = 0.07
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        m = self.embeddings.shape[0]
        if mask.shape != (m, m):
            raise ShapeError("ContrastiveBatch", self.embeddings.shape, mask.shape)
        if np.any(np.diag(mask)):
            raise ContractError("contrastive-mask", "positive mask must not contain self pairs")
        if not np.array_equal(mask, mask.T):
            raise ContractError("contrastive-mask", "positive mask must be symmetric")
        if not self.temperature > 0:
            raise ContractError("temperature", "temperature must be positive")
        self.mask = mask

    @classmethod
    def from_labels(cls, embeddings: Tensor, labels: np.ndarray, temperature: float = 0.07) -> "ContrastiveBatch":
        labels = np.asarray(labels)
        mask = labels[:, None] == labels[None, :]
        np.fill_diagonal(mask, False)
        return cls(embeddings, mask, temperature, labels)


def supcon(batch: ContrastiveBatch) -> Tensor:
    z = batch.embeddings
    m = z.shape[0]
    if m < 2:
        raise DegenerateBatch("SupCon needs at least two embeddings")
    positives = batch.mask.sum(axis=1)
    anchors = positives > 0
    if not anchors.any():
        raise DegenerateBatch("no anchor has a positive pair")
    sim = mul(matmul(z, transpose(z)), 1.0 / batch.temperature)
    self_fill = np.zeros((m, m))
    np.fill_diagonal(self_fill, NEG_FILL)
    sim = add(sim, Tensor(self_fill))
    lse = logsumexp(sim, axis=1)
    log_prob = sub(sim, broadcast_to(reshape(lse, (m, 1)), (m, m)))
    weights = np.zeros((m, m))
    weights[anchors] = batch.mask[anchors] / positives[anchors, None]
    weights /= anchors.sum()
    return neg(sum_(mul(log_prob, Tensor(weights))))


@dataclass(frozen=True)
class PartHierarchy:
    """Label maps from the 26 fine classes, coarsest first."""

    levels: Tuple[Tuple[int, ...], ...]

    def __post_init__(self):
        for level in self.levels:
            if len(level) != NUM_CLASSES:
                raise ContractError("hierarchy", f"level map must cover {NUM_CLASSES} classes")
        for coarse, fine in zip(self.levels, self.levels[1:]):
            groups: Dict[int, int] = {}
            for c, f in zip(coarse, fine):
                if groups.setdefault(f, c) != c:
                    raise ContractError("hierarchy", "finer level does not refine the coarser level")

    def level_weights(self) -> List[float]:
        return [1.0 / 2 ** depth for depth in range(len(self.levels))]

    def labels_at(self, depth: int, parts: np.ndarray) -> np.ndarray:
        return np.asarray(self.levels[depth], dtype=np.int64)[np.asarray(parts, dtype=np.int64)]


@lru_cache(maxsize=1)
def default_hierarchy() -> PartHierarchy:
    catalog = load_part_catalog()
    return PartHierarchy((catalog.coarse_map, catalog.middle_map, tuple(range(NUM_CLASSES))))


def hmlc(embeddings: Tensor, parts: np.ndarray, hierarchy: PartHierarchy, temperature: float = 0.07) -> Tensor:
    if embeddings.shape[0] < 2:
        raise DegenerateBatch("HMLC needs at least two embeddings")
    weighted = []
    for depth, weight in enumerate(hierarchy.level_weights()):
        batch = ContrastiveBatch.from_labels(embeddings, hierarchy.labels_at(depth, parts), temperature)
        try:
            weighted.append(mul(supcon(batch), weight))
        except DegenerateBatch:
            debug(f"HMLC level {depth} has no positive pairs; skipped")
    if not weighted:
        raise DegenerateBatch("no hierarchy level has a positive pair")
    total = weighted[0]
    for term in weighted[1:]:
        total = add(total, term)
    return total


def make_tsc_targets(num_classes: int = NUM_CLASSES, dim: int = 64, seed: int = 0, steps: int = 400,
                     sharpness: float = 20.0, lr: float = 0.05) -> np.ndarray:
    """Unit vectors spread on the sphere by descending a smooth max of pairwise inner products."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((num_classes, dim))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    off_diag = ~np.eye(num_classes, dtype=bool)
    for _ in range(steps):
        gram = x @ x.T
        scaled = np.where(off_diag, sharpness * gram, -np.inf)
        weights = np.exp(scaled - scaled.max())
        weights /= weights.sum()
        x = x - lr * 2.0 * (weights @ x)
        x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x


def tsc(embeddings: Tensor, labels: np.ndarray, targets: np.ndarray, temperature: float = 0.07) -> Tensor:
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim != 2 or targets.shape[1] != embeddings.shape[1]:
        raise ShapeError("tsc", embeddings.shape, targets.shape)
    if not np.allclose(np.linalg.norm(targets, axis=1), 1.0, atol=1e-6):
        raise ContractError("tsc-targets", "targets must be unit vectors")
    logits = mul(matmul(embeddings, Tensor(targets.T)), 1.0 / temperature)
    return cross_entropy(logits, labels)


@dataclass(frozen=True)
class HOICLConfig:
    lambda_fir: float = 1.0
    lambda_hoc: float = 1.0
    lambda_hmlc: float = 0.05
    lambda_tsc: float = 0.05
    tau_fir: float = 0.07
    tau_hoc: float = 0.07
    tau_global: float = 0.07
    sample_cap: int = 128
    use_global: bool = True
    use_fir: bool = True
    use_hoc: bool = True

    def __post_init__(self):
        if min(self.tau_fir, self.tau_hoc, self.tau_global) <= 0:
            raise ContractError("temperature", "HOICL temperatures must be positive")
        if self.sample_cap < 2:
            raise ContractError("sample-cap", "sample_cap must be at least 2")


@dataclass(frozen=True)
class IndexSets:
    fir: np.ndarray
    obj: np.ndarray
    human_contact: np.ndarray
    object_contact: np.ndarray

    @classmethod
    def from_labels(cls, parts: np.ndarray, contacts: np.ndarray,
                    fir_parts: Optional[Sequence[int]] = None) -> "IndexSets":
        parts = np.asarray(parts, dtype=np.int64)
        contacts = np.asarray(contacts, dtype=bool)
        fir_parts = load_part_catalog().frequently_interacting if fir_parts is None else fir_parts
        human = parts < NUM_BODY_PARTS
        obj = parts == OBJECT_CLASS
        return cls(
            fir=np.flatnonzero(np.isin(parts, fir_parts)),
            obj=np.flatnonzero(obj),
            human_contact=np.flatnonzero(human & contacts),
            object_contact=np.flatnonzero(obj & contacts),
        )


class PairMask(NamedTuple):
    """Point indices of a paired term and the positive mask over those rows, in the same order."""

    indices: np.ndarray
    mask: np.ndarray

    def batch(self, embeddings: Tensor, temperature: float) -> ContrastiveBatch:
        return ContrastiveBatch(gather(embeddings, self.indices), self.mask, temperature)


def _two_group_mask(first: np.ndarray, second: np.ndarray) -> PairMask:
    if np.intersect1d(first, second).size:
        raise ContractError("index-sets", "the two index sets overlap")
    indices = np.concatenate([first, second]).astype(np.int64)
    group = np.concatenate([np.zeros(first.size, dtype=np.int64), np.ones(second.size, dtype=np.int64)])
    mask = group[:, None] == group[None, :]
    np.fill_diagonal(mask, False)
    return PairMask(indices, mask)


def build_fir_mask(parts: np.ndarray, sets: IndexSets) -> PairMask:
    """Rows are Y_fir followed by Y_obj; positives share the group."""
    parts = np.asarray(parts)
    if np.any(parts[sets.fir] >= NUM_BODY_PARTS) or np.any(parts[sets.obj] != OBJECT_CLASS):
        raise ContractError("index-sets", "FIR set must be human points and object set object points")
    return _two_group_mask(sets.fir, sets.obj)


def build_hoc_mask(contacts: np.ndarray, parts: np.ndarray,
                   sets: Optional[IndexSets] = None) -> PairMask:
    """Rows are Y_hc followed by Y_oc; positives are both human-contact or both object-contact."""
    sets = sets or IndexSets.from_labels(parts, contacts)
    parts = np.asarray(parts)
    if np.any(parts[sets.human_contact] >= NUM_BODY_PARTS) or np.any(parts[sets.object_contact] != OBJECT_CLASS):
        raise ContractError("index-sets", "contact sets must split into human and object points")
    return _two_group_mask(sets.human_contact, sets.object_contact)


def _cap(indices: np.ndarray, cap: int, rng: np.random.Generator) -> np.ndarray:
    if indices.size <= cap:
        return indices
    return np.sort(rng.choice(indices, size=cap, replace=False))


def _cap_by_class(parts: np.ndarray, cap: int, rng: np.random.Generator) -> np.ndarray:
    kept = [_cap(np.flatnonzero(parts == c), cap, rng) for c in np.unique(parts)]
    return np.sort(np.concatenate(kept))


def hoicl(embeddings: Tensor, parts: np.ndarray, contacts: np.ndarray, cfg: HOICLConfig = HOICLConfig(),
          hierarchy: Optional[PartHierarchy] = None, targets: Optional[np.ndarray] = None,
          rng: Optional[np.random.Generator] = None, fir_parts: Optional[Sequence[int]] = None) -> LossResult:
    """L_global + lambda_fir * L_fir + lambda_hoc * L_hoc with per-category subsampling.

    Terms whose point sets are degenerate are skipped with a warning; the
    breakdown carries only the terms that were evaluated.
    """
    parts = np.asarray(parts, dtype=np.int64)
    contacts = np.asarray(contacts, dtype=bool)
    hierarchy = hierarchy or default_hierarchy()
    rng = rng or np.random.default_rng(0)
    weighted: List[Tuple[str, Tensor]] = []

    if cfg.use_global:
        rows = _cap_by_class(parts, cfg.sample_cap, rng)
        sub_z, sub_parts = gather(embeddings, rows), parts[rows]
        try:
            weighted.append(("hmlc", mul(hmlc(sub_z, sub_parts, hierarchy, cfg.tau_global), cfg.lambda_hmlc)))
        except DegenerateBatch as e:
            warn(f"HOICL global HMLC term skipped: {e}")
        if targets is not None:
            weighted.append(("tsc", mul(tsc(sub_z, sub_parts, targets, cfg.tau_global), cfg.lambda_tsc)))

    sets = IndexSets.from_labels(parts, contacts, fir_parts)
    sets = IndexSets(
        fir=_cap(sets.fir, cfg.sample_cap, rng),
        obj=_cap(sets.obj, cfg.sample_cap, rng),
        human_contact=_cap(sets.human_contact, cfg.sample_cap, rng),
        object_contact=_cap(sets.object_contact, cfg.sample_cap, rng),
    )
    if cfg.use_fir:
        if sets.fir.size and sets.obj.size:
            pairs = build_fir_mask(parts, sets)
            try:
                weighted.append(("fir", mul(supcon(pairs.batch(embeddings, cfg.tau_fir)), cfg.lambda_fir)))
            except DegenerateBatch as e:
                warn(f"HOICL FIR term skipped: {e}")
        else:
            warn("HOICL FIR term skipped: frame has no FIR or no object points")
    if cfg.use_hoc:
        if sets.human_contact.size and sets.object_contact.size:
            pairs = build_hoc_mask(contacts, parts, sets)
            try:
                weighted.append(("hoc", mul(supcon(pairs.batch(embeddings, cfg.tau_hoc)), cfg.lambda_hoc)))
            except DegenerateBatch as e:
                warn(f"HOICL contact term skipped: {e}")
        else:
            warn("HOICL contact term skipped: human-contact or object-contact set is empty")
    return _combine(weighted)


# ---------------------------------------------------------------------------
# Auxiliary pooling losses
# ---------------------------------------------------------------------------

def stage_labels(stages: Sequence, part: np.ndarray, contact: np.ndarray,
                 level0_index: np.ndarray) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Labels at each pooling stage's input resolution, in that stage's row order."""
    labels_part = np.asarray(part, dtype=np.int64)[level0_index]
    labels_contact = np.asarray(contact, dtype=bool)[level0_index]
    out = []
    for stage in stages:
        if labels_part.shape[0] != stage.mapping.num_points:
            raise ShapeError("stage_labels", labels_part.shape, (stage.mapping.num_points,),
                             detail="label propagation does not match the pooling stage")
        out.append((labels_part, labels_contact))
        pooled_part, pooled_contact = pool_labels(labels_part, labels_contact, stage.mapping)
        labels_part, labels_contact = pooled_part[stage.permutation], pooled_contact[stage.permutation]
    return out


def cppool_loss(stages: Sequence, part: np.ndarray, contact: np.ndarray, level0_index: np.ndarray) -> Tensor:
    """Sum over pooling stages of part CE plus contact CE on the auxiliary heads."""
    if not stages:
        raise DegenerateBatch("model has no CPPool stages")
    total = None
    for stage, (labels_part, labels_contact) in zip(stages, stage_labels(stages, part, contact, level0_index)):
        term = add(cross_entropy(stage.part_logits, labels_part),
                   balanced_binary_ce(stage.contact_logits, labels_contact))
        total = term if total is None else add(total, term)
    return total


# ---------------------------------------------------------------------------
# Fine-tuning losses
# ---------------------------------------------------------------------------

def heatmap_targets(keypoints: KeypointSet, grid, sigma: float = 1.0) -> np.ndarray:
    """Discretized Gaussian targets (N_k x 3 x bins); out-of-range coordinates clamp to the edge bin."""
    position = grid.continuous_bin(keypoints.coords)
    top = grid.bins - 1
    outside = (position < 0) | (position > top)
    if np.any(outside & keypoints.valid[:, None]):
        warn(f"{int((outside & keypoints.valid[:, None]).sum())} keypoint coordinates fall outside the heatmap range")
    position = np.clip(position, 0, top)
    bins = np.arange(grid.bins, dtype=np.float64)
    if sigma <= 0:
        target = (np.abs(bins[None, None, :] - np.rint(position)[..., None]) < 0.5).astype(np.float64)
    else:
        target = np.exp(-0.5 * ((bins[None, None, :] - position[..., None]) / sigma) ** 2)
    return target / target.sum(axis=-1, keepdims=True)


def heatmap_kl_loss(log_probs: Tensor, keypoints: KeypointSet, grid, sigma: float = 1.0) -> Tensor:
    """Mean over valid keypoints and axes of KL(target || predicted)."""
    n_k = len(keypoints)
    if log_probs.shape != (n_k * 3, grid.bins):
        raise ShapeError("heatmap_kl_loss", log_probs.shape, (n_k * 3, grid.bins))
    if not keypoints.valid.any():
        raise DegenerateBatch("no valid keypoints to supervise the heatmaps")
    target = heatmap_targets(keypoints, grid, sigma).reshape(n_k * 3, grid.bins)
    rows = np.flatnonzero(np.repeat(keypoints.valid, 3))
    target = target[rows]
    entropy_part = float(np.sum(np.where(target > 0, target * np.log(np.where(target > 0, target, 1.0)), 0.0)))
    cross = sum_(mul(gather(log_probs, rows), Tensor(target)))
    return mul(sub(entropy_part, cross), 1.0 / rows.size)


def limb_loss(pred, gt: KeypointSet, skeleton: Skeleton, lambda_dir: float = 1.0, lambda_len: float = 1.0,
              beta: float = 1.0, pred_valid: Optional[np.ndarray] = None) -> Tensor:
    """Bone direction (1 - cos) plus SmoothL1 bone length differences over usable bones."""
    if isinstance(pred, KeypointSet):
        pred_valid = pred.valid if pred_valid is None else pred_valid
        pred = Tensor(pred.coords)
    pred = as_tensor(pred)
    if pred.shape != gt.coords.shape:
        raise ShapeError("limb_loss", pred.shape, gt.coords.shape)
    valid = gt.valid if pred_valid is None else gt.valid & np.asarray(pred_valid, dtype=bool)
    bones = skeleton.restricted(valid).as_array()
    if bones.shape[0] == 0:
        raise DegenerateBatch("no usable bones for the limb loss")
    a, b = bones[:, 0], bones[:, 1]
    bone_pred = sub(gather(pred, b), gather(pred, a))
    bone_gt = gt.coords[b] - gt.coords[a]
    len_gt = np.linalg.norm(bone_gt, axis=1)
    len_pred = sqrt(clamp_min(sum_(mul(bone_pred, bone_pred), axis=1), 1e-24))

    length_term = mean(smooth_l1(sub(len_pred, Tensor(len_gt)), beta))
    directed = np.flatnonzero(len_gt > 0)
    total = mul(length_term, lambda_len)
    if directed.size:
        unit_gt = bone_gt[directed] / len_gt[directed, None]
        dots = sum_(mul(gather(bone_pred, directed), Tensor(unit_gt)), axis=1)
        cosine = div(dots, gather(len_pred, directed))
        direction_term = mean(sub(1.0, cosine))
        total = add(mul(direction_term, lambda_dir), total)
    return total


# ---------------------------------------------------------------------------
# Phase-level sums
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PretrainWeights:
    seg: float = 1.0
    contact: float = 1.0
    coord: float = 0.5
    keypoint_contact: float = 0.02
    hoicl: float = 1.0
    cppool: float = 1.0


@dataclass(frozen=True)
class FinetuneWeights:
    heatmap: float = 1.0
    limb: float = 0.1
    heatmap_sigma: float = 1.0


@dataclass
class FrameLabels:
    part: Optional[np.ndarray]
    contact: Optional[np.ndarray]
    keypoints: Optional[KeypointSet]


def _require(value, term: str):
    if value is None:
        raise ContractError("missing-labels", f"labels required by the '{term}' term are missing")
    return value


def pretrain_loss(outputs, labels: FrameLabels, weights: PretrainWeights = PretrainWeights(),
                  hoicl_cfg: HOICLConfig = HOICLConfig(), hierarchy: Optional[PartHierarchy] = None,
                  rng: Optional[np.random.Generator] = None, fir_parts: Optional[Sequence[int]] = None) -> LossResult:
    weighted: List[Tuple[str, Tensor]] = []
    if weights.seg:
        weighted.append(("seg", mul(cross_entropy(outputs.seg, _require(labels.part, "seg")), weights.seg)))
    if weights.contact:
        weighted.append(("contact", mul(balanced_binary_ce(outputs.point_contact, _require(labels.contact, "contact")),
                                        weights.contact)))
    if weights.coord:
        kp = _require(labels.keypoints, "coord")
        weighted.append(("coord", mul(masked_mse(outputs.keypoints, kp.coords, kp.valid), weights.coord)))
    if weights.keypoint_contact:
        kp = _require(labels.keypoints, "keypoint_contact")
        rows = np.flatnonzero(kp.valid)
        term = balanced_binary_ce(gather(outputs.keypoint_contact, rows), kp.contact[rows])
        weighted.append(("keypoint_contact", mul(term, weights.keypoint_contact)))
    if weights.hoicl:
        if outputs.embeddings is None:
            raise ContractError("missing-outputs", "HOICL needs embeddings from a pretrain-mode forward")
        result = hoicl(outputs.embeddings, _require(labels.part, "hoicl"), _require(labels.contact, "hoicl"),
                       hoicl_cfg, hierarchy, outputs.tsc_targets, rng, fir_parts)
        weighted.append(("hoicl", mul(result.total, weights.hoicl)))
    if weights.cppool and outputs.stages:
        term = cppool_loss(outputs.stages, _require(labels.part, "cppool"), _require(labels.contact, "cppool"),
                           outputs.level0_index)
        weighted.append(("cppool", mul(term, weights.cppool)))
    return _combine(weighted)


def finetune_loss(outputs, labels: FrameLabels, skeleton: Skeleton,
                  weights: FinetuneWeights = FinetuneWeights()) -> LossResult:
    kp = _require(labels.keypoints, "heatmap")
    if outputs.heatmap_log is None:
        raise ContractError("missing-outputs", "heatmap loss needs a finetune-mode forward")
    weighted: List[Tuple[str, Tensor]] = []
    if weights.heatmap:
        term = heatmap_kl_loss(outputs.heatmap_log, kp, outputs.heatmap_grid, weights.heatmap_sigma)
        weighted.append(("heatmap", mul(term, weights.heatmap)))
    if weights.limb:
        weighted.append(("limb", mul(limb_loss(outputs.keypoints, kp, skeleton), weights.limb)))
    return _combine(weighted)
