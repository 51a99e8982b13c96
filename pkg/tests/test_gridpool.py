import numpy as np
import pytest

from hoil.utils.core.errors import ContractError, ShapeError
from hoil.utils.core.gradcheck import finite_difference_check
from hoil.utils.core.gridpool import (
    CPPoolConfig, assign_cells, cppool_aggregate, cppool_logits, cppool_weights, max_pool, pool_labels, skip_fuse,
    unpool, voxelize,
)
from hoil.utils.core.layers import Linear
from hoil.utils.core.pointcloud import NUM_CLASSES
from hoil.utils.core.tensor import Parameter, Tensor, sum_

DIM = 6


class Heads:
    def __init__(self, seed=0):
        rng = np.random.default_rng(seed)
        self.part = Linear(DIM, NUM_CLASSES, rng)
        self.contact = Linear(DIM, 1, rng)
        self.importance = Linear(3 * DIM, 1, rng)
        self.project = Linear(DIM, DIM, rng)

    def parameters(self):
        return [p for m in (self.part, self.contact, self.importance, self.project) for p in m.parameters()]


def _pool(points, feats, heads, cfg=CPPoolConfig(), grid=0.5):
    mapping = assign_cells(points, grid)
    logits = cppool_logits(feats, Tensor(np.ones(DIM)), Tensor(np.full(DIM, 0.5)),
                           heads.part, heads.contact, heads.importance, cfg)
    weights = cppool_weights(logits, mapping)
    return mapping, logits, weights


def test_assign_cells_partitions_points(rng):
    points = rng.uniform(-1, 1, size=(200, 3))
    mapping = assign_cells(points, 0.4)
    mapping.check()
    assert sum(m.size for m in mapping.points_of_cell) == 200
    for cell, members in enumerate(mapping.points_of_cell):
        np.testing.assert_allclose(mapping.cell_centroids[cell], points[members].mean(axis=0))


def test_assign_cells_rejects_bad_grid():
    with pytest.raises(ContractError):
        assign_cells(np.zeros((3, 3)), 0.0)
    with pytest.raises(ShapeError):
        assign_cells(np.zeros((3, 2)), 0.1)


def test_single_cell_covers_everything():
    mapping = assign_cells(np.random.default_rng(0).uniform(0, 0.1, size=(10, 3)), 1.0)
    assert mapping.num_cells == 1


def test_max_pool_and_unpool_shapes(rng):
    points = rng.uniform(0, 1, size=(40, 3))
    feats = rng.standard_normal((40, DIM))
    mapping = assign_cells(points, 0.5)
    pooled = max_pool(feats, mapping)
    assert pooled.shape == (mapping.num_cells, DIM)
    for cell, members in enumerate(mapping.points_of_cell):
        np.testing.assert_array_equal(pooled.data[cell], feats[members].max(axis=0))
    restored = unpool(pooled, mapping)
    assert restored.shape == (40, DIM)
    np.testing.assert_array_equal(restored.data, pooled.data[mapping.cell_of_point])
    with pytest.raises(ShapeError):
        unpool(np.zeros((mapping.num_cells + 1, DIM)), mapping)


def test_cppool_weights_sum_to_one_per_cell(rng):
    points = rng.uniform(0, 1, size=(60, 3))
    feats = Tensor(rng.standard_normal((60, DIM)))
    mapping, _, weights = _pool(points, feats, Heads())
    np.testing.assert_allclose(weights.cell_sums(mapping), 1.0, atol=1e-9)
    assert np.all(weights.w.data >= 0)


def test_singleton_cell_gets_full_weight():
    points = np.array([[0.1, 0.1, 0.1], [5.0, 5.0, 5.0], [5.1, 5.1, 5.1]])
    feats = Tensor(np.random.default_rng(2).standard_normal((3, DIM)))
    mapping, _, weights = _pool(points, feats, Heads())
    lone = int(mapping.cell_of_point[0])
    assert mapping.points_of_cell[lone].tolist() == [0]
    assert weights.w.data[0] == pytest.approx(1.0)


def test_large_logits_stay_finite():
    points = np.zeros((4, 3))
    feats = Tensor(np.full((4, DIM), 1e3))
    heads = Heads()
    heads.importance.weight.data[...] = 1e3
    _, _, weights = _pool(points, feats, heads)
    assert np.all(np.isfinite(weights.w.data))


def test_contact_prior_shifts_weight_to_contact_points():
    points = np.zeros((2, 3))
    feats = Tensor(np.array([np.ones(DIM), -np.ones(DIM)]))
    heads = Heads()
    for head in (heads.part, heads.importance):
        head.zero_()
    heads.contact.weight.data[...] = 2.0
    heads.contact.bias.data[...] = 0.0
    _, logits, weights = _pool(points, feats, heads)
    assert logits.contact_score.data[0] > logits.contact_score.data[1]
    assert weights.w.data[0] > weights.w.data[1]
    _, _, flat = _pool(points, feats, heads, CPPoolConfig(use_contact=False))
    np.testing.assert_allclose(flat.w.data, [0.5, 0.5])


def test_cppool_temperature_must_be_positive():
    with pytest.raises(ContractError):
        CPPoolConfig(temperature=0.0)


@pytest.mark.parametrize("seed", range(20))
def test_cppool_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    points = rng.uniform(0, 1, size=(12, 3))
    feats = Parameter(rng.standard_normal((12, DIM)), "feats")
    heads = Heads(seed=seed + 5)
    mapping = assign_cells(points, 0.5)

    def loss():
        logits = cppool_logits(feats, Tensor(np.ones(DIM)), Tensor(np.zeros(DIM)),
                               heads.part, heads.contact, heads.importance, CPPoolConfig(temperature=0.7))
        pooled = cppool_aggregate(feats, cppool_weights(logits, mapping), mapping, heads.project)
        return sum_(pooled * pooled)

    report = finite_difference_check(loss, [feats] + heads.parameters(), max_coords_per_param=6)
    assert report.max_error <= 1e-4


def test_pool_labels_majority_and_any_contact():
    points = np.array([[0.1, 0, 0], [0.2, 0, 0], [0.3, 0, 0], [2.0, 0, 0], [2.1, 0, 0]])
    mapping = assign_cells(points, 1.0)
    part, contact = pool_labels([3, 5, 5, 7, 2], [False, False, True, False, False], mapping)
    first, second = mapping.cell_of_point[0], mapping.cell_of_point[3]
    assert part[first] == 5 and contact[first]
    assert part[second] == 2 and not contact[second]


def test_skip_fuse_checks_shapes():
    fused = skip_fuse(np.ones((3, 2)), np.full((3, 2), 2.0))
    np.testing.assert_array_equal(fused.data, np.full((3, 2), 3.0))
    with pytest.raises(ShapeError):
        skip_fuse(np.ones((3, 2)), np.ones((2, 2)))


def test_voxelize_keeps_one_point_per_cell(rng):
    points = rng.uniform(0, 1, size=(300, 3))
    kept = voxelize(points, 0.25)
    cells = np.floor(points[kept] / 0.25).astype(int)
    assert len({tuple(c) for c in cells}) == kept.size
    assert np.all(np.diff(kept) > 0)
    np.testing.assert_array_equal(voxelize(points, 0.25), kept)
