import numpy as np
import pytest

from hoil.utils.core.errors import ConfigError, ShapeError
from hoil.utils.core.gridpool import CPPoolConfig
from hoil.utils.core.model import HoilModel, KeypointDecoder, Mode, ModelConfig, Pooling
from hoil.utils.core.pointcloud import NUM_CLASSES, GridConfig, PointCloud
from hoil.utils.core.tensor import Tensor, backward, concat, sum_


def small_config(**overrides):
    values = dict(channels=(8, 16), num_keypoints=5, projection_dim=8, num_heads=2, patch_size=16,
                  grid=GridConfig(base_grid_size=0.2), heatmap_bins=16, heatmap_half_extent=1.0)
    values.update(overrides)
    return ModelConfig(**values)


@pytest.fixture
def cloud(rng):
    return PointCloud(rng.uniform(-0.5, 0.5, size=(48, 3)))


def test_pretrain_outputs_have_expected_shapes(cloud):
    out = HoilModel(small_config(), Mode.PRETRAIN).forward(cloud)
    assert out.seg.shape == (48, NUM_CLASSES)
    assert out.point_contact.shape == (48,)
    assert out.keypoints.shape == (5, 3)
    assert out.keypoint_contact.shape == (5,)
    assert out.embeddings.shape == (48, 8)
    np.testing.assert_allclose(np.linalg.norm(out.embeddings.data, axis=1), 1.0)
    assert out.heatmaps is None
    assert len(out.stages) == 1


def test_finetune_heatmaps_are_distributions(cloud):
    out = HoilModel(small_config(), Mode.FINETUNE).forward(cloud)
    assert out.heatmaps.shape == (5, 3, 16)
    np.testing.assert_allclose(out.heatmaps.data.sum(axis=-1), 1.0)
    assert out.embeddings is None
    offset = out.keypoints.data - out.heatmap_grid.origin
    assert np.all(np.abs(offset) <= 1.0)


def test_point_outputs_follow_input_order(cloud, rng):
    model = HoilModel(small_config(), Mode.PRETRAIN)
    base = model.forward(cloud)
    shuffle = rng.permutation(len(cloud))
    moved = model.forward(cloud.subset(shuffle))
    np.testing.assert_array_equal(moved.seg.data, base.seg.data[shuffle])
    np.testing.assert_array_equal(moved.point_contact.data, base.point_contact.data[shuffle])
    np.testing.assert_array_equal(moved.embeddings.data, base.embeddings.data[shuffle])
    np.testing.assert_array_equal(moved.keypoints.data, base.keypoints.data)
    np.testing.assert_array_equal(moved.keypoint_contact.data, base.keypoint_contact.data)


def test_same_seed_gives_same_model(cloud):
    a = HoilModel(small_config(), seed=3).forward(cloud)
    b = HoilModel(small_config(), seed=3).forward(cloud)
    c = HoilModel(small_config(), seed=4).forward(cloud)
    np.testing.assert_array_equal(a.seg.data, b.seg.data)
    assert not np.array_equal(a.seg.data, c.seg.data)


def test_max_pooling_records_no_stage_logits(cloud):
    out = HoilModel(small_config(pooling=Pooling.MAX)).forward(cloud)
    assert out.stages == []
    assert out.seg.shape == (48, NUM_CLASSES)


def test_deeper_network_runs(cloud):
    out = HoilModel(small_config(channels=(8, 16, 16))).forward(cloud)
    assert len(out.stages) == 2
    assert out.seg.shape == (48, NUM_CLASSES)


def test_every_parameter_receives_gradient(cloud):
    model = HoilModel(small_config(), Mode.PRETRAIN, CPPoolConfig())
    out = model.forward(cloud)
    total = sum_(out.seg) + sum_(out.point_contact) + sum_(out.keypoints * out.keypoints) \
        + sum_(out.keypoint_contact) + sum_(out.embeddings * out.embeddings)
    for trace in out.stages:
        total = total + sum_(trace.part_logits) + sum_(trace.contact_logits)
    backward(total)
    missing = [name for name, p in model.named_parameters() if p.grad is None]
    assert missing == []


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(channels=(8,))
    with pytest.raises(ConfigError):
        ModelConfig(channels=(8, 15), num_heads=2)
    assert ModelConfig(channels=(8, 16, 32)).grid.num_stages == 2


def test_load_state_query_mismatch(cloud):
    pretrained = HoilModel(small_config(num_keypoints=5), Mode.PRETRAIN)
    state = pretrained.state_dict()
    target = HoilModel(small_config(num_keypoints=4), Mode.FINETUNE)
    with pytest.raises(ConfigError, match="reinit-queries"):
        target.load_state(state)
    target.load_state(state, reinit_queries=True)
    np.testing.assert_array_equal(target.state_dict()["seg_head.fc1.weight"], state["seg_head.fc1.weight"])
    assert target.forward(cloud).keypoints.shape == (4, 3)


LATTICE = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 1.0, 1.0]])


def identity_stage_model():
    """Equal widths, identity pooling projection and an attention block that returns its input."""
    model = HoilModel(small_config(channels=(8, 8)), seed=0)
    model.pool_stages[0].proj_pool.weight.data[...] = np.eye(8)
    model.blocks[1].attn.out.zero_()
    model.blocks[1].mlp.fc2.zero_()
    return model


def test_encoder_stage_passes_singleton_cells_through(rng):
    model = identity_stage_model()
    feats = Tensor(rng.standard_normal((len(LATTICE), 8)))
    pooled_points, pooled, trace = model.encoder_stage(0, LATTICE, feats, model.queries)
    assert trace.mapping.num_cells == len(LATTICE)
    for row, point in enumerate(pooled_points):
        source = np.flatnonzero(np.all(LATTICE == point, axis=1))
        assert source.size == 1
        np.testing.assert_allclose(pooled.data[row], feats.data[source[0]], atol=1e-12)


def test_encoder_stage_shrinks_shared_cells_and_repeats(cloud):
    model = HoilModel(small_config(), seed=0)
    feats = model.embed(cloud)
    first = model.encoder_stage(0, cloud.coords, feats, model.queries)
    second = model.encoder_stage(0, cloud.coords, feats, model.queries)
    assert first[2].mapping.num_cells < len(cloud)
    np.testing.assert_array_equal(first[0], second[0])
    np.testing.assert_array_equal(first[1].data, second[1].data)
    with pytest.raises(ShapeError):
        model.encoder_stage(1, cloud.coords, feats, model.queries)


def test_decoder_stage_zero_coarse_features_pass_the_skip(rng):
    model = HoilModel(small_config(), seed=0)
    decoder = model.decoder_stages[0]
    decoder.proj_encoder.weight.data[...] = np.eye(8)
    decoder.block.mlp.fc2.zero_()
    skip = Tensor(rng.standard_normal((len(LATTICE), 8)))
    _, pooled, trace = model.encoder_stage(0, LATTICE, skip, model.queries)
    fine = model.decoder_stage(0, Tensor(np.zeros(pooled.shape)), trace, skip)
    np.testing.assert_allclose(fine.data, skip.data, atol=1e-12)


def test_encode_decode_restores_point_count(cloud):
    model = HoilModel(small_config(channels=(8, 16, 16)), seed=0)
    points, feats = cloud.coords, model.embed(cloud)
    skips, traces = [feats], []
    for stage in range(model.cfg.num_stages):
        points, feats, trace = model.encoder_stage(stage, points, feats, model.queries)
        skips.append(feats)
        traces.append(trace)
    assert feats.shape[0] < len(cloud)
    for level in range(model.cfg.num_stages - 1, -1, -1):
        feats = model.decoder_stage(level, feats, traces[level], skips[level])
        assert feats.shape[0] == traces[level].mapping.num_points
    assert feats.shape == (len(cloud), 8)
    with pytest.raises(ShapeError):
        model.decoder_stage(0, skips[2], traces[0], skips[0])


def decoder_inputs(rng, num_points):
    queries = Tensor(rng.standard_normal((4, 8)))
    feats = Tensor(rng.standard_normal((num_points, 8)))
    coords = rng.uniform(-0.5, 0.5, size=(num_points, 3))
    return queries, feats, coords


def test_keypoint_decoder_single_point_gives_its_value_projection(rng):
    decoder = KeypointDecoder(8, 8, 2, rng)
    decoder.block.mlp.fc2.zero_()
    queries, feats, coords = decoder_inputs(rng, 1)
    out = decoder(queries, feats, coords)
    memory = decoder.block.norm_kv(decoder.point_proj(feats) + decoder.position(Tensor(coords)))
    value = decoder.block.attn.out(concat([v(memory) for _, _, v in decoder.block.attn.heads], axis=1))
    np.testing.assert_allclose(out.data - queries.data, np.repeat(value.data, 4, axis=0), atol=1e-12)


def test_keypoint_decoder_ignores_point_order(rng):
    decoder = KeypointDecoder(8, 8, 2, rng)
    queries, feats, coords = decoder_inputs(rng, 12)
    order = rng.permutation(12)
    base = decoder(queries, feats, coords)
    moved = decoder(queries, Tensor(feats.data[order]), coords[order])
    np.testing.assert_allclose(moved.data, base.data, atol=1e-12)


def test_keypoint_decoder_zeroed_output_keeps_queries(rng):
    decoder = KeypointDecoder(8, 8, 2, rng)
    decoder.block.zero_output()
    queries, feats, coords = decoder_inputs(rng, 6)
    np.testing.assert_array_equal(decoder(queries, feats, coords).data, queries.data)
    with pytest.raises(ShapeError):
        decoder(queries, Tensor(np.zeros((0, 8))), np.zeros((0, 3)))
