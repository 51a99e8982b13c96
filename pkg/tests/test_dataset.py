import numpy as np
import pytest

from hoil.utils.core.dataset import DatasetMix, dataset_mix
from hoil.utils.core.errors import ContractError


def test_equal_sources_split_evenly():
    mix = dataset_mix([["a"] * 50, ["b"] * 50], [1.0, 1.0], seed=3)
    draws = mix.take(10000)
    share = draws.count("a") / len(draws)
    assert 0.48 <= share <= 0.52


def test_ratio_weights_each_sample():
    mix = DatasetMix([list(range(10)), list(range(100, 130))], [3.0, 1.0])
    np.testing.assert_allclose(mix.probabilities, [0.5, 0.5])


def test_zero_ratio_is_never_drawn():
    mix = dataset_mix([["a"] * 5, ["b"] * 5], [1.0, 0.0], seed=1)
    assert set(mix.take(500)) == {"a"}
    assert set(mix.batch(9, 32)) == {"a"}


def test_zero_ratio_may_be_empty():
    mix = dataset_mix([["a"], []], [1.0, 0.0])
    assert mix.draw() == "a"


def test_batches_depend_only_on_seed_and_step():
    sources = [list(range(20)), list(range(100, 120))]
    first = dataset_mix(sources, [1.0, 2.0], seed=7)
    second = dataset_mix(sources, [1.0, 2.0], seed=7)
    second.take(13)
    assert first.batch(4, 8) == second.batch(4, 8)
    assert first.batch(4, 8) != first.batch(5, 8)
    assert first.batch(4, 8) != dataset_mix(sources, [1.0, 2.0], seed=8).batch(4, 8)


def test_single_source_passes_through_in_order():
    mix = dataset_mix([[1, 2, 3]], [0.5])
    assert mix.passthrough
    assert mix.take(5) == [1, 2, 3, 1, 2]
    assert mix.batch(1, 2) == [3, 1]
    it = iter(dataset_mix([[9]], [1.0]))
    assert next(it) == 9 and next(it) == 9


@pytest.mark.parametrize("sources,ratios,rule", [
    ([], [], "mix-sources"),
    ([[1], [2]], [1.0], "mix-ratios"),
    ([[1], [2]], [1.0, -1.0], "mix-ratios"),
    ([[1], [2]], [0.0, 0.0], "mix-ratios"),
    ([[1], []], [1.0, 1.0], "mix-empty-source"),
])
def test_mix_validation(sources, ratios, rule):
    with pytest.raises(ContractError) as excinfo:
        DatasetMix(sources, ratios)
    assert excinfo.value.rule == rule
