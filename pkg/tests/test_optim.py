import numpy as np
import pytest

from hoil.utils.core import tensor as T
from hoil.utils.core.errors import ConfigError, NumericalError
from hoil.utils.core.optim import AdamW, OptimizerConfig, cosine_lr
from hoil.utils.core.tensor import Parameter, backward


def quadratic_step(optimizer, param, target):
    optimizer.zero_grad()
    loss = T.sum_((param - target) * (param - target))
    backward(loss)
    optimizer.step()
    return loss.item()


def test_cosine_schedule_endpoints():
    assert cosine_lr(1.0, 0, 11) == pytest.approx(1.0)
    assert cosine_lr(1.0, 5, 11) == pytest.approx(0.5)
    assert cosine_lr(1.0, 10, 11) == pytest.approx(0.0, abs=1e-15)
    assert cosine_lr(1.0, 50, 11) == pytest.approx(0.0, abs=1e-15)
    assert cosine_lr(1.0, 10, 11, min_ratio=0.1) == pytest.approx(0.1)
    assert cosine_lr(0.3, 4, 1) == 0.3


def test_adamw_minimizes_quadratic():
    param = Parameter(np.array([2.0, -3.0, 0.5]), "w")
    target = np.array([0.5, 0.5, 0.5])
    optimizer = AdamW([("w", param)], lr=0.1, total_steps=300, weight_decay=0.0)
    first = quadratic_step(optimizer, param, target)
    for _ in range(299):
        last = quadratic_step(optimizer, param, target)
    assert last < 1e-2 * first
    assert optimizer.step_count == 300


def test_weight_decay_shrinks_idle_parameters():
    param = Parameter(np.array([1.0]), "w")
    optimizer = AdamW([("w", param)], lr=0.1, total_steps=1, weight_decay=0.5)
    param.grad = np.zeros(1)
    optimizer.step()
    assert param.data[0] == pytest.approx(0.95)


def test_parameters_without_gradient_are_skipped():
    used = Parameter(np.array([1.0]), "used")
    idle = Parameter(np.array([1.0]), "idle")
    optimizer = AdamW([("used", used), ("idle", idle)], lr=0.1, total_steps=10)
    backward(T.sum_(used * 2.0))
    optimizer.step()
    assert idle.data[0] == 1.0 and used.data[0] < 1.0


def test_non_finite_gradient_raises():
    param = Parameter(np.array([1.0]), "w")
    optimizer = AdamW([("w", param)], lr=0.1, total_steps=10)
    param.grad = np.array([np.nan])
    with pytest.raises(NumericalError, match="'w'"):
        optimizer.step()


def test_state_roundtrip_resumes_identically():
    target = np.array([1.0, -1.0])
    a = Parameter(np.array([0.0, 0.0]), "w")
    opt_a = AdamW([("w", a)], lr=0.05, total_steps=20)
    for _ in range(5):
        quadratic_step(opt_a, a, target)
    b = Parameter(a.data.copy(), "w")
    opt_b = AdamW([("w", b)], lr=0.05, total_steps=20)
    opt_b.load_state(opt_a.state_dict())
    assert opt_b.step_count == 5
    for _ in range(5):
        quadratic_step(opt_a, a, target)
        quadratic_step(opt_b, b, target)
    np.testing.assert_array_equal(a.data, b.data)


def test_state_dict_names():
    opt = AdamW([("w", Parameter(np.zeros(2), "w"))], lr=0.1, total_steps=2)
    assert sorted(opt.state_dict()) == ["optim/m/w", "optim/step", "optim/v/w"]


@pytest.mark.parametrize("kwargs", [
    {"algorithm": "sgd"}, {"schedule": "step"}, {"lr_pretrain": 0.0}, {"batch_size": 0}, {"epochs": 0},
])
def test_optimizer_config_validation(kwargs):
    with pytest.raises(ConfigError):
        OptimizerConfig(**kwargs)
