"""Central finite-difference verification of tape gradients."""
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from hoil.utils.core.errors import NumericalError
from hoil.utils.core.tensor import Parameter, Tensor, backward, zero_grad


@dataclass
class GradCheckReport:
    max_error: float = 0.0
    per_parameter: Dict[str, float] = field(default_factory=dict)
    checked: int = 0

    @property
    def empty(self) -> bool:
        return self.checked == 0


def _scalar(value) -> float:
    if isinstance(value, Tensor):
        return value.item()
    return float(value)


def finite_difference_check(f: Callable[[], Tensor], params: Sequence[Parameter], h: float = 1e-6,
                            max_coords_per_param: Optional[int] = None, seed: int = 0) -> GradCheckReport:
    """Compares tape gradients of `f()` with central differences.

    Relative error per coordinate is |g_ad - g_fd| / max(1, |g_fd|). When
    `max_coords_per_param` is set, that many coordinates of each parameter
    are sampled with a seeded generator instead of checking all of them.
    """
    params = list(params)
    report = GradCheckReport()
    if not params:
        return report

    first, second = _scalar(f()), _scalar(f())
    if first != second:
        raise NumericalError(f"function is not deterministic: {first!r} != {second!r}")

    zero_grad(params)
    loss = f()
    backward(loss)
    analytic = {id(p): (np.zeros_like(p.data) if p.grad is None else p.grad.copy()) for p in params}
    zero_grad(params)

    rng = np.random.default_rng(seed)
    for idx, p in enumerate(params):
        name = getattr(p, "name", f"param{idx}")
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords_per_param is not None and flat.size > max_coords_per_param:
            coords = np.sort(rng.choice(flat.size, size=max_coords_per_param, replace=False))
        worst = 0.0
        for c in coords:
            original = flat[c]
            flat[c] = original + h
            plus = _scalar(f())
            flat[c] = original - h
            minus = _scalar(f())
            flat[c] = original
            fd = (plus - minus) / (2.0 * h)
            ad = analytic[id(p)].reshape(-1)[c]
            worst = max(worst, abs(ad - fd) / max(1.0, abs(fd)))
            report.checked += 1
        report.per_parameter[name] = worst
        report.max_error = max(report.max_error, worst)
    return report
