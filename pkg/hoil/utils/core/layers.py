"""
Parameter containers and the small set of blocks the networks are built from.

Modules register parameters and children in insertion order, so
`named_parameters()` is stable and checkpoints are byte-reproducible.
"""
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from hoil.utils.core.errors import ShapeError
from hoil.utils.core.tensor import (
    Parameter, Tensor, add, as_tensor, concat, gather, layer_norm, matmul, relu, scaled_dot_attention,
)


class Module:
    def __init__(self):
        self._params: Dict[str, Parameter] = {}
        self._children: Dict[str, "Module"] = {}

    def add_parameter(self, name: str, value: np.ndarray) -> Parameter:
        param = Parameter(value, name=name)
        self._params[name] = param
        return param

    def add_module(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, param in self._params.items():
            yield prefix + name, param
        for name, child in self._children.items():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, zero: bool = False):
        super().__init__()
        self.in_dim, self.out_dim = in_dim, out_dim
        bound = 1.0 / np.sqrt(in_dim)
        weight = np.zeros((in_dim, out_dim)) if zero else rng.uniform(-bound, bound, size=(in_dim, out_dim))
        self.weight = self.add_parameter("weight", weight)
        self.bias = self.add_parameter("bias", np.zeros(out_dim))

    def forward(self, x: Tensor) -> Tensor:
        x = as_tensor(x)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError("Linear", x.shape, (self.in_dim, self.out_dim))
        return add(matmul(x, self.weight), self.bias)

    def zero_(self):
        self.weight.data[...] = 0.0
        self.bias.data[...] = 0.0


class MLP(Module):
    """Two linear layers with a ReLU; hidden width defaults to the input width."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 hidden: Optional[int] = None, zero_last: bool = False):
        super().__init__()
        hidden = hidden or in_dim
        self.fc1 = self.add_module("fc1", Linear(in_dim, hidden, rng))
        self.fc2 = self.add_module("fc2", Linear(hidden, out_dim, rng, zero=zero_last))

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(relu(self.fc1(x)))


class LayerNorm(Module):
    def __init__(self, dim: int):
        super().__init__()
        self.gamma = self.add_parameter("gamma", np.ones(dim))
        self.beta = self.add_parameter("beta", np.zeros(dim))

    def forward(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta)


class MultiHeadAttention(Module):
    def __init__(self, dim: int, num_heads: int, rng: np.random.Generator, kv_dim: Optional[int] = None):
        super().__init__()
        if dim % num_heads:
            raise ShapeError("MultiHeadAttention", (dim,), (num_heads,), detail="width not divisible by heads")
        kv_dim = kv_dim or dim
        head_dim = dim // num_heads
        self.heads = []
        for h in range(num_heads):
            q = self.add_module(f"q{h}", Linear(dim, head_dim, rng))
            k = self.add_module(f"k{h}", Linear(kv_dim, head_dim, rng))
            v = self.add_module(f"v{h}", Linear(kv_dim, head_dim, rng))
            self.heads.append((q, k, v))
        self.out = self.add_module("out", Linear(dim, dim, rng))

    def forward(self, queries: Tensor, keys: Tensor) -> Tensor:
        outputs = [scaled_dot_attention(q(queries), k(keys), v(keys)) for q, k, v in self.heads]
        joined = outputs[0] if len(outputs) == 1 else concat(outputs, axis=1)
        return self.out(joined)


class PatchAttentionBlock(Module):
    """Pre-norm self-attention inside consecutive patches of a serialized sequence, then a pointwise MLP."""

    def __init__(self, dim: int, num_heads: int, rng: np.random.Generator, patch_size: int = 64):
        super().__init__()
        self.patch_size = patch_size
        self.norm1 = self.add_module("norm1", LayerNorm(dim))
        self.attn = self.add_module("attn", MultiHeadAttention(dim, num_heads, rng))
        self.norm2 = self.add_module("norm2", LayerNorm(dim))
        self.mlp = self.add_module("mlp", MLP(dim, dim, rng))

    def forward(self, x: Tensor) -> Tensor:
        n = x.shape[0]
        normed = self.norm1(x)
        if n <= self.patch_size:
            attended = self.attn(normed, normed)
        else:
            pieces = []
            for start in range(0, n, self.patch_size):
                patch = gather(normed, np.arange(start, min(start + self.patch_size, n)))
                pieces.append(self.attn(patch, patch))
            attended = concat(pieces, axis=0)
        x = add(x, attended)
        return add(x, self.mlp(self.norm2(x)))


class PointwiseBlock(Module):
    def __init__(self, dim: int, rng: np.random.Generator):
        super().__init__()
        self.norm = self.add_module("norm", LayerNorm(dim))
        self.mlp = self.add_module("mlp", MLP(dim, dim, rng))

    def forward(self, x: Tensor) -> Tensor:
        return add(x, self.mlp(self.norm(x)))


class CrossAttentionBlock(Module):
    """Queries attend to a memory sequence; residual attention then residual MLP."""

    def __init__(self, dim: int, num_heads: int, rng: np.random.Generator, memory_dim: Optional[int] = None):
        super().__init__()
        memory_dim = memory_dim or dim
        self.norm_q = self.add_module("norm_q", LayerNorm(dim))
        self.norm_kv = self.add_module("norm_kv", LayerNorm(memory_dim))
        self.attn = self.add_module("attn", MultiHeadAttention(dim, num_heads, rng, kv_dim=memory_dim))
        self.norm_out = self.add_module("norm_out", LayerNorm(dim))
        self.mlp = self.add_module("mlp", MLP(dim, dim, rng))

    def forward(self, queries: Tensor, memory: Tensor) -> Tensor:
        if memory.shape[0] == 0:
            raise ShapeError("CrossAttentionBlock", queries.shape, memory.shape, detail="empty memory")
        queries = add(queries, self.attn(self.norm_q(queries), self.norm_kv(memory)))
        return add(queries, self.mlp(self.norm_out(queries)))

    def zero_output(self):
        """Zeroes the output projection of both residual branches; the block then returns its queries."""
        self.attn.out.zero_()
        self.mlp.fc2.zero_()
