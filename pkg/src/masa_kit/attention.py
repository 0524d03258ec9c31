"""Attention kernels with distance decay.

Covers causal retention in recurrent and parallel form, its bidirectional
variant, softmax attention weighted by a 2D Manhattan decay (full and
axis-decomposed), a depthwise local-context term, and the multi-head layer
that composes them. Kernels are pure functions; per-head and per-row work is
independent.

Score/apply cost: full attention spends 2*N^2*d MACs on an N-token grid while
the decomposed form spends 2*N*(H+W)*d, so decomposition wins for any square
grid with side above 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .decay import (DecaySpec, GridShape, decay_axial_pair, decay_bidirectional_1d,
                    decay_causal_1d, decay_manhattan_2d)
from .errors import ConfigurationError, DimensionError
from .tensor import (Tensor, concat, depthwise_conv2d, hadamard, matmul, mul_scalar,
                     reshape, slice_axis, softmax_last, transpose, trunc_normal)


@dataclass(frozen=True)
class MaSAConfig:
    """Shape and decay settings for one Manhattan self-attention layer."""

    dim: int
    num_heads: int
    decomposed: bool
    decay: DecaySpec
    lce_kernel: int = 5

    def __post_init__(self) -> None:
        if self.dim < 1 or self.num_heads < 1:
            raise ConfigurationError(f"dim and num_heads must be positive, got {self.dim}, {self.num_heads}")
        if self.dim % self.num_heads:
            raise ConfigurationError(f"dim {self.dim} is not divisible by num_heads {self.num_heads}")
        if self.decay.num_heads != self.num_heads:
            raise ConfigurationError(
                f"decay schedule covers {self.decay.num_heads} heads but the layer has {self.num_heads}")
        if self.lce_kernel < 1 or self.lce_kernel % 2 == 0:
            raise ConfigurationError(f"lce_kernel must be odd and positive, got {self.lce_kernel}")

    @property
    def head_dim(self) -> int:
        return self.dim // self.num_heads


@dataclass
class MaSAParams:
    """Projection weights and the local-context kernel for one layer."""

    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    lce_kernel_weights: Tensor


def init_masa_params(config: MaSAConfig, rng: np.random.Generator,
                     requires_grad: bool = True) -> MaSAParams:
    d, k = config.dim, config.lce_kernel
    def w(*shape):
        return Tensor(trunc_normal(rng, shape), requires_grad=requires_grad)
    return MaSAParams(wq=w(d, d), wk=w(d, d), wv=w(d, d), wo=w(d, d),
                      lce_kernel_weights=w(d, k, k))


def _check_qkv(q: Tensor, k: Tensor, v: Tensor) -> tuple[int, int]:
    if q.ndim != 2 or q.shape != k.shape or q.shape != v.shape:
        raise DimensionError(f"q, k, v must share one [L, d] shape, got {q.shape}, {k.shape}, {v.shape}")
    return q.shape


def retention_recurrent(q: Tensor, k: Tensor, v: Tensor, gamma: float) -> Tensor:
    """Causal decayed attention via the running state S_n = gamma*S_{n-1} + k_n^T v_n."""
    length, d = _check_qkv(q, k, v)
    if not (0.0 < float(gamma) < 1.0):
        raise ConfigurationError(f"decay rate must lie strictly inside (0, 1), got {gamma}")
    state = Tensor(np.zeros((d, d)))
    rows = []
    for n in range(length):
        kn = slice_axis(k, 0, n, n + 1)
        vn = slice_axis(v, 0, n, n + 1)
        qn = slice_axis(q, 0, n, n + 1)
        state = mul_scalar(state, gamma) + matmul(transpose(kn), vn)
        rows.append(matmul(qn, state))
    return concat(rows, axis=0)


def retention_parallel(q: Tensor, k: Tensor, v: Tensor, gamma: float) -> Tensor:
    """Same map as ``retention_recurrent`` computed as (Q K^T (.) D_causal) V."""
    length, _ = _check_qkv(q, k, v)
    d_causal = decay_causal_1d(length, gamma)
    return matmul(hadamard(matmul(q, transpose(k)), d_causal), v)


def bi_retention(q: Tensor, k: Tensor, v: Tensor, gamma: float) -> Tensor:
    """Retention without the causal mask: decay by |n - m| in both directions."""
    length, _ = _check_qkv(q, k, v)
    d_bi = decay_bidirectional_1d(length, gamma)
    return matmul(hadamard(matmul(q, transpose(k)), d_bi), v)


def masa_full(q: Tensor, k: Tensor, v: Tensor, grid: GridShape,
              gamma: float | None, *, scale: bool = True) -> Tensor:
    """Softmax attention with a Manhattan decay prior over a 2D token grid.

    Softmax runs row-wise first; the decay matrix then multiplies the weights
    entrywise and the rows are deliberately not renormalized. ``gamma=None``
    skips the decay entirely (plain softmax attention). ``scale`` divides the
    logits by sqrt(d) before the softmax.
    """
    n_tokens, d = _check_qkv(q, k, v)
    if n_tokens != grid.size:
        raise DimensionError(f"{n_tokens} tokens do not fill a {grid.height}x{grid.width} grid")
    logits = matmul(q, transpose(k))
    if scale:
        logits = mul_scalar(logits, 1.0 / math.sqrt(d))
    weights = softmax_last(logits)
    if gamma is not None:
        weights = hadamard(weights, decay_manhattan_2d(grid, gamma))
    return matmul(weights, v)


def masa_decomposed(q: Tensor, k: Tensor, v: Tensor, grid: GridShape,
                    gamma: float | None, *, scale: bool = True) -> Tensor:
    """Axis-decomposed Manhattan attention: width pass per row, then height per column.

    Each axis applies softmax attention weighted by its own 1D decay matrix.
    Because the 2D decay factors exactly over the axes, the spatial prior of
    the full form is preserved; with uniform attention weights the two forms
    coincide.
    """
    n_tokens, d = _check_qkv(q, k, v)
    if n_tokens != grid.size:
        raise DimensionError(f"{n_tokens} tokens do not fill a {grid.height}x{grid.width} grid")
    h, w = grid.height, grid.width
    if gamma is not None:
        d_h, d_w = decay_axial_pair(grid, gamma)
    q3 = reshape(q, (h, w, d))
    k3 = reshape(k, (h, w, d))
    v3 = reshape(v, (h, w, d))
    inv_sqrt_d = 1.0 / math.sqrt(d)

    logits_w = matmul(q3, transpose(k3, (0, 2, 1)))          # [H, W, W]
    if scale:
        logits_w = mul_scalar(logits_w, inv_sqrt_d)
    attn_w = softmax_last(logits_w)
    if gamma is not None:
        attn_w = hadamard(attn_w, d_w)
    mixed = matmul(attn_w, v3)                               # [H, W, d]

    qc = transpose(q3, (1, 0, 2))
    kc = transpose(k3, (1, 0, 2))
    logits_h = matmul(qc, transpose(kc, (0, 2, 1)))          # [W, H, H]
    if scale:
        logits_h = mul_scalar(logits_h, inv_sqrt_d)
    attn_h = softmax_last(logits_h)
    if gamma is not None:
        attn_h = hadamard(attn_h, d_h)
    out = matmul(attn_h, transpose(mixed, (1, 0, 2)))        # [W, H, d]
    return reshape(transpose(out, (1, 0, 2)), (n_tokens, d))


def lce(v: Tensor, grid: GridShape, kernel: Tensor) -> Tensor:
    """Local context enhancement: depthwise conv of V laid out on the token grid."""
    if v.ndim != 2:
        raise DimensionError(f"lce expects [N, d] tokens, got {v.shape}")
    n_tokens, d = v.shape
    if n_tokens != grid.size:
        raise DimensionError(f"{n_tokens} tokens do not fill a {grid.height}x{grid.width} grid")
    image = reshape(transpose(v), (d, grid.height, grid.width))
    out = depthwise_conv2d(image, kernel)
    return transpose(reshape(out, (d, n_tokens)))


def masa_layer_forward(x: Tensor, params: MaSAParams, config: MaSAConfig,
                       grid: GridShape) -> Tensor:
    """Multi-head Manhattan attention layer.

    Projects Q, K, V, runs each head with its own decay rate (full or
    decomposed per the config), concatenates the heads, adds the depthwise
    local-context term of the undivided V, and applies the output projection
    to the sum.
    """
    dim = config.dim
    if x.ndim != 2 or x.shape[1] != dim:
        raise DimensionError(f"expected [N, {dim}] tokens, got {x.shape}")
    for name, wt in (("wq", params.wq), ("wk", params.wk), ("wv", params.wv), ("wo", params.wo)):
        if wt.shape != (dim, dim):
            raise ConfigurationError(f"{name} must have shape ({dim}, {dim}), got {wt.shape}")
    k_sz = config.lce_kernel
    if params.lce_kernel_weights.shape != (dim, k_sz, k_sz):
        raise ConfigurationError(
            f"lce kernel must have shape ({dim}, {k_sz}, {k_sz}), got {params.lce_kernel_weights.shape}")

    q = matmul(x, params.wq)
    k = matmul(x, params.wk)
    v = matmul(x, params.wv)

    head = masa_decomposed if config.decomposed else masa_full
    hd = config.head_dim
    heads = []
    for i in range(config.num_heads):
        qi = slice_axis(q, 1, i * hd, (i + 1) * hd)
        ki = slice_axis(k, 1, i * hd, (i + 1) * hd)
        vi = slice_axis(v, 1, i * hd, (i + 1) * hd)
        heads.append(head(qi, ki, vi, grid, config.decay.gammas[i]))
    attn = concat(heads, axis=1)
    return matmul(attn + lce(v, grid, params.lce_kernel_weights), params.wo)


def attention_score_apply_macs(mode: str, height: int, width: int, head_dim: int) -> int:
    """MACs spent on attention scores plus their application to values.

    Decay and softmax contribute only elementwise work and are excluded, so
    ``vanilla`` matches ``full`` exactly.
    """
    n = height * width
    if mode in ("full", "vanilla"):
        return 2 * n * n * head_dim
    if mode == "decomposed":
        return 2 * n * (height + width) * head_dim
    raise ConfigurationError(f"unknown attention mode {mode!r}; use full, decomposed, or vanilla")
