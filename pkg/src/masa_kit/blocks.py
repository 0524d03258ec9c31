"""Four-stage vision backbone built from Manhattan attention blocks.

A convolutional stem embeds the image into a token grid, four stages of
residual blocks (positional depthwise conv, pre-norm attention, pre-norm FFN)
process it with stride-2 convolutions between stages, and a pooled linear
head emits logits. The first three stages use the decomposed attention form,
the last the full form.

Parameter and multiply-accumulate accounting is analytic and mirrors the ops
exactly, so ``count_flops`` matches a runtime-instrumented forward pass MAC
for MAC. Model forward is a pure function of (parameters, input); training
mutates parameters exclusively.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .attention import MaSAConfig, MaSAParams, attention_score_apply_macs, lce, masa_layer_forward
from .decay import GridShape, gamma_schedule
from .errors import ConfigurationError, DimensionError
from .tensor import (Tensor, add, add_scalar, conv2d, gelu, hadamard, matmul, mean_axes,
                     powf, reshape, sub, transpose, trunc_normal)

STEM_STRIDES = (2, 1, 2, 1, 1)
STEM_KERNEL = 3
CPE_KERNEL = 3
LCE_KERNEL = 5
DOWNSAMPLE_KERNEL = 3
NORM_EPS = 1e-6


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class StageConfig:
    num_blocks: int
    channels: int
    heads: int
    ffn_ratio: float
    decay_lower: float
    decay_upper: float
    decomposed: bool

    def __post_init__(self) -> None:
        if self.num_blocks < 1:
            raise ConfigurationError(f"a stage needs at least one block, got {self.num_blocks}")
        if self.channels % self.heads:
            raise ConfigurationError(f"channels {self.channels} not divisible by heads {self.heads}")
        hidden = self.ffn_ratio * self.channels
        if hidden <= 0 or abs(hidden - round(hidden)) > 1e-9:
            raise ConfigurationError(
                f"ffn_ratio {self.ffn_ratio} times channels {self.channels} must be a positive integer")

    @property
    def ffn_hidden(self) -> int:
        return int(round(self.ffn_ratio * self.channels))


@dataclass(frozen=True)
class ModelConfig:
    stages: tuple[StageConfig, ...]
    num_classes: int
    input_resolution: int

    def __post_init__(self) -> None:
        if len(self.stages) != 4:
            raise ConfigurationError(f"the backbone has exactly four stages, got {len(self.stages)}")
        if self.num_classes < 1:
            raise ConfigurationError(f"num_classes must be positive, got {self.num_classes}")
        if self.input_resolution % 4:
            raise ConfigurationError(
                f"input resolution must be divisible by 4, got {self.input_resolution}")
        if self.stages[0].channels % 2:
            raise ConfigurationError("stage-1 channels must be even for the stem")

    def to_json_dict(self) -> dict:
        return {
            "stages": [
                {"blocks": s.num_blocks, "channels": s.channels, "heads": s.heads,
                 "ffn_ratio": s.ffn_ratio, "decay_a": s.decay_lower,
                 "decay_b": s.decay_upper, "decomposed": s.decomposed}
                for s in self.stages
            ],
            "num_classes": self.num_classes,
            "input_resolution": self.input_resolution,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)

    @staticmethod
    def from_json_dict(doc: dict) -> "ModelConfig":
        stages = tuple(
            StageConfig(num_blocks=int(s["blocks"]), channels=int(s["channels"]),
                        heads=int(s["heads"]), ffn_ratio=float(s["ffn_ratio"]),
                        decay_lower=float(s["decay_a"]), decay_upper=float(s["decay_b"]),
                        decomposed=bool(s["decomposed"]))
            for s in doc["stages"]
        )
        return ModelConfig(stages=stages, num_classes=int(doc["num_classes"]),
                           input_resolution=int(doc["input_resolution"]))

    @staticmethod
    def from_json(text: str) -> "ModelConfig":
        return ModelConfig.from_json_dict(json.loads(text))


# Named presets: blocks, channels, heads, ffn ratios, decay exponent ranges.
_PRESETS = {
    "rmt-t": ((2, 2, 8, 2), (64, 128, 256, 512), (4, 4, 8, 16), (3, 3, 3, 3),
              (2, 2, 2, 2), (6, 6, 8, 8)),
    "rmt-s": ((3, 4, 18, 4), (64, 128, 256, 512), (4, 4, 8, 16), (4, 4, 3, 3),
              (2, 2, 2, 2), (6, 6, 8, 8)),
    "rmt-b": ((4, 8, 25, 8), (80, 160, 320, 512), (5, 5, 10, 16), (4, 4, 3, 3),
              (2, 2, 2, 2), (7, 7, 8, 8)),
    "rmt-l": ((4, 8, 25, 8), (112, 224, 448, 640), (7, 7, 14, 20), (4, 4, 3, 3),
              (2, 2, 2, 2), (8, 8, 8, 8)),
    "tiny": ((1, 1, 1, 1), (16, 32, 64, 128), (2, 2, 4, 8), (2, 2, 2, 2),
             (2, 2, 2, 2), (6, 6, 8, 8)),
}
PRESET_NAMES = tuple(sorted(_PRESETS))


def preset_config(name: str, num_classes: int | None = None,
                  input_resolution: int | None = None) -> ModelConfig:
    """Build one of the named configurations; stages 1-3 decomposed, stage 4 full."""
    if name not in _PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; known presets: {', '.join(PRESET_NAMES)}")
    blocks, channels, heads, ratios, lowers, uppers = _PRESETS[name]
    stages = tuple(
        StageConfig(num_blocks=blocks[i], channels=channels[i], heads=heads[i],
                    ffn_ratio=float(ratios[i]), decay_lower=float(lowers[i]),
                    decay_upper=float(uppers[i]), decomposed=(i < 3))
        for i in range(4)
    )
    if num_classes is None:
        num_classes = 2 if name == "tiny" else 1000
    if input_resolution is None:
        input_resolution = 32 if name == "tiny" else 224
    return ModelConfig(stages=stages, num_classes=num_classes, input_resolution=input_resolution)


# ---------------------------------------------------------------------------
# Parameter containers


@dataclass
class ConvParams:
    weight: Tensor
    bias: Tensor | None = None


@dataclass
class NormParams:
    gain: Tensor
    bias: Tensor


@dataclass
class StemParams:
    convs: list[ConvParams]
    norms: list[NormParams]


@dataclass
class BlockParams:
    cpe_kernel: Tensor
    norm1: NormParams
    masa: MaSAParams
    norm2: NormParams
    ffn_w1: Tensor
    ffn_b1: Tensor
    ffn_w2: Tensor
    ffn_b2: Tensor


@dataclass
class Model:
    config: ModelConfig
    stem: StemParams
    stages: list[list[BlockParams]]
    masa_configs: list[MaSAConfig]
    downsamples: list[ConvParams]
    head_weight: Tensor
    head_bias: Tensor

    def parameters(self) -> list[Tensor]:
        out: list[Tensor] = []
        for conv, norm in zip(self.stem.convs, self.stem.norms):
            out += [conv.weight, conv.bias, norm.gain, norm.bias]
        for stage in self.stages:
            for b in stage:
                out += [b.cpe_kernel, b.norm1.gain, b.norm1.bias,
                        b.masa.wq, b.masa.wk, b.masa.wv, b.masa.wo,
                        b.masa.lce_kernel_weights,
                        b.norm2.gain, b.norm2.bias,
                        b.ffn_w1, b.ffn_b1, b.ffn_w2, b.ffn_b2]
        for ds in self.downsamples:
            out += [ds.weight, ds.bias]
        out += [self.head_weight, self.head_bias]
        return out


# ---------------------------------------------------------------------------
# Normalization


def _normalize(x: Tensor, axes: tuple[int, ...], gain: Tensor, bias: Tensor) -> Tensor:
    mu = mean_axes(x, axes, keepdims=True)
    centered = sub(x, mu)
    var = mean_axes(hadamard(centered, centered), axes, keepdims=True)
    inv = powf(add_scalar(var, NORM_EPS), -0.5)
    return add(hadamard(hadamard(centered, inv), gain), bias)


def layer_norm(x: Tensor, norm: NormParams) -> Tensor:
    """Normalize [N, C] tokens over the channel axis with per-channel affine."""
    return _normalize(x, (-1,), norm.gain, norm.bias)


def channel_norm(image: Tensor, norm: NormParams) -> Tensor:
    """Normalize a [C, H, W] map per channel over its spatial extent."""
    gain = reshape(norm.gain, (norm.gain.shape[0], 1, 1))
    bias = reshape(norm.bias, (norm.bias.shape[0], 1, 1))
    return _normalize(image, (1, 2), gain, bias)


# ---------------------------------------------------------------------------
# Blocks


def conv_stem(image: Tensor, stem: StemParams) -> tuple[Tensor, GridShape]:
    """Embed a [3, R, R] image into an (R/4)x(R/4) token grid.

    Five 3x3 convolutions with strides (2, 1, 2, 1, 1); each is followed by
    per-channel normalization, and all but the last also by GELU.
    """
    if image.ndim != 3 or image.shape[0] != 3:
        raise DimensionError(f"stem expects a [3, R, R] image, got {image.shape}")
    if image.shape[1] != image.shape[2] or image.shape[1] % 4:
        raise ConfigurationError(f"stem needs a square resolution divisible by 4, got {image.shape}")
    h = image
    last = len(stem.convs) - 1
    for i, (conv, norm) in enumerate(zip(stem.convs, stem.norms)):
        h = conv2d(h, conv.weight, conv.bias, stride=STEM_STRIDES[i], padding=1)
        h = channel_norm(h, norm)
        if i != last:
            h = gelu(h)
    channels, grid_h, grid_w = h.shape
    tokens = transpose(reshape(h, (channels, grid_h * grid_w)))
    return tokens, GridShape(grid_h, grid_w)


def cpe(x: Tensor, grid: GridShape, kernel: Tensor) -> Tensor:
    """Conditional positional encoding: residual depthwise conv over the grid."""
    return add(x, lce(x, grid, kernel))


def ffn(x: Tensor, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Tensor:
    """Two-layer MLP with GELU between the projections."""
    hidden = gelu(add(matmul(x, w1), b1))
    return add(matmul(hidden, w2), b2)


def rmt_block(x: Tensor, grid: GridShape, params: BlockParams, config: MaSAConfig) -> Tensor:
    """Positional conv, then pre-norm attention and pre-norm FFN residuals."""
    x1 = cpe(x, grid, params.cpe_kernel)
    x2 = add(x1, masa_layer_forward(layer_norm(x1, params.norm1), params.masa, config, grid))
    return add(x2, ffn(layer_norm(x2, params.norm2),
                       params.ffn_w1, params.ffn_b1, params.ffn_w2, params.ffn_b2))


def downsample(x: Tensor, grid: GridShape, conv: ConvParams) -> tuple[Tensor, GridShape]:
    """Halve each grid side with a stride-2 3x3 convolution, remapping channels."""
    if grid.height % 2 or grid.width % 2:
        raise ConfigurationError(f"downsample needs even grid sides, got {grid.height}x{grid.width}")
    n, channels = x.shape
    if n != grid.size:
        raise DimensionError(f"{n} tokens do not fill a {grid.height}x{grid.width} grid")
    image = reshape(transpose(x), (channels, grid.height, grid.width))
    out = conv2d(image, conv.weight, conv.bias, stride=2, padding=1)
    c_out, h2, w2 = out.shape
    return transpose(reshape(out, (c_out, h2 * w2))), GridShape(h2, w2)


# ---------------------------------------------------------------------------
# Assembly


def _stem_channel_plan(c1: int) -> list[tuple[int, int]]:
    half = c1 // 2
    return [(3, half), (half, half), (half, c1), (c1, c1), (c1, c1)]


def build_backbone(config: ModelConfig, seed: int) -> Model:
    """Deterministically initialize a model for ``config`` from ``seed``.

    Projections and conv kernels draw truncated-normal values (sigma 0.02),
    biases start at zero, and norm gains at one.
    """
    rng = np.random.default_rng(seed)

    def w(*shape):
        return Tensor(trunc_normal(rng, shape), requires_grad=True)

    def zeros(*shape):
        return Tensor(np.zeros(shape), requires_grad=True)

    def ones(*shape):
        return Tensor(np.ones(shape), requires_grad=True)

    stem_convs, stem_norms = [], []
    for cin, cout in _stem_channel_plan(config.stages[0].channels):
        stem_convs.append(ConvParams(weight=w(cout, cin, STEM_KERNEL, STEM_KERNEL), bias=zeros(cout)))
        stem_norms.append(NormParams(gain=ones(cout), bias=zeros(cout)))

    stages: list[list[BlockParams]] = []
    masa_configs: list[MaSAConfig] = []
    for sc in config.stages:
        masa_configs.append(MaSAConfig(
            dim=sc.channels, num_heads=sc.heads, decomposed=sc.decomposed,
            decay=gamma_schedule(sc.decay_lower, sc.decay_upper, sc.heads),
            lce_kernel=LCE_KERNEL))
        blocks = []
        for _ in range(sc.num_blocks):
            c, hidden = sc.channels, sc.ffn_hidden
            blocks.append(BlockParams(
                cpe_kernel=w(c, CPE_KERNEL, CPE_KERNEL),
                norm1=NormParams(gain=ones(c), bias=zeros(c)),
                masa=MaSAParams(wq=w(c, c), wk=w(c, c), wv=w(c, c), wo=w(c, c),
                                lce_kernel_weights=w(c, LCE_KERNEL, LCE_KERNEL)),
                norm2=NormParams(gain=ones(c), bias=zeros(c)),
                ffn_w1=w(c, hidden), ffn_b1=zeros(hidden),
                ffn_w2=w(hidden, c), ffn_b2=zeros(c)))
        stages.append(blocks)

    downsamples = [
        ConvParams(weight=w(config.stages[i + 1].channels, config.stages[i].channels,
                            DOWNSAMPLE_KERNEL, DOWNSAMPLE_KERNEL),
                   bias=zeros(config.stages[i + 1].channels))
        for i in range(3)
    ]
    c_last = config.stages[3].channels
    return Model(config=config, stem=StemParams(stem_convs, stem_norms), stages=stages,
                 masa_configs=masa_configs, downsamples=downsamples,
                 head_weight=w(c_last, config.num_classes), head_bias=zeros(config.num_classes))


def forward_classify(model: Model, image: Tensor) -> Tensor:
    """Run the backbone on one image and return [num_classes] logits."""
    r = model.config.input_resolution
    if image.shape != (3, r, r):
        raise ConfigurationError(f"model expects a [3, {r}, {r}] image, got {image.shape}")
    tokens, grid = conv_stem(image, model.stem)
    for s in range(4):
        for params in model.stages[s]:
            tokens = rmt_block(tokens, grid, params, model.masa_configs[s])
        if s < 3:
            tokens, grid = downsample(tokens, grid, model.downsamples[s])
    pooled = mean_axes(tokens, (0,))
    logits = add(matmul(reshape(pooled, (1, pooled.shape[0])), model.head_weight),
                 model.head_bias)
    return reshape(logits, (model.config.num_classes,))


# ---------------------------------------------------------------------------
# Accounting


def count_params(model: Model) -> int:
    """Exact number of scalar parameters held by the model."""
    return sum(p.size for p in model.parameters())


def count_params_analytic(config: ModelConfig) -> int:
    """Parameter count computed from the configuration alone.

    Matches ``count_params(build_backbone(config, seed))`` exactly.
    """
    total = 0
    for cin, cout in _stem_channel_plan(config.stages[0].channels):
        total += cout * cin * STEM_KERNEL ** 2 + cout    # conv weight + bias
        total += 2 * cout                                # norm gain + bias
    for sc in config.stages:
        c, hidden = sc.channels, sc.ffn_hidden
        per_block = (c * CPE_KERNEL ** 2            # cpe kernel
                     + 2 * c                        # norm1
                     + 4 * c * c                    # q, k, v, o projections
                     + c * LCE_KERNEL ** 2          # lce kernel
                     + 2 * c                        # norm2
                     + c * hidden + hidden          # ffn in
                     + hidden * c + c)              # ffn out
        total += sc.num_blocks * per_block
    for i in range(3):
        total += (config.stages[i + 1].channels * config.stages[i].channels
                  * DOWNSAMPLE_KERNEL ** 2 + config.stages[i + 1].channels)
    total += config.stages[3].channels * config.num_classes + config.num_classes
    return total


def _conv_out(side: int, kernel: int, stride: int, padding: int) -> int:
    return (side + 2 * padding - kernel) // stride + 1


def stage_grids(config: ModelConfig, resolution: int) -> list[GridShape]:
    """Token grid entering each stage: side R/4, then halved between stages."""
    if resolution % 4:
        raise ConfigurationError(f"resolution must be divisible by 4, got {resolution}")
    side = resolution
    for stride in STEM_STRIDES:
        side = _conv_out(side, STEM_KERNEL, stride, 1)
    grids = [GridShape(side, side)]
    for _ in range(3):
        if side % 2:
            raise ConfigurationError(f"grid side {side} is odd; resolution {resolution} cannot downsample")
        side = _conv_out(side, DOWNSAMPLE_KERNEL, 2, 1)
        grids.append(GridShape(side, side))
    return grids


def _stage_block_macs(sc: StageConfig, grid: GridShape) -> int:
    n, c = grid.size, sc.channels
    mode = "decomposed" if sc.decomposed else "full"
    attn = sc.heads * attention_score_apply_macs(mode, grid.height, grid.width, c // sc.heads)
    return (n * c * CPE_KERNEL ** 2             # cpe depthwise conv
            + 4 * n * c * c                     # q, k, v, o projections
            + attn
            + n * c * LCE_KERNEL ** 2           # lce depthwise conv
            + 2 * n * c * sc.ffn_hidden)        # ffn matmuls


def count_flops(config: ModelConfig, resolution: int) -> int:
    """Analytic multiply-accumulate count for one forward pass (one MAC = one FLOP).

    Counts matmul and convolution MACs only; normalization, softmax, decay
    weighting, and activations are elementwise and excluded. Matches the
    runtime-instrumented count of ``forward_classify`` exactly.
    """
    total = 0
    side = resolution
    for (cin, cout), stride in zip(_stem_channel_plan(config.stages[0].channels), STEM_STRIDES):
        side = _conv_out(side, STEM_KERNEL, stride, 1)
        total += cout * side * side * cin * STEM_KERNEL ** 2
    grids = stage_grids(config, resolution)
    for i, sc in enumerate(config.stages):
        total += sc.num_blocks * _stage_block_macs(sc, grids[i])
        if i < 3:
            g = grids[i + 1]
            total += config.stages[i + 1].channels * g.size * sc.channels * DOWNSAMPLE_KERNEL ** 2
    total += config.stages[3].channels * config.num_classes
    return total


def flops_by_stage(config: ModelConfig, resolution: int) -> list[dict]:
    """Per-section MAC and parameter breakdown used by the stats report."""
    rows = []
    stem_macs = 0
    side = resolution
    stem_params = 0
    for (cin, cout), stride in zip(_stem_channel_plan(config.stages[0].channels), STEM_STRIDES):
        side = _conv_out(side, STEM_KERNEL, stride, 1)
        stem_macs += cout * side * side * cin * STEM_KERNEL ** 2
        stem_params += cout * cin * STEM_KERNEL ** 2 + 3 * cout
    rows.append({"section": "stem", "grid": f"{side}x{side}", "params": stem_params, "macs": stem_macs})
    grids = stage_grids(config, resolution)
    for i, sc in enumerate(config.stages):
        c, hidden = sc.channels, sc.ffn_hidden
        per_block_params = (c * CPE_KERNEL ** 2 + 2 * c + 4 * c * c + c * LCE_KERNEL ** 2
                            + 2 * c + c * hidden + hidden + hidden * c + c)
        params = sc.num_blocks * per_block_params
        macs = sc.num_blocks * _stage_block_macs(sc, grids[i])
        if i < 3:
            g = grids[i + 1]
            params += (config.stages[i + 1].channels * sc.channels * DOWNSAMPLE_KERNEL ** 2
                       + config.stages[i + 1].channels)
            macs += config.stages[i + 1].channels * g.size * sc.channels * DOWNSAMPLE_KERNEL ** 2
        rows.append({"section": f"stage{i + 1}", "grid": f"{grids[i].height}x{grids[i].width}",
                     "params": params, "macs": macs})
    head_params = config.stages[3].channels * config.num_classes + config.num_classes
    rows.append({"section": "head", "grid": "1x1",
                 "params": head_params, "macs": config.stages[3].channels * config.num_classes})
    return rows
