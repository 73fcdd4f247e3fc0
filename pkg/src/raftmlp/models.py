"""Named architectures: hierarchical raft models and the Mixer-B/16 family.

A model is a chain of levels; each level embeds the incoming map into a
token grid and runs a stack of blocks (token mixing followed by channel
mixing). The classifier is global average pooling plus one linear layer.

Presets
-------
raftmlp-s / raftmlp-m / raftmlp-l
    Four levels, strides (4, 2, 2, 2), depths (2, 2, 6, 2), raft token
    mixing with raft size 2, multi-scale embedding with scales {0, 1} on
    the first three levels and {0} on the last. Channels:
    S (64, 128, 256, 512), M (96, 192, 384, 768), L (128, 192, 512, 1024).
mixer-b16
    Single level, stride-16 patches, 768 channels, 12 blocks, plain
    token mixing with a 384-wide hidden layer, channel expansion 4, and
    a final layer norm before pooling.
mixer-b16-cr1 / -cr2 / -cr4
    mixer-b16 with each plain token-mixing block swapped for raft token
    mixing (expansion 2) at raft size 1, 2, or 4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Optional, Union

import numpy as np

from .blocks import (
    ChannelMixingParams,
    EmbedParams,
    MixingParams,
    RaftTokenMixingParams,
    channel_mixing,
    init_channel_mixing,
    init_embed,
    init_layer_norm,
    init_linear,
    init_mixing,
    init_raft_token_mixing,
    mixing_mlp,
    multi_scale_patch_embed,
    raft_token_mixing,
)
from .ops import LayerNormParams, LinearParams, global_avg_pool, layer_norm, linear
from .rearrange import parse_rearrange, rearrange
from .tensor import PatchGrid, ShapeError, Tensor

_LN_EPS = 1e-6
_TOKEN_TRANSPOSE = parse_rearrange("t c -> c t")


@dataclass(frozen=True)
class LevelConfig:
    """One hierarchy level: embedding geometry plus block stack settings."""

    channels: int
    depth: int
    stride: int
    scales: tuple = (0,)
    raft_size: int = 2
    e_ver: int = 2
    e_hor: int = 2
    e_chan: int = 4
    mixing: str = "raft"  # "raft" or "plain" (transposed token MLP)
    token_hidden: Optional[int] = None  # absolute hidden width, plain mixing only

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(sorted(set(self.scales))))
        if self.channels < 1 or self.depth < 1 or self.stride < 1:
            raise ValueError("LevelConfig: channels, depth, stride must be >= 1")
        if self.mixing not in ("raft", "plain"):
            raise ValueError(f"LevelConfig: unknown mixing {self.mixing!r}")
        if self.mixing == "raft":
            if self.channels % self.raft_size:
                raise ValueError(
                    f"LevelConfig: raft size {self.raft_size} must divide "
                    f"channels {self.channels}"
                )
            if self.token_hidden is not None:
                raise ValueError("LevelConfig: token_hidden applies to plain mixing only")
        elif self.token_hidden is None or self.token_hidden < 1:
            raise ValueError("LevelConfig: plain mixing needs a positive token_hidden")


@dataclass(frozen=True)
class ModelConfig:
    """Complete architectural description of one model."""

    name: str
    levels: tuple
    num_classes: int = 1000
    resolution: tuple = (224, 224)
    final_norm: bool = False
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        object.__setattr__(self, "resolution", tuple(self.resolution))
        if not self.levels:
            raise ValueError("ModelConfig: at least one level")
        if self.num_classes < 1:
            raise ValueError("ModelConfig: num_classes must be >= 1")
        h, w = self.resolution
        for i, lvl in enumerate(self.levels, start=1):
            if h % lvl.stride or w % lvl.stride:
                raise ValueError(
                    f"ModelConfig: level {i} stride {lvl.stride} does not divide "
                    f"the incoming {h}x{w} map"
                )
            h //= lvl.stride
            w //= lvl.stride

    @property
    def total_stride(self) -> int:
        return math.prod(lvl.stride for lvl in self.levels)

    def grids(self, resolution: Optional[tuple] = None) -> tuple:
        """Per-level token grids at the given (default: configured) resolution."""
        h, w = resolution or self.resolution
        out = []
        for lvl in self.levels:
            if h % lvl.stride or w % lvl.stride:
                raise ValueError(
                    f"resolution {resolution} is not divisible by the level strides"
                )
            h //= lvl.stride
            w //= lvl.stride
            out.append(PatchGrid(h, w, lvl.channels))
        return tuple(out)


TokenParams = Union[RaftTokenMixingParams, MixingParams]


@dataclass(frozen=True)
class BlockParams:
    token: TokenParams
    channel: ChannelMixingParams


@dataclass(frozen=True)
class LevelParams:
    embed: EmbedParams
    blocks: tuple


@dataclass(frozen=True)
class Model:
    config: ModelConfig
    levels: tuple
    head: LinearParams
    final_norm: Optional[LayerNormParams]


def build_model(config: ModelConfig, init: str = "trunc_normal", dtype: str = "f32") -> Model:
    """Materialize parameters for a config.

    ``init`` is "trunc_normal" (seeded from config.seed) or "zeros"; the
    zero form is cheap and sufficient for structural work such as
    parameter counting.
    """
    if init == "trunc_normal":
        rng = np.random.default_rng(config.seed)
    elif init == "zeros":
        rng = None
    else:
        raise ValueError(f"unknown init {init!r}")

    grids = config.grids()
    levels = []
    c_in = 3
    for lvl, grid in zip(config.levels, grids):
        embed = init_embed(rng, c_in, lvl.channels, lvl.stride, lvl.scales, dtype=dtype)
        blocks = []
        for _ in range(lvl.depth):
            if lvl.mixing == "raft":
                token = init_raft_token_mixing(
                    rng, grid, lvl.raft_size, lvl.e_ver, lvl.e_hor,
                    eps=_LN_EPS, dtype=dtype,
                )
            else:
                token = init_mixing(
                    rng, lvl.channels, grid.tokens, lvl.token_hidden,
                    eps=_LN_EPS, dtype=dtype,
                )
            chan = init_channel_mixing(rng, lvl.channels, lvl.e_chan, eps=_LN_EPS, dtype=dtype)
            blocks.append(BlockParams(token=token, channel=chan))
        levels.append(LevelParams(embed=embed, blocks=tuple(blocks)))
        c_in = lvl.channels

    final = init_layer_norm(c_in, eps=_LN_EPS, dtype=dtype) if config.final_norm else None
    head = init_linear(rng, c_in, config.num_classes, dtype=dtype)
    return Model(config=config, levels=tuple(levels), head=head, final_norm=final)


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

_RAFT_CHANNELS = {
    "s": (64, 128, 256, 512),
    "m": (96, 192, 384, 768),
    "l": (128, 192, 512, 1024),
}
_RAFT_DEPTHS = (2, 2, 6, 2)
_RAFT_STRIDES = (4, 2, 2, 2)
_RAFT_SCALES = ((0, 1), (0, 1), (0, 1), (0,))


def raftmlp_config(
    variant: str,
    num_classes: int = 1000,
    resolution: tuple = (224, 224),
    seed: int = 0,
) -> ModelConfig:
    variant = variant.lower()
    if variant not in _RAFT_CHANNELS:
        raise ValueError(f"unknown variant {variant!r}; expected one of s, m, l")
    levels = tuple(
        LevelConfig(
            channels=c,
            depth=d,
            stride=p,
            scales=sc,
            raft_size=2,
            e_ver=2,
            e_hor=2,
            e_chan=4,
        )
        for c, d, p, sc in zip(_RAFT_CHANNELS[variant], _RAFT_DEPTHS, _RAFT_STRIDES, _RAFT_SCALES)
    )
    return ModelConfig(
        name=f"raftmlp-{variant}",
        levels=levels,
        num_classes=num_classes,
        resolution=resolution,
        final_norm=False,
        seed=seed,
    )


def mixer_b16_config(
    raft_size: Optional[int] = None,
    num_classes: int = 1000,
    resolution: tuple = (224, 224),
    seed: int = 0,
) -> ModelConfig:
    if raft_size is None:
        level = LevelConfig(
            channels=768, depth=12, stride=16, scales=(0,),
            mixing="plain", token_hidden=384, e_chan=4,
        )
        name = "mixer-b16"
    else:
        if raft_size not in (1, 2, 4):
            raise ValueError(f"raft_size must be 1, 2 or 4, got {raft_size}")
        level = LevelConfig(
            channels=768, depth=12, stride=16, scales=(0,),
            mixing="raft", raft_size=raft_size, e_ver=2, e_hor=2, e_chan=4,
        )
        name = f"mixer-b16-cr{raft_size}"
    return ModelConfig(
        name=name,
        levels=(level,),
        num_classes=num_classes,
        resolution=resolution,
        final_norm=True,
        seed=seed,
    )


PRESETS = {
    "raftmlp-s": lambda **kw: raftmlp_config("s", **kw),
    "raftmlp-m": lambda **kw: raftmlp_config("m", **kw),
    "raftmlp-l": lambda **kw: raftmlp_config("l", **kw),
    "mixer-b16": lambda **kw: mixer_b16_config(None, **kw),
    "mixer-b16-cr1": lambda **kw: mixer_b16_config(1, **kw),
    "mixer-b16-cr2": lambda **kw: mixer_b16_config(2, **kw),
    "mixer-b16-cr4": lambda **kw: mixer_b16_config(4, **kw),
}


def preset_config(name: str, **kwargs) -> ModelConfig:
    try:
        factory = PRESETS[name]
    except KeyError:
        known = ", ".join(sorted(PRESETS))
        raise ValueError(f"unknown preset {name!r}; known presets: {known}") from None
    return factory(**kwargs)


def build_preset(name: str, init: str = "trunc_normal", dtype: str = "f32", **kwargs) -> Model:
    return build_model(preset_config(name, **kwargs), init=init, dtype=dtype)


def build_raftmlp(
    variant: str,
    num_classes: int = 1000,
    seed: int = 0,
    init: str = "trunc_normal",
    dtype: str = "f32",
) -> Model:
    return build_model(
        raftmlp_config(variant, num_classes=num_classes, seed=seed), init=init, dtype=dtype
    )


def build_mixer_b16(
    raft_size: Optional[int] = None,
    num_classes: int = 1000,
    seed: int = 0,
    init: str = "trunc_normal",
    dtype: str = "f32",
) -> Model:
    return build_model(
        mixer_b16_config(raft_size, num_classes=num_classes, seed=seed), init=init, dtype=dtype
    )


# ---------------------------------------------------------------------------
# Forward
# ---------------------------------------------------------------------------


def token_mix(tokens: Tensor, p: TokenParams, grid: PatchGrid) -> Tensor:
    """Dispatch one token-mixing block (raft or plain transposed MLP)."""
    if isinstance(p, RaftTokenMixingParams):
        return raft_token_mixing(tokens, p, grid)
    return mixing_mlp(tokens, p, _TOKEN_TRANSPOSE)


def _run_levels(model: Model, image: Tensor):
    grids = model.config.grids((image.shape[1], image.shape[2]))
    outputs = []
    x = image
    for index, (params, grid) in enumerate(zip(model.levels, grids)):
        tokens = multi_scale_patch_embed(x, params.embed)
        for block in params.blocks:
            tokens = token_mix(tokens, block.token, grid)
            tokens = channel_mixing(tokens, block.channel)
        outputs.append((tokens, grid))
        if index + 1 < len(model.levels):
            x = rearrange(tokens, "(h w) c -> c h w", h=grid.h_prime, w=grid.w_prime)
    return outputs


def _classify(model: Model, tokens: Tensor) -> Tensor:
    if model.final_norm is not None:
        tokens = layer_norm(tokens, model.final_norm)
    return linear(global_avg_pool(tokens), model.head)


def _check_native(model: Model, image: Tensor) -> None:
    expected = (3,) + model.config.resolution
    if image.shape != expected:
        raise ShapeError(
            f"forward expects an image of shape {expected}, got {image.shape}; "
            "use raftmlp.adapt.forward_adapted for other resolutions"
        )


def forward(model: Model, image: Tensor) -> Tensor:
    """Logits for one [3, h, w] image at the configured resolution."""
    _check_native(model, image)
    tokens, _ = _run_levels(model, image)[-1]
    return _classify(model, tokens)


def level_outputs(model: Model, image: Tensor) -> list:
    """Post-block token tensors [tokens_l, c_l], one per level."""
    _check_native(model, image)
    return [tokens for tokens, _ in _run_levels(model, image)]


# ---------------------------------------------------------------------------
# Parameter naming
# ---------------------------------------------------------------------------


def _linear_items(prefix: str, p: LinearParams):
    yield f"{prefix}.weight", p.weight
    yield f"{prefix}.bias", p.bias


def _ln_items(prefix: str, p: LayerNormParams):
    yield f"{prefix}.gamma", p.gamma
    yield f"{prefix}.beta", p.beta


def _mixing_items(prefix: str, p: MixingParams):
    yield from _ln_items(f"{prefix}.ln", p.ln)
    yield from _linear_items(f"{prefix}.fc1", p.fc1)
    yield from _linear_items(f"{prefix}.fc2", p.fc2)


def _token_items(prefix: str, p: TokenParams):
    if isinstance(p, RaftTokenMixingParams):
        yield from _mixing_items(f"{prefix}.vertical", p.vertical)
        yield from _mixing_items(f"{prefix}.horizontal", p.horizontal)
    else:
        yield from _mixing_items(prefix, p)


def named_parameters(model: Model) -> dict:
    """Stable name -> tensor mapping covering every stored scalar."""
    items = {}

    def put(pairs):
        for name, tensor in pairs:
            items[name] = tensor

    for l, level in enumerate(model.levels, start=1):
        put(_linear_items(f"level{l}.embed.proj", level.embed.projection))
        for i, block in enumerate(level.blocks, start=1):
            put(_token_items(f"level{l}.block{i}.token", block.token))
            put(_mixing_items(f"level{l}.block{i}.channel", block.channel))
    if model.final_norm is not None:
        put(_ln_items("final_norm", model.final_norm))
    put(_linear_items("head", model.head))
    return items


def replace_parameters(model: Model, params: Mapping[str, Tensor]) -> Model:
    """New model with tensors substituted by name; the name sets must match."""
    current = named_parameters(model)
    missing = sorted(set(current) - set(params))
    extra = sorted(set(params) - set(current))
    if missing or extra:
        raise ValueError(
            f"parameter names do not match the model: missing {missing}, extra {extra}"
        )
    for name, tensor in params.items():
        if tensor.shape != current[name].shape:
            raise ValueError(
                f"parameter {name!r} has shape {tensor.shape}, "
                f"expected {current[name].shape}"
            )

    def lin(prefix, old):
        return LinearParams(weight=params[f"{prefix}.weight"], bias=params[f"{prefix}.bias"])

    def ln(prefix, old):
        return LayerNormParams(
            gamma=params[f"{prefix}.gamma"], beta=params[f"{prefix}.beta"], eps=old.eps
        )

    def mix(prefix, old):
        return type(old)(
            ln=ln(f"{prefix}.ln", old.ln),
            fc1=lin(f"{prefix}.fc1", old.fc1),
            fc2=lin(f"{prefix}.fc2", old.fc2),
        )

    def token(prefix, old):
        if isinstance(old, RaftTokenMixingParams):
            return RaftTokenMixingParams(
                vertical=mix(f"{prefix}.vertical", old.vertical),
                horizontal=mix(f"{prefix}.horizontal", old.horizontal),
                raft_size=old.raft_size,
            )
        return mix(prefix, old)

    levels = []
    for l, level in enumerate(model.levels, start=1):
        embed = replace(level.embed, projection=lin(f"level{l}.embed.proj", level.embed.projection))
        blocks = tuple(
            BlockParams(
                token=token(f"level{l}.block{i}.token", block.token),
                channel=mix(f"level{l}.block{i}.channel", block.channel),
            )
            for i, block in enumerate(level.blocks, start=1)
        )
        levels.append(LevelParams(embed=embed, blocks=blocks))
    final = ln("final_norm", model.final_norm) if model.final_norm is not None else None
    head = lin("head", model.head)
    return Model(config=model.config, levels=tuple(levels), head=head, final_norm=final)
