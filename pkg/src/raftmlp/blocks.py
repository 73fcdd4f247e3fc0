"""Architectural building blocks.

The shared skeleton is a residual mixing MLP,

    out = x + fc2(gelu(fc1(move(norm(x)))))

where ``norm`` is a layer norm over the trailing (channel) axis of the
input and ``move`` is an optional rearrangement that brings a different
axis into trailing position for the MLP; its inverse restores the layout
before the residual add. Specializing ``move`` yields every mixing
flavor in this package:

* channel mixing: no move, MLP over the channels themselves;
* vertical / horizontal mixing: MLP over the patch rows / columns;
* raft token mixing: r channel subgroups are folded into the spatial
  axis, so the vertical MLP acts on vectors of length r*h' and the
  horizontal one on length r*w'.

Multi-scale patch embedding unfolds the image at kernel sizes 2^m * p
(stride p, zero padding chosen so every scale yields the same token
grid), concatenates the per-scale channels in ascending m, and applies
one shared linear projection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ops import LayerNormParams, LinearParams, gelu, layer_norm, linear
from .rearrange import RearrangeSpec, apply_rearrange, bind_shape, invert, parse_rearrange
from .tensor import PatchGrid, ShapeError, Tensor, add, concat, unfold


@dataclass(frozen=True)
class MixingParams:
    """One residual MLP: layer norm, expansion linear, contraction linear."""

    ln: LayerNormParams
    fc1: LinearParams
    fc2: LinearParams

    def __post_init__(self):
        if self.fc1.d_out != self.fc2.d_in:
            raise ShapeError(
                f"MixingParams: fc1 output {self.fc1.d_out} != fc2 input {self.fc2.d_in}"
            )
        if self.fc1.d_in != self.fc2.d_out:
            raise ShapeError(
                f"MixingParams: fc1 input {self.fc1.d_in} != fc2 output {self.fc2.d_out}"
            )

    @property
    def dim(self) -> int:
        return self.fc1.d_in


class ChannelMixingParams(MixingParams):
    """Mixing MLP whose axis is the channel axis itself (dim == channels)."""


@dataclass(frozen=True)
class RaftTokenMixingParams:
    """Directional token mixing with r channel subgroups folded in.

    ``vertical`` acts on vectors of length raft_size * h_prime,
    ``horizontal`` on raft_size * w_prime; each direction carries its own
    layer norm over the original channels.
    """

    vertical: MixingParams
    horizontal: MixingParams
    raft_size: int

    def __post_init__(self):
        if self.raft_size < 1:
            raise ValueError("RaftTokenMixingParams: raft_size must be >= 1")


@dataclass(frozen=True)
class EmbedParams:
    """Multi-scale patch embedding: unfold scales plus shared projection."""

    stride: int
    scales: tuple
    projection: LinearParams

    def __post_init__(self):
        if self.stride < 1:
            raise ValueError("EmbedParams: stride must be >= 1")
        if not self.scales or list(self.scales) != sorted(set(self.scales)):
            raise ValueError("EmbedParams: scales must be distinct, ascending, non-empty")
        if any(m < 0 for m in self.scales):
            raise ValueError("EmbedParams: scales must be >= 0")
        if any(m >= 1 for m in self.scales) and self.stride % 2:
            raise ValueError(
                "EmbedParams: stride must be even when a scale m >= 1 is present "
                "(padding (2^m - 1) * stride / 2 must be an integer)"
            )

    @property
    def c_out(self) -> int:
        return self.projection.d_out

    def patch_dims(self, c_in: int) -> int:
        """Pre-projection channel count for a c_in-channel input."""
        return c_in * sum((2**m * self.stride) ** 2 for m in self.scales)


def mixing_mlp(x: Tensor, p: MixingParams, to_mlp: RearrangeSpec | None = None) -> Tensor:
    """Residual MLP with the norm on the input layout and the MLP on ``to_mlp``'s."""
    y = layer_norm(x, p.ln)
    if to_mlp is not None:
        to_mlp = bind_shape(to_mlp, y.shape)
        y = apply_rearrange(to_mlp, y)
    if y.shape[-1] != p.fc1.d_in:
        raise ShapeError(
            f"mixing_mlp: MLP axis {y.shape[-1]} != fc1 input {p.fc1.d_in}"
        )
    y = linear(gelu(linear(y, p.fc1)), p.fc2)
    if to_mlp is not None:
        y = apply_rearrange(invert(to_mlp), y)
    return add(x, y)


def vertical_mixing(x: Tensor, p: MixingParams) -> Tensor:
    """Mix along patch rows: the same MLP on every (column, channel) fiber.

    Input is a [h', w', c] grid; the norm runs over c per token, the MLP
    over the h' axis.
    """
    if x.rank != 3:
        raise ShapeError(f"vertical_mixing needs [h', w', c], got {x.shape}")
    return mixing_mlp(x, p, parse_rearrange("h w c -> (c w) h"))


def horizontal_mixing(x: Tensor, p: MixingParams) -> Tensor:
    """Mix along patch columns; dual of :func:`vertical_mixing`."""
    if x.rank != 3:
        raise ShapeError(f"horizontal_mixing needs [h', w', c], got {x.shape}")
    return mixing_mlp(x, p, parse_rearrange("h w c -> (c h) w"))


def raft_token_mixing(x: Tensor, p: RaftTokenMixingParams, grid: PatchGrid) -> Tensor:
    """Vertical then horizontal raft mixing on a [tokens, c] tensor.

    The channel axis factors as (r o) with r (the raft size) the slow
    factor; r channel subgroups ride along with the spatial axis through
    each directional MLP.
    """
    if x.rank != 2:
        raise ShapeError(f"raft_token_mixing needs [tokens, c], got {x.shape}")
    if x.shape[0] != grid.tokens:
        raise ShapeError(
            f"raft_token_mixing: {x.shape[0]} tokens != grid "
            f"{grid.h_prime}x{grid.w_prime} = {grid.tokens}"
        )
    r = p.raft_size
    if x.shape[1] % r:
        raise ShapeError(
            f"raft_token_mixing: channels {x.shape[1]} not divisible by raft size {r}"
        )
    bind = {"h": grid.h_prime, "w": grid.w_prime, "r": r}
    y = mixing_mlp(x, p.vertical, parse_rearrange("(h w) (r o) -> (o w) (r h)", bind))
    return mixing_mlp(y, p.horizontal, parse_rearrange("(h w) (r o) -> (o h) (r w)", bind))


def channel_mixing(x: Tensor, p: MixingParams) -> Tensor:
    """Pointwise residual MLP over the trailing channel axis."""
    return mixing_mlp(x, p, None)


def raftmlp_block(
    x: Tensor, token_p: RaftTokenMixingParams, chan_p: MixingParams, grid: PatchGrid
) -> Tensor:
    """Raft token mixing followed by channel mixing."""
    return channel_mixing(raft_token_mixing(x, token_p, grid), chan_p)


def multi_scale_patch_embed(x: Tensor, p: EmbedParams) -> Tensor:
    """Embed a [c_in, h, w] image into [(h/p)*(w/p), c_out] tokens.

    Per scale m the image is unfolded with kernel 2^m * p, stride p and
    padding (2^m * p - p) / 2, so every scale produces the same token
    grid; the per-scale channels are concatenated ascending in m and sent
    through the shared projection.
    """
    if x.rank != 3:
        raise ShapeError(f"multi_scale_patch_embed needs [c, h, w], got {x.shape}")
    c_in, h, w = x.shape
    stride = p.stride
    if h % stride or w % stride:
        raise ShapeError(
            f"multi_scale_patch_embed: image {h}x{w} not divisible by stride {stride}"
        )
    if p.projection.d_in != p.patch_dims(c_in):
        raise ShapeError(
            f"multi_scale_patch_embed: projection expects {p.projection.d_in} "
            f"channels, unfolding yields {p.patch_dims(c_in)}"
        )
    pieces = []
    for m in p.scales:
        kernel = 2**m * stride
        pieces.append(unfold(x, kernel=kernel, stride=stride, padding=(kernel - stride) // 2))
    stacked = pieces[0] if len(pieces) == 1 else concat(pieces, axis=0)
    tokens = apply_rearrange(parse_rearrange("d n -> n d"), stacked)
    return linear(tokens, p.projection)


# ---------------------------------------------------------------------------
# Parameter factories. Weights draw from a truncated normal (std 0.02,
# resampled beyond two sigmas), biases start at zero, norms at identity.
# ---------------------------------------------------------------------------


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02, dtype: str = "f32") -> Tensor:
    vals = rng.normal(0.0, std, size=shape)
    bad = np.abs(vals) > 2.0 * std
    while bad.any():
        vals[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(vals) > 2.0 * std
    return Tensor(vals, dtype=dtype)


def init_linear(
    rng: np.random.Generator | None,
    d_in: int,
    d_out: int,
    dtype: str = "f32",
) -> LinearParams:
    """Truncated-normal weight, zero bias; all-zero when rng is None."""
    if rng is None:
        weight = Tensor.zeros((d_in, d_out), dtype=dtype)
    else:
        weight = trunc_normal(rng, (d_in, d_out), dtype=dtype)
    return LinearParams(weight=weight, bias=Tensor.zeros((d_out,), dtype=dtype))


def init_layer_norm(dim: int, eps: float = 1e-6, dtype: str = "f32") -> LayerNormParams:
    return LayerNormParams(
        gamma=Tensor.ones((dim,), dtype=dtype),
        beta=Tensor.zeros((dim,), dtype=dtype),
        eps=eps,
    )


def init_mixing(
    rng: np.random.Generator | None,
    channels: int,
    dim: int,
    hidden: int,
    eps: float = 1e-6,
    dtype: str = "f32",
    cls=MixingParams,
) -> MixingParams:
    """Mixing MLP params: norm over ``channels``, MLP dim -> hidden -> dim."""
    return cls(
        ln=init_layer_norm(channels, eps=eps, dtype=dtype),
        fc1=init_linear(rng, dim, hidden, dtype=dtype),
        fc2=init_linear(rng, hidden, dim, dtype=dtype),
    )


def init_raft_token_mixing(
    rng: np.random.Generator | None,
    grid: PatchGrid,
    raft_size: int,
    e_ver: int = 2,
    e_hor: int = 2,
    eps: float = 1e-6,
    dtype: str = "f32",
) -> RaftTokenMixingParams:
    if grid.channels % raft_size:
        raise ValueError(
            f"raft size {raft_size} must divide the channel count {grid.channels}"
        )
    dim_v = raft_size * grid.h_prime
    dim_h = raft_size * grid.w_prime
    return RaftTokenMixingParams(
        vertical=init_mixing(rng, grid.channels, dim_v, e_ver * dim_v, eps=eps, dtype=dtype),
        horizontal=init_mixing(rng, grid.channels, dim_h, e_hor * dim_h, eps=eps, dtype=dtype),
        raft_size=raft_size,
    )


def init_channel_mixing(
    rng: np.random.Generator | None,
    channels: int,
    e_chan: int = 4,
    eps: float = 1e-6,
    dtype: str = "f32",
) -> ChannelMixingParams:
    return init_mixing(
        rng, channels, channels, e_chan * channels, eps=eps, dtype=dtype,
        cls=ChannelMixingParams,
    )


def init_embed(
    rng: np.random.Generator | None,
    c_in: int,
    c_out: int,
    stride: int,
    scales,
    dtype: str = "f32",
) -> EmbedParams:
    scales = tuple(sorted(scales))
    d_in = c_in * sum((2**m * stride) ** 2 for m in scales)
    return EmbedParams(
        stride=stride,
        scales=scales,
        projection=init_linear(rng, d_in, c_out, dtype=dtype),
    )
