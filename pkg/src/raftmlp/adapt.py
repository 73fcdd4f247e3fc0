"""Arbitrary-resolution inference via bicubic token-grid resampling.

Token-mixing parameters are sized for the grid the model was built for.
To run at another resolution, each token-mixing block is wrapped in a
bicubic sandwich: resample the runtime token grid to the build grid,
mix, resample back. Channel mixing and patch embedding are grid-size
agnostic and run untouched. Because a same-size bicubic resize is the
bitwise identity, the adapted forward pass reproduces the plain one
exactly at the native resolution.

The image itself is first snapped to the nearest multiple of the total
level stride (round half up, minimum one stride) so every level's
unfolding tiles evenly.
"""

from __future__ import annotations

from .blocks import channel_mixing, multi_scale_patch_embed
from .models import Model, _classify, token_mix
from .ops import bicubic_resize
from .rearrange import rearrange
from .tensor import PatchGrid, Tensor


def pre_embed_resize(image: Tensor, total_stride: int) -> Tensor:
    """Resize [c, h, w] so h and w are multiples of ``total_stride``.

    Each extent goes to its nearest stride multiple (ties round up), but
    never below one full stride. Inputs already on the grid are returned
    unchanged.
    """
    if image.rank != 3:
        raise ValueError(f"pre_embed_resize needs a [c, h, w] tensor, got {image.shape}")
    if total_stride < 1:
        raise ValueError("pre_embed_resize: total_stride must be >= 1")
    _, h, w = image.shape

    def snap(extent: int) -> int:
        return max(total_stride, (2 * extent + total_stride) // (2 * total_stride) * total_stride)

    new_h, new_w = snap(h), snap(w)
    if (new_h, new_w) == (h, w):
        return image
    return bicubic_resize(image, new_h, new_w)


def adapted_token_mixing(
    x: Tensor, params, run_grid: PatchGrid, train_grid: PatchGrid
) -> Tensor:
    """Token mixing inside a resample-to-train-grid sandwich.

    [tokens, c] in, [tokens, c] out on the runtime grid. When the grids
    coincide the sandwich collapses to the plain block, bit for bit.
    """
    planes = rearrange(x, "(h w) c -> c h w", h=run_grid.h_prime, w=run_grid.w_prime)
    planes = bicubic_resize(planes, train_grid.h_prime, train_grid.w_prime)
    tokens = rearrange(planes, "c h w -> (h w) c")
    tokens = token_mix(tokens, params, train_grid)
    planes = rearrange(tokens, "(h w) c -> c h w", h=train_grid.h_prime, w=train_grid.w_prime)
    planes = bicubic_resize(planes, run_grid.h_prime, run_grid.w_prime)
    return rearrange(planes, "c h w -> (h w) c")


def adapted_raft_mixing(
    x: Tensor, params, run_grid: PatchGrid, train_grid: PatchGrid
) -> Tensor:
    """Raft token mixing on a runtime grid (alias of the generic sandwich)."""
    return adapted_token_mixing(x, params, run_grid, train_grid)


def forward_adapted(model: Model, image: Tensor) -> Tensor:
    """Logits for a [3, h, w] image of any size >= 1 in each extent."""
    image = pre_embed_resize(image, model.config.total_stride)
    run_grids = model.config.grids((image.shape[1], image.shape[2]))
    train_grids = model.config.grids()

    x = image
    tokens = None
    last = len(model.levels) - 1
    for index, (params, run, train) in enumerate(zip(model.levels, run_grids, train_grids)):
        tokens = multi_scale_patch_embed(x, params.embed)
        for block in params.blocks:
            tokens = adapted_token_mixing(tokens, block.token, run, train)
            tokens = channel_mixing(tokens, block.channel)
        if index < last:
            x = rearrange(tokens, "(h w) c -> c h w", h=run.h_prime, w=run.w_prime)
    return _classify(model, tokens)
