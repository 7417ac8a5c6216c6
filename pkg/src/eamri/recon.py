"""The edge-guided unrolled reconstruction network and its ablation variants."""
from __future__ import annotations

from collections import Counter
from typing import Optional, Sequence

import numpy as np

from . import mri
from .config import VARIANTS, ReconConfig
from .edge import EpnNet, epn_forward
from .nn import Dcb, RdcnBlock
from .sme import SmeNet, estimate_sensitivities
from .tensor import Conv, ParamStore, Tensor, as_tensor, ops
from .tensor.core import ShapeError

__all__ = [
    "ConcatFusion", "Dcb", "EamBlock", "EamriModel", "RdcnBlock", "build_variant",
    "concat_fusion_forward", "eam_forward", "edge_attention", "model_forward", "rdcn_forward",
]


def _dc_2ch(x_2ch: Tensor, y, mask, S) -> Tensor:
    x = ops.complex_from_two_channel(x_2ch)
    return ops.two_channel_from_complex(mri.data_consistency(x, y, mask, S))


def rdcn_forward(x_2ch: Tensor, block: RdcnBlock, y, mask, S) -> Tensor:
    """Recursive dilated refinement with a residual skip, followed by data consistency."""
    if x_2ch.ndim != 4 or x_2ch.shape[1] != 2:
        raise ShapeError(f"RDCN expects N x 2 x H x W input, got {x_2ch.shape}")
    return _dc_2ch(block.refine(x_2ch), y, mask, S)


class EamBlock:
    """Image queries/values, edge keys and the per-head temperature of one edge attention."""

    def __init__(self, store: ParamStore, name: str, channels: int = 32, heads: int = 4,
                 rng: Optional[np.random.Generator] = None):
        if channels % heads:
            raise ValueError(f"channels={channels} not divisible by heads={heads}")
        rng = rng if rng is not None else np.random.default_rng(0)
        c = channels
        self.channels, self.heads = c, heads
        self.q_proj = Conv(store, f"{name}.q_proj", 2, c, 1, rng=rng)
        self.q_dw = Conv(store, f"{name}.q_dw", c, c, 3, groups=c, rng=rng)
        self.v_proj = Conv(store, f"{name}.v_proj", 2, c, 1, rng=rng)
        self.v_dw = Conv(store, f"{name}.v_dw", c, c, 3, groups=c, rng=rng)
        self.k_proj = Conv(store, f"{name}.k_proj", 1, c, 3, rng=rng)
        self.out_proj = Conv(store, f"{name}.out_proj", c, 2, 1, zero=True)
        self.alpha = store.add(f"{name}.alpha", np.ones(heads))


def edge_attention(x_2ch: Tensor, edge: Tensor, block: EamBlock,
                   literal_alpha: bool = False) -> tuple[Tensor, Tensor]:
    """Channel-wise attention of image queries against edge keys.

    Returns the residual-updated image (before data consistency) and the
    attention tensor of shape (N, heads, C/heads, C/heads).
    """
    edge = as_tensor(edge)
    if x_2ch.ndim != 4 or x_2ch.shape[1] != 2:
        raise ShapeError(f"EAM expects N x 2 x H x W image, got {x_2ch.shape}")
    n, _, h, w = x_2ch.shape
    if edge.shape != (n, 1, h, w):
        raise ShapeError(f"edge map {edge.shape} does not match image {x_2ch.shape}")
    heads, ch = block.heads, block.channels // block.heads
    split = (n, heads, ch, h * w)

    q = ops.reshape(block.q_dw(block.q_proj(x_2ch)), split)
    v = ops.reshape(block.v_dw(block.v_proj(x_2ch)), split)
    k = ops.reshape(block.k_proj(edge), split)

    logits = ops.matmul(k, ops.swapaxes(q, -1, -2))
    alpha = ops.reshape(block.alpha, (1, heads, 1, 1))
    if literal_alpha:
        attn = ops.softmax(logits, axis=-1)
        res = ops.div(ops.matmul(attn, v), alpha)
    else:
        attn = ops.softmax(ops.div(logits, alpha), axis=-1)
        res = ops.matmul(attn, v)
    res = ops.reshape(res, (n, block.channels, h, w))
    return ops.add(x_2ch, block.out_proj(res)), attn


def eam_forward(x_2ch: Tensor, edge: Tensor, block: EamBlock, y, mask, S,
                literal_alpha: bool = False) -> Tensor:
    fused, _ = edge_attention(x_2ch, edge, block, literal_alpha)
    return _dc_2ch(fused, y, mask, S)


class ConcatFusion:
    """Plain edge guidance: concat(image, edge) -> 1x1 conv, added back to the image."""

    def __init__(self, store: ParamStore, name: str):
        self.conv = Conv(store, f"{name}.conv", 3, 2, 1, zero=True)


def concat_fusion_forward(x_2ch: Tensor, edge: Tensor, block: ConcatFusion, y, mask, S) -> Tensor:
    fused = ops.add(x_2ch, block.conv(ops.concat_channels([x_2ch, edge])))
    return _dc_2ch(fused, y, mask, S)


class EamriModel:
    """SME, image head, N (RDCN, edge fusion) cascades and one shared EPN.

    ``variant`` selects the edge fusion: ``full`` (one EAM per cascade), ``m1``
    (no edge branch), ``m2`` (concat + 1x1 conv) or ``m3`` (one EAM shared by
    all cascades).
    """

    def __init__(self, config: ReconConfig, variant: Optional[str] = None,
                 seed: Optional[int] = None):
        variant = (variant or config.variant).lower()
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
        self.config = config
        self.variant = variant
        self.stats: Counter = Counter()
        rng = np.random.default_rng(config.seed if seed is None else seed)
        store = self.params = ParamStore()

        self.sme = SmeNet(store, "sme", config.sme_width, config.M, rng)
        self.head = RdcnBlock(store, "head", config.head_width, config.M, rng)
        self.rdcns = [RdcnBlock(store, f"cascade{t}.rdcn", config.C, config.M, rng)
                      for t in range(config.N)]
        self.epn = None
        self.fusions: list = []
        if variant != "m1":
            self.epn = EpnNet(store, "epn", config.C, config.msrb_count, rng)
        if variant == "full":
            self.fusions = [EamBlock(store, f"cascade{t}.eam", config.C, config.heads, rng)
                            for t in range(config.N)]
        elif variant == "m3":
            shared = EamBlock(store, "eam", config.C, config.heads, rng)
            self.fusions = [shared] * config.N
        elif variant == "m2":
            self.fusions = [ConcatFusion(store, f"cascade{t}.fuse") for t in range(config.N)]

    def num_parameters(self) -> int:
        return self.params.num_parameters()

    def __call__(self, y, mask):
        return model_forward(y, mask, self)


def model_forward(y, mask, model: EamriModel) -> tuple[Tensor, list[Tensor]]:
    """Reconstruct a batch from multi-coil k-space.

    ``y`` is (B, n_coils, H, W) complex and ``mask`` one SamplingMask or a
    sequence of B of them. Returns the complex image (B, H, W) and the list of
    predicted edge maps, each (B, 1, H, W).
    """
    y = as_tensor(y)
    if y.ndim != 4:
        raise ShapeError(f"model expects y of shape (B, n_coils, H, W), got {y.shape}")
    m = mri.mask_array(mask)
    S = estimate_sensitivities(y, mask, model.sme)
    x0 = mri.zero_filled(y, S)
    x = rdcn_forward(ops.two_channel_from_complex(x0), model.head, y, m, S)

    edges = []
    literal = model.config.literal_alpha
    for t, rdcn in enumerate(model.rdcns):
        if model.epn is None:
            x = rdcn_forward(x, rdcn, y, m, S)
            continue
        e = epn_forward(x, model.epn)
        edges.append(e)
        x = rdcn_forward(x, rdcn, y, m, S)
        fusion = model.fusions[t]
        if isinstance(fusion, EamBlock):
            model.stats["eam"] += 1
            x = eam_forward(x, e, fusion, y, m, S, literal)
        else:
            model.stats["concat_fusion"] += 1
            x = concat_fusion_forward(x, e, fusion, y, m, S)
    return ops.complex_from_two_channel(x), edges


def build_variant(kind: str, config: ReconConfig, seed: Optional[int] = None) -> EamriModel:
    return EamriModel(config, variant=kind, seed=seed)
