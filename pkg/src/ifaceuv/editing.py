"""Final editing network and the weighted training objective."""

from dataclasses import dataclass

import torch
from torch import nn

from .perceptual import perceptual_l1
from .uvtex import ConditionedUNet


class FinalEditor(nn.Module):
    """Fuses source, warped background and composite into the output frame.

    Mirrors the UV refiner's encoder-decoder with a 9-channel input head;
    tanh keeps the output inside [-1, 1].
    """

    def __init__(self, channels=16, seed=0):
        super().__init__()
        self.net = ConditionedUNet(9, channels, seed=seed)

    def forward(self, source, background, combined, latent):
        squeeze = source.dim() == 3
        if squeeze:
            source, background = source[None], background[None]
            combined = combined[None]
            latent = latent[None] if latent.dim() == 1 else latent
        if not source.shape == background.shape == combined.shape:
            raise ValueError(
                "source, background and combined must share one resolution")
        out = self.net(torch.cat([source, background, combined], dim=1),
                       latent)
        return out[0] if squeeze else out


def edit_final(source, background, combined, latent, editor):
    return editor(source, background, combined, latent)


def edit_loss(target, final, extractor):
    """Perceptual distance between the target frame and the edited output."""
    return perceptual_l1(target, final, extractor)


@dataclass
class LossWeights:
    warp: float = 2.5
    uvref: float = 4.0
    cons: float = 1.0
    edit: float = 4.0

    def __post_init__(self):
        for name in ("warp", "uvref", "cons", "edit"):
            if getattr(self, name) < 0:
                raise ValueError(f"loss weight {name} must be >= 0")


def total_loss(l_warp, l_uvref, l_cons, l_edit, weights=None):
    """Weighted sum of the four training losses."""
    w = weights or LossWeights()
    return (w.warp * l_warp + w.uvref * l_uvref
            + w.cons * l_cons + w.edit * l_edit)
