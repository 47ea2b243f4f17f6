"""Pluggable feature extractors for perceptual losses and metrics.

The default is a seeded, fixed-weight 4-stage convolutional pyramid, so the
desk-scale build has no pretrained downloads and stays deterministic.
Paper-scale runs can register a pretrained backbone under the same protocol:
callable(image batch) -> list of feature maps.
"""

import torch
from torch import nn

from .motion import init_module


class IdentityExtractor(nn.Module):
    """Single layer equal to the image itself; handy in analytic tests."""

    def forward(self, images):
        return [images]


class ConvPyramidExtractor(nn.Module):
    """Four stride-2 conv stages with frozen seeded weights."""

    def __init__(self, channels=(8, 16, 32, 64), seed=7):
        super().__init__()
        layers = []
        prev = 3
        for ch in channels:
            layers.append(nn.Conv2d(prev, ch, 3, stride=2, padding=1))
            prev = ch
        self.stages = nn.ModuleList(layers)
        self.act = nn.GELU()
        gen = torch.Generator().manual_seed(seed)
        init_module(self, gen)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, images):
        feats = []
        x = images
        for stage in self.stages:
            x = self.act(stage(x))
            feats.append(x)
        return feats


def make_extractor(kind="pyramid", seed=7):
    if kind == "pyramid":
        return ConvPyramidExtractor(seed=seed)
    if kind == "identity":
        return IdentityExtractor()
    raise ValueError(f"unknown extractor kind: {kind!r}")


def perceptual_l1(target, other, extractor):
    """Sum over layers of the mean absolute feature difference.

    Each layer term is normalized by its element count, so the loss is
    comparable across resolutions.
    """
    if target.shape != other.shape:
        raise ValueError(
            f"image shapes differ: {tuple(target.shape)} vs "
            f"{tuple(other.shape)}")
    squeeze = target.dim() == 3
    if squeeze:
        target = target[None]
        other = other[None]
    total = None
    for fa, fb in zip(extractor(target), extractor(other)):
        term = (fa - fb).abs().mean()
        total = term if total is None else total + term
    return total
