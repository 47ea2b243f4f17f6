"""Motion windowing, the window->latent encoder and AdaIN injection.

A motion window stacks the 70-dim descriptors of frames t-i..t+i (edges
clamped). The encoder maps the flattened window to a 256-dim latent that the
generator networks consume through adaptive instance normalization.
"""

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .facemodel import MOTION_DIM, motion_descriptor

LATENT_DIM = 256
ADAIN_EPS = 1e-5


@dataclass
class MotionWindow:
    """Flattened (2i+1) x 70 motion descriptors in temporal order."""

    values: np.ndarray
    half_width: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if self.half_width < 0:
            raise ValueError("half_width must be nonnegative")
        expect = MOTION_DIM * (2 * self.half_width + 1)
        if self.values.shape[0] != expect:
            raise ValueError(
                f"window length {self.values.shape[0]} != {expect} "
                f"(70 * (2*{self.half_width}+1))")

    def tensor(self, dtype=torch.float32):
        return torch.as_tensor(self.values, dtype=dtype)


def assemble_window(sequence, t, half_width):
    """Window of descriptors around frame t; out-of-range frames clamp."""
    if len(sequence) == 0:
        raise ValueError("motion sequence is empty")
    if not 0 <= t < len(sequence):
        raise ValueError(f"frame index {t} out of range [0, {len(sequence)})")
    rows = []
    for off in range(-half_width, half_width + 1):
        k = min(max(t + off, 0), len(sequence) - 1)
        m = sequence[k]
        rows.append(motion_descriptor(m.exp, m.angle, m.trans))
    return MotionWindow(np.concatenate(rows), half_width)


def init_module(module, generator, zero_names=()):
    """Seeded He-style init; modules named in zero_names start at zero."""
    for name, m in module.named_modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            if any(name == z or name.endswith("." + z) for z in zero_names):
                nn.init.zeros_(m.weight)
            else:
                fan_in = m.weight[0].numel()
                std = (2.0 / fan_in) ** 0.5
                with torch.no_grad():
                    m.weight.copy_(torch.randn(
                        m.weight.shape, generator=generator) * std)
            if m.bias is not None:
                nn.init.zeros_(m.bias)


class MotionEncoder(nn.Module):
    """Three affine layers with tanh, window -> 256-dim latent."""

    def __init__(self, half_width=1, hidden=256, seed=0):
        super().__init__()
        self.half_width = half_width
        self.input_dim = MOTION_DIM * (2 * half_width + 1)
        self.net = nn.Sequential(
            nn.Linear(self.input_dim, hidden), nn.Tanh(),
            nn.Linear(hidden, hidden), nn.Tanh(),
            nn.Linear(hidden, LATENT_DIM),
        )
        gen = torch.Generator().manual_seed(seed)
        init_module(self, gen)

    def forward(self, window):
        if window.shape[-1] != self.input_dim:
            raise ValueError(
                f"window width {window.shape[-1]} != encoder input width "
                f"{self.input_dim}")
        return self.net(window)


def encode_motion(window, encoder):
    """Encode a MotionWindow into a latent tensor of length 256."""
    dtype = next(encoder.parameters()).dtype
    return encoder(window.tensor(dtype))


def adaptive_instance_norm(features, scale, bias, eps=ADAIN_EPS):
    """Whiten each channel over its spatial extent, then rescale and bias.

    features: (C, H, W) or (N, C, H, W); scale/bias: (C,) or (N, C).
    Uses population (ddof=0) statistics; variance is guarded by eps so
    constant channels map to the bias.
    """
    squeeze = features.dim() == 3
    if squeeze:
        features = features[None]
        scale = scale[None] if scale.dim() == 1 else scale
        bias = bias[None] if bias.dim() == 1 else bias
    if scale.shape[-1] != features.shape[1]:
        raise ValueError(
            f"head emits {scale.shape[-1]} channels, features have "
            f"{features.shape[1]}")
    mean = features.mean(dim=(2, 3), keepdim=True)
    var = features.var(dim=(2, 3), unbiased=False, keepdim=True)
    normed = (features - mean) / torch.sqrt(var + eps)
    out = normed * scale[:, :, None, None] + bias[:, :, None, None]
    return out[0] if squeeze else out


class AdaInHead(nn.Module):
    """Affine map from the latent to one (scale, bias) pair per channel."""

    def __init__(self, channels):
        super().__init__()
        self.channels = channels
        self.affine = nn.Linear(LATENT_DIM, 2 * channels)

    def forward(self, latent):
        out = self.affine(latent)
        scale, bias = out.split(self.channels, dim=-1)
        # fresh heads behave as plain instance norm (scale 1, bias 0)
        return scale + 1.0, bias


def adain(features, latent, head):
    """AdaIN with head-derived per-channel scale and bias."""
    scale, bias = head(latent)
    return adaptive_instance_norm(features, scale, bias)


class AdaInConvBlock(nn.Module):
    """conv3x3 -> AdaIN(latent) -> GELU, the decoder building block."""

    def __init__(self, in_ch, out_ch):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.head = AdaInHead(out_ch)
        self.act = nn.GELU()

    def forward(self, x, latent):
        return self.act(adain(self.conv(x), latent, self.head))
