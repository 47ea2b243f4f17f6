"""The reenactment model: four jointly trained networks plus geometry.

Forward pass per frame: encode the driving motion window to a latent, warp
the source image with the predicted flow, unwrap and refine the source UV
texture, render it at the target pose, composite over the warped
background, and run the final editor.
"""

from dataclasses import asdict, dataclass

import numpy as np
import torch

from .editing import FinalEditor
from .facemodel import (CameraConfig, build_mesh, project_vertices,
                        split_motion)
from .motion import MotionEncoder, MotionWindow, assemble_window
from .rendering import composite, rasterize
from .uvtex import UvRefiner, refine_uv, unwrap_uv
from .warping import FlowPredictor, upsample_flow, warp_image


@dataclass
class ModelConfig:
    resolution: int = 64
    uv_resolution: int = 64
    half_width: int = 1
    channels: int = 16
    seed: int = 0
    extractor: str = "pyramid"

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f: data[f] for f in cls.__dataclass_fields__ if f in data}
        return cls(**known)


class ReenactModel:
    """Bundles the motion encoder, flow, UV refiner and editor networks."""

    def __init__(self, basis, config=None, camera=None):
        self.config = config or ModelConfig()
        self.basis = basis
        self.camera = camera or CameraConfig()
        seed = self.config.seed
        self.encoder = MotionEncoder(self.config.half_width, seed=seed)
        self.warp = FlowPredictor(self.config.channels, seed=seed + 1)
        self.refiner = UvRefiner(self.config.channels, seed=seed + 2)
        self.editor = FinalEditor(self.config.channels, seed=seed + 3)

    def networks(self):
        return {"encoder": self.encoder, "warp": self.warp,
                "uvref": self.refiner, "edit": self.editor}

    def parameters(self):
        for net in self.networks().values():
            yield from net.parameters()

    def train(self, mode=True):
        for net in self.networks().values():
            net.train(mode)

    def eval(self):
        self.train(False)

    def state_arrays(self):
        """Flat name -> float32 array view of all trainable weights."""
        out = {}
        for prefix, net in self.networks().items():
            for name, tensor in net.state_dict().items():
                out[f"{prefix}.{name}"] = tensor.detach().cpu().numpy() \
                    .astype(np.float32)
        return out

    def load_state_arrays(self, arrays):
        for prefix, net in self.networks().items():
            state = {}
            for name, tensor in net.state_dict().items():
                key = f"{prefix}.{name}"
                if key not in arrays:
                    raise KeyError(f"checkpoint missing array {key}")
                state[name] = torch.as_tensor(arrays[key]) \
                    .reshape(tensor.shape).to(tensor.dtype)
            net.load_state_dict(state)

    def latent(self, window):
        if isinstance(window, MotionWindow):
            vec = window.tensor(next(self.encoder.parameters()).dtype)
        else:
            vec = window
        return self.encoder(vec)

    def window_for(self, sequence, t):
        return assemble_window(sequence, t, self.config.half_width)

    def source_uv(self, source, source_motion, identity):
        """Unwrap the source image at its own pose (cacheable per source)."""
        mesh = build_mesh(self.basis, identity, source_motion.exp)
        return unwrap_uv(source, mesh, source_motion, self.camera,
                         self.config.uv_resolution)

    def reenact(self, source, source_motion, identity, window,
                initial_uv=None):
        """One reenacted frame; returns all intermediates in a dict.

        The target motion is the center row of the driving window.
        """
        z = self.latent(window)
        center = window.half_width * 70
        target_motion = split_motion(window.values[center:center + 70])

        flow = self.warp(source, z)
        background = warp_image(source, upsample_flow(flow))

        if initial_uv is None:
            initial_uv = self.source_uv(source, source_motion, identity)
        refined = refine_uv(source, initial_uv, z, self.refiner)

        mesh_t = build_mesh(self.basis, identity, target_motion.exp)
        projected = project_vertices(mesh_t, target_motion, self.camera)
        raster = rasterize(mesh_t, projected, refined,
                           self.config.resolution)
        combined = composite(background, raster.image, raster.mask)
        final = self.editor(source, background, combined, z)
        return {
            "latent": z,
            "flow": flow,
            "background": background,
            "uv_initial": initial_uv,
            "uv_refined": refined,
            "rendered": raster.image,
            "mask": raster.mask,
            "combined": combined,
            "final": final,
        }
