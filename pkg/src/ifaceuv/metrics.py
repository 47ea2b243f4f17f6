"""Evaluation metrics over pluggable feature and identity extractors.

Desk-scale extractors are deterministic and seeded (a random-projection
identity embedder and the fixed conv pyramid); pretrained backbones can be
swapped in at paper scale via the same call signatures.
"""

import json

import numpy as np
import torch

from .facemodel import motion_descriptor
from .perceptual import ConvPyramidExtractor


def _motion_matrix(params):
    return np.stack([motion_descriptor(p.exp, p.angle, p.trans)
                     for p in params])


def aed(pred, gt):
    """Mean absolute expression distance over frames."""
    if len(pred) != len(gt):
        raise ValueError(f"sequence lengths differ: {len(pred)} vs {len(gt)}")
    p = _motion_matrix(pred)[:, :64]
    g = _motion_matrix(gt)[:, :64]
    return float(np.abs(p - g).mean())


def apd(pred, gt):
    """Mean absolute pose (angle + translation) distance over frames."""
    if len(pred) != len(gt):
        raise ValueError(f"sequence lengths differ: {len(pred)} vs {len(gt)}")
    p = _motion_matrix(pred)[:, 64:]
    g = _motion_matrix(gt)[:, 64:]
    return float(np.abs(p - g).mean())


def csim(a, b):
    """Cosine similarity between two embeddings."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for zero vectors")
    return float(a @ b / (na * nb))


def _sqrt_psd(mat):
    vals, vecs = np.linalg.eigh(mat)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def fid(a, b):
    """Frechet distance between Gaussian fits of two embedding sets.

    Covariances use the unbiased (N-1) estimator; the cross-covariance
    square root comes from the symmetric eigendecomposition of
    S_a^{1/2} S_b S_a^{1/2}, with tiny negative eigenvalues clamped.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("embedding sets must be (N, D)")
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ValueError("need at least 2 embeddings per set for FID")
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    cov_a = np.cov(a, rowvar=False).reshape(a.shape[1], a.shape[1])
    cov_b = np.cov(b, rowvar=False).reshape(b.shape[1], b.shape[1])
    root_a = _sqrt_psd(cov_a)
    inner = root_a @ cov_b @ root_a
    inner = (inner + inner.T) / 2.0
    vals = np.clip(np.linalg.eigvalsh(inner), 0.0, None)
    tr_cross = np.sqrt(vals).sum()
    diff = mu_a - mu_b
    return float(diff @ diff + np.trace(cov_a) + np.trace(cov_b)
                 - 2.0 * tr_cross)


def perceptual_distance(a, b, extractor):
    """LPIPS-style distance: per-layer MSE of unit-normalized channels."""
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {tuple(a.shape)} vs "
                         f"{tuple(b.shape)}")
    squeeze = a.dim() == 3
    if squeeze:
        a, b = a[None], b[None]
    total = 0.0
    feats_a = extractor(a)
    feats_b = extractor(b)
    for fa, fb in zip(feats_a, feats_b):
        na = fa / fa.norm(dim=1, keepdim=True).clamp_min(1e-10)
        nb = fb / fb.norm(dim=1, keepdim=True).clamp_min(1e-10)
        total = total + ((na - nb) ** 2).mean()
    return float(total) / len(feats_a)


class RandomProjectionEmbedder:
    """Seeded linear projection of flattened images; CSIM stand-in."""

    def __init__(self, resolution=64, dim=128, seed=11):
        rng = np.random.default_rng(seed)
        n = 3 * resolution * resolution
        self.matrix = rng.standard_normal((dim, n)) / np.sqrt(n)
        self.resolution = resolution

    def __call__(self, image):
        img = image.detach().cpu().numpy() if torch.is_tensor(image) \
            else np.asarray(image)
        if img.shape[-1] != self.resolution:
            raise ValueError(
                f"embedder built for resolution {self.resolution}, got "
                f"{img.shape[-1]}")
        return self.matrix @ img.reshape(-1)


class PyramidEmbedder:
    """Spatially pooled conv-pyramid features; FID stand-in."""

    def __init__(self, seed=7):
        self.extractor = ConvPyramidExtractor(seed=seed)

    def __call__(self, images):
        if images.dim() == 3:
            images = images[None]
        with torch.no_grad():
            feats = self.extractor(images)
        pooled = [f.mean(dim=(2, 3)) for f in feats]
        return torch.cat(pooled, dim=1).cpu().numpy()


def metrics_report(mode, n_frames, fid_value=None, lpips=None,
                   aed_value=None, apd_value=None, csim_value=None):
    """Assemble the metric JSON document; cross mode omits APD."""
    if mode not in ("same", "cross"):
        raise ValueError("mode must be 'same' or 'cross'")
    report = {"mode": mode, "n_frames": int(n_frames)}
    if fid_value is not None:
        report["fid"] = float(fid_value)
    if lpips is not None:
        report["lpips"] = float(lpips)
    if aed_value is not None:
        report["aed"] = float(aed_value)
    if csim_value is not None:
        report["csim"] = float(csim_value)
    if mode == "same" and apd_value is not None:
        report["apd"] = float(apd_value)
    return report


def write_report(report, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
