"""Independent oracles shared by the test modules.

Everything here deliberately re-derives results through a different route
than the package: per-pixel loops, linear-system barycentrics, explicit
DFT/DCT sums, scipy's Schur-based matrix square root. Keep it that way.
"""

import numpy as np
import torch


def pixel_center(i, n):
    return (2.0 * i + 1.0) / n - 1.0


def brute_force_raster(verts, tris, height, width, cull_backfaces=True):
    """Per-pixel point-in-triangle + z-buffer oracle.

    Barycentrics come from solving the 2x2 linear system (not edge
    functions). Inclusive boundaries; nearest depth wins, earlier triangle
    on ties.
    """
    verts = np.asarray(verts, dtype=np.float64)
    tris = np.asarray(tris, dtype=np.int64)
    tri_id = np.full((height, width), -1, dtype=np.int64)
    bary = np.zeros((height, width, 3))
    zbuf = np.full((height, width), -np.inf)
    for r in range(height):
        for c in range(width):
            p = np.array([pixel_center(c, width), pixel_center(r, height)])
            for t in range(tris.shape[0]):
                a, b, d = verts[tris[t, 0]], verts[tris[t, 1]], \
                    verts[tris[t, 2]]
                m = np.array([[b[0] - a[0], d[0] - a[0]],
                              [b[1] - a[1], d[1] - a[1]]])
                det = np.linalg.det(m)
                if det == 0.0:
                    continue
                if cull_backfaces and det < 0.0:
                    continue
                w12 = np.linalg.solve(m, p - a[:2])
                w = np.array([1.0 - w12.sum(), w12[0], w12[1]])
                if (w < -1e-12).any():
                    continue
                z = w @ verts[tris[t], 2]
                if z > zbuf[r, c]:
                    zbuf[r, c] = z
                    tri_id[r, c] = t
                    bary[r, c] = w
    return tri_id, bary, zbuf


def brute_force_bilinear(img, x, y):
    """Scalar-loop bilinear sampler; pixel centers at (2i+1)/N - 1,
    border clamped."""
    img = np.asarray(img, dtype=np.float64)
    c, h, w = img.shape
    out = np.zeros((c, len(x)))
    for n, (xi, yi) in enumerate(zip(x, y)):
        gx = min(max((xi + 1.0) * 0.5 * w - 0.5, 0.0), w - 1.0)
        gy = min(max((yi + 1.0) * 0.5 * h - 0.5, 0.0), h - 1.0)
        x0, y0 = int(np.floor(gx)), int(np.floor(gy))
        x0, y0 = min(x0, w - 2) if w > 1 else 0, \
            min(y0, h - 2) if h > 1 else 0
        fx, fy = gx - x0, gy - y0
        for ch in range(c):
            v = (img[ch, y0, x0] * (1 - fx) * (1 - fy)
                 + img[ch, y0, min(x0 + 1, w - 1)] * fx * (1 - fy)
                 + img[ch, min(y0 + 1, h - 1), x0] * (1 - fx) * fy
                 + img[ch, min(y0 + 1, h - 1), min(x0 + 1, w - 1)]
                 * fx * fy)
            out[ch, n] = v
    return out


def brute_force_upsample_align_corners(grid, factor):
    """Independent align-corners bilinear resize of an (h, w, C) array."""
    grid = np.asarray(grid, dtype=np.float64)
    h, w, ch = grid.shape
    oh, ow = h * factor, w * factor
    out = np.zeros((oh, ow, ch))
    for r in range(oh):
        for c in range(ow):
            sy = r * (h - 1) / (oh - 1) if oh > 1 else 0.0
            sx = c * (w - 1) / (ow - 1) if ow > 1 else 0.0
            y0, x0 = min(int(np.floor(sy)), h - 2), \
                min(int(np.floor(sx)), w - 2)
            fy, fx = sy - y0, sx - x0
            out[r, c] = (grid[y0, x0] * (1 - fy) * (1 - fx)
                         + grid[y0, x0 + 1] * (1 - fy) * fx
                         + grid[y0 + 1, x0] * fy * (1 - fx)
                         + grid[y0 + 1, x0 + 1] * fy * fx)
    return out


def directional_grad_check(make_loss, tensors, step=1e-5, rel_tol=1e-3,
                           seed=0, n_dirs=2):
    """Central finite differences along random directions vs autograd.

    make_loss() must rebuild the scalar loss from the current tensor
    values. Tensors must be float64 leaves with requires_grad=True.
    Returns the worst relative error.
    """
    gen = torch.Generator().manual_seed(seed)
    loss = make_loss()
    grads = torch.autograd.grad(loss, tensors, allow_unused=False)
    worst = 0.0
    for tensor, grad in zip(tensors, grads):
        for _ in range(n_dirs):
            direction = torch.randn(tensor.shape, generator=gen,
                                    dtype=tensor.dtype)
            direction /= direction.norm()
            analytic = float((grad * direction).sum())
            with torch.no_grad():
                tensor += step * direction
            up = float(make_loss().detach())
            with torch.no_grad():
                tensor -= 2 * step * direction
            down = float(make_loss().detach())
            with torch.no_grad():
                tensor += step * direction
            fd = (up - down) / (2 * step)
            denom = max(abs(fd), abs(analytic), 1e-12)
            worst = max(worst, abs(fd - analytic) / denom)
    return worst


def dft_mfcc_frame(samples, sample_rate, n_mels=26, n_coeffs=13,
                   log_floor=1e-10):
    """One MFCC frame via explicit DFT, filterbank and DCT-II sums."""
    n = len(samples)
    taper = np.array([0.54 - 0.46 * np.cos(2 * np.pi * k / (n - 1))
                      for k in range(n)])
    x = np.asarray(samples, dtype=np.float64) * taper
    n_bins = n // 2 + 1
    power = np.zeros(n_bins)
    for k in range(n_bins):
        re = sum(x[t] * np.cos(-2 * np.pi * k * t / n) for t in range(n))
        im = sum(x[t] * np.sin(-2 * np.pi * k * t / n) for t in range(n))
        power[k] = re * re + im * im

    def mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def imel(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    pts = imel(np.linspace(0.0, mel(sample_rate / 2.0), n_mels + 2))
    energies = np.zeros(n_mels)
    for m in range(n_mels):
        for k in range(n_bins):
            f = k * sample_rate / n
            if pts[m] <= f <= pts[m + 1]:
                wgt = (f - pts[m]) / (pts[m + 1] - pts[m])
            elif pts[m + 1] < f <= pts[m + 2]:
                wgt = (pts[m + 2] - f) / (pts[m + 2] - pts[m + 1])
            else:
                wgt = 0.0
            energies[m] += wgt * power[k]
    logs = np.log(np.maximum(energies, log_floor))
    coeffs = np.zeros(n_coeffs)
    for k in range(n_coeffs):
        s = np.sqrt(1.0 / n_mels) if k == 0 else np.sqrt(2.0 / n_mels)
        coeffs[k] = s * sum(
            logs[m] * np.cos(np.pi * k * (2 * m + 1) / (2 * n_mels))
            for m in range(n_mels))
    return coeffs


def fid_oracle(a, b):
    """Direct-formula FID with scipy's Schur-based matrix square root."""
    from scipy.linalg import sqrtm
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    ca = np.cov(a, rowvar=False)
    cb = np.cov(b, rowvar=False)
    ca = np.atleast_2d(ca)
    cb = np.atleast_2d(cb)
    cross = sqrtm(ca @ cb)
    if np.iscomplexobj(cross):
        cross = cross.real
    diff = mu_a - mu_b
    return float(diff @ diff + np.trace(ca) + np.trace(cb)
                 - 2.0 * np.trace(cross))


def synthetic_audio_motion_pairs(n_pairs=8, seconds=0.8, sample_rate=8000,
                                 fps=25.0, seed=0, motion_amp=0.03):
    """Sine-mixture audio with smooth, small-delta motion targets.

    Motion amplitudes are small so the continuity floor at a perfect fit
    stays well under 1e-3.
    """
    from ifaceuv.audio import (MfccConfig, Waveform, extract_mfcc,
                               interpolate_to_fps)
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(n_pairs):
        t = np.arange(int(seconds * sample_rate)) / sample_rate
        wave = np.zeros_like(t)
        for _ in range(3):
            wave += rng.uniform(0.1, 0.3) * np.sin(
                2 * np.pi * rng.uniform(100, 1200) * t + rng.uniform(0, 7))
        waveform = Waveform(wave, sample_rate)
        feats = extract_mfcc(waveform, MfccConfig())
        aligned = interpolate_to_fps(feats, waveform, fps=fps)
        frames = aligned.shape[0]
        motion = np.zeros((frames, 70))
        steps = np.arange(frames)
        for d in range(70):
            amp = motion_amp * rng.uniform(0.2, 1.0)
            freq = rng.uniform(0.5, 1.0)
            motion[:, d] = amp * np.sin(
                2 * np.pi * freq * steps / max(frames, 1)
                + rng.uniform(0, 7))
        pairs.append((aligned.astype(np.float32),
                      motion.astype(np.float32)))
    return pairs
