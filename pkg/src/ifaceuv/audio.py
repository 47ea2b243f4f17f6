"""Audio-driven motion: MFCC features and a recurrent parameter regressor.

A waveform becomes 13-dim MFCC rows (25 ms window / 10 ms hop / 26 mel
bands, Hamming windowed, log floor 1e-10), linearly interpolated to one row
per video frame; an LSTM regresses a 70-dim motion descriptor per row. The
regressor trains with expression/pose MSE plus inter-frame continuity
penalties on the predictions.
"""

from dataclasses import dataclass

import numpy as np
import torch
from scipy.fftpack import dct
from scipy.io import wavfile
from torch import nn

from .facemodel import MOTION_DIM


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.sample_rate <= 0:
            raise ValueError("sample rate must be positive")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")

    @property
    def duration(self):
        return self.samples.shape[0] / self.sample_rate


def pcm_to_float(data):
    """Integer PCM to [-1, 1) floats; stereo averaged down to mono."""
    data = np.asarray(data)
    scale = float(np.iinfo(data.dtype).max + 1) \
        if np.issubdtype(data.dtype, np.integer) else 1.0
    if data.ndim == 2:
        data = data.mean(axis=1)
    return data.astype(np.float64) / scale


def load_wav(path):
    """Read a PCM WAV (16-bit or float); stereo is averaged down to mono."""
    rate, data = wavfile.read(path)
    return Waveform(pcm_to_float(data), int(rate))


def write_wav(path, waveform):
    wavfile.write(path, waveform.sample_rate,
                  waveform.samples.astype(np.float32))


@dataclass
class MfccConfig:
    window_ms: float = 25.0
    hop_ms: float = 10.0
    n_coeffs: int = 13
    n_mels: int = 26
    log_floor: float = 1e-10


def mel_scale(freq_hz):
    return 2595.0 * np.log10(1.0 + np.asarray(freq_hz, dtype=np.float64)
                             / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0)
                    - 1.0)


def mel_filterbank(n_mels, n_fft, sample_rate):
    """Triangular filters on mel-spaced points from 0 Hz to Nyquist."""
    points_mel = np.linspace(0.0, mel_scale(sample_rate / 2.0), n_mels + 2)
    points_hz = mel_to_hz(points_mel)
    bin_freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    bank = np.zeros((n_mels, bin_freqs.shape[0]))
    for m in range(n_mels):
        lo, mid, hi = points_hz[m], points_hz[m + 1], points_hz[m + 2]
        rising = (bin_freqs - lo) / (mid - lo)
        falling = (hi - bin_freqs) / (hi - mid)
        bank[m] = np.clip(np.minimum(rising, falling), 0.0, None)
    return bank


def frame_count(n_samples, window, hop):
    if n_samples < window:
        raise ValueError(
            f"waveform of {n_samples} samples is shorter than one "
            f"{window}-sample window")
    return (n_samples - window) // hop + 1


def extract_mfcc(waveform, config=None):
    """MFCC rows, one per analysis frame; returns (T, n_coeffs) float64."""
    cfg = config or MfccConfig()
    sr = waveform.sample_rate
    window = int(round(sr * cfg.window_ms / 1000.0))
    hop = int(round(sr * cfg.hop_ms / 1000.0))
    n_frames = frame_count(waveform.samples.shape[0], window, hop)

    taper = np.hamming(window)
    bank = mel_filterbank(cfg.n_mels, window, sr)
    rows = np.empty((n_frames, cfg.n_coeffs))
    for t in range(n_frames):
        frame = waveform.samples[t * hop:t * hop + window] * taper
        power = np.abs(np.fft.rfft(frame)) ** 2
        energies = np.log(np.maximum(bank @ power, cfg.log_floor))
        rows[t] = dct(energies, type=2, norm="ortho")[:cfg.n_coeffs]
    return rows


def frame_times(n_frames, sample_rate, config=None):
    """Center time (s) of each MFCC frame."""
    cfg = config or MfccConfig()
    window = round(sample_rate * cfg.window_ms / 1000.0)
    hop = round(sample_rate * cfg.hop_ms / 1000.0)
    return (np.arange(n_frames) * hop + window / 2.0) / sample_rate


def interpolate_to_fps(features, waveform, fps=25.0, config=None):
    """One feature row per video frame via linear interpolation in time."""
    times = frame_times(features.shape[0], waveform.sample_rate, config)
    n_video = max(1, int(np.floor(waveform.duration * fps)))
    targets = np.arange(n_video) / fps
    out = np.empty((n_video, features.shape[1]))
    for j in range(features.shape[1]):
        out[:, j] = np.interp(targets, times, features[:, j])
    return out


class AudioMotionRegressor(nn.Module):
    """LSTM from MFCC rows to 70-dim motion descriptors, causal by design."""

    def __init__(self, n_coeffs=13, hidden=96, seed=0):
        super().__init__()
        self.lstm = nn.LSTM(n_coeffs, hidden, batch_first=True)
        self.proj = nn.Linear(hidden, MOTION_DIM)
        gen = torch.Generator().manual_seed(seed)
        for p in self.parameters():
            std = (1.0 / max(p.shape[-1], 1)) ** 0.5
            with torch.no_grad():
                p.copy_(torch.randn(p.shape, generator=gen) * std)

    def forward(self, features):
        squeeze = features.dim() == 2
        if squeeze:
            features = features[None]
        out, _ = self.lstm(features)
        out = self.proj(out)
        return out[0] if squeeze else out


def predict_motion_sequence(features, regressor):
    """(T, 13) MFCC rows -> (T, 70) motion rows as numpy."""
    if features.shape[0] == 0:
        raise ValueError("feature sequence is empty")
    dtype = next(regressor.parameters()).dtype
    with torch.no_grad():
        out = regressor(torch.as_tensor(features, dtype=dtype))
    return out.cpu().numpy().astype(np.float64)


def audio_losses(pred, gt):
    """(mse_exp, mse_pose, cont_exp, cont_pose) over aligned sequences.

    Continuity terms penalize the squared L2 norm of per-step deltas of the
    predictions (a smoothness regularizer), averaged over steps.
    """
    if pred.shape[0] != gt.shape[0]:
        raise ValueError(
            f"sequence lengths differ: {pred.shape[0]} vs {gt.shape[0]}")
    pred_t = pred if torch.is_tensor(pred) else torch.as_tensor(pred)
    gt_t = gt if torch.is_tensor(gt) else \
        torch.as_tensor(gt, dtype=pred_t.dtype)
    mse_exp = ((pred_t[:, :64] - gt_t[:, :64]) ** 2).mean()
    mse_pose = ((pred_t[:, 64:] - gt_t[:, 64:]) ** 2).mean()
    if pred_t.shape[0] > 1:
        delta = pred_t[1:] - pred_t[:-1]
        cont_exp = (delta[:, :64] ** 2).sum(dim=1).mean()
        cont_pose = (delta[:, 64:] ** 2).sum(dim=1).mean()
    else:
        cont_exp = pred_t.new_zeros(())
        cont_pose = pred_t.new_zeros(())
    return mse_exp, mse_pose, cont_exp, cont_pose


def audio_state_arrays(regressor):
    """Checkpoint entries for the regressor, under the 'audio.' prefix."""
    return {f"audio.{k}": v.detach().cpu().numpy().astype(np.float32)
            for k, v in regressor.state_dict().items()}


def load_audio_regressor(arrays):
    """Rebuild a regressor from 'audio.'-prefixed checkpoint entries.

    Returns None when the checkpoint carries no audio weights.
    """
    keys = [k for k in arrays if k.startswith("audio.")]
    if not keys:
        return None
    ih = arrays["audio.lstm.weight_ih_l0"]
    regressor = AudioMotionRegressor(n_coeffs=ih.shape[1],
                                     hidden=ih.shape[0] // 4)
    state = {}
    for name, param in regressor.state_dict().items():
        key = f"audio.{name}"
        if key not in arrays:
            raise KeyError(f"checkpoint missing array {key}")
        state[name] = torch.as_tensor(arrays[key]).reshape(param.shape)
    regressor.load_state_dict(state)
    regressor.eval()
    return regressor


def train_audio_regressor(pairs, steps=5000, lr=1e-2, seed=0,
                          target_loss=None, hidden=96):
    """Fit the regressor on (features, motion) pairs; unit loss weights.

    Returns (regressor, final summed loss). Stops early once target_loss is
    reached.
    """
    regressor = AudioMotionRegressor(hidden=hidden, seed=seed)
    feats = [torch.as_tensor(f, dtype=torch.float32) for f, _ in pairs]
    gts = [torch.as_tensor(g, dtype=torch.float32) for _, g in pairs]
    opt = torch.optim.Adam(regressor.parameters(), lr=lr)
    loss_val = float("inf")
    for _ in range(steps):
        opt.zero_grad()
        loss = feats[0].new_zeros(())
        for f, g in zip(feats, gts):
            terms = audio_losses(regressor(f), g)
            loss = loss + sum(terms)
        loss = loss / len(feats)
        loss.backward()
        opt.step()
        loss_val = float(loss)
        if target_loss is not None and loss_val <= target_loss:
            break
    return regressor, loss_val
