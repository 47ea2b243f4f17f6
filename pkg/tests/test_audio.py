import numpy as np
import pytest
import torch

from ifaceuv.audio import (AudioMotionRegressor, MfccConfig, Waveform,
                           audio_losses, audio_state_arrays, extract_mfcc,
                           frame_count, interpolate_to_fps,
                           load_audio_regressor, load_wav,
                           predict_motion_sequence, train_audio_regressor,
                           write_wav)
from util import (dft_mfcc_frame, directional_grad_check,
                  synthetic_audio_motion_pairs)


class TestMfcc:
    def test_frame_count_formula(self):
        # 1 s at 16 kHz with 25 ms window / 10 ms hop
        assert frame_count(16000, 400, 160) == 98
        wave = Waveform(np.zeros(16000), 16000)
        assert extract_mfcc(wave).shape == (98, 13)

    def test_too_short_waveform_rejected(self):
        with pytest.raises(ValueError, match="shorter"):
            extract_mfcc(Waveform(np.zeros(100), 16000))

    def test_silence_gives_identical_frames(self):
        wave = Waveform(np.zeros(8000), 16000)
        rows = extract_mfcc(wave)
        assert np.allclose(rows, rows[0], atol=1e-12)

    def test_sine_frame_matches_dft_oracle(self):
        sr = 16000
        t = np.arange(400) / sr
        samples = 0.7 * np.sin(2 * np.pi * 440.0 * t)
        wave = Waveform(samples, sr)
        got = extract_mfcc(wave)[0]
        ref = dft_mfcc_frame(samples, sr)
        assert np.abs(got - ref).max() < 1e-4

    def test_shift_covariance_by_one_hop(self):
        rng = np.random.default_rng(3)
        samples = rng.normal(size=4000)
        sr = 16000
        rows = extract_mfcc(Waveform(samples, sr))
        shifted = extract_mfcc(Waveform(samples[160:], sr))
        assert rows.shape[0] == shifted.shape[0] + 1
        assert np.abs(rows[1:] - shifted).max() < 1e-6

    def test_interpolation_one_row_per_video_frame(self):
        wave = Waveform(np.zeros(16000), 16000)
        feats = extract_mfcc(wave)
        aligned = interpolate_to_fps(feats, wave, fps=25.0)
        assert aligned.shape == (25, 13)


class TestWavIO:
    def test_round_trip_float(self, tmp_path):
        rng = np.random.default_rng(4)
        wave = Waveform(rng.uniform(-0.5, 0.5, 2000).astype(np.float32),
                        8000)
        path = tmp_path / "a.wav"
        write_wav(path, wave)
        back = load_wav(path)
        assert back.sample_rate == 8000
        assert np.abs(back.samples - wave.samples).max() < 1e-6

    def test_int16_and_stereo(self, tmp_path):
        from scipy.io import wavfile
        rng = np.random.default_rng(5)
        stereo = (rng.uniform(-0.4, 0.4, (1000, 2))
                  * 32767).astype(np.int16)
        path = tmp_path / "b.wav"
        wavfile.write(path, 16000, stereo)
        back = load_wav(path)
        expect = stereo.astype(np.float64).mean(axis=1) / 32768.0
        assert np.abs(back.samples - expect).max() < 1e-9


class TestRegressor:
    def test_causality(self):
        reg = AudioMotionRegressor(hidden=32, seed=1)
        gen = torch.Generator().manual_seed(2)
        feats = torch.randn(10, 13, generator=gen)
        base = reg(feats).detach()
        perturbed = feats.clone()
        perturbed[6] += 1.0
        out = reg(perturbed).detach()
        assert torch.equal(out[:6], base[:6])
        assert not torch.equal(out[6:], base[6:])

    def test_zero_weights_zero_sequence(self):
        reg = AudioMotionRegressor(hidden=16, seed=0)
        with torch.no_grad():
            for p in reg.parameters():
                p.zero_()
        feats = np.random.default_rng(6).normal(size=(5, 13))
        out = predict_motion_sequence(feats, reg)
        assert out.shape == (5, 70)
        assert (out == 0).all()

    def test_empty_sequence_rejected(self):
        reg = AudioMotionRegressor(hidden=16, seed=0)
        with pytest.raises(ValueError, match="empty"):
            predict_motion_sequence(np.zeros((0, 13)), reg)

    def test_gradient_matches_finite_differences(self):
        reg = AudioMotionRegressor(hidden=12, seed=3).double()
        feats = torch.randn(4, 13, dtype=torch.float64,
                            generator=torch.Generator().manual_seed(7))
        feats.requires_grad_(True)
        err = directional_grad_check(lambda: reg(feats).sum(), [feats],
                                     step=1e-5, seed=8)
        assert err <= 1e-3

    def test_state_array_round_trip(self):
        reg = AudioMotionRegressor(hidden=24, seed=9)
        arrays = audio_state_arrays(reg)
        back = load_audio_regressor(arrays)
        feats = torch.randn(6, 13,
                            generator=torch.Generator().manual_seed(10))
        assert torch.equal(reg(feats).detach(), back(feats).detach())
        assert load_audio_regressor({}) is None


class TestAudioLosses:
    def test_perfect_constant_prediction_all_zero(self):
        gt = torch.full((5, 70), 0.3)
        losses = audio_losses(gt.clone(), gt)
        assert all(float(v) == 0.0 for v in losses)

    def test_constant_pred_offset(self):
        gt = torch.zeros(4, 70)
        pred = torch.full((4, 70), 0.5)
        mse_exp, mse_pose, cont_exp, cont_pose = audio_losses(pred, gt)
        assert float(cont_exp) == 0.0 and float(cont_pose) == 0.0
        assert abs(float(mse_exp) - 0.25) < 1e-7
        assert abs(float(mse_pose) - 0.25) < 1e-7

    def test_linear_ramp_continuity_analytic(self):
        rng = np.random.default_rng(11)
        d = rng.normal(size=6) * 0.1
        steps = 7
        pose = np.arange(steps)[:, None] * d[None, :]
        pred = np.zeros((steps, 70))
        pred[:, 64:] = pose
        _, _, cont_exp, cont_pose = audio_losses(
            torch.as_tensor(pred), torch.zeros(steps, 70))
        assert float(cont_exp) == 0.0
        assert abs(float(cont_pose) - float(d @ d)) < 1e-9

    def test_single_frame_has_zero_continuity(self):
        pred = torch.ones(1, 70)
        _, _, ce, cp = audio_losses(pred, torch.zeros(1, 70))
        assert float(ce) == 0.0 and float(cp) == 0.0

    def test_length_mismatch_raises(self):
        with pytest.raises(ValueError, match="lengths"):
            audio_losses(torch.zeros(3, 70), torch.zeros(4, 70))


@pytest.mark.slow
class TestOverfit:
    def test_eight_pairs_reach_loss_floor(self):
        pairs = synthetic_audio_motion_pairs(n_pairs=8, seed=12)
        reg, final = train_audio_regressor(pairs, steps=5000, lr=5e-3,
                                           seed=13, target_loss=1e-3)
        assert final <= 1e-3
