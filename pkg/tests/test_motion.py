import numpy as np
import pytest
import torch

from ifaceuv.facemodel import MotionParams
from ifaceuv.motion import (AdaInHead, MotionEncoder, MotionWindow, adain,
                            adaptive_instance_norm, assemble_window,
                            encode_motion)
from util import directional_grad_check


def sequence(n, seed=0):
    rng = np.random.default_rng(seed)
    return [MotionParams(rng.normal(size=64), rng.normal(size=3),
                         rng.normal(size=3)) for _ in range(n)]


class TestAssembleWindow:
    def test_zero_half_width_is_single_descriptor(self):
        seq = sequence(5)
        win = assemble_window(seq, 2, 0)
        expect = np.concatenate([seq[2].exp, seq[2].angle, seq[2].trans])
        assert np.array_equal(win.values, expect)

    def test_interior_ordering_and_length(self):
        seq = sequence(10)
        win = assemble_window(seq, 5, 1)
        assert win.values.shape == (210,)
        for off, idx in zip(range(3), (4, 5, 6)):
            got = win.values[off * 70:(off + 1) * 70]
            expect = np.concatenate([seq[idx].exp, seq[idx].angle,
                                     seq[idx].trans])
            assert np.array_equal(got, expect)

    def test_edge_clamps_to_boundary(self):
        seq = sequence(4)
        win = assemble_window(seq, 0, 1)
        first = win.values[:70]
        second = win.values[70:140]
        assert np.array_equal(first, second)  # frames 0, 0, 1
        third = win.values[140:]
        expect = np.concatenate([seq[1].exp, seq[1].angle, seq[1].trans])
        assert np.array_equal(third, expect)

    def test_errors(self):
        with pytest.raises(ValueError, match="empty"):
            assemble_window([], 0, 1)
        with pytest.raises(ValueError, match="range"):
            assemble_window(sequence(3), 3, 1)
        with pytest.raises(ValueError):
            MotionWindow(np.zeros(100), 1)


class TestMotionEncoder:
    def test_deterministic(self):
        enc = MotionEncoder(half_width=1, seed=4)
        win = assemble_window(sequence(5, seed=1), 2, 1)
        a = encode_motion(win, enc)
        b = encode_motion(win, enc)
        assert torch.equal(a, b)
        assert a.shape == (256,)

    def test_zero_weights_zero_latent(self):
        enc = MotionEncoder(half_width=1, seed=0)
        with torch.no_grad():
            for p in enc.parameters():
                p.zero_()
        win = assemble_window(sequence(5, seed=2), 2, 1)
        assert torch.equal(encode_motion(win, enc), torch.zeros(256))

    def test_width_mismatch_raises(self):
        enc = MotionEncoder(half_width=1, seed=0)
        with pytest.raises(ValueError, match="width"):
            enc(torch.zeros(70))

    def test_gradient_matches_finite_differences(self):
        enc = MotionEncoder(half_width=1, seed=6).double()
        win = torch.randn(210, dtype=torch.float64,
                          generator=torch.Generator().manual_seed(1))
        win.requires_grad_(True)
        err = directional_grad_check(lambda: enc(win).sum(), [win],
                                     step=1e-3, seed=2)
        assert err <= 1e-4

    def test_gradient_wrt_weights(self):
        enc = MotionEncoder(half_width=1, seed=7).double()
        win = torch.randn(210, dtype=torch.float64,
                          generator=torch.Generator().manual_seed(3))
        params = list(enc.parameters())
        err = directional_grad_check(lambda: (enc(win) ** 2).sum(), params,
                                     step=1e-4, seed=4)
        assert err <= 1e-4


class TestAdaIn:
    def test_unit_scale_zero_bias_whitens(self):
        gen = torch.Generator().manual_seed(0)
        feats = torch.randn(4, 16, 16, generator=gen, dtype=torch.float64)
        out = adaptive_instance_norm(feats, torch.ones(4,
                                                       dtype=torch.float64),
                                     torch.zeros(4, dtype=torch.float64))
        mean = out.mean(dim=(1, 2))
        std = out.std(dim=(1, 2), unbiased=False)
        assert mean.abs().max() < 1e-5
        assert (std - 1).abs().max() < 1e-5

    def test_constant_channel_maps_to_bias(self):
        feats = torch.full((2, 8, 8), 3.5)
        scale = torch.tensor([2.0, -1.0])
        bias = torch.tensor([0.25, -0.75])
        out = adaptive_instance_norm(feats, scale, bias)
        assert torch.allclose(out[0], torch.full((8, 8), 0.25), atol=1e-6)
        assert torch.allclose(out[1], torch.full((8, 8), -0.75), atol=1e-6)

    def test_statistics_match_head_outputs(self):
        # independent recomputation of the output statistics (ddof=0)
        gen = torch.Generator().manual_seed(5)
        for trial in range(20):
            feats = 3.0 * torch.randn(6, 24, 24, generator=gen,
                                      dtype=torch.float64)
            scale = torch.randn(6, generator=gen, dtype=torch.float64)
            bias = torch.randn(6, generator=gen, dtype=torch.float64)
            out = adaptive_instance_norm(feats, scale, bias).numpy()
            for ch in range(6):
                m = float(np.mean(out[ch]))
                s = float(np.sqrt(np.mean((out[ch] - m) ** 2)))
                assert abs(m - float(bias[ch])) < 1e-5
                assert abs(s - abs(float(scale[ch]))) < 1e-5

    def test_affine_input_invariance(self):
        gen = torch.Generator().manual_seed(6)
        feats = torch.randn(3, 12, 12, generator=gen, dtype=torch.float64)
        scale = torch.randn(3, generator=gen, dtype=torch.float64)
        bias = torch.randn(3, generator=gen, dtype=torch.float64)
        out1 = adaptive_instance_norm(feats, scale, bias)
        out2 = adaptive_instance_norm(2.5 * feats + 0.7, scale, bias)
        assert (out1 - out2).abs().max() < 1e-5

    def test_head_channel_mismatch_raises(self):
        head = AdaInHead(8)
        feats = torch.randn(4, 8, 8)
        with pytest.raises(ValueError, match="channels"):
            adain(feats, torch.zeros(256), head)

    def test_head_wiring(self):
        head = AdaInHead(4).double()
        latent = torch.randn(256, dtype=torch.float64,
                             generator=torch.Generator().manual_seed(7))
        scale, bias = head(latent)
        feats = torch.randn(4, 10, 10, dtype=torch.float64,
                            generator=torch.Generator().manual_seed(8))
        out = adain(feats, latent, head)
        expect = adaptive_instance_norm(feats, scale, bias)
        assert torch.equal(out, expect)
