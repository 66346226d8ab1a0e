import numpy as np
import numpy.testing as npt
import pytest
import torch

from conftest import identity_conditioning
from oracles import check_gradient, enforce_warp_oracle

from stereospoof import dataio
from stereospoof.binauralizer import (Binauralizer, BinauralizerConfig, ConditionalConvNet,
                                      WarpNet, apply_warp, binauralize_utterance,
                                      enforce_warp, geometric_warpfield, pretrain,
                                      pretrain_loss, pretrain_step)
from stereospoof.errors import ValidationError


def _track(src_xyz, length, sr=48000):
    frames = np.zeros((dataio.CONDITIONING_DIM, length))
    frames[0:3] = np.asarray(src_xyz, dtype=float).reshape(3, -1)
    frames[3] = 1.0
    frames[10] = 1.0
    return dataio.ConditioningTrack(frames=frames, sample_rate=sr)


class TestGeometricWarpfield:
    def test_coincident_source_is_identity(self):
        rho = geometric_warpfield(_track([0.0, 0.0, 0.0], 200), 48000, ear_offset_m=0.0)
        npt.assert_allclose(rho, np.tile(np.arange(200), (2, 1)))

    def test_static_distance_analytic_delay(self):
        # d/c * sr = 3.43 / 343 * 48000 = 480 samples
        rho = geometric_warpfield(_track([3.43, 0.0, 0.0], 2000), 48000, ear_offset_m=0.0)
        t = np.arange(2000)
        npt.assert_allclose((t - rho)[:, 600:], 480.0, atol=1e-9)
        # clamped to zero near the start
        assert rho[0, 0] == 0.0

    def test_receding_source_delay_nondecreasing(self):
        length = 1000
        dist = 1.0 + np.linspace(0, 2.0, length)
        src = np.zeros((3, length))
        src[0] = dist
        rho = geometric_warpfield(_track(src, length), 16000, ear_offset_m=0.0)
        delay = np.arange(length) - rho
        assert (np.diff(delay) >= -1e-9).all()

    def test_ear_offset_splits_channels(self):
        # off-axis source: the +y ear is nearer than the -y ear
        rho = geometric_warpfield(_track([1.0, 0.8, 0.0], 500), 48000, ear_offset_m=0.09)
        assert (rho[0, 200:] > rho[1, 200:]).all()

    def test_nonfinite_positions_rejected(self):
        frames = np.zeros((dataio.CONDITIONING_DIM, 10))
        track = dataio.ConditioningTrack(frames=frames, sample_rate=16000)
        track.frames[0, 3] = np.inf  # bypass constructor validation on purpose
        with pytest.raises(ValidationError):
            geometric_warpfield(track, 16000)


class TestWarpEnforcement:
    def test_matches_recurrence_oracle_hand_case(self):
        w = [5.0, 0.0, 1.5, 1.0, 9.0]
        got = enforce_warp(torch.tensor(w).view(1, 1, -1))[0, 0].tolist()
        assert got == enforce_warp_oracle(w)

    def test_monotone_and_causal_on_random_fields(self, rng):
        raw = rng.normal(0, 50, size=(100, 2, 64)).cumsum(axis=-1)
        p = enforce_warp(torch.from_numpy(raw))
        t = torch.arange(64, dtype=p.dtype)
        assert (p[..., 1:] >= p[..., :-1]).all()
        assert (p <= t).all()

    def test_decreasing_field_equals_monotone_envelope(self):
        w = torch.tensor([0.0, 2.0, 1.0, 3.0, 2.5]).view(1, 1, -1)
        p = enforce_warp(w)
        npt.assert_allclose(p[0, 0].numpy(), enforce_warp_oracle(w[0, 0].tolist()))


class TestApplyWarp:
    def test_identity(self):
        x = torch.randn(1, 1, 64)
        ident = torch.arange(64, dtype=torch.float32).expand(1, 2, 64)
        y = apply_warp(x, ident)
        assert torch.equal(y[:, 0:1], x) and torch.equal(y[:, 1:2], x)

    def test_constant_integer_delay_repeats_first_sample(self):
        x = torch.randn(1, 1, 32)
        k = 5
        w = (torch.arange(32, dtype=torch.float32) - k).expand(1, 2, 32)
        y = apply_warp(x, w)
        expected = torch.cat([x[0, 0, :1].repeat(k), x[0, 0, :-k]])
        npt.assert_allclose(y[0, 0].numpy(), expected.numpy(), rtol=0, atol=0)

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            apply_warp(torch.zeros(1, 1, 10), torch.zeros(1, 2, 11))

    def test_gradient_wrt_warpfield_matches_fd(self, rng):
        # interior warpfield: strictly increasing, causal, fractional parts
        # away from interpolation nodes; probes skip the clamped first samples
        torch.manual_seed(3)
        T = 40
        x = torch.randn(1, 1, T, dtype=torch.float64)
        base = 0.4 * torch.arange(T, dtype=torch.float64) + 0.37
        base[0] = 0.0
        warp = torch.nn.Parameter(base.clone().expand(1, 2, T).contiguous())

        def f():
            return apply_warp(x, warp).square().sum()

        interior = np.concatenate([np.arange(2, T), np.arange(T + 2, 2 * T)])
        check_gradient(f, warp, n_probes=5, rng=rng, eps=1e-6, tol=1e-4,
                       index_pool=interior)

    def test_gradient_wrt_signal_matches_fd(self, rng):
        torch.manual_seed(4)
        T = 30
        x = torch.nn.Parameter(torch.randn(1, 1, T, dtype=torch.float64))
        warp = (0.5 * torch.arange(T, dtype=torch.float64) + 0.25).expand(1, 2, T)

        def f():
            return apply_warp(x, warp).square().sum()

        check_gradient(f, x, n_probes=5, rng=rng, eps=1e-6, tol=1e-4)


class TestWarpNet:
    def test_zero_initialized_output(self):
        net = WarpNet(BinauralizerConfig(warpnet_channels=8))
        cond = torch.randn(2, dataio.CONDITIONING_DIM, 100)
        assert torch.equal(net(cond), torch.zeros(2, 2, 100))

    def test_output_finite_after_random_init(self):
        net = WarpNet(BinauralizerConfig(warpnet_channels=8))
        torch.nn.init.normal_(net.out.weight)
        out = net(torch.randn(1, dataio.CONDITIONING_DIM, 257) * 10)
        assert torch.isfinite(out).all() and out.shape == (1, 2, 257)

    def test_perturbation_confined_to_receptive_field(self):
        torch.manual_seed(0)
        net = WarpNet(BinauralizerConfig(warpnet_channels=8))
        torch.nn.init.normal_(net.out.weight)
        c0 = torch.zeros(1, dataio.CONDITIONING_DIM, 301)
        c1 = c0.clone()
        c1[0, 2, 150] = 1.0
        delta = (net(c1) - net(c0)).abs().sum(dim=1)[0]
        support = torch.nonzero(delta > 1e-9).flatten()
        half = (net.receptive_field - 1) // 2
        assert support.numel() > 0
        assert support.min() >= 150 - half and support.max() <= 150 + half


class TestConditionalConvNet:
    def test_zero_input_zero_biases_gives_zero_output(self):
        cfg = BinauralizerConfig(convnet_channels=8)
        net = ConditionalConvNet(cfg)
        for name, p in net.named_parameters():
            if name.endswith("bias"):
                torch.nn.init.zeros_(p)
        out = net(torch.zeros(1, 2, 64), torch.zeros(1, dataio.CONDITIONING_DIM, 64))
        assert torch.equal(out, torch.zeros(1, 2, 64))

    @pytest.mark.parametrize("length", [1, 9600, 64600])
    def test_output_length_preserved(self, length):
        net = ConditionalConvNet(BinauralizerConfig(convnet_channels=4))
        out = net(torch.zeros(1, 2, length), torch.zeros(1, dataio.CONDITIONING_DIM, length))
        assert out.shape == (1, 2, length)

    def test_receptive_field_from_impulse(self):
        torch.manual_seed(1)
        cfg = BinauralizerConfig(convnet_channels=8)
        net = ConditionalConvNet(cfg)
        torch.nn.init.normal_(net.output_proj.weight)
        x0 = torch.zeros(1, 2, 220)
        x1 = x0.clone()
        x1[0, 0, 100] = 1.0
        cond = torch.zeros(1, dataio.CONDITIONING_DIM, 220)
        delta = (net(x1, cond) - net(x0, cond)).abs().sum(dim=1)[0]
        support = torch.nonzero(delta > 1e-9).flatten()
        assert support.min() == 100
        assert support.max() == 100 + cfg.receptive_field - 1

    def test_length_mismatch_rejected(self):
        net = ConditionalConvNet(BinauralizerConfig(convnet_channels=4))
        with pytest.raises(ValidationError):
            net(torch.zeros(1, 2, 32), torch.zeros(1, dataio.CONDITIONING_DIM, 31))


class TestBinauralizer:
    def test_identity_configuration_end_to_end(self):
        cfg = BinauralizerConfig(warpnet_channels=8, convnet_channels=8,
                                 ear_offset_m=0.0, segment_length=2000)
        model = Binauralizer(cfg)
        w = dataio.Waveform(np.random.default_rng(0).uniform(-0.5, 0.5, 2000)
                            .astype(np.float32)[None, :], 16000)
        stereo = binauralize_utterance(model, w, [identity_conditioning(3000)], seed=5)
        assert np.abs(stereo.samples - w.samples).max() <= 1e-6
        assert np.abs(stereo.samples[1] - w.samples[0]).max() <= 1e-6

    def test_length_preserved_and_deterministic(self, tiny_converter, fixture_corpus):
        _, waves, pool = fixture_corpus
        w = next(iter(waves.values()))
        a = binauralize_utterance(tiny_converter, w, pool, seed=11)
        b = binauralize_utterance(tiny_converter, w, pool, seed=11)
        assert a.channels == 2 and a.length == w.length
        npt.assert_array_equal(a.samples, b.samples)

    def test_multi_segment_length(self, tiny_converter, fixture_corpus):
        _, _, pool = fixture_corpus
        w = dataio.Waveform(np.zeros((1, 12345), dtype=np.float32), 16000)
        stereo = binauralize_utterance(tiny_converter, w, pool, seed=2)
        assert stereo.length == 12345

    def test_freeze_hash_stable_under_detector_style_updates(self, tiny_converter):
        model = tiny_converter
        model.freeze()
        h0 = model.param_hash()
        other = torch.nn.Linear(4, 2)
        opt = torch.optim.Adam(list(other.parameters()), lr=0.1)
        for _ in range(3):
            loss = other(torch.randn(5, 4)).sum()
            opt.zero_grad()
            loss.backward()
            opt.step()
        assert model.param_hash() == h0
        assert all(not p.requires_grad for p in model.parameters())


class TestPretraining:
    def _items(self, n=4, length=3000):
        return dataio.synth_pretraining_pairs(7, n, sr=16000, length=length)

    def test_exact_target_gives_zero_loss(self):
        pred = torch.randn(2, 2, 50)
        assert pretrain_loss(pred, pred.clone()).item() == 0.0

    def test_loss_decreases_over_50_steps(self):
        torch.manual_seed(0)
        items = self._items()
        model = Binauralizer(BinauralizerConfig(warpnet_channels=8, convnet_channels=8))
        opt = torch.optim.Adam(model.parameters(), lr=1e-3)
        batch = (
            torch.from_numpy(np.stack([it.mono.samples for it in items])).float()[:, 0:1][:, 0],
            torch.from_numpy(np.stack([it.conditioning.frames for it in items])).float(),
            torch.from_numpy(np.stack([it.stereo.samples for it in items])).float(),
        )
        batch = (batch[0].unsqueeze(1), batch[1], batch[2])
        losses = [pretrain_step(model, batch, opt, sample_rate=16000) for _ in range(50)]
        assert losses[-1] < losses[0]

    def test_gradient_matches_finite_differences(self, rng):
        # Near-field source (< 1 sample of delay) keeps the warp strictly
        # increasing and away from the causality clamp, where the running-max
        # enforcement has well-defined derivatives.
        torch.manual_seed(0)
        cfg = BinauralizerConfig(warpnet_channels=4, convnet_channels=4, ear_offset_m=0.0)
        model = Binauralizer(cfg).double()
        # give the zero-initialized output layers signal so their grads are informative
        torch.nn.init.normal_(model.convnet.output_proj.weight, std=0.1)
        torch.nn.init.normal_(model.warpnet.out.weight, std=0.01)
        length = 400
        gen = np.random.default_rng(5)
        mono = torch.from_numpy(gen.uniform(-0.5, 0.5, (2, 1, length))).double()
        frames = np.zeros((2, dataio.CONDITIONING_DIM, length))
        frames[:, 0] = 0.008  # constant 8 mm source distance
        frames[:, 3] = 1.0
        frames[:, 10] = 1.0
        cond = torch.from_numpy(frames).double()
        target = torch.from_numpy(gen.uniform(-0.5, 0.5, (2, 2, length))).double()

        def f():
            return pretrain_loss(model(mono, cond, sample_rate=16000), target)

        probes = [model.convnet.output_proj.weight,
                  model.convnet.layers[0].conv.weight,
                  model.warpnet.hidden[0].weight]
        for param in probes:
            model.zero_grad()
            check_gradient(f, param, n_probes=5, rng=rng, eps=1e-7, tol=1e-4)

    def test_nonfinite_loss_aborts_with_diagnostics(self):
        model = Binauralizer(BinauralizerConfig(warpnet_channels=4, convnet_channels=4))
        opt = torch.optim.Adam(model.parameters())
        mono = torch.full((1, 1, 64), torch.nan)
        cond = torch.zeros(1, dataio.CONDITIONING_DIM, 64)
        cond[:, 3] = 1.0
        cond[:, 10] = 1.0
        target = torch.zeros(1, 2, 64)
        with pytest.raises(RuntimeError, match="non-finite"):
            pretrain_step(model, (mono, cond, target), opt, sample_rate=16000)

    def test_pretrain_loop_runs_and_improves(self):
        torch.manual_seed(0)
        items = self._items()
        model = Binauralizer(BinauralizerConfig(warpnet_channels=8, convnet_channels=8))
        hist = pretrain(model, items, epochs=8, learning_rate=1e-3,
                        batch_size=4, chunk_length=3000)
        assert len(hist) == 8 and hist[-1] < hist[0]

    def test_phase_loss_toggle_runs(self):
        torch.manual_seed(0)
        items = self._items(n=2, length=2000)
        model = Binauralizer(BinauralizerConfig(warpnet_channels=4, convnet_channels=4))
        hist = pretrain(model, items, epochs=1, learning_rate=1e-4,
                        batch_size=2, chunk_length=2000, phase_loss=True)
        assert np.isfinite(hist).all()
