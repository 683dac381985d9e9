"""Schedule, encoder/denoiser, training, and checkpoint tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stabledrop.errors import (CorruptPayload, DataFormatError,
                               MissingCheckpoint, NonFiniteLoss,
                               VersionMismatch)
from stabledrop.planner import generate_dataset, load_dataset
from stabledrop.score import (Checkpoint, TrainConfig, denoise, denoise_batch,
                              encode, encode_batch, init_params,
                              load_checkpoint, make_schedule, predict_x0,
                              q_sample, respace, save_checkpoint, train)

from .oracles import fd_gradient_check


class TestSchedule:
    def test_endpoints_t100(self):
        s = make_schedule(100)
        assert s.alpha_bar[0] == 1.0
        assert s.alpha_bar[1] > 0.999
        assert s.alpha_bar[100] < 0.01

    def test_t2_valid_and_monotone(self):
        s = make_schedule(2)
        assert len(s.alpha_bar) == 3
        assert s.alpha_bar[0] > s.alpha_bar[1] > s.alpha_bar[2]
        assert s.alpha_bar[2] < 0.01

    @settings(max_examples=30, deadline=None)
    @given(t=st.integers(2, 500))
    def test_strictly_decreasing(self, t):
        s = make_schedule(t)
        assert np.all(np.diff(s.alpha_bar) < 0.0)
        assert np.all(s.beta[1:] <= 0.999)
        assert np.all(s.beta[1:] > 0.0)

    def test_too_few_steps_rejected(self):
        with pytest.raises(ValueError):
            make_schedule(1)


class TestQSample:
    def test_zero_noise_near_identity_at_t1(self):
        s = make_schedule(100)
        x0 = np.arange(9.0)
        xt = q_sample(s, x0, 1, np.zeros(9))
        np.testing.assert_allclose(xt, np.sqrt(s.alpha_bar[1]) * x0)
        assert np.abs(xt - x0).max() < 0.01 * np.abs(x0).max()

    def test_terminal_step_is_mostly_noise(self):
        s = make_schedule(100)
        x0 = np.full(9, 3.0)
        eps = np.linspace(-1, 1, 9)
        xt = q_sample(s, x0, 100, eps)
        np.testing.assert_allclose(xt, eps, atol=0.2)

    def test_moments_match_schedule(self):
        s = make_schedule(100)
        t = 37
        x0 = np.array([0.5, -1.0, 2.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
        rng = np.random.default_rng(8)
        n = 100_000
        draws = np.array([q_sample(s, x0, t, rng.standard_normal(9))
                          for _ in range(n)])
        ab = s.alpha_bar[t]
        np.testing.assert_allclose(draws.mean(axis=0), np.sqrt(ab) * x0,
                                   atol=4 * np.sqrt((1 - ab) / n))
        np.testing.assert_allclose(draws.var(axis=0), 1.0 - ab,
                                   atol=4 * (1 - ab) * np.sqrt(2.0 / n))


class TestRespace:
    def test_stride_selection(self):
        s = make_schedule(100)
        inf = respace(s, 50)
        assert inf.steps[0] == 2 and inf.steps[-1] == 100
        assert len(inf.steps) == 50

    def test_non_divisor_rejected(self):
        s = make_schedule(100)
        with pytest.raises(ValueError):
            respace(s, 33)
        with pytest.raises(ValueError):
            respace(s, 200)

    def test_final_step_returns_prediction_exactly(self):
        s = make_schedule(100)
        for t_infer in (1, 10, 100):
            inf = respace(s, t_infer)
            assert inf.coef_x0[1] == pytest.approx(1.0)
            assert inf.coef_xt[1] == pytest.approx(0.0)
            assert inf.sigma[1] == pytest.approx(0.0)

    def test_posterior_mean_consistency(self):
        # noise-free state maps to the noise-free previous state
        s = make_schedule(100)
        for t_infer in (10, 25, 100):
            inf = respace(s, t_infer)
            for i in range(1, t_infer + 1):
                cur = inf.steps[i - 1]
                prev = inf.steps[i - 2] if i >= 2 else 0
                got = inf.coef_x0[i] + inf.coef_xt[i] * np.sqrt(s.alpha_bar[cur])
                assert got == pytest.approx(np.sqrt(s.alpha_bar[prev]), abs=1e-12)


@pytest.fixture(scope="module")
def params():
    return init_params(3)


class TestModel:
    def test_encoder_permutation_invariant(self, params):
        # invariant in exact arithmetic; BLAS rounds edge rows by position,
        # so f32 latents agree to last-bit noise, not bitwise
        rng = np.random.default_rng(0)
        x = rng.standard_normal((40, 5)).astype(np.float32)
        perm = rng.permutation(40)
        a = encode(x, params)
        b = encode(x[perm], params)
        np.testing.assert_allclose(a, b, atol=1e-6)

    def test_encoder_duplication_invariant(self, params):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((30, 5)).astype(np.float32)
        a = encode(x, params)
        b = encode(np.concatenate([x, x]), params)
        np.testing.assert_allclose(a, b, atol=1e-6)

    def test_zero_params_zero_latent(self):
        zeros = {k: np.zeros_like(v) for k, v in init_params(0).items()}
        x = np.random.default_rng(2).standard_normal((10, 5)).astype(np.float32)
        np.testing.assert_array_equal(encode(x, zeros), 0.0)

    def test_denoiser_finite_and_deterministic(self, params):
        rng = np.random.default_rng(4)
        lat = rng.standard_normal(1024).astype(np.float32)
        pose = rng.standard_normal(9).astype(np.float32)
        a = denoise(pose, 17, lat, params)
        b = denoise(pose, 17, lat, params)
        assert a.shape == (9,)
        assert np.all(np.isfinite(a))
        np.testing.assert_array_equal(a, b)

    def test_batch_matches_single(self, params):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((3, 20, 5)).astype(np.float32)
        lats = encode_batch(x, params)
        for i in range(3):
            np.testing.assert_allclose(encode(x[i], params), lats[i],
                                       rtol=1e-5, atol=1e-5)

    def test_gradients_match_finite_differences_f64(self):
        assert fd_gradient_check(np.float64) < 1e-6

    def test_gradients_match_finite_differences_f32(self):
        assert fd_gradient_check(np.float32) < 1e-3


@pytest.fixture(scope="module")
def toy_dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("score") / "toy.jsonl"
    generate_dataset(["table", "cantilever"], n_per_scene=5, seed=13,
                     out_path=path)
    return path


class TestTrain:
    @pytest.mark.slow
    def test_overfit_toy_dataset(self, toy_dataset):
        cfg = TrainConfig(epochs=200, seed=5)
        ckpt = train(toy_dataset, cfg)
        first = ckpt.losses[0][1]
        last = np.mean([l for _, l in ckpt.losses[-10:]])
        assert last < first / 10.0

    def test_deterministic_given_seed(self, toy_dataset):
        header, records = load_dataset(toy_dataset)
        subset = (header, records[:3])
        cfg = TrainConfig(epochs=8, seed=9)
        a = train(subset, cfg)
        b = train(subset, cfg)
        assert a.losses == b.losses
        for k in a.params:
            np.testing.assert_array_equal(a.params[k], b.params[k])

    def test_leave_out_filters_scene(self, toy_dataset):
        cfg = TrainConfig(epochs=1, seed=0, leave_out="cantilever")
        ckpt = train(toy_dataset, cfg)
        assert ckpt.meta["scenes_seen"] == ["table"]
        assert ckpt.meta["records"] == 5

    def test_leave_out_everything_rejected(self, toy_dataset):
        header, records = load_dataset(toy_dataset)
        only_table = (header, [r for r in records if r.scene_name == "table"])
        with pytest.raises(DataFormatError):
            train(only_table, TrainConfig(epochs=1, leave_out="table"))

    def test_nonfinite_loss_aborts(self, toy_dataset):
        header, records = load_dataset(toy_dataset)
        subset = (header, records[:2])
        with pytest.raises(NonFiniteLoss):
            train(subset, TrainConfig(epochs=40, seed=0, lr=1e30))

    def test_loss_csv_written(self, toy_dataset, tmp_path):
        header, records = load_dataset(toy_dataset)
        csv = tmp_path / "loss.csv"
        train((header, records[:2]),
              TrainConfig(epochs=2, seed=1, loss_csv=str(csv)))
        lines = csv.read_text().splitlines()
        assert lines[0] == "step,loss"
        assert len(lines) == 3

    def test_predictions_finite_after_short_training(self, toy_dataset):
        header, records = load_dataset(toy_dataset)
        ckpt = train((header, records[:3]), TrainConfig(epochs=3, seed=2))
        r = records[0]
        x0 = predict_x0(ckpt.params, r.scene_cloud.astype(float),
                        r.object_cloud.astype(float), r.pose, 50)
        assert x0.shape == (9,)
        assert np.all(np.isfinite(x0))


@pytest.fixture(scope="module")
def ckpt():
    cp_params = init_params(7)
    m = {k: np.full_like(v, 0.25) for k, v in cp_params.items()}
    v = {k: np.full_like(p, 0.5) for k, p in cp_params.items()}
    meta = {"seed": 7, "epochs": 12, "dataset_hash": "abc", "t_train": 100}
    return Checkpoint(params=cp_params, moment_m=m, moment_v=v, meta=meta)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, ckpt, tmp_path):
        p = tmp_path / "model.ckpt"
        save_checkpoint(ckpt, p)
        back = load_checkpoint(p)
        assert back.meta == ckpt.meta
        for k in ckpt.params:
            np.testing.assert_array_equal(back.params[k], ckpt.params[k])
            np.testing.assert_array_equal(back.moment_m[k], ckpt.moment_m[k])
            np.testing.assert_array_equal(back.moment_v[k], ckpt.moment_v[k])

    def test_truncated_payload(self, ckpt, tmp_path):
        p = tmp_path / "model.ckpt"
        save_checkpoint(ckpt, p)
        data = p.read_bytes()
        p.write_bytes(data[:-100])
        with pytest.raises(CorruptPayload):
            load_checkpoint(p)

    def test_wrong_magic(self, ckpt, tmp_path):
        p = tmp_path / "model.ckpt"
        save_checkpoint(ckpt, p)
        data = bytearray(p.read_bytes())
        data[:8] = b"NOTACKPT"
        p.write_bytes(bytes(data))
        with pytest.raises(VersionMismatch):
            load_checkpoint(p)

    def test_wrong_version(self, ckpt, tmp_path):
        import json, struct
        p = tmp_path / "model.ckpt"
        save_checkpoint(ckpt, p)
        data = p.read_bytes()
        (hlen,) = struct.unpack("<I", data[8:12])
        header = json.loads(data[12:12 + hlen])
        header["version"] = 99
        blob = json.dumps(header, separators=(",", ":")).encode()
        p.write_bytes(data[:8] + struct.pack("<I", len(blob)) + blob
                      + data[12 + hlen:])
        with pytest.raises(VersionMismatch, match="99"):
            load_checkpoint(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingCheckpoint):
            load_checkpoint(tmp_path / "nope.ckpt")
