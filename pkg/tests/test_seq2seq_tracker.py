import numpy as np
import pytest

from beamtrack.beam_estimators import MmRapidModel
from beamtrack.measurement import SensingPlan, normalize_rows
from beamtrack.nn import max_relative_error, numerical_gradient
from beamtrack.seq2seq_tracker import (
    TrackerConfig,
    TrackerModel,
    decode_predict,
    encode_history,
    predict_frame,
    predict_frames,
    train_tracker,
)


def unit_history(rng, T, m):
    return normalize_rows(np.abs(rng.normal(size=(T, m))) + 0.1)


def test_shapes_t7_p2():
    model = TrackerModel(TrackerConfig(7, 2, 5, seed=0))
    rng = np.random.default_rng(0)
    state = encode_history(model, unit_history(rng, 7, 5))
    assert state[0].shape == (64,) and state[1].shape == (64,)
    out = decode_predict(model, state, 65)
    assert out.distributions.shape == (8, 128)
    np.testing.assert_allclose(out.distributions.sum(axis=1), 1.0)
    assert out.kept.shape == (2,) and out.discarded.shape == (6,)
    assert out.kept.min() >= 1 and out.kept.max() <= 128


def test_uniform_head_loss_is_s_log_k():
    cfg = TrackerConfig(7, 2, 5, seed=0)
    model = TrackerModel(cfg)
    model.head.params["W"][:] = 0
    rng = np.random.default_rng(1)
    x = np.stack([unit_history(rng, 7, 5) for _ in range(16)])
    labels0 = rng.integers(0, 128, size=(16, 9))
    assert model.eval_loss(x, labels0) == pytest.approx(8 * np.log(128), rel=1e-12)


def test_config_validation():
    with pytest.raises(ValueError):
        TrackerConfig(1, 2)
    with pytest.raises(ValueError):
        TrackerConfig(7, 0)
    with pytest.raises(ValueError):
        TrackerConfig(encoder_hidden=32, decoder_hidden=64)


def test_encode_history_rejects_bad_input():
    model = TrackerModel(TrackerConfig(4, 2, 3))
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        encode_history(model, unit_history(rng, 5, 3))
    with pytest.raises(ValueError):
        encode_history(model, 2 * unit_history(rng, 4, 3))


def test_decode_predict_validates_indices():
    model = TrackerModel(TrackerConfig(4, 2, 3))
    state = encode_history(model, unit_history(np.random.default_rng(0), 4, 3))
    with pytest.raises(ValueError):
        decode_predict(model, state, 0)
    with pytest.raises(ValueError):
        decode_predict(model, state, 5, known_indices=[1])
    with pytest.raises(ValueError):
        decode_predict(model, state, 5, known_indices=[1, 129])
    assert decode_predict(model, state, 5, known_indices=[1, 2]).kept.shape == (2,)


def test_decode_feeds_known_then_argmax():
    cfg = TrackerConfig(4, 3, 3, num_beams=16, encoder_hidden=8, decoder_hidden=8, dense_hidden=8)
    model = TrackerModel(cfg)
    rng = np.random.default_rng(2)
    x = unit_history(rng, 4, 3)[None]
    h, c, _ = model.encode(x)
    seed0, known0 = np.array([3]), np.array([[7, 9]])
    logits = model.decode(h, c, seed0, known0)
    # manual unroll
    prev, hh, cc = 3, h, c
    for s in range(cfg.decoder_steps):
        hh, cc, _ = model.decoder.step(model._onehot(np.array([prev])), hh, cc)
        ref = model.head.forward(model.dec_out.forward(hh))
        np.testing.assert_allclose(logits[:, s], ref)
        prev = known0[0, s] if s < 2 else int(np.argmax(ref))


def test_tracker_gradient_matches_finite_differences():
    cfg = TrackerConfig(3, 2, 3, num_beams=6, encoder_hidden=4, decoder_hidden=4, dense_hidden=5, dropout=0.0)
    model = TrackerModel(cfg)
    rng = np.random.default_rng(3)
    x = np.stack([unit_history(rng, 3, 3) for _ in range(4)])
    labels0 = rng.integers(0, 6, size=(4, 5))
    model.zero_grad()
    model.loss_and_grad(x, labels0)
    analytic = [(name, p, g.copy()) for name, p, g in model.named_parameters()]
    f = lambda: model.loss_and_grad(x, labels0)
    for name, p, g in analytic:
        num = numerical_gradient(f, p)
        assert max_relative_error(g, num) < 1e-4 or np.max(np.abs(g - num)) < 1e-7, name


def small_frames(n, seed, T=4, P=2, m=3, K=16):
    rng = np.random.default_rng(seed)
    start = rng.integers(1, K + 1 - (T + P), size=n)
    labels = start[:, None] + np.arange(T + P)
    x = np.abs(rng.normal(size=(n, T, m))) + (labels[:, :T, None] / K)
    return x, labels


def test_training_reduces_loss():
    cfg = TrackerConfig(4, 2, 3, num_beams=16, encoder_hidden=16, decoder_hidden=16, dense_hidden=16,
                        batch_size=16, seed=0)
    model = TrackerModel(cfg)
    x, labels = small_frames(50, 0)
    hist = train_tracker(model, x, labels, max_epochs=5)
    assert hist.train_loss[-1] < hist.train_loss[0]
    assert len(hist.val_loss) == 5


def test_training_deterministic():
    cfg = TrackerConfig(4, 2, 3, num_beams=16, encoder_hidden=8, decoder_hidden=8, dense_hidden=8,
                        batch_size=16, seed=4)
    x, labels = small_frames(40, 1)
    a, b = TrackerModel(cfg), TrackerModel(cfg)
    train_tracker(a, x, labels, max_epochs=3)
    train_tracker(b, x, labels, max_epochs=3)
    for k, v in a.state_dict().items():
        np.testing.assert_array_equal(v, b.state_dict()[k])


def test_training_rejects_bad_shapes():
    model = TrackerModel(TrackerConfig(4, 2, 3, num_beams=16))
    x, labels = small_frames(10, 2)
    with pytest.raises(ValueError):
        train_tracker(model, x[:, :3], labels)
    with pytest.raises(ValueError):
        train_tracker(model, x[:0], labels[:0])


def test_tracker_round_trip(tmp_path):
    cfg = TrackerConfig(4, 2, 3, num_beams=16, encoder_hidden=8, decoder_hidden=8, dense_hidden=8)
    model = TrackerModel(cfg)
    x, labels = small_frames(20, 3)
    train_tracker(model, x, labels, max_epochs=2)
    model.save(tmp_path / "t.json")
    back = TrackerModel.load(tmp_path / "t.json")
    xn = normalize_rows(x)
    h1, c1, _ = model.encode(xn)
    h2, c2, _ = back.encode(xn)
    seeds = labels[:, 0] - 1
    np.testing.assert_array_equal(model.decode(h1, c1, seeds), back.decode(h2, c2, seeds))


def test_predict_frame_sources_and_counts():
    plan = SensingPlan(5, 3, 4, 2)
    tracker = TrackerModel(TrackerConfig(4, 2, 3, num_beams=16, encoder_hidden=8, decoder_hidden=8, dense_hidden=8))
    mm1, mm2 = MmRapidModel(5, 16, instance=1), MmRapidModel(3, 16, instance=2)
    rng = np.random.default_rng(5)
    meas = [rng.random(5)] + [rng.random(3) for _ in range(3)] + [None, None]
    est = predict_frame(tracker, mm1, mm2, meas, plan, start_step=10)
    assert [e.source for e in est] == ["mmrapid1"] + ["mmrapid2"] * 3 + ["lstm"] * 2
    assert [e.measurements_used for e in est] == [5, 3, 3, 3, 0, 0]
    assert [e.time_step for e in est] == list(range(10, 16))
    assert est[0].beam_index == mm1.predict_indices(meas[0][None])[0]
    with pytest.raises(ValueError):
        predict_frame(tracker, mm1, mm2, meas[:-1], plan)
    bad = list(meas)
    bad[2] = rng.random(4)
    with pytest.raises(ValueError):
        predict_frame(tracker, mm1, mm2, bad, plan)


def test_predict_frames_variants_share_history():
    plan = SensingPlan(5, 3, 4, 2)
    tracker = TrackerModel(TrackerConfig(4, 2, 3, num_beams=16, encoder_hidden=8, decoder_hidden=8, dense_hidden=8))
    mm1, mm2 = MmRapidModel(5, 16, instance=1), MmRapidModel(3, 16, instance=2)
    rng = np.random.default_rng(6)
    out = predict_frames(tracker, mm1, mm2, rng.random((7, 5)), rng.random((7, 3, 3)), plan)
    assert out.full.shape == out.lstm.shape == (7, 6)
    np.testing.assert_array_equal(out.full[:, :4], out.mmrapid)
    np.testing.assert_array_equal(out.full[:, 0], out.lstm[:, 0])
    np.testing.assert_array_equal(out.full[:, 4:], out.lstm[:, 4:])


@pytest.mark.parametrize("T", [2, 4, 7])
@pytest.mark.parametrize("P", [1, 2, 7])
def test_output_counts_over_window_grid(T, P):
    model = TrackerModel(TrackerConfig(T, P, 3, num_beams=16, encoder_hidden=8, decoder_hidden=8, dense_hidden=8))
    state = encode_history(model, unit_history(np.random.default_rng(T * 10 + P), T, 3))
    out = decode_predict(model, state, 4, known_indices=np.arange(1, T - 1))
    assert out.kept.shape == (P,) and out.discarded.shape == (T - 1,)
    assert np.max(np.abs(out.distributions.sum(axis=1) - 1)) < 1e-9
    np.testing.assert_array_equal(out.kept, np.argmax(out.distributions[T - 1 :], axis=1) + 1)


def test_noise_free_tracker_beats_baselines():
    from beamtrack.pipeline import ExperimentConfig, simulate

    cfg = ExperimentConfig(num_trajectories=300, noise_sigma=0.0, history_len=7, prediction_len=2, m_loop=5,
                           tracker_max_epochs=40)
    data = simulate(cfg)
    rss, lab, _ = data.frames("train_stage2", 7, 2, 5, labels="oracle")
    rss_v, lab_v, _ = data.frames("validation", 7, 2, 5, labels="oracle")
    model = TrackerModel(cfg.tracker_config())
    train_tracker(model, rss[:, :7], lab, rss_v[:, :7], lab_v)

    rss_t, lab_t, _ = data.frames("test", 7, 2, 5, stride=9, labels="oracle")
    h, c, _ = model.encode(normalize_rows(rss_t[:, :7]))
    logits = model.decode(h, c, lab_t[:, 0] - 1, lab_t[:, 1:6] - 1)
    kept = np.argmax(logits[:, 6:], axis=-1) + 1
    acc = np.mean(kept == lab_t[:, 7:])
    persistence = np.mean(lab_t[:, 6:7] == lab_t[:, 7:])
    assert acc > 1 / 128
    assert acc > persistence, (acc, persistence)
