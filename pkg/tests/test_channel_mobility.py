import math

import numpy as np
import pytest

from beamtrack.array_signal import ArrayGeometry
from beamtrack.channel_mobility import (
    log_amplitude_for_snr,
    LosChannelState,
    Rect,
    Scenario,
    channel_vector,
    extract_frames,
    generate_dataset,
    import_channel_table,
    in_cell_steps,
    los_channel_at,
    read_frames_jsonl,
    sample_trajectory,
    split_counts,
    write_dataset_jsonl,
    Trajectory,
)

SC = Scenario()


def straight(n, speed=1, x=25.0, y0=10.0):
    ix, iy = round(x / 0.2), round(y0 / 0.2)
    grid = np.stack([np.full(n, ix), iy - speed * np.arange(n)], axis=1)
    return Trajectory(grid, speed, 0.2, 0)


def test_scenario_defaults_match_cell_constraints():
    assert SC.nearest_cell_distance == pytest.approx(15.0)
    assert math.degrees(SC.max_abs_aoa) == pytest.approx(53.13, abs=0.01)


def test_scenario_rejects_wide_cell():
    with pytest.raises(ValueError):
        Scenario(cell_rect=Rect(15, 35, -40, 40))


def test_channel_at_cell_front():
    s = los_channel_at((15, 0), SC)
    assert s.aoa == 0.0
    assert s.snr_db == pytest.approx(30.0)


def test_channel_at_cell_corner():
    s = los_channel_at((15, 20), SC)
    assert math.degrees(s.aoa) == pytest.approx(math.degrees(math.atan(20 / 15)))
    assert math.degrees(s.aoa) == pytest.approx(53.13, abs=0.01)


def test_snr_falls_with_distance():
    assert los_channel_at((30, 0), SC).snr_db == pytest.approx(30 - 20 * math.log10(2))


def test_log_amplitude_calibrates_snr():
    s = los_channel_at((22.4, -7.2), SC)
    assert math.exp(2 * s.log_amplitude) == pytest.approx(10 ** (s.snr_db / 10))


def test_channel_rejects_outside_cell():
    with pytest.raises(ValueError):
        los_channel_at((10, 0), SC)


def test_channel_vector():
    g4 = ArrayGeometry(4, 0.5)
    np.testing.assert_allclose(channel_vector(LosChannelState(0.0, 0.0, 0.0, (15, 0)), g4), np.ones(4))
    s = LosChannelState(0.4, -0.3, 0.0, (20, 0))
    h = channel_vector(s, ArrayGeometry(36, 0.5))
    assert np.linalg.norm(h) ** 2 == pytest.approx(math.exp(-0.6) * 36)
    np.testing.assert_array_equal(h, channel_vector(LosChannelState(0.4, -0.3, 5.0, (30, 1)), ArrayGeometry(36, 0.5)))


@pytest.mark.parametrize("speed", [1, 10])
def test_trajectory_step_length(speed):
    tr = straight(6, speed)
    d = np.diff(tr.positions, axis=0)
    np.testing.assert_allclose(d[:, 0], 0.0)
    np.testing.assert_allclose(d[:, 1], -0.2 * speed)


def test_sample_trajectory_properties():
    rng = np.random.default_rng(5)
    for i in range(200):
        tr = sample_trajectory(SC, rng, i)
        assert 1 <= tr.speed <= 10
        pos = tr.positions
        np.testing.assert_allclose(np.diff(pos[:, 1]), -0.2 * tr.speed)
        np.testing.assert_allclose(pos / 0.2, np.round(pos / 0.2), atol=1e-9)
        assert SC.start_box.contains(pos[0, 0], pos[0, 1], tol=0.1 + 1e-9)
        # ends at the last point before leaving the cell on the -y side
        assert pos[-1, 1] >= -20 - 1e-9
        assert pos[-1, 1] - 0.2 * tr.speed < -20 - 1e-9


def test_sample_trajectory_deterministic():
    a = sample_trajectory(SC, np.random.default_rng(9))
    b = sample_trajectory(SC, np.random.default_rng(9))
    np.testing.assert_array_equal(a.grid_index, b.grid_index)
    assert a.speed == b.speed


def test_extract_frames_counts():
    tr = straight(15, 1, y0=10.0)  # all 15 steps in the cell
    assert len(in_cell_steps(tr, SC)) == 15
    assert len(extract_frames(tr, 7, 2, SC)) == 7
    assert extract_frames(straight(8, 1), 7, 2, SC) == []


def test_extract_frames_stride_non_overlapping():
    frames = extract_frames(straight(30, 1), 4, 7, SC, stride=11)
    assert [f.start_step for f in frames] == [0, 11]


def test_frames_lie_in_cell_and_are_consecutive():
    rng = np.random.default_rng(3)
    for i in range(50):
        tr = sample_trajectory(SC, rng, i)
        for fr in extract_frames(tr, 4, 3, SC):
            assert len(fr.channel_states) == 7
            steps = [s.time_step for s in fr.channel_states]
            assert steps == list(range(steps[0], steps[0] + 7))
            for s in fr.channel_states:
                assert SC.cell_rect.contains(*s.position)
                assert abs(math.degrees(s.aoa)) <= 53.2
                assert s.snr_db <= 30.0 + 1e-12


def test_aoa_decreases_along_trajectory():
    rng = np.random.default_rng(11)
    for i in range(50):
        tr = sample_trajectory(SC, rng, i)
        states = [s for fr in extract_frames(tr, 1, 1, SC) for s in fr.channel_states[:1]]
        aoas = np.array([s.aoa for s in states])
        oracle = np.arctan2([s.position[1] for s in states], [s.position[0] for s in states])
        np.testing.assert_allclose(aoas, oracle)
        assert np.all(np.diff(aoas) < 0)


def test_split_counts_1000():
    assert split_counts(1000) == {"train_stage1": 100, "train_stage2": 675, "validation": 75, "test": 150}


def test_generate_dataset_partitions():
    ds = generate_dataset(SC, 1000, 7, 2, seed=4)
    sizes = {k: len(v) for k, v in ds.partitions.items()}
    assert sizes == {"train_stage1": 100, "train_stage2": 675, "validation": 75, "test": 150}
    ids = [t for v in ds.partitions.values() for t in v]
    assert sorted(ids) == list(range(1000))


def test_generate_dataset_deterministic():
    a = generate_dataset(SC, 50, 4, 2, seed=8)
    b = generate_dataset(SC, 50, 4, 2, seed=8)
    assert a.partitions == b.partitions
    for ta, tb in zip(a.trajectories, b.trajectories):
        np.testing.assert_array_equal(ta.grid_index, tb.grid_index)
    assert generate_dataset(SC, 50, 4, 2, seed=9).partitions != a.partitions


def test_generate_dataset_rejects_tiny():
    with pytest.raises(ValueError):
        generate_dataset(SC, 10)


def test_frames_never_span_partitions():
    ds = generate_dataset(SC, 40, 3, 2, seed=2)
    owner = {t: name for name, ids in ds.partitions.items() for t in ids}
    for name in ds.partitions:
        for fr in ds.frames(name):
            assert owner[fr.trajectory_id] == name


def test_dataset_jsonl_round_trip(tmp_path):
    ds = generate_dataset(SC, 20, 3, 2, seed=1)
    path = tmp_path / "frames.jsonl"
    write_dataset_jsonl(path, ds)
    back = read_frames_jsonl(path, 3, 2)
    expected = [(name, fr) for name in ds.partitions for fr in ds.frames(name)]
    assert len(back) == len(expected)
    for (pa, fa), (pb, fb) in zip(back, expected):
        assert pa == pb
        assert (fa.trajectory_id, fa.start_step, fa.speed) == (fb.trajectory_id, fb.start_step, fb.speed)
        for sa, sb in zip(fa.channel_states, fb.channel_states):
            assert sa.aoa == sb.aoa and sa.snr_db == sb.snr_db and tuple(sa.position) == tuple(sb.position)


def _write(tmp_path, text):
    p = tmp_path / "table.csv"
    p.write_text(text)
    return p


def test_import_channel_table(tmp_path):
    p = _write(tmp_path, "x_m,y_m,aoa_rad,gain_db\n15,0,0,30\n15.2,0.4,0.02,29.5\n20,-3.6,-0.18,25\n")
    recs = import_channel_table(p)
    assert len(recs) == 3
    assert recs[1].position == (15.2, 0.4)
    s = recs[2].to_state()
    assert math.exp(2 * s.log_amplitude) == pytest.approx(10 ** 2.5)


def test_import_rejects_large_aoa(tmp_path):
    p = _write(tmp_path, "x_m,y_m,aoa_rad,gain_db\n15,0,0,30\n15,0.2,2.0,30\n")
    with pytest.raises(ValueError, match="line 3"):
        import_channel_table(p)


def test_import_rejects_off_grid(tmp_path):
    p = _write(tmp_path, "x_m,y_m,aoa_rad,gain_db\n15.1,0,0,30\n")
    with pytest.raises(ValueError, match="grid"):
        import_channel_table(p)


def test_import_rejects_malformed(tmp_path):
    p = _write(tmp_path, "x_m,y_m,aoa_rad,gain_db\n15,0,abc,30\n")
    with pytest.raises(ValueError, match="line 2"):
        import_channel_table(p)


def test_import_empty_file(tmp_path):
    assert import_channel_table(_write(tmp_path, "")) == []


def test_log_amplitude_rejects_zero_sigma():
    with pytest.raises(ValueError):
        log_amplitude_for_snr(20.0, 0.0)
