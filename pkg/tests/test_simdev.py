import math

import numpy as np
import pytest

from whed import simdev, wire
from whed.core import DataError, Quaternion
from whed.simdev import SimScenario


def quiet(duration=1.0, **kw) -> SimScenario:
    base = dict(
        duration_s=duration,
        adc_noise_std=0.0,
        spike_prob=0.0,
        trajectory="static",
    )
    base.update(kw)
    return SimScenario(**base)


def test_encoder_1khz_frame_count():
    stream = simdev.run_encoder_device(quiet(1.0))
    assert len(stream.emit_t_ns) == 1000  # 1 kHz sampling
    assert len(stream.data) == 1000 * wire.FRAME_SIZE


def test_encoder_zero_noise_constant_angles_identical_frames():
    stream = simdev.run_encoder_device(quiet(0.25))
    frames = wire.FrameDecoder().feed(stream.data)
    assert (frames == frames[0]).all()


def test_encoder_deterministic_given_seed():
    s = SimScenario(duration_s=0.5, seed=99)
    a = simdev.run_encoder_device(s)
    b = simdev.run_encoder_device(SimScenario(duration_s=0.5, seed=99))
    assert a.data == b.data
    assert np.array_equal(a.emit_t_ns, b.emit_t_ns)
    c = simdev.run_encoder_device(SimScenario(duration_s=0.5, seed=100))
    assert c.data != a.data


def test_encoder_counts_always_in_range_under_extreme_noise():
    s = SimScenario(
        duration_s=0.5, adc_noise_std=5000.0, spike_prob=0.5, trajectory="sinusoid"
    )
    stream = simdev.run_encoder_device(s)
    frames = wire.FrameDecoder().feed(stream.data)
    assert len(frames) == 500
    assert frames.min() >= 0 and frames.max() <= 4095


def test_pose_streamer_zero_jitter_exact_spacing():
    stream = simdev.run_pose_streamer(quiet(10.0))
    assert len(stream.lines) == 1000
    periods = np.diff(stream.send_t_ns)
    assert (periods == 10_000_000).all()


def test_pose_streamer_jitter_period_std_matches_uniform_oracle():
    s = SimScenario(duration_s=60.0, jitter_ms_low=-3.0, jitter_ms_high=3.0, seed=5)
    stream = simdev.run_pose_streamer(s)
    periods = np.diff(stream.send_t_ns) / 1e6  # ms
    # Uniform(-3, 3) has sigma = 6/sqrt(12) = sqrt(3); periods inherit it.
    sigma_expected = 6.0 / math.sqrt(12.0)
    assert abs(periods.std() - sigma_expected) < 0.12
    assert abs(periods.mean() - 10.0) < 0.1


def test_pose_streamer_static_pose_constant_fields():
    stream = simdev.run_pose_streamer(quiet(1.0))
    assert len(stream.lines) == 100
    pose_fields = {line.split(" ", 1)[1] for line in stream.lines}
    assert len(pose_fields) == 1


def test_pose_streamer_records_decode():
    stream = simdev.run_pose_streamer(SimScenario(duration_s=0.3))
    for line, truth in zip(stream.lines, stream.records):
        rec = wire.decode_pose_record(line)
        assert np.allclose(rec.position, truth[:3], atol=1e-12)


def test_camera_clock_counts():
    assert len(simdev.run_camera_clock(quiet(1.0))) == 30  # 30 Hz
    short = simdev.run_camera_clock(quiet(0.01))
    assert len(short) == 1
    assert short.t_ns[0] == 0


def test_camera_clock_deterministic():
    a = simdev.run_camera_clock(quiet(2.0))
    b = simdev.run_camera_clock(quiet(2.0))
    assert np.array_equal(a.t_ns, b.t_ns)
    assert np.array_equal(a.values, b.values)


def test_skewed_clocks_offset_small():
    s = quiet(60.0, pose_skew_ppm=100.0)
    stream = simdev.run_pose_streamer(s)
    # 100 ppm over 60 s drifts 6 ms, well under the 70 ms sync gate.
    drift_ns = stream.record_t_ns[-1] - stream.send_t_ns[-1]
    assert 0 < drift_ns < 70_000_000


def test_robot_sink_ideal_executor():
    empty = simdev.run_robot_sink([], np.empty((0, 6), np.uint16), np.empty((0, 7)))
    assert len(empty.t_ns) == 0

    t = np.array([0, 10, 20])
    cmd = np.arange(18, dtype=np.uint16).reshape(3, 6)
    poses = np.tile([0, 0, 0, 1, 0, 0, 0], (3, 1)).astype(np.float64)
    log = simdev.run_robot_sink(t, cmd, poses)
    assert np.array_equal(log.commands, cmd)
    assert np.array_equal(log.poses, poses)
    assert np.array_equal(log.t_ns, t)

    with pytest.raises(DataError):
        simdev.run_robot_sink([10, 5], cmd[:2], poses[:2])


def test_trajectory_quaternions_match_scalar_euler():
    from whed.core import quat_from_euler_xyz

    rng = np.random.default_rng(0)
    ex, ey, ez = rng.uniform(-1.2, 1.2, size=(3, 40))
    rows = simdev._euler_xyz_quat_rows(ex, ey, ez)
    for k in range(40):
        expect = quat_from_euler_xyz(ex[k], ey[k], ez[k])
        got = Quaternion(*rows[k])
        assert expect.component_distance(got) < 1e-12


def test_scenario_validation_and_file_round_trip(tmp_path):
    with pytest.raises(DataError):
        SimScenario(duration_s=0.0)
    with pytest.raises(DataError):
        SimScenario(adc_noise_std=-1.0)
    with pytest.raises(DataError):
        SimScenario(trajectory="spiral")

    cfg = tmp_path / "scenario.txt"
    cfg.write_text(
        "# test scenario\nduration_s = 2.5\nseed = 42\ntrajectory = static\n"
        "jitter_ms_low = -1\njitter_ms_high = 1\n",
        encoding="utf-8",
    )
    s = simdev.load_scenario(cfg)
    assert s.duration_s == 2.5
    assert s.seed == 42
    assert s.trajectory == "static"

    cfg2 = tmp_path / "bad.txt"
    cfg2.write_text("not_a_key = 1\n", encoding="utf-8")
    with pytest.raises(DataError, match="unknown scenario key"):
        simdev.load_scenario(cfg2)


def test_scenario_calibration_matches_angle_map():
    s = SimScenario()
    open_raw, closed_raw, gain = simdev.scenario_calibration(s)
    assert open_raw.tolist() == [2048] * 6  # offset + scale * 0
    expected_closed = int(np.rint(2048 + 650 * 1.6))
    assert closed_raw.tolist() == [expected_closed] * 6
    assert (gain == 1.0).all()
