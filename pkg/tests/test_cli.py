import numpy as np
import pytest

from whed import cli, csvio
from whed.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, main


def read_bytes(path):
    return path.read_bytes()


def test_simulate_writes_complete_session(tmp_path):
    out = tmp_path / "ses"
    code = main(["simulate", "--out", str(out), "--seed", "5"])
    assert code == EXIT_OK
    for name in ("encoders.csv", "poses.csv", "video.csv", "meta.txt", "calibration.csv"):
        assert (out / name).exists(), name
    enc = csvio.read_encoders(out / "encoders.csv")
    assert len(enc) == 10_000  # 1 kHz for the default 10 s
    video = csvio.read_video(out / "video.csv")
    assert len(video) == 300


def test_simulate_same_seed_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--out", str(a), "--seed", "9"]) == EXIT_OK
    assert main(["simulate", "--out", str(b), "--seed", "9"]) == EXIT_OK
    for name in ("encoders.csv", "poses.csv", "video.csv", "calibration.csv"):
        assert read_bytes(a / name) == read_bytes(b / name), name


def test_simulate_scenario_file_and_row_counts(tmp_path):
    scenario = tmp_path / "s.txt"
    scenario.write_text("duration_s = 3\ntrajectory = static\n", encoding="utf-8")
    out = tmp_path / "ses"
    assert main(["simulate", "--scenario", str(scenario), "--out", str(out)]) == EXIT_OK
    assert len(csvio.read_encoders(out / "encoders.csv")) == 3000
    assert len(csvio.read_video(out / "video.csv")) == 90
    poses = csvio.read_poses(out / "poses.csv")
    assert abs(len(poses) - 180) <= 1


def test_process_full_and_truncated(tmp_path, capsys):
    out = tmp_path / "ses"
    main(["simulate", "--out", str(out), "--seed", "3"])
    assert main(["process", "--session", str(out)]) == EXIT_OK
    t, idx, ch, poses = csvio.read_synced(out / "synced.csv")
    assert len(t) == 300  # every video tick matched

    # Truncate the pose stream: trailing video ticks must be dropped.
    poses_path = out / "poses.csv"
    lines = poses_path.read_text().splitlines(keepends=True)
    poses_path.write_text("".join(lines[: len(lines) // 2]), encoding="utf-8")
    assert main(["process", "--session", str(out)]) == EXIT_OK
    t2, *_ = csvio.read_synced(out / "synced.csv")
    assert len(t2) < 300
    report = (out / "sync_report.txt").read_text()
    assert "dropped (pose offset" in report


def test_process_empty_session_warns_but_succeeds(tmp_path, capsys):
    ses = tmp_path / "empty"
    ses.mkdir()
    (ses / "encoders.csv").write_text("t_ns,ch0,ch1,ch2,ch3,ch4,ch5\n")
    (ses / "poses.csv").write_text("t_ns,px,py,pz,qw,qx,qy,qz\n")
    (ses / "video.csv").write_text("t_ns,frame_idx\n")
    assert main(["process", "--session", str(ses)]) == EXIT_OK
    captured = capsys.readouterr()
    assert "warning" in captured.err


def test_process_rejects_bad_schema(tmp_path, capsys):
    ses = tmp_path / "bad"
    ses.mkdir()
    (ses / "encoders.csv").write_text("t_ns,ch0\n1,2\n")
    (ses / "poses.csv").write_text("t_ns,px,py,pz,qw,qx,qy,qz\n")
    (ses / "video.csv").write_text("t_ns,frame_idx\n")
    assert main(["process", "--session", str(ses)]) == EXIT_DATA
    assert "bad header" in capsys.readouterr().err


def test_replay_end_to_end_near_zero_error(tmp_path, capsys):
    out = tmp_path / "ses"
    main(["simulate", "--out", str(out), "--seed", "4"])
    main(["process", "--session", str(out)])
    assert main(["replay", "--session", str(out)]) == EXIT_OK
    for name in ("plan.csv", "replay_log.csv", "fidelity_report.txt", "errors.csv"):
        assert (out / name).exists(), name
    t, cmd, rows = csvio.read_plan(out / "plan.csv")
    assert len(t) == 300
    report = (out / "fidelity_report.txt").read_text()
    assert "position RMSE" in report
    # Ideal sink replaying in place: errors vanish.
    _, pos_err, ang_err = csvio.read_errors(out / "errors.csv")
    assert pos_err.max() < 1e-9
    assert ang_err.max() < 1e-6


def test_replay_missing_calibration_is_data_error(tmp_path, capsys):
    out = tmp_path / "ses"
    main(["simulate", "--out", str(out)])
    main(["process", "--session", str(out)])
    (out / "calibration.csv").unlink()
    assert main(["replay", "--session", str(out)]) == EXIT_DATA
    assert "calibration" in capsys.readouterr().err


def test_replay_with_offset_base_pose(tmp_path):
    out = tmp_path / "ses"
    main(["simulate", "--out", str(out), "--seed", "12"])
    main(["process", "--session", str(out)])
    assert (
        main(
            [
                "replay",
                "--session",
                str(out),
                "--base-pose",
                "1 0 0 1 0 0 0",
                "--out",
                str(tmp_path / "rep"),
            ]
        )
        == EXIT_OK
    )
    # Replaying from a shifted base moves the trajectory away from the demo.
    _, pos_err, _ = csvio.read_errors(tmp_path / "rep" / "errors.csv")
    assert pos_err.min() > 0.1


def test_thumb_solve_and_residual(capsys):
    assert main(["thumb", "residual", "--qp", "0,0"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "res_d=" in out and "res_m=" in out

    assert main(["thumb", "solve", "--qp", "0.7,0.3", "--seed", "2"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "theta2=0.7" in out
    assert "theta4=0.3" in out


def test_thumb_solve_unreachable_pose_is_numeric_error(capsys):
    code = main(["thumb", "solve", "--qp", "0.5,0.2", "--pose", "5 5 5 1 0 0 0"])
    assert code == EXIT_NUMERIC


def test_thumb_wobble_writes_csv(tmp_path, capsys):
    out = tmp_path / "wob.csv"
    code = main(
        ["thumb", "wobble", "--qp", "0.6,0.2", "--n", "40", "--seed", "8", "--out", str(out)]
    )
    assert code == EXIT_OK
    text = out.read_text().splitlines()
    assert text[0] == "px,py,pz,qw,qx,qy,qz,res_d,res_m"
    assert len(text) == 41
    data = np.loadtxt(text[1:], delimiter=",")
    assert np.abs(data[:, 7:]).max() < 1e-9


def test_compare_subcommand(tmp_path, capsys):
    out = tmp_path / "ses"
    main(["simulate", "--out", str(out), "--seed", "6"])
    main(["process", "--session", str(out)])
    main(["replay", "--session", str(out)])
    code = main(
        [
            "compare",
            "--demo",
            str(out / "filtered.csv"),
            "--replay",
            str(out / "replay_log.csv"),
            "--out",
            str(tmp_path / "cmp"),
        ]
    )
    assert code == EXIT_OK
    assert (tmp_path / "cmp" / "errors.csv").exists()


def test_usage_error_exits_2(capsys):
    with pytest.raises(SystemExit) as info:
        main(["process"])  # missing --session
    assert info.value.code == 2


def test_env_override_for_seed(tmp_path, monkeypatch):
    a, b = tmp_path / "a", tmp_path / "b"
    monkeypatch.setenv("WHED_SEED", "77")
    assert main(["simulate", "--out", str(a)]) == EXIT_OK
    monkeypatch.undo()
    assert main(["simulate", "--out", str(b), "--seed", "77"]) == EXIT_OK
    assert read_bytes(a / "encoders.csv") == read_bytes(b / "encoders.csv")
