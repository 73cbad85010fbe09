import json

import pytest

from delaysteer import fixtures
from delaysteer.cli import main


def _run(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_analyze_spectrally_uncontrollable(capsys):
    code, out, _ = _run(["analyze", "--system", fixtures.path("spectrally_uncontrollable")], capsys)
    assert code == 0
    rep = json.loads(out)["report"]
    assert rep["complete"] is True
    assert rep["spectrally_controllable_in_window"] is False


def test_spectrum_csv(capsys):
    code, out, _ = _run(["spectrum", "--system", fixtures.path("scalar"), "--window=-4,2,-20,20", "--format", "csv"], capsys)
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0].startswith("re,im,multiplicity")
    assert len(lines) == 1 + 7


def test_spectrum_json_reports_membership(capsys):
    code, out, _ = _run(["spectrum", "--system", fixtures.path("diag12"), "--window=-4.5,1.5,-35.5,35.5"], capsys)
    data = json.loads(out)
    assert code == 0 and data["count"] == 22
    assert data["membership_threshold"]["0"] == 0


def test_horizon_too_short_exit_one(capsys):
    code, _, err = _run(["synthesize", "--system", fixtures.path("scalar"), "--state", fixtures.path("unit_state_1"),
                         "--horizon", "1"], capsys)
    assert code == 1 and "HorizonTooShort" in err


def test_bad_input_exit_two(tmp_path, capsys):
    code, _, _ = _run(["analyze", "--system", str(tmp_path / "missing.json")], capsys)
    assert code == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert _run(["analyze", "--system", str(bad)], capsys)[0] == 2
    assert _run(["spectrum", "--system", fixtures.path("scalar"), "--window", "1,2"], capsys)[0] == 2


def test_pipeline(tmp_path, capsys):
    ctrl = tmp_path / "u.json"
    traj = tmp_path / "traj.csv"
    sysf, state = fixtures.path("scalar"), fixtures.path("unit_state_1")
    assert main(["synthesize", "--system", sysf, "--state", state, "--horizon", "3", "--out", str(ctrl)]) == 0
    assert main(["simulate", "--system", sysf, "--state", state, "--control", str(ctrl), "--horizon", "3",
                 "--format", "csv", "--out", str(traj)]) == 0
    code, out, _ = _run(["verify", "--trajectory", str(traj), "--horizon", "3"], capsys)
    assert code == 0
    assert json.loads(out)["verify"]["null"] is True
    code, out, _ = _run(["verify", "--trajectory", str(traj), "--horizon", "3", "--tol", "1e-9"], capsys)
    assert code == 1


def test_simulate_json_summary(tmp_path, capsys):
    ctrl = tmp_path / "u.json"
    sysf, state = fixtures.path("scalar"), fixtures.path("unit_state_1")
    main(["synthesize", "--system", sysf, "--state", state, "--horizon", "3", "--truncation", "5", "--out", str(ctrl)])
    code, out, _ = _run(["simulate", "--system", sysf, "--state", state, "--control", str(ctrl)], capsys)
    data = json.loads(out)
    assert code == 0
    assert data["summary"]["T"] == 3.0
    assert len(data["trajectory"]["t"]) == 512 * 4 + 1


def test_synthesize_csv_sidecar(tmp_path):
    out = tmp_path / "u.csv"
    assert main(["synthesize", "--system", fixtures.path("scalar"), "--state", fixtures.path("unit_state_1"),
                 "--horizon", "3", "--truncation", "5", "--format", "csv", "--out", str(out)]) == 0
    assert out.read_text().startswith("t,u\n")
    assert json.loads((tmp_path / "u.csv.json").read_text())["control"]["method"] == "series"


def test_output_is_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    args = ["synthesize", "--system", fixtures.path("diag12"), "--state", fixtures.path("unit_state_2"),
            "--horizon", "4", "--truncation", "7"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_missing_required_option(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["analyze"])
    assert exc.value.code == 2
