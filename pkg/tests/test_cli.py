from pathlib import Path

import pytest

from qsrd.cli import CSV_HEADER, main

FIXTURES = Path(__file__).resolve().parent.parent / "instances"
BELL = str(FIXTURES / "bell_schumacher.yaml")


def test_entropy_command(capsys):
    assert main(["entropy", BELL, "S(A)"]) == 0
    assert float(capsys.readouterr().out.strip()) == pytest.approx(1.0, abs=1e-12)
    assert main(["entropy", str(FIXTURES / "ghz_qsr.yaml"), "I(A:R|B)"]) == 0
    assert float(capsys.readouterr().out.strip()) == pytest.approx(1.0, abs=1e-10)


def test_rd_curve_csv(capsys, tmp_path):
    csv = tmp_path / "curve.csv"
    assert main(["rd-curve", BELL, "--restarts", "4", "--csv", str(csv)]) == 0
    out = capsys.readouterr().out
    lines = out.strip().splitlines()
    assert lines[0] == ",".join(CSV_HEADER) == "D,rate_bits,feasible,z_cap,restarts,seed"
    rows = [line.split(",") for line in lines[1:]]
    assert [float(r[0]) for r in rows] == [0.0, 0.1, 0.3]
    rates = [float(r[1]) for r in rows]
    assert all(b <= a + 1e-9 for a, b in zip(rates, rates[1:]))
    assert rates[0] == pytest.approx(1.0, abs=0.02)
    assert csv.read_text() == out


def test_result_files_are_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for path in (a, b):
        assert main(["rd-curve", BELL, "--restarts", "2", "--d-grid", "0.1,0.3", "--seed", "3",
                     "--out", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert b'"wall_time_s"' not in a.read_bytes()


def test_verify_background_exits_zero(tmp_path, capsys):
    out = tmp_path / "bg.json"
    assert main(["verify", "background", "--trials", "1000", "--seed", "7", "--out", str(out)]) == 0
    assert out.exists()


def test_verify_other_suites(capsys):
    for suite in ("converse", "decoupling", "generic", "appendixA"):
        assert main(["verify", suite, "--trials", "2", "--seed", "1"]) == 0


def test_kfun_on_orthogonal_ensemble(capsys):
    assert main(["kfun", str(FIXTURES / "orthogonal_ensemble.yaml"), "--restarts", "2"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "D,k_bound,k_raw,fidelity,feasible"
    d, k, raw, fid, feas = lines[1].split(",")
    assert float(k) == pytest.approx(0.5, abs=0.02) and float(raw) == pytest.approx(1.0, abs=0.02)


GENERIC = """\
kind: ensemble_source
systems:
- {name: A, dim: 2}
- {name: R, dim: 2}
ensemble:
- prob: 0.5
  amplitudes: [[0.7071067811865475, 0], [0, 0], [0, 0], [0.7071067811865475, 0]]
- prob: 0.5
  amplitudes: [[0, 0], [0.7071067811865475, 0], [0.7071067811865475, 0], [0, 0]]
distortion: {type: ensemble_qsr}
"""


def test_d0_command(capsys):
    assert main(["d0", BELL, "--restarts", "1"]) == 0
    assert abs(float(capsys.readouterr().out.strip())) <= 1e-6


def test_tx_command(capsys, tmp_path):
    path = tmp_path / "generic.yaml"
    path.write_text(GENERIC)
    assert main(["tx", str(path)]) == 0
    out = capsys.readouterr().out
    assert out.strip()
    # the orthogonal qubit ensemble has no reference system, so no signal has full support
    assert main(["tx", str(FIXTURES / "orthogonal_ensemble.yaml")]) == 1


def test_validation_errors_exit_one(capsys, tmp_path):
    assert main(["entropy", "/nonexistent.yaml", "S(A)"]) == 1
    bad = tmp_path / "bad.yaml"
    bad.write_text(Path(BELL).read_text().replace("0.7071067811865475, 0.0]\ndistortion", "0.5, 0.0]\ndistortion"))
    assert main(["rd-curve", str(bad)]) == 1
    assert "not normalized" in capsys.readouterr().err
    with pytest.raises(SystemExit) as e:
        main(["verify", "nonsense"])
    assert e.value.code == 1
