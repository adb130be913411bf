from fractions import Fraction as F

import numpy as np
import pytest

from latgauss.cli import main
from latgauss.lattice import cvp_enum, read_basis_file


@pytest.fixture
def plane(tmp_path):
    path = tmp_path / "z2.txt"
    path.write_text("2\n1 0\n0 1\n")
    return str(path)


def test_gen_writes_a_basis_file(tmp_path, capsys):
    out = tmp_path / "inst.txt"
    assert main(["gen", "--n", "3", "--bound", "5", "--seed", "4", "--out", str(out)]) == 0
    B, t = read_basis_file(out)
    assert B.rank == 3 and len(t) == 3
    assert main(["gen", "--n", "3", "--bound", "5", "--seed", "4"]) == 0
    assert capsys.readouterr().out == out.read_text()


def test_hkz_prints_reduced_basis(tmp_path, capsys):
    path = tmp_path / "b.txt"
    path.write_text("2\n1 1\n0 3\n")
    assert main(["hkz", "--basis", str(path)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "2"
    first = [F(x) for x in lines[1].split()]
    assert sum(x * x for x in first) == 2


def test_cvp_output_line(plane, capsys):
    assert main(["cvp", "--basis", plane, "--target", "3/10 -7/10", "--seed", "1"]) == 0
    out = capsys.readouterr().out.strip()
    assert out.startswith("distance=")
    assert out.endswith("witness=0 -1")


def test_cvp_exact_rational_distance(plane, capsys):
    # squared distance 1/5 has no rational root, so a float is printed
    assert main(["cvp", "--basis", plane, "--target", "3/5 -1/5", "--oracle"]) == 0
    out = capsys.readouterr().out
    assert "witness=1 0" in out and "/" not in out.split()[0]
    assert main(["cvp", "--basis", plane, "--target", "0 4/5", "--oracle"]) == 0
    assert capsys.readouterr().out.startswith("distance=1/5 ")


def test_cvp_census_lines(tmp_path, capsys):
    path = tmp_path / "b.txt"
    path.write_text("3\n2 1 0\n1 -3 1\n0 2 5\nt: 1/2 1/3 -1/4\n")
    assert main(["cvp", "--basis", str(path), "--census", "--seed", "3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("distance=")
    assert lines[1] == "rank=3 calls=1"
    assert all(ln.startswith("rank=") for ln in lines[1:])
    B, t = read_basis_file(path)
    witness = [int(x) for x in lines[0].split("witness=")[1].split()]
    v = np.array(B.exact_vector(witness), dtype=float) - np.array([float(x) for x in t])
    assert float(v @ v) == pytest.approx(cvp_enum(B, t).dist2)


def test_approx_cvp(plane, capsys):
    assert main(["approx-cvp", "--basis", plane, "--target", "3/10 -7/10", "--f", "100"]) == 0
    assert capsys.readouterr().out.strip().endswith("witness=0 -1")


def test_sample_prints_rational_rows(plane, capsys):
    assert main(["sample", "--basis", plane, "--target", "1/2 0", "--s", "1.5", "--count", "500", "--seed", "2"]) == 0
    rows = [ln.split() for ln in capsys.readouterr().out.splitlines()]
    assert len(rows) > 0
    for r in rows:
        x, y = F(r[0]), F(r[1])
        assert x.denominator == 2 and y.denominator == 1


def test_sample_is_reproducible(plane, capsys):
    args = ["sample", "--basis", plane, "--target", "1/3 1/5", "--s", "1.2", "--count", "400", "--seed", "9"]
    main(args)
    a = capsys.readouterr().out
    main(args)
    assert capsys.readouterr().out == a


def test_sample_strict_reports_starvation(plane, capsys):
    rc = main(["sample", "--basis", plane, "--s", "0.1", "--ell", "6", "--count", "100", "--strict"])
    assert rc == 2
    assert "pipeline starved" in capsys.readouterr().err


def test_sample_warns_when_nothing_survives(plane, capsys):
    assert main(["sample", "--basis", plane, "--s", "0.1", "--ell", "6", "--count", "100"]) == 0
    cap = capsys.readouterr()
    assert cap.out == "" and "no samples survived" in cap.err


def test_verify_and_bench_exit_codes(tmp_path, capsys):
    rc = main(["verify", "identity-suite", "--dims", "1", "--trials", "3"])
    out = capsys.readouterr().out
    assert "metric=max_residual" in out and "pass=1" in out
    assert rc == 1  # fewer trials than the suite minimum
    report = tmp_path / "bench.txt"
    main(["bench", "--dims", "2,3", "--out", str(report)])  # timing is not asserted
    assert "metric=slope" in report.read_text()


def test_unknown_suite_is_a_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["verify", "nonsense"])
    assert exc.value.code == 2


def test_bad_target_reports_error(plane, capsys):
    assert main(["cvp", "--basis", plane, "--target", "1 2 3"]) == 2
    assert "error" in capsys.readouterr().err
