"""End-to-end tests of the command-line entry point."""
import re

import numpy as np
import pytest

from src.main import main
from src.matrix_file import read_matrix
from src.series import Axis, AxisValue


def metric(output: str, name: str) -> str:
    match = re.search(rf"^{name}=(.*)$", output, re.MULTILINE)
    assert match, f"{name} missing from output"
    return match.group(1)


def test_build_laplace_reproduces_published_nonzeros(tmp_path, capsys):
    code = main(["build", "--lambda", "0", "--levels", "1", "--pmax", "10", "--kmax", "10", "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert code == 0
    assert metric(out, "LEVELS") == "1"
    assert metric(out, "LEVEL0_TOTAL") == "87846"
    assert metric(out, "LEVEL0_REAL_NONZERO") == "1512"
    assert metric(out, "LEVEL0_IMAG_NONZERO") == "1001"
    assert metric(out, "LEVEL0_DELTA_NONZERO_REAL") == "0"
    assert metric(out, "LEVEL0_DELTA_NONZERO_IMAG") == "0"
    assert (tmp_path / "level-0.mwxe").exists()

    code = main(["stats", "--in", str(tmp_path / "level-0.mwxe")])
    out = capsys.readouterr().out
    assert code == 0
    assert metric(out, "REAL_NONZERO") == "1512"
    assert metric(out, "ADDITIONAL_IMAG_ZERO") == str(8450 - 1001)
    assert metric(out, "REFERENCE_NONZERO_REAL") == "1512"


def test_build_levels_scale_consistently(tmp_path, capsys):
    fine, coarse = tmp_path / "fine", tmp_path / "coarse"
    common = ["--pmax", "3", "--kmax", "3", "--lambda0", "1"]
    assert main(["build", "--lambda", "4", "--levels", "3", "--out", str(fine)] + common) == 0
    assert main(["build", "--lambda", "1", "--levels", "1", "--out", str(coarse)] + common) == 0
    out = capsys.readouterr().out
    assert "LEVEL2_FILE=" in out
    level2 = read_matrix(fine / "level-2.mwxe")
    level0 = read_matrix(coarse / "level-0.mwxe")
    assert level2.real_part.key_set() == level0.real_part.key_set()
    np.testing.assert_array_equal(level2.real_part.values, 0.125 * level0.real_part.values)
    np.testing.assert_array_equal(level2.imag_part.values, 0.125 * level0.imag_part.values)


def test_build_from_profile(tmp_path, capsys):
    profile = tmp_path / "run.yml"
    profile.write_text(f"lambda: 2.0\nlevels: 2\np_max: 2\nk_max: 2\nout: {tmp_path / 'out'}\n")
    assert main(["build", "--config", str(profile), "--levels", "1"]) == 0
    out = capsys.readouterr().out
    assert metric(out, "LEVELS") == "1"
    assert (tmp_path / "out" / "level-0.mwxe").exists()
    assert not (tmp_path / "out" / "level-1.mwxe").exists()


def test_validate_passes(capsys):
    code = main(["validate", "--lambda", "2", "--levels", "2", "--pmax", "4", "--kmax", "4",
                 "--samples", "20", "--seed", "1"])
    out = capsys.readouterr().out
    assert code == 0
    assert metric(out, "STATUS") == "PASS"
    assert int(metric(out, "STRUCTURAL_ZEROS")) + int(metric(out, "COMPARED")) + int(metric(out, "SKIPPED")) == 20
    assert float(metric(out, "MAX_REL_ERROR")) <= 1e-9
    assert int(metric(out, "FLOORED")) <= int(metric(out, "COMPARED"))
    assert float(metric(out, "MAX_ABS_ERROR")) >= 0.0
    assert float(metric(out, "MAX_L1_REL_ERROR")) >= 0.0


def test_validate_reports_plain_relative_error(monkeypatch, capsys):
    monkeypatch.setattr("src.cli.eval_E0", lambda p, q, k, params, table: (AxisValue(Axis.for_index(k), 0.0), 0))
    code = main(["validate", "--lambda", "1", "--pmax", "2", "--kmax", "2", "--samples", "20", "--seed", "1"])
    out = capsys.readouterr().out
    assert code == 1
    assert metric(out, "STATUS") == "FAIL"
    assert float(metric(out, "MAX_REL_ERROR")) == pytest.approx(1.0)


def test_validate_skips_unresolved_quadrature(tmp_path, capsys):
    profile = tmp_path / "oracle.yml"
    profile.write_text("quad_max_cells: 600\nquad_max_depth: 3\n")
    code = main(["validate", "--config", str(profile), "--lambda", "50", "--pmax", "4", "--kmax", "10",
                 "--samples", "30", "--seed", "2"])
    out = capsys.readouterr().out
    assert code in (0, 1)
    assert int(metric(out, "SKIPPED")) > 0


def test_validate_without_samples_passes_vacuously(capsys):
    code = main(["validate", "--lambda", "1", "--pmax", "2", "--kmax", "2", "--samples", "0"])
    out = capsys.readouterr().out
    assert code == 0
    assert "WARNING: no admissible samples compared" in out
    assert metric(out, "COMPARED") == "0"


def test_potential_check(capsys):
    code = main(["potential", "--lambda", "1", "--levels", "2", "--pmax", "20", "--kmax", "4", "--seed", "3"])
    out = capsys.readouterr().out
    assert code == 0
    assert float(metric(out, "MAX_REL_ERROR")) <= 1e-8
    assert float(metric(out, "P0_MAX_REL_ERROR")) > float(metric(out, "P10_MAX_REL_ERROR"))


def test_sweep(capsys):
    code = main(["sweep", "--lambdas", "1,2", "--pmax", "3", "--kmax", "3"])
    out = capsys.readouterr().out
    assert code == 0
    assert metric(out, "LAMBDA_0") == "1.0"
    assert metric(out, "LAMBDA_1") == "2.0"
    assert int(metric(out, "LAMBDA_0_ADDITIONAL_REAL_ZERO")) >= int(metric(out, "LAMBDA_1_ADDITIONAL_REAL_ZERO"))
    assert int(metric(out, "LAMBDA_0_ESTIMATED_REAL_ZERO")) >= 0


def test_moments_to_file_and_stdout(tmp_path, capsys):
    target = tmp_path / "moments.txt"
    args = ["--kmax", "2", "--pmax", "1", "--m-max", "2"]
    assert main(["moments", "--out", str(target)] + args) == 0
    assert len(target.read_text().splitlines()) == 8
    capsys.readouterr()
    assert main(["moments"] + args) == 0
    assert capsys.readouterr().out == target.read_text()


def test_missing_input_is_an_io_error(tmp_path, capsys):
    assert main(["stats", "--in", str(tmp_path / "missing.mwxe")]) == 3
    assert "error:" in capsys.readouterr().err


def test_malformed_input_is_an_io_error(tmp_path, capsys):
    path = tmp_path / "bad.mwxe"
    path.write_text("NOT A MATRIX\n")
    assert main(["stats", "--in", str(path)]) == 3
    assert f"{path}:1:" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["build", "--bogus"],
    ["frobnicate"],
    ["build", "--lambda", "1"],
    ["stats"],
    ["potential", "--lambda", "0"],
    ["sweep", "--lambdas", "1,-2"],
    ["build", "--lambda", "-1", "--out", "x"],
    ["build", "--config", "does-not-exist.yml", "--out", "x"],
    ["stats", "--log-level", "LOUD", "--in", "x"],
])
def test_configuration_errors(argv, capsys):
    assert main(argv) == 3


def test_help_and_version(capsys):
    assert main(["--version"]) == 0
    assert "mwxe" in capsys.readouterr().out
    assert main(["build", "--help"]) == 0


def test_nonconvergence_exit_code(tmp_path, capsys):
    code = main(["build", "--lambda", "300", "--pmax", "0", "--kmax", "0", "--m-max", "5", "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert code == 2
    assert "NONCONVERGED level=0 key=0,0,0,0,0 terms=5" in out
    assert not (tmp_path / "level-0.mwxe").exists()


def test_overflow_exit_code(capsys):
    code = main(["validate", "--lambda", "1e160", "--lambda0", "1", "--pmax", "0", "--kmax", "0", "--samples", "1"])
    assert code == 2
    assert "overflowed" in capsys.readouterr().err
