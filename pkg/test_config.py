"""Tests for settings, run profiles and the reference sparsity tables."""
import pytest
from pydantic import ValidationError

from src.cli import load_run_profile, make_run_config, reference_context
from src.config import Settings, settings
from src.reference_tables import load_reference_tables


@pytest.fixture
def reference():
    return load_reference_tables(settings.reference_tables_file)


def stats_with(real_nonzero=0, imag_nonzero=0, additional_real_zero=0, additional_imag_zero=0):
    return {"real_nonzero": real_nonzero, "imag_nonzero": imag_nonzero,
            "additional_real_zero": additional_real_zero, "additional_imag_zero": additional_imag_zero}


class TestSettings:
    def test_defaults(self):
        fresh = Settings()
        assert fresh.eps_a == 1e-16 and fresh.eps_r == 1e-16
        assert fresh.eps_sparsity == 2.220446049250313e-16
        assert fresh.m_max == 512
        assert fresh.quad_rule_order == 10

    def test_environment_override(self, monkeypatch):
        monkeypatch.setenv("MWXE_M_MAX", "64")
        monkeypatch.setenv("MWXE_EPS_A", "1e-12")
        fresh = Settings()
        assert fresh.m_max == 64
        assert fresh.eps_a == 1e-12

    def test_log_level_is_normalized(self):
        assert Settings(log_level="debug").log_level == "DEBUG"
        with pytest.raises(ValidationError):
            Settings(log_level="loud")

    @pytest.mark.parametrize("field,value", [
        ("eps_a", 0.0), ("eps_r", 1.5), ("quad_rule_order", 4), ("workers", 0), ("m_max", 0),
        ("validate_threshold", 0.0),
    ])
    def test_invalid_values(self, field, value):
        with pytest.raises(ValidationError):
            Settings(**{field: value})

    def test_version_from_file(self, monkeypatch):
        monkeypatch.delenv("APP_VERSION", raising=False)
        assert Settings().app_version == "0.1.1"
        monkeypatch.setenv("APP_VERSION", "9.9.9")
        assert Settings().app_version == "9.9.9"


class TestReferenceTables:
    def test_published_counts(self, reference):
        assert reference.total == 87846
        assert (reference.admissible_real, reference.admissible_imag) == (12186, 8450)
        assert (reference.laplace_real, reference.laplace_imag) == (1512, 1001)
        assert reference.row_for(10.0).additional_real_zero == 4630
        assert reference.row_for(300.0).additional_imag_zero == 824
        assert reference.row_for(3.0) is None
        assert reference.matches(10, 10)
        assert not reference.matches(10, 10, level=1)
        assert not reference.matches(8, 10)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_reference_tables(tmp_path / "missing.yml")

    @pytest.mark.parametrize("text", [
        "",
        "- just\n- a list\n",
        "other: 1\n",
        "sparsity: [unclosed\n",
        "sparsity:\n  p_max: 10\n",
    ])
    def test_invalid_files(self, tmp_path, text):
        path = tmp_path / "tables.yml"
        path.write_text(text)
        with pytest.raises(ValueError):
            load_reference_tables(path)

    def test_inconsistent_counts(self, tmp_path):
        path = tmp_path / "tables.yml"
        path.write_text(
            "sparsity:\n  p_max: 1\n  k_max: 1\n  total: 24\n  admissible_real: 5\n  admissible_imag: 3\n"
            "  laplace_real: 6\n  laplace_imag: 1\n  additional_zeros:\n    1: {real: 9, imag: 1}\n"
            "    1.0: {real: 1, imag: 1}\n"
        )
        with pytest.raises(ValueError) as excinfo:
            load_reference_tables(path)
        message = str(excinfo.value)
        assert "lambda=0 counts exceed" in message
        assert "duplicate row" in message
        assert "exceeds admissible" in message


class TestRunProfiles:
    def test_load_profile(self, tmp_path):
        path = tmp_path / "run.yml"
        path.write_text("lambda: 2.0\nlevels: 3\n")
        assert load_run_profile(path) == {"lambda": 2.0, "levels": 3}

    def test_empty_profile(self, tmp_path):
        path = tmp_path / "run.yml"
        path.write_text("")
        assert load_run_profile(path) == {}

    def test_profile_errors(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_run_profile(tmp_path / "missing.yml")
        path = tmp_path / "run.yml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(ValueError):
            load_run_profile(path)
        path.write_text("levels: [1\n")
        with pytest.raises(ValueError):
            load_run_profile(path)

    def test_lambda0_defaults(self):
        assert make_run_config("build", out="x", lambda_=2.0).lambda0 == 2.0
        assert make_run_config("build", out="x", lambda_=0.0).lambda0 == 1.0
        assert make_run_config("build", out="x", lambda_=2.0, lambda0=0.5).lambda0 == 0.5

    def test_overrides_layer_over_profile(self):
        config = make_run_config("build", {"levels": 3, "out": "a", "lambda": 4.0}, levels=None, out="b")
        assert config.levels == 3
        assert str(config.out) == "b"
        assert config.lambda_ == 4.0

    def test_unknown_profile_key(self):
        with pytest.raises(ValueError):
            make_run_config("build", {"out": "x", "colour": "blue"})

    def test_command_requirements(self):
        with pytest.raises(ValueError, match="--out"):
            make_run_config("build")
        with pytest.raises(ValueError, match="--in"):
            make_run_config("stats")
        with pytest.raises(ValueError, match="lambda > 0"):
            make_run_config("potential")
        with pytest.raises(ValueError):
            make_run_config("sweep", lambdas=[1.0, -1.0])
        with pytest.raises(ValueError):
            make_run_config("validate", samples=-1)

    def test_derived_parameters(self):
        config = make_run_config("validate", lambda_=3.0, eps_a=1e-14, m_max=40, quad_max_depth=2)
        params = config.series_params(1.5)
        assert params.lambda_n == 1.5 and params.lambda0 == 3.0
        assert params.eps_a == 1e-14 and params.m_max == 40
        assert config.series_params().lambda_n == 3.0
        assert config.quadrature_spec().max_subdivision_depth == 2


class TestReferenceContext:
    def test_laplace_comparison(self, reference):
        context = reference_context(reference, stats_with(1510, 1001), 0, 0.0, 10, 10)
        assert context["key"] == "NONZERO"
        assert (context["delta_real"], context["delta_imag"]) == (-2, 0)

    def test_additional_zero_comparison(self, reference):
        context = reference_context(reference, stats_with(additional_real_zero=4640, additional_imag_zero=3200),
                                    0, 10.0, 10, 10)
        assert context["key"] == "ADDITIONAL_ZERO"
        assert (context["real"], context["imag"]) == (4630, 3203)
        assert (context["delta_real"], context["delta_imag"]) == (10, -3)
        assert context["what"].startswith("measured")

    def test_estimate_is_preferred_when_present(self, reference):
        report = stats_with(additional_real_zero=3761, additional_imag_zero=2593)
        report.update(estimated_real_zero=4653, estimated_imag_zero=3210)
        context = reference_context(reference, report, 0, 10.0, 10, 10)
        assert context["what"].startswith("estimated")
        assert (context["delta_real"], context["delta_imag"]) == (23, 7)

    def test_no_comparison(self, reference):
        assert reference_context(reference, stats_with(), 0, 3.0, 10, 10) is None
        assert reference_context(reference, stats_with(), 1, 10.0, 10, 10) is None
        assert reference_context(reference, stats_with(), 0, 10.0, 4, 4) is None
        assert reference_context(None, stats_with(), 0, 10.0, 10, 10) is None
