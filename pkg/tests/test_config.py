"""Tests for configuration loading."""
import pytest

from src.config.settings import PipelineConfig, load_config, normalize_key, read_config_file


def test_defaults():
    """Test the published defaults."""
    cfg = PipelineConfig()

    assert cfg.size == 256
    assert cfg.sigma == 0.4
    assert cfg.eta == 0.5
    assert cfg.frames == 10
    assert cfg.beta1 == 0.0
    assert cfg.beta2 == 0.0
    assert cfg.grad_avg == 0.7
    assert cfg.gamma == 0.97
    assert cfg.wlow == 1e-2
    assert cfg.whigh == 0.98
    assert cfg.axial_blocks == 2
    assert cfg.lateral_blocks == 1


def test_env_override(monkeypatch):
    """Test BMODE_* environment variables override defaults."""
    monkeypatch.setenv("BMODE_SIGMA", "0.8")
    monkeypatch.setenv("BMODE_FRAMES", "5")

    cfg = PipelineConfig()

    assert cfg.sigma == 0.8
    assert cfg.frames == 5


def test_file_then_cli_precedence(tmp_path, monkeypatch):
    """Test file values beat the environment and CLI values beat the file."""
    monkeypatch.setenv("BMODE_SIGMA", "0.8")
    path = tmp_path / "run.cfg"
    path.write_text("sigma=0.2\nframes=4\n# comment\nGRAD-AVG=0.5\n")

    cfg = load_config(path, {"frames": 6, "beta2": None})

    assert cfg.sigma == 0.2
    assert cfg.frames == 6
    assert cfg.grad_avg == 0.5
    assert cfg.beta2 == 0.0


def test_unknown_key_rejected(tmp_path):
    """Test keys that are not settings raise."""
    path = tmp_path / "run.cfg"
    path.write_text("sigma=0.2\nsigmaa=0.3\n")

    with pytest.raises(ValueError, match="sigmaa"):
        read_config_file(path)


def test_key_without_value_rejected(tmp_path):
    """Test a bare key raises."""
    path = tmp_path / "run.cfg"
    path.write_text("sigma\n")

    with pytest.raises(ValueError, match="no value"):
        read_config_file(path)


def test_missing_file(tmp_path):
    """Test a missing config file raises FileNotFoundError."""
    with pytest.raises(FileNotFoundError, match="print-config"):
        read_config_file(tmp_path / "absent.cfg")


def test_print_config_round_trip(tmp_path):
    """Test to_lines output loads back to the same config."""
    cfg = PipelineConfig(sigma=0.2, rois="0,0,16,16;4,4,8,8", denoiser="hard_threshold")
    path = tmp_path / "dump.cfg"
    path.write_text("\n".join(cfg.to_lines()) + "\n")

    assert load_config(path) == cfg
    assert cfg.to_lines() == sorted(cfg.to_lines())


def test_roi_parsing():
    """Test the ROI string becomes integer rectangles."""
    cfg = PipelineConfig(rois=" 0,0,16,16 ; 4, 4, 8, 8;")

    assert cfg.roi_list() == [(0, 0, 16, 16), (4, 4, 8, 8)]
    assert PipelineConfig().roi_list() == []
    with pytest.raises(ValueError, match="four values"):
        PipelineConfig(rois="0,0,16")


@pytest.mark.parametrize("kwargs", [
    {"frames": 1},
    {"wlow": 0.9, "whigh": 0.5},
    {"size": 4},
    {"beta1": -0.1},
    {"grad_avg": 0.0},
    {"axial_blocks": 0},
])
def test_invalid_sections_rejected(kwargs):
    """Test each per-module invariant surfaces through the pipeline config."""
    with pytest.raises(ValueError):
        PipelineConfig(**kwargs)


def test_section_builders():
    """Test the per-module models carry the flat settings."""
    cfg = PipelineConfig(sigma=0.2, frames=3, beta1=0.1, beta2=0.2, gamma=0.9, lifter_cutoff=8)

    assert cfg.speckle_params().p == 3
    assert cfg.speckle_params().sigma == 0.2
    assert cfg.msne_config().beta1 == 0.1
    assert cfg.mads_config().beta2 == 0.2
    assert cfg.display_params().gamma == 0.9
    assert cfg.deconv_config().lifter_cutoff == 8
    assert cfg.phantom_spec().size == 256
    assert cfg.phantom_spec().peak == 700.0
    assert cfg.msne_config().step_rule == "normalized"
    assert PipelineConfig(step_rule="raw").msne_config().step_rule == "raw"


def test_normalize_key():
    """Test keys are case- and dash-insensitive."""
    assert normalize_key(" Grad-Avg ") == "grad_avg"
