"""Pipeline configuration: defaults < environment < key=value file < CLI flags."""
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Union

from dotenv import dotenv_values
from pydantic import model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from src.deconv.models import DeconvConfig
from src.imagecore.phantom import PhantomSpec
from src.mads.snc import MadsConfig
from src.msne.estimator import MsneConfig
from src.postproc.display import DisplayParams
from src.specklesim.synth import SpeckleParams


class PipelineConfig(BaseSettings):
    """Every tunable of the pipeline, read from BMODE_* environment variables."""

    # Run
    seed: int = 7
    out_dir: str = "runs"
    log_level: str = "INFO"

    # Phantom
    size: int = 256
    contrast_floor: float = 0.01
    peak: float = 700.0

    # Speckle synthesis
    sigma: float = 0.4
    eta: float = 0.5
    frames: int = 10

    # Speckle estimation
    beta1: float = 0.0
    cost_form: Literal["quadratic", "quartic"] = "quadratic"
    step_rule: Literal["normalized", "raw"] = "normalized"
    msne_max_iters: int = 5000
    msne_tol: float = 1e-10
    stall_threshold: float = 0.5

    # Despeckling
    beta2: float = 0.0
    grad_avg: float = 0.7
    mads_max_iters: int = 5000
    mads_tol: float = 1e-10
    denoiser: Literal["none", "hard_threshold"] = "none"
    denoise_level: float = 3.0
    halving_limit: int = 40

    # Deconvolution
    method: Literal["bmcflms", "cepstrum"] = "bmcflms"
    deconv_max_iters: int = 2000
    deconv_tol: float = 1e-8
    axial_blocks: int = 2
    lateral_blocks: int = 1
    axial_psf_length: int = 8
    lateral_psf_length: int = 4
    error_window: Literal["linear", "circular"] = "linear"
    lifter_cutoff: int = 16
    noise_floor: float = 1e-3

    # Display
    gamma: float = 0.97
    wlow: float = 1e-2
    whigh: float = 0.98
    dynamic_range_db: float = 35.0
    display_order: Literal["none", "log-first", "log-last"] = "none"

    # EPI regions as "row,col,height,width;..." (empty: committed reference set)
    rois: str = ""

    model_config = SettingsConfigDict(
        env_prefix="BMODE_",
        case_sensitive=False,
        extra="forbid",
    )

    @model_validator(mode="after")
    def _validate_sections(self):
        # every per-module model validates its own invariants
        self.phantom_spec()
        self.speckle_params()
        self.msne_config()
        self.mads_config()
        self.deconv_config()
        self.display_params()
        self.roi_list()
        return self

    def phantom_spec(self) -> PhantomSpec:
        return PhantomSpec(size=self.size, contrast_floor=self.contrast_floor, peak=self.peak)

    def speckle_params(self) -> SpeckleParams:
        return SpeckleParams(sigma=self.sigma, eta=self.eta, p=self.frames, seed=self.seed)

    def msne_config(self) -> MsneConfig:
        return MsneConfig(
            beta1=self.beta1,
            max_iters=self.msne_max_iters,
            tol=self.msne_tol,
            cost_form=self.cost_form,
            step_rule=self.step_rule,
            halving_limit=self.halving_limit,
            stall_threshold=self.stall_threshold,
        )

    def mads_config(self) -> MadsConfig:
        return MadsConfig(
            beta2=self.beta2,
            grad_avg_weight=self.grad_avg,
            max_iters=self.mads_max_iters,
            tol=self.mads_tol,
            halving_limit=self.halving_limit,
            denoiser=self.denoiser,
            denoise_level=self.denoise_level,
        )

    def deconv_config(self) -> DeconvConfig:
        return DeconvConfig(
            max_iters=self.deconv_max_iters,
            tol=self.deconv_tol,
            axial_blocks=self.axial_blocks,
            lateral_blocks=self.lateral_blocks,
            axial_psf_length=self.axial_psf_length,
            lateral_psf_length=self.lateral_psf_length,
            error_window=self.error_window,
            halving_limit=self.halving_limit,
            lifter_cutoff=self.lifter_cutoff,
            noise_floor=self.noise_floor,
        )

    def display_params(self) -> DisplayParams:
        return DisplayParams(
            gamma=self.gamma,
            w_low=self.wlow,
            w_high=self.whigh,
            dynamic_range_db=self.dynamic_range_db,
        )

    def roi_list(self) -> List[tuple[int, int, int, int]]:
        """Parse the rois string; an empty string yields an empty list."""
        rois = []
        for chunk in filter(None, (part.strip() for part in self.rois.split(";"))):
            values = [v.strip() for v in chunk.split(",")]
            if len(values) != 4:
                raise ValueError(f"ROI '{chunk}' must have four values: row,col,height,width")
            rois.append(tuple(int(v) for v in values))
        return rois

    def to_lines(self) -> List[str]:
        """Sorted key=value lines; the output is itself a loadable config file."""
        return [f"{key}={_format_value(value)}" for key, value in sorted(self.model_dump().items())]


def _format_value(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def normalize_key(key: str) -> str:
    """Config keys are case-insensitive and accept '-' for '_'."""
    return key.strip().lower().replace("-", "_")


def read_config_file(path: Union[str, Path]) -> Dict[str, str]:
    """
    Read a flat key=value file.

    Raises:
        FileNotFoundError: If the file does not exist
        ValueError: On a key without a value or an unknown key
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(
            f"Config file not found: {path}. "
            "Create one with 'bmode print-config > run.cfg'."
        )

    values: Dict[str, str] = {}
    for key, value in dotenv_values(path).items():
        if value is None:
            raise ValueError(f"Config key '{key}' in {path} has no value")
        values[normalize_key(key)] = value

    unknown = sorted(set(values) - set(PipelineConfig.model_fields))
    if unknown:
        raise ValueError(f"Unknown config keys in {path}: {', '.join(unknown)}")
    return values


def load_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> PipelineConfig:
    """
    Resolve the configuration.

    Args:
        path: Optional key=value file
        overrides: CLI values; None entries are ignored

    Returns:
        Validated PipelineConfig
    """
    values: Dict[str, Any] = read_config_file(path) if path else {}
    for key, value in (overrides or {}).items():
        if value is not None:
            values[normalize_key(key)] = value
    return PipelineConfig(**values)


# Global settings instance
settings = PipelineConfig()
