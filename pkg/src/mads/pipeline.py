"""Despeckling stage and the end-to-end MSNE -> SNC -> average pipeline."""
import time
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence

import numpy as np

from src.imagecore.image import Domain, FrameStack, Image
from src.metrics.report import MetricReport, evaluate
from src.msne.estimator import MsneConfig, SpeckleEstimate, estimate_speckle
from src.utils.validators import require_same_shape

from .denoise import hard_threshold_denoise
from .snc import MadsConfig, SncField, estimate_snc


@dataclass
class PipelineResult:
    """Despeckled image plus every intermediate and the run report."""

    image: Image
    speckle: SpeckleEstimate
    snc: SncField
    report: MetricReport
    msne_runtime_s: float
    snc_runtime_s: float
    runtime_s: float

    def to_row(self, msne_cfg: MsneConfig, mads_cfg: MadsConfig, sigma: Optional[float] = None) -> Dict[str, Any]:
        """Report row: sigma, p, beta1, beta2, metrics, runtime_s."""
        row: Dict[str, Any] = {
            "sigma": sigma,
            "p": self.speckle.p,
            "beta1": msne_cfg.beta1,
            "beta2": mads_cfg.beta2,
        }
        row.update(self.report.to_row())
        row["runtime_s"] = round(self.runtime_s, 4)
        return row


def despeckle(stack: FrameStack, snc: SncField, cfg: Optional[MadsConfig] = None) -> Image:
    """
    Apply SNC factors, average frames, optionally denoise, then fix the scale.

    The single global scale makes the output mean equal the mean of the
    stack's temporal-mean image.
    """
    cfg = cfg or MadsConfig()
    h = stack.as_array()
    g = snc.factors.as_array() if isinstance(snc, SncField) else np.asarray(snc, dtype=np.float64)
    require_same_shape(h, g, names=["stack", "snc"])

    average = Image(np.mean(h * g, axis=0), Domain.ESTIMATE)
    if cfg.denoiser == "hard_threshold":
        average = hard_threshold_denoise(average, cfg.denoise_level)

    out_mean = float(np.mean(average.data))
    scale = float(np.mean(h)) / out_mean if out_mean != 0 else 1.0
    return Image(np.clip(average.data * scale, 0.0, None), Domain.ENVELOPE)


def unit_mean(fields: FrameStack) -> FrameStack:
    """Rescale speckle fields so their overall mean is 1."""
    data = fields.as_array()
    mean = float(np.mean(data))
    if mean <= 0:
        raise ValueError(f"Speckle estimate has non-positive mean ({mean:.3g}); cannot fix its scale")
    return FrameStack.from_array(data / mean, Domain.ESTIMATE)


def mads_pipeline(
    stack: FrameStack,
    msne_cfg: Optional[MsneConfig] = None,
    mads_cfg: Optional[MadsConfig] = None,
    reference: Optional[Image] = None,
    truth: Optional[FrameStack] = None,
    rois: Optional[Sequence[Sequence[int]]] = None,
) -> PipelineResult:
    """
    Run speckle estimation, SNC estimation and despeckling.

    Args:
        stack: Envelope-domain FrameStack, p >= 2
        msne_cfg: Speckle estimator settings
        mads_cfg: SNC/despeckle settings
        reference: Clean image for SNR/PSNR/SSIM/EPI
        truth: True speckle fields for NPM
        rois: EPI regions (row, col, height, width)
    """
    msne_cfg = msne_cfg or MsneConfig()
    mads_cfg = mads_cfg or MadsConfig()
    start = time.perf_counter()

    speckle = estimate_speckle(stack, msne_cfg, truth=truth)
    msne_done = time.perf_counter()

    snc = estimate_snc(unit_mean(speckle.fields), mads_cfg)
    snc_done = time.perf_counter()

    image = despeckle(stack, snc, mads_cfg)
    report = evaluate(reference, image, rois, true_fields=truth, est_fields=speckle.fields)
    end = time.perf_counter()

    return PipelineResult(
        image=image,
        speckle=speckle,
        snc=snc,
        report=report,
        msne_runtime_s=msne_done - start,
        snc_runtime_s=snc_done - msne_done,
        runtime_s=end - start,
    )
