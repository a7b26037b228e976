"""Metric report model and one-call evaluation."""
from typing import Any, Dict, List, Optional, Sequence

from pydantic import BaseModel, Field

from src.imagecore.image import FrameStack, Image

from .misalignment import npm
from .quality import DB_CAP, DB_FLOOR, epi, psnr, snr, ssim


EPI_DEFINITION = "pearson(laplace3x3(ref), laplace3x3(test)) averaged over ROIs"


class MetricReport(BaseModel):
    """Every index available for one test image."""

    snr_db: Optional[float] = Field(None, ge=DB_FLOOR, le=DB_CAP)
    psnr_db: Optional[float] = Field(None, ge=DB_FLOOR, le=DB_CAP)
    ssim: Optional[float] = Field(None, ge=-1.0, le=1.0)
    epi: Optional[float] = Field(None, ge=-1.0, le=1.0)
    npm_db: Optional[float] = Field(None, ge=DB_FLOOR, le=DB_CAP)
    rois: List[tuple[int, int, int, int]] = Field(default_factory=list)

    def to_row(self) -> Dict[str, Any]:
        """Flat dict for CSV/JSON output (ROIs omitted)."""
        return {
            "snr_db": self.snr_db,
            "psnr_db": self.psnr_db,
            "ssim": self.ssim,
            "epi": self.epi,
            "npm_db": self.npm_db,
        }


def evaluate(
    ref: Optional[Image],
    test: Image,
    rois: Optional[Sequence[Sequence[int]]] = None,
    true_fields: Optional[FrameStack] = None,
    est_fields: Optional[FrameStack] = None,
) -> MetricReport:
    """
    Compute every metric the inputs allow.

    Reference-based indices need `ref`; EPI additionally needs `rois`; NPM
    needs both speckle stacks.
    """
    values: Dict[str, Any] = {}
    roi_list = [tuple(int(v) for v in roi) for roi in (rois or [])]

    if ref is not None:
        values["snr_db"] = snr(ref, test)
        values["psnr_db"] = psnr(ref, test)
        window = min(8, *ref.shape)
        values["ssim"] = ssim(ref, test, window=window)
        if roi_list:
            values["epi"] = epi(ref, test, roi_list)

    if true_fields is not None and est_fields is not None:
        values["npm_db"] = npm(true_fields, est_fields)

    return MetricReport(rois=roi_list, **values)
