"""Structured logging setup."""
import json
import logging
from datetime import datetime, timezone
from typing import Any, Optional


LOGGER_NAME = "bmode"


def setup_logging(level: Optional[str] = None):
    """Configure structured JSON logging."""
    if level is None:
        from src.config.settings import settings
        level = settings.log_level

    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format='%(message)s',
        handlers=[logging.StreamHandler()]
    )


def log_event(event: str, level: str = "info", **fields: Any):
    """
    Log an event with structured data.

    Args:
        event: Event name (e.g. 'msne_finished')
        level: 'debug', 'info' or 'warning'
        **fields: Extra key/value pairs; None values are dropped

    Returns:
        None
    """
    log_data = {
        "timestamp": datetime.now(timezone.utc).replace(tzinfo=None).isoformat() + "Z",
        "event": event,
    }

    for key, value in fields.items():
        if value is None:
            continue
        # numpy scalars are not JSON serializable
        if hasattr(value, "item"):
            value = value.item()
        log_data[key] = value

    logger = logging.getLogger(LOGGER_NAME)
    getattr(logger, level, logger.info)(json.dumps(log_data, default=str))


def log_run(
    command: str,
    runtime_s: float,
    sigma: Optional[float] = None,
    frames: Optional[int] = None,
    npm_db: Optional[float] = None,
    snr_db: Optional[float] = None,
    psnr_db: Optional[float] = None,
    error: Optional[str] = None
):
    """
    Log one pipeline run.

    Args:
        command: CLI command that produced the run
        runtime_s: Wall-clock runtime in seconds
        sigma: Speckle level, if simulated
        frames: Number of frames used
        npm_db: Speckle misalignment (if ground truth available)
        snr_db: SNR against the reference (if available)
        psnr_db: PSNR against the reference (if available)
        error: Error message (if any)
    """
    log_event(
        "run_report",
        level="warning" if error else "info",
        command=command,
        runtime_s=round(runtime_s, 4),
        sigma=sigma,
        frames=frames,
        npm_db=npm_db,
        snr_db=snr_db,
        psnr_db=psnr_db,
        error=error,
    )
