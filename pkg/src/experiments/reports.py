"""CSV/JSON report writers and convergence plots."""
import csv
import json
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


PathLike = Union[str, Path]

REPORT_FIELDS = [
    "method", "sigma", "p", "beta1", "beta2",
    "npm_db", "snr_db", "psnr_db", "ssim", "epi", "runtime_s",
]


def write_rows_csv(rows: Sequence[Mapping[str, Any]], path: PathLike, fieldnames: Optional[List[str]] = None) -> Path:
    """Write report rows; columns default to the union of keys in first-seen order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fieldnames is None:
        fieldnames = []
        for row in rows:
            fieldnames.extend(key for key in row if key not in fieldnames)

    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: "" if row.get(key) is None else row.get(key) for key in fieldnames})
    return path


def write_json(data: Any, path: PathLike) -> Path:
    """json.dump with indent=2."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(data, f, indent=2, default=str)
    return path


def plot_convergence(traces: Dict[str, Sequence[float]], path: PathLike, ylabel: str = "cost", log_scale: bool = True) -> Path:
    """One line per named trace against iteration; written as PNG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    fig, ax = plt.subplots(figsize=(6, 4))
    for label, trace in traces.items():
        values = list(trace)
        if log_scale:
            values = [max(v, 1e-300) for v in values]
        ax.plot(range(len(values)), values, label=label)
    if log_scale:
        ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    if len(traces) > 1:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path
