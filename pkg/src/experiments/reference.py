"""Published reference numbers and the committed EPI ROI set."""
import json
from pathlib import Path
from typing import Any, Dict, List, Optional


def _sigma_key(sigma: float) -> str:
    return f"{float(sigma):g}"


class ReferenceTables:
    """Loads data/reference_tables.json and answers lookups by sigma / frame count."""

    def __init__(self, tables_file: Optional[Path] = None):
        """Initialize reference tables from JSON file."""
        if tables_file is None:
            # Default to data/reference_tables.json relative to project root
            tables_file = Path(__file__).parent.parent.parent / "data" / "reference_tables.json"

        self.tables_file = tables_file
        self.tables: Dict[str, Any] = self._load_tables()

    def _load_tables(self) -> Dict[str, Any]:
        """Load reference data from JSON file."""
        try:
            with open(self.tables_file, 'r') as f:
                return json.load(f)
        except FileNotFoundError:
            raise FileNotFoundError(
                f"Reference table file not found: {self.tables_file}. "
                "Please ensure data/reference_tables.json exists."
            )
        except json.JSONDecodeError as e:
            raise ValueError(f"Invalid JSON in reference tables: {e}")

    @property
    def sigmas(self) -> List[float]:
        return list(self.tables["table2"]["sigmas"])

    @property
    def frame_counts(self) -> List[int]:
        return list(self.tables["table2"]["frames"])

    def paper_npm(self, sigma: float, p: int) -> float:
        """
        Published NPM (dB) for one (sigma, p) cell.

        Raises:
            ValueError: If the (sigma, p) cell is not in the table
        """
        grid = self.tables["table2"]["npm_db"]
        row = grid.get(_sigma_key(sigma))
        if row is None or str(p) not in row:
            raise ValueError(
                f"No NPM reference for sigma={sigma}, p={p}. "
                f"Available sigmas: {', '.join(grid.keys())}; frames: {', '.join(map(str, self.frame_counts))}"
            )
        return float(row[str(p)])

    def paper_runtime(self, p: int) -> Optional[float]:
        """Published estimation runtime for p frames, if listed."""
        value = self.tables["table2"]["runtime_s"].get(str(p))
        return None if value is None else float(value)

    def paper_quality(self, method: str, sigma: float) -> Dict[str, float]:
        """
        Published SNR/PSNR/SSIM/EPI for a method at one noise level.

        Raises:
            ValueError: If the method or sigma is unknown
        """
        methods = self.tables["table3"]
        if method not in methods:
            raise ValueError(f"Method '{method}' not in the quality table. Available methods: {', '.join(methods.keys())}")
        row = methods[method].get(_sigma_key(sigma))
        if row is None:
            raise ValueError(f"No quality entry for {method} at sigma={sigma}")
        return dict(row)

    def has_quality(self, method: str, sigma: float) -> bool:
        """Check if a quality entry exists."""
        try:
            self.paper_quality(method, sigma)
            return True
        except ValueError:
            return False

    def paper_correlation(self, data: str) -> Dict[str, float]:
        """Published axial/lateral correlation energy for 'raw', '1d' or '2d'."""
        table = self.tables["correlation_energy"]
        if data not in table:
            raise ValueError(f"Unknown data kind '{data}'. Available: {', '.join(table.keys())}")
        return dict(table[data])

    @property
    def misconvergence(self) -> Dict[str, float]:
        return dict(self.tables["misconvergence"])

    def rois(self, size: Optional[int] = None) -> List[tuple[int, int, int, int]]:
        """
        Committed EPI ROIs, rescaled from the reference image size to `size`.

        Scaled ROIs keep at least 3x3 pixels and stay inside the image.
        """
        entry = self.tables["epi_rois"]
        base = int(entry["image_size"])
        size = size or base
        factor = size / base
        scaled = []
        for row, col, height, width in entry["rois"]:
            h = max(3, round(height * factor))
            w = max(3, round(width * factor))
            r = min(max(0, round(row * factor)), size - h)
            c = min(max(0, round(col * factor)), size - w)
            scaled.append((r, c, h, w))
        return scaled
