"""Image file I/O: raw little-endian float32, PGM (P5) and PNG."""
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from PIL import Image as PILImage

from .image import Domain, FrameStack, Image


MAGIC = b"MADS"
HEADER_DTYPE = np.dtype("<u4")
DATA_DTYPE = np.dtype("<f4")
HEADER_BYTES = 16

ImageFormat = Literal["raw", "pgm", "png"]
PathLike = Union[str, Path]

_SUFFIX_FORMATS = {".raw": "raw", ".f32": "raw", ".pgm": "pgm", ".png": "png"}


def _resolve_format(path: Path, fmt: Optional[str]) -> str:
    if fmt is None:
        fmt = _SUFFIX_FORMATS.get(path.suffix.lower())
        if fmt is None:
            raise ValueError(
                f"Cannot infer image format from '{path.name}'. "
                f"Supported suffixes: {', '.join(_SUFFIX_FORMATS)}"
            )
    if fmt not in ("raw", "pgm", "png"):
        raise ValueError(f"Unknown image format '{fmt}'. Use one of: raw, pgm, png")
    return fmt


def quantize_8bit(data: np.ndarray) -> np.ndarray:
    """
    Linear min-max quantization to uint8.

    A constant image maps to 255 when its value is positive and to 0
    otherwise.
    """
    arr = np.asarray(data, dtype=np.float64)
    lo, hi = float(arr.min()), float(arr.max())
    if hi == lo:
        fill = 255 if hi > 0 else 0
        return np.full(arr.shape, fill, dtype=np.uint8)
    scaled = (arr - lo) / (hi - lo)
    return np.clip(np.floor(scaled * 255.0), 0, 255).astype(np.uint8)


def _write_raw(image: Image, path: Path):
    header = MAGIC + np.array([image.rows, image.cols, image.domain.code], dtype=HEADER_DTYPE).tobytes()
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(image.data, dtype=DATA_DTYPE).tobytes())


def _read_raw(path: Path) -> Image:
    payload = path.read_bytes()
    if len(payload) < HEADER_BYTES or payload[:4] != MAGIC:
        raise ValueError(f"Malformed raw image header in {path}")

    rows, cols, tag = np.frombuffer(payload[4:HEADER_BYTES], dtype=HEADER_DTYPE)
    body = payload[HEADER_BYTES:]
    expected = int(rows) * int(cols) * DATA_DTYPE.itemsize
    if len(body) != expected:
        raise ValueError(
            f"Dimension mismatch in {path}: header says {rows}x{cols} "
            f"({expected} bytes), file holds {len(body)} bytes"
        )

    data = np.frombuffer(body, dtype=DATA_DTYPE).reshape(int(rows), int(cols))
    return Image(data.astype(np.float64), Domain.from_code(int(tag)))


def write_image(image: Image, path: PathLike, fmt: Optional[ImageFormat] = None):
    """
    Write an image to disk.

    Args:
        image: Image to write
        path: Destination file
        fmt: 'raw', 'pgm' or 'png'; inferred from the suffix when omitted
    """
    path = Path(path)
    fmt = _resolve_format(path, fmt)
    path.parent.mkdir(parents=True, exist_ok=True)

    if fmt == "raw":
        _write_raw(image, path)
        return

    pil_format = "PPM" if fmt == "pgm" else "PNG"
    PILImage.fromarray(quantize_8bit(image.data)).save(path, format=pil_format)


def read_image(path: PathLike, fmt: Optional[ImageFormat] = None) -> Image:
    """
    Read an image from disk.

    8-bit formats come back as envelope-domain images with values 0..255.

    Raises:
        FileNotFoundError: If the file does not exist
        ValueError: On a malformed header or dimension mismatch
    """
    path = Path(path)
    fmt = _resolve_format(path, fmt)
    if not path.exists():
        raise FileNotFoundError(
            f"Image file not found: {path}. "
            "Run 'simulate' first or check the --out-dir you passed."
        )

    if fmt == "raw":
        return _read_raw(path)

    with PILImage.open(path) as pil_image:
        data = np.asarray(pil_image.convert("L"), dtype=np.float64)
    return Image(data, Domain.ENVELOPE)


def write_stack(stack: FrameStack, directory: PathLike, prefix: str = "frame") -> list[Path]:
    """Write every frame as <prefix>_000.raw, <prefix>_001.raw, ..."""
    directory = Path(directory)
    paths = []
    for k, frame in enumerate(stack):
        path = directory / f"{prefix}_{k:03d}.raw"
        write_image(frame, path, "raw")
        paths.append(path)
    return paths


def read_stack(directory: PathLike, prefix: str = "frame") -> FrameStack:
    """Read the frames written by write_stack, in index order."""
    directory = Path(directory)
    paths = sorted(directory.glob(f"{prefix}_[0-9][0-9][0-9].raw"))
    if not paths:
        raise FileNotFoundError(f"No '{prefix}_NNN.raw' files found in {directory}")

    frames = [_read_raw(path) for path in paths]
    return FrameStack(frames, frames[0].domain)
