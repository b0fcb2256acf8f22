"""Frame container and image-sequence I/O."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .errors import FormatError, NoFrames

LUMA = np.array([0.299, 0.587, 0.114])
IMAGE_SUFFIXES = (".png", ".pgm", ".ppm")


@dataclass
class Frame:
    """An image with intensities in [0, 1].

    ``pixels`` is ``(height, width)`` for grayscale or ``(height, width, 3)``
    for RGB. Pixel centers sit at integer coordinates, x right, y down.
    """

    pixels: np.ndarray
    timestamp: int = 0

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim not in (2, 3) or (px.ndim == 3 and px.shape[2] != 3):
            raise FormatError(f"unsupported frame shape {px.shape}")
        if not np.all(np.isfinite(px)):
            raise FormatError("frame contains non-finite values")
        if px.size and (px.min() < 0.0 or px.max() > 1.0):
            raise FormatError("frame values must lie in [0, 1]")
        self.pixels = px

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else 3

    def gray(self) -> "Frame":
        if self.channels == 1:
            return self
        return Frame(np.clip(self.pixels @ LUMA, 0.0, 1.0), self.timestamp)

    def rgb(self) -> "Frame":
        if self.channels == 3:
            return self
        return Frame(np.repeat(self.pixels[:, :, None], 3, axis=2), self.timestamp)


def read_image(path: str | os.PathLike, timestamp: int = 0, gray: bool = True) -> Frame:
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise FormatError(f"cannot read image {path}")
    scale = 65535.0 if img.dtype == np.uint16 else 255.0
    img = img.astype(np.float64) / scale
    if img.ndim == 3:
        img = img[:, :, 2::-1] if img.shape[2] >= 3 else img[:, :, 0]
    frame = Frame(img, timestamp)
    return frame.gray() if gray else frame


def write_image(path: str | os.PathLike, frame: Frame) -> None:
    data = np.round(frame.pixels * 255.0).astype(np.uint8)
    if data.ndim == 3:
        data = np.ascontiguousarray(data[:, :, ::-1])
    if not cv2.imwrite(str(path), data):
        raise FormatError(f"cannot write image {path}")


def list_frames(directory: str | os.PathLike) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise NoFrames(f"input directory {d} does not exist")
    files = sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise NoFrames(f"no PNG/PGM frames in {d}")
    return files


def read_sequence(directory: str | os.PathLike) -> list[Frame]:
    """Load a numbered frame directory as grayscale frames in lexicographic order."""
    return [read_image(p, timestamp=i) for i, p in enumerate(list_frames(directory))]


def write_sequence(directory: str | os.PathLike, frames: list[Frame], suffix: str = ".pgm") -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    width = max(5, len(str(len(frames))))
    paths = []
    for i, f in enumerate(frames):
        p = d / f"frame_{i:0{width}d}{suffix}"
        write_image(p, f)
        paths.append(p)
    return paths
