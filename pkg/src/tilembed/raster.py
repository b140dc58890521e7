"""Multi-band rasters, label grids, tile windows and a synthetic landscape generator.

Pixels are held band-sequential as a ``(bands, height, width)`` float32 array,
which is also the on-disk layout of the T2VR format. Tiles are cut out as
``(s, s, bands)`` arrays indexed ``[row, col, band]``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import BoundsError, ConfigError, FormatError

RASTER_MAGIC = b"T2VR"
LABEL_MAGIC = b"T2VL"
FORMAT_VERSION = 1
DTYPE_FLOAT32 = 1
UNLABELED = 0xFFFF
STD_FLOOR = 1e-6

_RASTER_HEADER = struct.Struct("<4sHBBIII")
_LABEL_HEADER = struct.Struct("<4sHII")


@dataclass(frozen=True, eq=False)
class RasterGrid:
    pixels: np.ndarray
    band_stats: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.ndim != 3 or min(px.shape) < 1:
            raise ConfigError(f"pixels must be (bands, height, width) with all dims >= 1, got {px.shape}")
        if not np.isfinite(px).all():
            raise ConfigError("raster contains non-finite samples")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def bands(self) -> int:
        return self.pixels.shape[0]

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]

    def to_bytes(self) -> bytes:
        header = _RASTER_HEADER.pack(
            RASTER_MAGIC, FORMAT_VERSION, DTYPE_FLOAT32, 0, self.bands, self.height, self.width
        )
        return header + self.pixels.astype("<f4").tobytes(order="C")

    @classmethod
    def from_bytes(cls, data: bytes) -> "RasterGrid":
        if len(data) < _RASTER_HEADER.size:
            raise FormatError(f"header: need {_RASTER_HEADER.size} bytes, file has {len(data)}")
        magic, version, dtype, reserved, bands, height, width = _RASTER_HEADER.unpack_from(data)
        if magic != RASTER_MAGIC:
            raise FormatError(f"magic: expected {RASTER_MAGIC!r}, got {magic!r}")
        if version != FORMAT_VERSION:
            raise FormatError(f"version: unsupported value {version}")
        if dtype != DTYPE_FLOAT32:
            raise FormatError(f"dtype: unsupported code {dtype}")
        if reserved != 0:
            raise FormatError(f"reserved: expected 0, got {reserved}")
        if min(bands, height, width) < 1:
            raise FormatError(f"dimensions: bands={bands} height={height} width={width} must be >= 1")
        expected = bands * height * width * 4
        payload = data[_RASTER_HEADER.size:]
        if len(payload) < expected:
            raise FormatError(
                f"payload: truncated, declared {bands}x{height}x{width} needs {expected} bytes, got {len(payload)}"
            )
        if len(payload) > expected:
            raise FormatError(f"payload: {len(payload) - expected} trailing bytes after declared samples")
        px = np.frombuffer(payload, dtype="<f4").reshape(bands, height, width)
        return cls(px.astype(np.float32))


@dataclass(frozen=True, eq=False)
class LabelGrid:
    classes: np.ndarray

    def __post_init__(self):
        cl = np.asarray(self.classes)
        if cl.ndim != 2 or min(cl.shape) < 1:
            raise ConfigError(f"classes must be (height, width), got {cl.shape}")
        if cl.size and (cl.min() < 0 or cl.max() > UNLABELED):
            raise ConfigError("class ids must lie in [0, 65535]")
        cl = cl.astype(np.uint16)
        cl.setflags(write=False)
        object.__setattr__(self, "classes", cl)

    @property
    def height(self) -> int:
        return self.classes.shape[0]

    @property
    def width(self) -> int:
        return self.classes.shape[1]

    def to_bytes(self) -> bytes:
        header = _LABEL_HEADER.pack(LABEL_MAGIC, FORMAT_VERSION, self.height, self.width)
        return header + self.classes.astype("<u2").tobytes(order="C")

    @classmethod
    def from_bytes(cls, data: bytes) -> "LabelGrid":
        if len(data) < _LABEL_HEADER.size:
            raise FormatError(f"header: need {_LABEL_HEADER.size} bytes, file has {len(data)}")
        magic, version, height, width = _LABEL_HEADER.unpack_from(data)
        if magic != LABEL_MAGIC:
            raise FormatError(f"magic: expected {LABEL_MAGIC!r}, got {magic!r}")
        if version != FORMAT_VERSION:
            raise FormatError(f"version: unsupported value {version}")
        expected = height * width * 2
        payload = data[_LABEL_HEADER.size:]
        if len(payload) != expected:
            raise FormatError(f"payload: declared {height}x{width} needs {expected} bytes, got {len(payload)}")
        return cls(np.frombuffer(payload, dtype="<u2").reshape(height, width))


@dataclass(frozen=True, eq=False)
class Tile:
    samples: np.ndarray
    origin: tuple[int, int]

    @property
    def size(self) -> int:
        return self.samples.shape[0]

    @property
    def bands(self) -> int:
        return self.samples.shape[2]

    def center(self) -> tuple[float, float]:
        half = (self.size - 1) / 2
        return self.origin[0] + half, self.origin[1] + half


@dataclass
class SyntheticSpec:
    """Parameters of a Voronoi landscape.

    ``class_spectra`` may be left as ``None``, in which case per-class band
    means are drawn uniformly from [0, 1) using the generator seed.
    The smoothed illumination field has standard deviation
    ``illumination * noise_sigma``, so a noise-free spec is piecewise constant.
    """

    width: int = 512
    height: int = 512
    bands: int = 4
    num_classes: int = 5
    region_seeds: int = 64
    class_spectra: np.ndarray | None = None
    noise_sigma: float = 0.1
    smooth_sigma: float = 32.0
    illumination: float = 0.25

    def validate(self):
        if self.width < 1 or self.height < 1 or self.bands < 1:
            raise ConfigError("width, height and bands must be >= 1")
        if self.num_classes < 1:
            raise ConfigError("num_classes must be >= 1")
        if self.region_seeds < self.num_classes:
            raise ConfigError("region_seeds must be >= num_classes")
        if self.noise_sigma < 0 or self.smooth_sigma < 0 or self.illumination < 0:
            raise ConfigError("noise_sigma, smooth_sigma and illumination must be >= 0")
        if self.class_spectra is not None:
            spectra = np.asarray(self.class_spectra, dtype=float)
            if spectra.shape != (self.num_classes, self.bands):
                raise ConfigError(
                    f"class_spectra must have shape ({self.num_classes}, {self.bands}), got {spectra.shape}"
                )


def load_raster(path) -> RasterGrid:
    return RasterGrid.from_bytes(Path(path).read_bytes())


def save_raster(grid: RasterGrid, path) -> None:
    Path(path).write_bytes(grid.to_bytes())


def load_labels(path) -> LabelGrid:
    return LabelGrid.from_bytes(Path(path).read_bytes())


def save_labels(labels: LabelGrid, path) -> None:
    Path(path).write_bytes(labels.to_bytes())


def _check_window(width, height, x, y, s):
    if s < 1:
        raise BoundsError(f"tile size must be >= 1, got {s}")
    if x < 0 or y < 0 or x + s > width or y + s > height:
        raise BoundsError(f"window origin=({x}, {y}) size={s} exceeds {width}x{height} grid")


def extract_tile(grid: RasterGrid, x: int, y: int, s: int) -> Tile:
    """Cut the ``s x s`` window whose top-left pixel is ``(x, y)``."""
    _check_window(grid.width, grid.height, x, y, s)
    window = grid.pixels[:, y:y + s, x:x + s]
    return Tile(np.ascontiguousarray(window.transpose(1, 2, 0)), (int(x), int(y)))


def extract_tiles(grid: RasterGrid, origins, s: int) -> np.ndarray:
    """Stack of tiles for an ``(n, 2)`` array of ``(x, y)`` origins, shape ``(n, s, s, bands)``."""
    origins = np.asarray(origins, dtype=np.int64).reshape(-1, 2)
    if len(origins):
        xs, ys = origins[:, 0], origins[:, 1]
        if xs.min() < 0 or ys.min() < 0 or xs.max() + s > grid.width or ys.max() + s > grid.height:
            raise BoundsError(f"some origins place a size-{s} tile outside the {grid.width}x{grid.height} grid")
    windows = np.lib.stride_tricks.sliding_window_view(grid.pixels, (s, s), axis=(1, 2))
    picked = windows[:, origins[:, 1], origins[:, 0]]  # (bands, n, s, s)
    return np.ascontiguousarray(picked.transpose(1, 2, 3, 0))


def tile_label(labels: LabelGrid, x: int, y: int, s: int, purity_threshold: float | None = None):
    """Modal class of a window, or ``None`` when unlabeled or not pure enough.

    Unlabeled pixels never vote. With a threshold the modal class must cover
    strictly more than that fraction of all ``s*s`` pixels. Ties go to the
    lowest class id.
    """
    _check_window(labels.width, labels.height, x, y, s)
    window = labels.classes[y:y + s, x:x + s].ravel()
    window = window[window != UNLABELED]
    if window.size == 0:
        return None
    counts = np.bincount(window)
    mode = int(np.argmax(counts))
    if purity_threshold is not None and counts[mode] / (s * s) <= purity_threshold:
        return None
    return mode


def generate_synthetic(spec: SyntheticSpec, seed: int = 0) -> tuple[RasterGrid, LabelGrid]:
    """Voronoi landscape: piecewise-constant class spectra plus noise and a smooth illumination field.

    The first ``num_classes`` sites cover every class once; the remaining sites
    draw their class uniformly.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    h, w, k = spec.height, spec.width, spec.num_classes

    if spec.class_spectra is None:
        spectra = rng.random((k, spec.bands))
    else:
        spectra = np.asarray(spec.class_spectra, dtype=float)

    sites = np.column_stack([rng.uniform(0, w, spec.region_seeds), rng.uniform(0, h, spec.region_seeds)])
    site_class = np.concatenate([rng.permutation(k), rng.integers(0, k, spec.region_seeds - k)])
    yy, xx = np.mgrid[0:h, 0:w]
    pixel_xy = np.column_stack([xx.ravel() + 0.5, yy.ravel() + 0.5])
    _, nearest = cKDTree(sites).query(pixel_xy)
    classes = site_class[nearest].reshape(h, w)

    pixels = spectra[classes].transpose(2, 0, 1).copy()  # (bands, h, w)
    if spec.noise_sigma > 0:
        pixels += rng.normal(0.0, spec.noise_sigma, size=pixels.shape)
    if spec.smooth_sigma > 0 and spec.illumination > 0 and spec.noise_sigma > 0:
        field_ = ndimage.gaussian_filter(rng.normal(size=(h, w)), spec.smooth_sigma, mode="wrap")
        sd = field_.std()
        if sd > 0:
            pixels += spec.illumination * spec.noise_sigma * (field_ / sd)[None]
    return RasterGrid(pixels.astype(np.float32)), LabelGrid(classes.astype(np.uint16))


def equidistant_spectra(num_classes: int, bands: int, gap: float = 0.5, center: float = 0.5) -> np.ndarray:
    """Class spectra on a regular simplex: every pair of classes is exactly ``gap`` apart.

    Needs ``num_classes <= bands + 1``.
    """
    k = num_classes
    if k < 1 or k > bands + 1:
        raise ConfigError(f"a regular simplex of {k} classes needs 1 <= classes <= bands + 1 = {bands + 1}")
    pts = np.zeros((k, bands))
    if k > 1:
        pts[: k - 1, : k - 1] = np.eye(k - 1)
        # the last vertex sits on the diagonal at distance sqrt(2) from each basis vector
        pts[k - 1, : k - 1] = (1 - np.sqrt(k)) / (k - 1)
    pts -= pts.mean(0)
    return center + pts * (gap / np.sqrt(2))


def min_spectral_gap(spectra) -> float:
    """Smallest Euclidean distance between two class spectra."""
    spectra = np.asarray(spectra, dtype=float)
    if len(spectra) < 2:
        return 0.0
    diff = spectra[:, None, :] - spectra[None, :, :]
    dist = np.sqrt((diff ** 2).sum(-1))
    return float(dist[np.triu_indices(len(spectra), 1)].min())


def normalize_stats(grid: RasterGrid, sample_count: int = 10000, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Per-band mean and standard deviation from ``sample_count`` uniformly drawn pixels.

    When ``sample_count`` covers the whole grid every pixel is used once.
    """
    if sample_count < 1:
        raise ConfigError("sample_count must be >= 1")
    flat = grid.pixels.reshape(grid.bands, -1).astype(np.float64)
    n = flat.shape[1]
    if sample_count >= n:
        picked = flat
    else:
        idx = np.random.default_rng(seed).integers(0, n, sample_count)
        picked = flat[:, idx]
    mean = picked.mean(axis=1)
    std = np.maximum(picked.std(axis=1), STD_FLOOR)
    return mean, std
