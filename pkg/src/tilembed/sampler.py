"""Triplet sampling by spatial proximity.

Each triplet is an anchor tile, a neighbor whose center lies inside the
anchor's Chebyshev box of half-width ``r``, and a distant tile whose center
lies outside it. All tiles in a set share one size, so center offsets and
origin offsets coincide and the geometry is computed on origins.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BoundsError, ConfigError, CoverageError, FormatError, StaleManifestError
from .raster import RasterGrid, Tile, extract_tile, extract_tiles, load_raster

MANIFEST_HEADER = "#t2v-triplets v1"


@dataclass(frozen=True)
class TripletSpec:
    count: int
    tile_size: int
    neighborhood: int | None = 100
    seed: int = 0
    max_rejections: int = 1000

    def __post_init__(self):
        if self.count < 0:
            raise ConfigError("count must be >= 0")
        if self.tile_size < 1:
            raise ConfigError("tile_size must be >= 1")
        if self.neighborhood is not None and self.neighborhood < 1:
            raise ConfigError("neighborhood must be >= 1 or None")
        if self.max_rejections < 1:
            raise ConfigError("max_rejections must be >= 1")


@dataclass(frozen=True, eq=False)
class TileTriplet:
    anchor: Tile
    neighbor: Tile
    distant: Tile


@dataclass(eq=False)
class TripletSet:
    """Triplets stored as an ``(N, 6)`` integer array ``ax, ay, nx, ny, dx, dy``.

    Tiles are cut from ``grid`` on demand; indexing yields :class:`TileTriplet`.
    """

    spec: TripletSpec
    origins: np.ndarray
    grid: RasterGrid
    source: str = ""

    def __len__(self):
        return len(self.origins)

    def __getitem__(self, i) -> TileTriplet:
        ax, ay, nx, ny, dx, dy = (int(v) for v in self.origins[i])
        s = self.spec.tile_size
        return TileTriplet(
            extract_tile(self.grid, ax, ay, s),
            extract_tile(self.grid, nx, ny, s),
            extract_tile(self.grid, dx, dy, s),
        )

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def triplets(self) -> list[TileTriplet]:
        return list(self)

    def tile_origins(self) -> np.ndarray:
        """All tile origins flattened to ``(3N, 2)`` in anchor, neighbor, distant order per triplet."""
        return self.origins.reshape(-1, 2)

    def tiles(self, flat_index) -> np.ndarray:
        """Tile stack for indices into :meth:`tile_origins`."""
        return extract_tiles(self.grid, self.tile_origins()[np.asarray(flat_index)], self.spec.tile_size)


def _max_origin(grid: RasterGrid, s: int) -> tuple[int, int]:
    if s > grid.width or s > grid.height:
        raise BoundsError(f"tile size {s} exceeds {grid.width}x{grid.height} grid")
    return grid.width - s, grid.height - s


def sample_tile(grid: RasterGrid, s: int, rng: np.random.Generator) -> Tile:
    xmax, ymax = _max_origin(grid, s)
    x = int(rng.integers(0, xmax + 1))
    y = int(rng.integers(0, ymax + 1))
    return extract_tile(grid, x, y, s)


def neighborhood_region(anchor: Tile, r: int, grid: RasterGrid) -> tuple[tuple[int, int], tuple[int, int]]:
    """Inclusive origin ranges ``((xlo, xhi), (ylo, yhi))`` of tiles inside the anchor's box."""
    if r < 1:
        raise ConfigError("neighborhood must be >= 1")
    s = anchor.size
    xmax, ymax = _max_origin(grid, s)
    ax, ay = anchor.origin
    return (max(0, ax - r), min(xmax, ax + r)), (max(0, ay - r), min(ymax, ay + r))


def triplet_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for one triplet, keyed on ``(seed, index)``."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def _sample_one(index, seed, xmax, ymax, r, max_rejections):
    rng = triplet_rng(seed, index)
    ax = int(rng.integers(0, xmax + 1))
    ay = int(rng.integers(0, ymax + 1))
    if r is None:
        n = rng.integers(0, [xmax + 1, ymax + 1])
        d = rng.integers(0, [xmax + 1, ymax + 1])
        return ax, ay, int(n[0]), int(n[1]), int(d[0]), int(d[1])

    nx = int(rng.integers(max(0, ax - r), min(xmax, ax + r) + 1))
    ny = int(rng.integers(max(0, ay - r), min(ymax, ay + r) + 1))
    # the exterior is empty when no origin is more than r away along either axis
    if max(ax, xmax - ax, ay, ymax - ay) <= r:
        raise CoverageError(
            f"no tile lies outside the neighborhood of anchor ({ax}, {ay}); use a smaller neighborhood than {r}"
        )
    for _ in range(max_rejections):
        dx = int(rng.integers(0, xmax + 1))
        dy = int(rng.integers(0, ymax + 1))
        if abs(dx - ax) > r or abs(dy - ay) > r:
            return ax, ay, nx, ny, dx, dy
    raise CoverageError(
        f"distant tile rejected {max_rejections} times for anchor ({ax}, {ay}); "
        f"the raster is too small for neighborhood {r}, use a smaller one"
    )


def _sample_range(start, stop, seed, xmax, ymax, r, max_rejections):
    out = np.empty((stop - start, 6), dtype=np.int64)
    for j, i in enumerate(range(start, stop)):
        out[j] = _sample_one(i, seed, xmax, ymax, r, max_rejections)
    return out


def sample_triplets(grid: RasterGrid, spec: TripletSpec, workers: int = 1, source: str = "") -> TripletSet:
    """Draw ``spec.count`` triplets; the result does not depend on ``workers``."""
    xmax, ymax = _max_origin(grid, spec.tile_size)
    args = (spec.seed, xmax, ymax, spec.neighborhood, spec.max_rejections)
    n = spec.count
    if workers <= 1 or n < 2:
        origins = _sample_range(0, n, *args)
    else:
        bounds = np.linspace(0, n, workers + 1).astype(int)
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda lo_hi: _sample_range(lo_hi[0], lo_hi[1], *args), zip(bounds[:-1], bounds[1:])))
        origins = np.concatenate(parts)
    return TripletSet(spec, origins.reshape(n, 6), grid, source)


def raster_checksum(grid: RasterGrid) -> str:
    """SHA-256 of the grid's T2VR encoding, equal to the digest of its saved file."""
    return hashlib.sha256(grid.to_bytes()).hexdigest()


def write_manifest(tset: TripletSet, path) -> None:
    s = tset.spec
    lines = [
        MANIFEST_HEADER,
        f"#raster={tset.source}",
        f"#raster_sha256={raster_checksum(tset.grid)}",
        f"#tile_size={s.tile_size}",
        f"#neighborhood={'none' if s.neighborhood is None else s.neighborhood}",
        f"#seed={s.seed}",
    ]
    lines += [",".join(str(int(v)) for v in row) for row in tset.origins]
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path, grid: RasterGrid | None = None) -> TripletSet:
    """Load a manifest; without ``grid`` the raster named in the header is loaded.

    Raises :class:`StaleManifestError` when the raster digest differs from the recorded one.
    """
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != MANIFEST_HEADER:
        raise FormatError(f"manifest {path}: missing '{MANIFEST_HEADER}' header")
    meta = {}
    rows = []
    for lineno, line in enumerate(text[1:], start=2):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            meta[key] = value
            continue
        parts = line.split(",")
        if len(parts) != 6:
            raise FormatError(f"manifest {path} line {lineno}: expected 6 fields, got {len(parts)}")
        try:
            rows.append([int(p) for p in parts])
        except ValueError:
            raise FormatError(f"manifest {path} line {lineno}: non-integer origin") from None
    for key in ("raster", "raster_sha256", "tile_size", "neighborhood", "seed"):
        if key not in meta:
            raise FormatError(f"manifest {path}: missing #{key} header")

    if grid is None:
        raster_path = Path(meta["raster"])
        if not raster_path.is_absolute():
            raster_path = Path(path).parent / raster_path
        grid = load_raster(raster_path)
    digest = raster_checksum(grid)
    if digest != meta["raster_sha256"]:
        raise StaleManifestError(
            f"manifest {path} was written for raster digest {meta['raster_sha256'][:12]}..., "
            f"current raster is {digest[:12]}..."
        )
    r = None if meta["neighborhood"] == "none" else int(meta["neighborhood"])
    spec = TripletSpec(len(rows), int(meta["tile_size"]), r, int(meta["seed"]))
    origins = np.array(rows, dtype=np.int64).reshape(-1, 6)
    return TripletSet(spec, origins, grid, meta["raster"])
