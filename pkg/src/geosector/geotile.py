"""Web-Mercator tile math, dynamic zoom selection, and tile-grid stitching.

Uses the XYZ "slippy" scheme with 256px tiles. Provider URL templates are
configurable so any conformant render or imagery host works; fetches resolve
through the record/replay store for hermetic runs.
"""

from __future__ import annotations

import io
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from PIL import Image

from .replay import FetchError, ReplayMiss, ResponseStore, http_get, resolve_via

logger = logging.getLogger(__name__)

MERCATOR_LAT_LIMIT = 85.0511
MIN_DYNAMIC_ZOOM = 10
MAX_DYNAMIC_ZOOM = 19
DEFAULT_MAX_TILES = 4
DEFAULT_TILE_PX = 256

Bbox = tuple[float, float, float, float]


class MercatorDomainError(ValueError):
    """Latitude outside the Web-Mercator projection range."""


class TileFetchError(RuntimeError):
    def __init__(self, coord: TileCoord, message: str):
        super().__init__(f"tile z={coord.z} x={coord.x} y={coord.y}: {message}")
        self.coord = coord


class CorruptTileError(RuntimeError):
    def __init__(self, coord: TileCoord, message: str):
        super().__init__(f"tile z={coord.z} x={coord.x} y={coord.y}: {message}")
        self.coord = coord


@dataclass(frozen=True)
class TileCoord:
    z: int
    x: int
    y: int

    def __post_init__(self):
        if not 0 <= self.z <= 22:
            raise ValueError(f"zoom out of range: {self.z}")
        limit = 2**self.z
        if not (0 <= self.x < limit and 0 <= self.y < limit):
            raise ValueError(f"tile index out of range for z={self.z}: ({self.x}, {self.y})")


@dataclass(frozen=True)
class TileGrid:
    z: int
    x_min: int
    x_max: int
    y_min: int
    y_max: int
    tile_px: int = DEFAULT_TILE_PX

    def __post_init__(self):
        if self.x_max < self.x_min or self.y_max < self.y_min:
            raise ValueError("empty tile range")

    @property
    def cols(self) -> int:
        return self.x_max - self.x_min + 1

    @property
    def rows(self) -> int:
        return self.y_max - self.y_min + 1

    def tiles(self) -> list[TileCoord]:
        """Row-major, top-left first."""
        return [
            TileCoord(self.z, x, y)
            for y in range(self.y_min, self.y_max + 1)
            for x in range(self.x_min, self.x_max + 1)
        ]


@dataclass(frozen=True)
class TileProvider:
    """One tile host; name doubles as the image provenance label."""

    name: str
    url_template: str
    max_parallel: int = 4
    politeness_delay_ms: int = 0
    attribution: str = ""

    def url_for(self, coord: TileCoord) -> str:
        return self.url_template.format(z=coord.z, x=coord.x, y=coord.y)


@dataclass
class StitchedImage:
    image: Image.Image
    provenance: str
    grid: TileGrid

    @property
    def width(self) -> int:
        return self.image.width

    @property
    def height(self) -> int:
        return self.image.height

    def save(self, path: str | Path) -> None:
        self.image.save(path, format="PNG")


def _validate_lonlat(lon: float, lat: float) -> None:
    if not -180.0 <= lon <= 180.0:
        raise ValueError(f"longitude out of range: {lon}")
    if not abs(lat) < MERCATOR_LAT_LIMIT:
        raise MercatorDomainError(f"latitude outside Mercator range: {lat}")


def lonlat_to_tile(lon: float, lat: float, z: int) -> TileCoord:
    """Tile containing a WGS84 point at zoom z."""
    _validate_lonlat(lon, lat)
    n = 2**z
    x = math.floor((lon + 180.0) / 360.0 * n)
    y = math.floor((1.0 - math.asinh(math.tan(math.radians(lat))) / math.pi) / 2.0 * n)
    # lon=180 and float edge effects land exactly on the grid end; clamp in.
    x = min(max(x, 0), n - 1)
    y = min(max(y, 0), n - 1)
    return TileCoord(z, x, y)


def tile_center(coord: TileCoord) -> tuple[float, float]:
    """WGS84 (lon, lat) of the tile center."""
    n = 2**coord.z
    lon = (coord.x + 0.5) / n * 360.0 - 180.0
    lat = math.degrees(math.atan(math.sinh(math.pi * (1.0 - 2.0 * (coord.y + 0.5) / n))))
    return lon, lat


def _validate_bbox(bbox: Bbox) -> None:
    min_lon, min_lat, max_lon, max_lat = bbox
    if min_lon > max_lon or min_lat > max_lat:
        raise ValueError(f"inverted bbox: {bbox}")
    if not (-180.0 <= min_lon and max_lon <= 180.0 and -90.0 <= min_lat and max_lat <= 90.0):
        raise ValueError(f"bbox outside WGS84 range: {bbox}")


def _clamp_lat(lat: float) -> float:
    limit = MERCATOR_LAT_LIMIT - 1e-7
    return min(max(lat, -limit), limit)


def grid_for(bbox: Bbox, z: int, tile_px: int = DEFAULT_TILE_PX) -> TileGrid:
    """Minimal inclusive tile ranges covering the bbox corners at zoom z.

    Latitudes beyond the Mercator limit are clamped; the grid covers the
    projectable part of the bbox.
    """
    _validate_bbox(bbox)
    min_lon, min_lat, max_lon, max_lat = bbox
    west = lonlat_to_tile(min_lon, _clamp_lat(min_lat), z)
    east = lonlat_to_tile(max_lon, _clamp_lat(max_lat), z)
    # North edge has the smaller y index.
    return TileGrid(
        z=z,
        x_min=west.x,
        x_max=east.x,
        y_min=east.y,
        y_max=west.y,
        tile_px=tile_px,
    )


def dynamic_zoom(
    bbox: Bbox,
    max_tiles: int = DEFAULT_MAX_TILES,
    tile_px: int = DEFAULT_TILE_PX,
) -> int:
    """Largest zoom <= 19 whose covering grid stays within max_tiles per axis.

    Never returns below 10: very large extents are capped rather than rendered
    at continental zooms.
    """
    if max_tiles < 1:
        raise ValueError("max_tiles must be >= 1")
    _validate_bbox(bbox)
    for z in range(MAX_DYNAMIC_ZOOM, MIN_DYNAMIC_ZOOM, -1):
        grid = grid_for(bbox, z, tile_px)
        if grid.cols <= max_tiles and grid.rows <= max_tiles:
            return z
    return MIN_DYNAMIC_ZOOM


def fetch_and_stitch(
    grid: TileGrid,
    provider: TileProvider,
    store: ResponseStore | None = None,
) -> StitchedImage:
    """Fetch every tile in the grid and assemble them row-major into one image."""
    tile_px = grid.tile_px

    def fetch_one(coord: TileCoord) -> tuple[TileCoord, Image.Image]:
        def live() -> bytes:
            if provider.politeness_delay_ms:
                time.sleep(provider.politeness_delay_ms / 1000.0)
            return http_get(provider.url_for(coord))

        parts = ("tile", provider.name, f"{coord.z}/{coord.x}/{coord.y}")
        try:
            data = resolve_via(store, parts, live)
        except (FetchError, ReplayMiss) as exc:
            raise TileFetchError(coord, str(exc)) from exc
        try:
            tile = Image.open(io.BytesIO(data))
            tile.load()
        except Exception as exc:
            raise CorruptTileError(coord, str(exc)) from exc
        return coord, tile

    workers = max(1, provider.max_parallel)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        fetched = list(pool.map(fetch_one, grid.tiles()))

    canvas = Image.new("RGB", (grid.cols * tile_px, grid.rows * tile_px))
    for coord, tile in fetched:
        if tile.size != (tile_px, tile_px):
            tile = tile.resize((tile_px, tile_px))
        canvas.paste(
            tile.convert("RGB"),
            ((coord.x - grid.x_min) * tile_px, (coord.y - grid.y_min) * tile_px),
        )
    return StitchedImage(image=canvas, provenance=provider.name, grid=grid)
