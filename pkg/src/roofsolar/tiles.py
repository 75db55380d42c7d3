"""Satellite tile acquisition: providers, canonical naming, disk cache.

No vendor SDK; a URL template with {lat} {lng} {zoom} {size} {key}
placeholders reaches any HTTP tile endpoint, and a fixture directory serves
the same contract offline. Tiles are cached on disk under their canonical
filename, written atomically.
"""

from __future__ import annotations

import io
import os
import tempfile
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParameterError, ProviderError, TileNotFoundError, TileTimeoutError

__all__ = [
    "TileRequest",
    "FixtureDirectoryProvider",
    "UrlTemplateProvider",
    "TileCache",
    "canonical_name",
    "fetch",
    "CACHE_ENV",
    "URL_ENV",
    "KEY_ENV",
]

CACHE_ENV = "ROOFSOLAR_CACHE"
URL_ENV = "ROOFSOLAR_TILE_URL"
KEY_ENV = "ROOFSOLAR_TILE_KEY"
DEFAULT_CACHE_DIR = ".roofsolar-cache"


@dataclass(frozen=True)
class TileRequest:
    lat: float
    lng: float
    zoom: int = 20
    size: int = 640

    def __post_init__(self):
        if not abs(self.lat) < 85.05:
            raise ParameterError(f"latitude must satisfy |lat| < 85.05, got {self.lat}")
        if not -180.0 <= self.lng <= 180.0:
            raise ParameterError(f"longitude must be in [-180, 180], got {self.lng}")
        if not 0 <= self.zoom <= 21:
            raise ParameterError(f"zoom must be in [0, 21], got {self.zoom}")
        if not 64 <= self.size <= 2048:
            raise ParameterError(f"size must be in [64, 2048], got {self.size}")


def canonical_name(req: TileRequest) -> str:
    """Stable cache/fixture filename; 5 decimals is about 1.1 m at the equator."""
    return f"{req.lat:.5f}_{req.lng:.5f}_z{req.zoom}_s{req.size}.png"


def _decode_image(data: bytes, origin: str) -> np.ndarray:
    from PIL import Image

    try:
        with Image.open(io.BytesIO(data)) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except Exception as exc:
        raise ProviderError(f"could not decode image from {origin}: {exc}") from exc


class FixtureDirectoryProvider:
    """Serves tiles from pre-rendered files named canonically in a directory."""

    def __init__(self, directory):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise ParameterError(f"fixture directory {self.directory} does not exist")

    def fetch(self, req: TileRequest) -> np.ndarray:
        name = canonical_name(req)
        path = self.directory / name
        if not path.is_file():
            raise TileNotFoundError(f"no fixture tile {name} in {self.directory}")
        return _decode_image(path.read_bytes(), str(path))


class UrlTemplateProvider:
    """One HTTP GET per tile against a parameterized URL."""

    REQUIRED = ("{lat}", "{lng}", "{zoom}")

    def __init__(self, template: str, key: str | None = None, timeout_s: float = 10.0):
        for placeholder in self.REQUIRED:
            if placeholder not in template:
                raise ParameterError(f"url template must contain {placeholder}")
        self.template = template
        self.key = key if key is not None else os.environ.get(KEY_ENV, "")
        self.timeout_s = timeout_s

    def url_for(self, req: TileRequest) -> str:
        return self.template.format(
            lat=f"{req.lat:.5f}",
            lng=f"{req.lng:.5f}",
            zoom=req.zoom,
            size=req.size,
            key=self.key,
        )

    def fetch(self, req: TileRequest) -> np.ndarray:
        import socket
        import urllib.error
        import urllib.request

        url = self.url_for(req)
        try:
            with urllib.request.urlopen(url, timeout=self.timeout_s) as resp:
                status = getattr(resp, "status", 200)
                if status != 200:
                    raise ProviderError(f"provider returned HTTP {status} for {url}")
                data = resp.read()
        except (TimeoutError, socket.timeout) as exc:
            raise TileTimeoutError(f"tile fetch timed out after {self.timeout_s}s") from exc
        except urllib.error.HTTPError as exc:
            raise ProviderError(f"provider returned HTTP {exc.code} for {url}") from exc
        except urllib.error.URLError as exc:
            if isinstance(exc.reason, (TimeoutError, socket.timeout)):
                raise TileTimeoutError(f"tile fetch timed out after {self.timeout_s}s") from exc
            raise ProviderError(f"tile fetch failed: {exc.reason}") from exc
        return _decode_image(data, url)


class TileCache:
    """Content-addressed PNG cache with atomic writes.

    An unwritable directory disables the cache with a warning instead of
    failing the fetch.
    """

    def __init__(self, directory=None):
        if directory is None:
            directory = os.environ.get(CACHE_ENV, DEFAULT_CACHE_DIR)
        self.directory = Path(directory)
        self._disabled = False

    def _ensure_dir(self) -> bool:
        if self._disabled:
            return False
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
            return True
        except OSError as exc:
            warnings.warn(f"tile cache disabled: cannot create {self.directory} ({exc})")
            self._disabled = True
            return False

    def get(self, req: TileRequest) -> np.ndarray | None:
        path = self.directory / canonical_name(req)
        if not path.is_file():
            return None
        return _decode_image(path.read_bytes(), str(path))

    def put(self, req: TileRequest, rgb: np.ndarray) -> None:
        if not self._ensure_dir():
            return
        from PIL import Image

        img = Image.fromarray(np.asarray(rgb, dtype=np.uint8), mode="RGB")
        try:
            fd, tmp = tempfile.mkstemp(suffix=".png.tmp", dir=self.directory)
            try:
                with os.fdopen(fd, "wb") as fh:
                    img.save(fh, format="PNG")
                os.replace(tmp, self.directory / canonical_name(req))
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise
        except OSError as exc:
            warnings.warn(f"tile cache write failed, disabling cache: {exc}")
            self._disabled = True


def fetch(req: TileRequest, provider, cache: TileCache | None = None) -> np.ndarray:
    """Resolve a tile: cache hit, else provider fetch, cached before return."""
    if cache is not None:
        hit = cache.get(req)
        if hit is not None:
            return hit
    rgb = provider.fetch(req)
    if cache is not None:
        cache.put(req, rgb)
    return rgb
