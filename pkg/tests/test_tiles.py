import threading

import numpy as np
import pytest
from PIL import Image

from roofsolar import tiles
from roofsolar.errors import ParameterError, ProviderError, TileNotFoundError


def write_tile(path, size=64, seed=0):
    rng = np.random.default_rng(seed)
    rgb = rng.integers(0, 256, (size, size, 3)).astype(np.uint8)
    Image.fromarray(rgb, mode="RGB").save(path)
    return rgb


class CountingStub:
    """Provider stub that counts calls; refuses to simulate HTTP."""

    def __init__(self, rgb):
        self.rgb = rgb
        self.calls = 0

    def fetch(self, req):
        self.calls += 1
        return self.rgb


class TestTileRequest:
    def test_validation(self):
        tiles.TileRequest(28.6, 77.2, 20, 640)
        with pytest.raises(ParameterError):
            tiles.TileRequest(86.0, 0.0)
        with pytest.raises(ParameterError):
            tiles.TileRequest(0.0, 190.0)
        with pytest.raises(ParameterError):
            tiles.TileRequest(0.0, 0.0, zoom=25)
        with pytest.raises(ParameterError):
            tiles.TileRequest(0.0, 0.0, size=32)

    def test_canonical_name(self):
        req = tiles.TileRequest(28.6, 77.2, 20, 640)
        assert tiles.canonical_name(req) == "28.60000_77.20000_z20_s640.png"


class TestFixtureProvider:
    def test_resolves_existing_tile(self, tmp_path):
        req = tiles.TileRequest(28.6, 77.2, 20, 640)
        rgb = write_tile(tmp_path / tiles.canonical_name(req), size=640)
        provider = tiles.FixtureDirectoryProvider(tmp_path)
        got = tiles.fetch(req, provider)
        assert got.shape == (640, 640, 3)
        assert np.array_equal(got, rgb)

    def test_missing_tile_names_expected_file(self, tmp_path):
        provider = tiles.FixtureDirectoryProvider(tmp_path)
        req = tiles.TileRequest(1.0, 2.0, 20, 640)
        with pytest.raises(TileNotFoundError) as err:
            provider.fetch(req)
        assert "1.00000_2.00000_z20_s640.png" in str(err.value)

    def test_missing_directory(self, tmp_path):
        with pytest.raises(ParameterError):
            tiles.FixtureDirectoryProvider(tmp_path / "nope")


class TestUrlProvider:
    def test_template_validation(self):
        with pytest.raises(ParameterError):
            tiles.UrlTemplateProvider("https://x.test/tile?z={zoom}")

    def test_url_formatting(self):
        p = tiles.UrlTemplateProvider(
            "https://x.test/t?lat={lat}&lng={lng}&z={zoom}&s={size}&k={key}", key="K"
        )
        url = p.url_for(tiles.TileRequest(28.6, 77.2, 20, 640))
        assert url == "https://x.test/t?lat=28.60000&lng=77.20000&z=20&s=640&k=K"

    def test_decode_failure_is_provider_error(self, tmp_path):
        bad = tmp_path / "0.00000_0.00000_z20_s640.png"
        bad.write_bytes(b"not a png at all")
        provider = tiles.FixtureDirectoryProvider(tmp_path)
        with pytest.raises(ProviderError):
            provider.fetch(tiles.TileRequest(0.0, 0.0, 20, 640))


class TestCache:
    def test_roundtrip_lossless(self, tmp_path):
        cache = tiles.TileCache(tmp_path / "cache")
        req = tiles.TileRequest(10.0, 20.0, 18, 256)
        rgb = np.random.default_rng(1).integers(0, 256, (256, 256, 3)).astype(np.uint8)
        assert cache.get(req) is None  # cold miss
        cache.put(req, rgb)
        back = cache.get(req)
        assert np.array_equal(back, rgb)

    def test_second_fetch_served_from_cache(self, tmp_path):
        cache = tiles.TileCache(tmp_path / "cache")
        rgb = np.zeros((64, 64, 3), dtype=np.uint8)
        stub = CountingStub(rgb)
        req = tiles.TileRequest(5.0, 6.0, 20, 64)
        tiles.fetch(req, stub, cache)
        tiles.fetch(req, stub, cache)
        assert stub.calls == 1

    def test_unwritable_dir_warns_but_fetch_succeeds(self, tmp_path):
        blocker = tmp_path / "blocked"
        blocker.write_text("a file, not a directory")
        cache = tiles.TileCache(blocker / "sub")
        stub = CountingStub(np.zeros((64, 64, 3), dtype=np.uint8))
        req = tiles.TileRequest(5.0, 6.0, 20, 64)
        with pytest.warns(UserWarning):
            got = tiles.fetch(req, stub, cache)
        assert got.shape == (64, 64, 3)

    def test_concurrent_puts_one_valid_file(self, tmp_path):
        cache = tiles.TileCache(tmp_path / "cache")
        req = tiles.TileRequest(1.0, 1.0, 20, 64)
        rgb = np.full((64, 64, 3), 7, dtype=np.uint8)
        threads = [threading.Thread(target=cache.put, args=(req, rgb)) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        files = list((tmp_path / "cache").iterdir())
        assert len(files) == 1
        assert np.array_equal(cache.get(req), rgb)

    def test_deterministic_fetch(self, tmp_path):
        req = tiles.TileRequest(3.0, 4.0, 19, 128)
        write_tile(tmp_path / tiles.canonical_name(req), size=128, seed=9)
        provider = tiles.FixtureDirectoryProvider(tmp_path)
        a = tiles.fetch(req, provider)
        b = tiles.fetch(req, provider)
        assert np.array_equal(a, b)
