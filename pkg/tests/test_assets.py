from __future__ import annotations

import threading
import time

import pytest

from evalgrid.assets import AssetCache, sha256_hex
from evalgrid.errors import ChecksumMismatch, FetchError


class CountingFetcher:
    """Serves canned bytes and records how often each URL is really fetched."""

    def __init__(self, contents, delay=0.0):
        self.contents = dict(contents)
        self.delay = delay
        self.calls = []
        self._lock = threading.Lock()

    def __call__(self, url: str) -> bytes:
        with self._lock:
            self.calls.append(url)
        if self.delay:
            time.sleep(self.delay)
        if url not in self.contents:
            raise FetchError(f"no such asset {url}")
        return self.contents[url]


def test_fetch_caches_and_counts(tmp_path):
    fetcher = CountingFetcher({"u://a": b"alpha", "u://b": b"beta"})
    cache = AssetCache(tmp_path / "cache", fetcher=fetcher)
    p1 = cache.fetch("u://a")
    assert p1.read_bytes() == b"alpha"
    p2 = cache.fetch("u://a")
    assert p1 == p2
    assert cache.fetch_count("u://a") == 1
    cache.fetch("u://b")
    assert fetcher.calls.count("u://a") == 1
    assert fetcher.calls.count("u://b") == 1


def test_distinct_urls_get_distinct_paths(tmp_path):
    cache = AssetCache(tmp_path, fetcher=CountingFetcher({}))
    paths = {cache.path_for(u) for u in
             ["u://a/g.json", "u://b/g.json", "u://a/w.bin", "u://a/g.json?v=2"]}
    assert len(paths) == 4
    # same URL always maps to the same file
    assert cache.path_for("u://a/g.json") == cache.path_for("u://a/g.json")


def test_sixteen_concurrent_fetches_hit_the_source_once(tmp_path):
    fetcher = CountingFetcher({"u://model": b"x" * 4096}, delay=0.05)
    cache = AssetCache(tmp_path, fetcher=fetcher)
    results = []
    errors = []

    def grab():
        try:
            results.append(cache.fetch("u://model").read_bytes())
        except Exception as exc:  # noqa: BLE001
            errors.append(exc)

    threads = [threading.Thread(target=grab) for _ in range(16)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert errors == []
    assert len(results) == 16
    assert all(r == b"x" * 4096 for r in results)
    assert fetcher.calls == ["u://model"]
    assert cache.fetch_count("u://model") == 1


def test_concurrent_different_urls_do_not_serialize(tmp_path):
    contents = {f"u://{i}": bytes([i]) for i in range(8)}
    fetcher = CountingFetcher(contents, delay=0.05)
    cache = AssetCache(tmp_path, fetcher=fetcher)
    threads = [threading.Thread(target=cache.fetch, args=(u,)) for u in contents]
    t0 = time.perf_counter()
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    elapsed = time.perf_counter() - t0
    # 8 independent 50 ms fetches in parallel, nowhere near the serial 400 ms
    assert elapsed < 0.3
    assert len(fetcher.calls) == 8


def test_checksum_accepts_matching_content(tmp_path):
    fetcher = CountingFetcher({"u://a": b"alpha"})
    cache = AssetCache(tmp_path, fetcher=fetcher)
    digest = sha256_hex(b"alpha")
    path = cache.fetch("u://a", checksum=digest)
    assert path.read_bytes() == b"alpha"
    # uppercase digests are fine too
    cache.fetch("u://a", checksum=digest.upper())
    assert cache.fetch_count("u://a") == 1


def test_checksum_invalidates_corrupted_cache(tmp_path):
    fetcher = CountingFetcher({"u://a": b"alpha"})
    cache = AssetCache(tmp_path, fetcher=fetcher)
    path = cache.fetch("u://a")
    path.write_bytes(b"tampered")
    good = sha256_hex(b"alpha")
    refreshed = cache.fetch("u://a", checksum=good)
    assert refreshed.read_bytes() == b"alpha"
    assert cache.fetch_count("u://a") == 2


def test_checksum_mismatch_on_fresh_fetch_caches_nothing(tmp_path):
    fetcher = CountingFetcher({"u://a": b"alpha"})
    cache = AssetCache(tmp_path, fetcher=fetcher)
    with pytest.raises(ChecksumMismatch):
        cache.fetch("u://a", checksum=sha256_hex(b"other"))
    assert not cache.path_for("u://a").exists()
    # a later fetch with the right checksum recovers
    cache.fetch("u://a", checksum=sha256_hex(b"alpha"))
    assert cache.fetch_count("u://a") == 2


def test_unchecked_fetch_trusts_cache(tmp_path):
    fetcher = CountingFetcher({"u://a": b"alpha"})
    cache = AssetCache(tmp_path, fetcher=fetcher)
    path = cache.fetch("u://a")
    path.write_bytes(b"mutated")
    assert cache.fetch("u://a").read_bytes() == b"mutated"
    assert cache.fetch_count("u://a") == 1


def test_evict_forces_refetch(tmp_path):
    fetcher = CountingFetcher({"u://a": b"alpha"})
    cache = AssetCache(tmp_path, fetcher=fetcher)
    cache.fetch("u://a")
    cache.evict("u://a")
    cache.fetch("u://a")
    assert cache.fetch_count("u://a") == 2


def test_clear_empties_cache_dir(tmp_path):
    fetcher = CountingFetcher({"u://a": b"a", "u://b": b"b"})
    cache = AssetCache(tmp_path / "c", fetcher=fetcher)
    cache.fetch("u://a")
    cache.fetch("u://b")
    cache.clear()
    assert list((tmp_path / "c").iterdir()) == []
    assert cache.fetch_count("u://a") == 0


def test_default_fetcher_reads_local_files(tmp_path):
    source = tmp_path / "weights.bin"
    source.write_bytes(b"\x00\x01\x02")
    cache = AssetCache(tmp_path / "cache")
    assert cache.fetch(str(source)).read_bytes() == b"\x00\x01\x02"
    assert cache.fetch(source.as_uri()).read_bytes() == b"\x00\x01\x02"


def test_default_fetcher_failures(tmp_path):
    cache = AssetCache(tmp_path / "cache")
    with pytest.raises(FetchError):
        cache.fetch(str(tmp_path / "missing.bin"))
    with pytest.raises(FetchError):
        cache.fetch("ftp://example.com/asset")
