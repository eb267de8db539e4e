"""Local cache for model graphs and weights.

Each URL maps to one file under the cache root. Concurrent requests for the
same URL serialize on a per-URL lock so the underlying fetch happens once;
different URLs do not block each other. A checksum, when given, is verified
against cached copies too, so a corrupted file on disk is invalidated and
refetched instead of being served.
"""

from __future__ import annotations

import hashlib
import os
import re
import threading
import urllib.parse
from collections import Counter
from pathlib import Path
from typing import Callable, Optional

from .errors import ChecksumMismatch, FetchError


def _default_fetcher(url: str) -> bytes:
    parsed = urllib.parse.urlparse(url)
    if parsed.scheme in ("http", "https"):
        import requests

        try:
            resp = requests.get(url, timeout=60)
        except requests.RequestException as exc:
            raise FetchError(f"cannot fetch {url}: {exc}") from exc
        if resp.status_code != 200:
            raise FetchError(f"fetching {url} returned HTTP {resp.status_code}")
        return resp.content
    if parsed.scheme == "file":
        path = urllib.parse.unquote(parsed.path)
    elif parsed.scheme == "":
        path = url
    else:
        raise FetchError(f"unsupported URL scheme {parsed.scheme!r}")
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise FetchError(f"cannot read {path}: {exc}") from exc


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class AssetCache:
    def __init__(self, root: str,
                 fetcher: Optional[Callable[[str], bytes]] = None):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._fetcher = fetcher or _default_fetcher
        self._lock = threading.Lock()
        self._url_locks: dict = {}
        self._fetch_counts: Counter = Counter()

    def _lock_for(self, url: str) -> threading.Lock:
        with self._lock:
            lock = self._url_locks.get(url)
            if lock is None:
                lock = self._url_locks[url] = threading.Lock()
            return lock

    def path_for(self, url: str) -> Path:
        tail = urllib.parse.urlparse(url).path.rsplit("/", 1)[-1]
        tail = re.sub(r"[^A-Za-z0-9._-]", "_", tail)[-64:] or "asset"
        return self.root / f"{sha256_hex(url.encode())[:16]}-{tail}"

    def fetch_count(self, url: str) -> int:
        with self._lock:
            return self._fetch_counts[url]

    def fetch(self, url: str, checksum: Optional[str] = None) -> Path:
        """Return a local path for the URL, fetching at most once per content.

        checksum is a sha256 hex digest. A cached file failing it is thrown
        away and refetched; a fresh fetch failing it raises ChecksumMismatch
        and caches nothing.
        """
        path = self.path_for(url)
        with self._lock_for(url):
            if path.exists():
                if checksum is None:
                    return path
                if sha256_hex(path.read_bytes()) == checksum.lower():
                    return path
                path.unlink()  # stale or corrupted copy
            data = self._fetcher(url)
            with self._lock:
                self._fetch_counts[url] += 1
            if checksum is not None and sha256_hex(data) != checksum.lower():
                raise ChecksumMismatch(
                    f"{url} content hash {sha256_hex(data)[:12]}... does not "
                    f"match expected {checksum[:12]}...")
            tmp = path.with_name(path.name + f".partial-{os.getpid()}-{threading.get_ident()}")
            tmp.write_bytes(data)
            os.replace(tmp, path)
            return path

    def evict(self, url: str) -> None:
        with self._lock_for(url):
            path = self.path_for(url)
            if path.exists():
                path.unlink()

    def clear(self) -> None:
        with self._lock:
            for entry in self.root.iterdir():
                if entry.is_file():
                    entry.unlink()
            self._fetch_counts.clear()
