"""Static site map served by the simulator.

A site is an origin plus a path-to-markup table. Navigation to another
origin yields a deterministic placeholder page so cross-origin links do
not require network access.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from urllib.parse import urlsplit

logger = logging.getLogger(__name__)

NOT_FOUND_TEMPLATE = (
    "<html><head><title>404 Not Found</title></head>"
    "<body><h1>404 Not Found</h1><p>No page at {path}</p></body></html>"
)

EXTERNAL_TEMPLATE = (
    "<html><head><title>External: {host}</title></head>"
    "<body><h1>External page</h1><p>Placeholder for {url}</p></body></html>"
)


@dataclass(frozen=True)
class LoadedPage:
    url: str
    status: int
    markup: str


@dataclass
class StaticSite:
    origin: str  # scheme://host, no trailing slash
    pages: dict[str, str] = field(default_factory=dict)
    status_overrides: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        parts = urlsplit(self.origin)
        if parts.scheme not in ("http", "https") or not parts.netloc or parts.path:
            raise ValueError(f"origin must be scheme://host, got {self.origin!r}")

    @classmethod
    def from_directory(cls, directory: str | Path, origin: str) -> "StaticSite":
        directory = Path(directory)
        pages: dict[str, str] = {}
        for path in sorted(directory.glob("*.html")):
            pages["/" + path.name] = path.read_text(encoding="utf-8")
        if "/index.html" in pages:
            pages["/"] = pages["/index.html"]
        if not pages:
            raise ValueError(f"no .html pages under {directory}")
        return cls(origin=origin, pages=pages)

    def with_page(self, path: str, markup: str) -> "StaticSite":
        pages = dict(self.pages)
        pages[path] = markup
        if path == "/index.html":
            pages["/"] = markup
        return StaticSite(self.origin, pages, dict(self.status_overrides))

    def url_for(self, path: str) -> str:
        return self.origin + path

    def load(self, url: str) -> LoadedPage:
        parts = urlsplit(url)
        origin = f"{parts.scheme}://{parts.netloc}"
        if origin != self.origin:
            markup = EXTERNAL_TEMPLATE.format(host=parts.netloc or "unknown", url=url)
            return LoadedPage(url=url, status=200, markup=markup)
        path = parts.path or "/"
        if path in self.pages:
            status = self.status_overrides.get(path, 200)
            return LoadedPage(url=url, status=status, markup=self.pages[path])
        logger.debug("sim 404 for %s", url)
        return LoadedPage(url=url, status=404, markup=NOT_FOUND_TEMPLATE.format(path=path))
