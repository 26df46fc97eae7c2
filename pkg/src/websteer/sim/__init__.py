"""In-process CDP browser emulator.

Speaks the same JSON-over-WebSocket framing as a Chromium DevTools endpoint
for the command subset the driver issues, over a deterministic DOM engine
and static site map. Used as the offline browser for tests, the acceptance
suite, and `websteer run --sim-site` demos.
"""

from .site import StaticSite
from .server import SimBrowser, serve_sim

__all__ = ["StaticSite", "SimBrowser", "serve_sim"]
