"""HTTP embedding sidecar for the VLCAP pipeline.

Serves multilingual text and image embeddings (mCLIP, AraCLIP, Jina V4,
or a deterministic offline mock) over a small JSON protocol:

- ``POST /v1/embed/text``  ``{"model": m, "texts": [...]}``
- ``POST /v1/embed/image`` ``{"model": m, "image_b64": "..."}``
- ``GET  /healthz``        ``{"status": "ok", "models": [...]}``

Every returned vector is unit-normalized (asserted server-side) and
deterministic per (model, input) within a process.
"""

__version__ = "0.1.0"

from .app import create_app  # noqa: F401
from .models import ModelRegistry, registry_from_env  # noqa: F401
