"""Entry point: ``python -m vlcap_sidecar`` or the ``vlcap-sidecar`` script.

Model list and port come from ``VLCAP_SIDECAR_MODELS`` (comma-separated,
default ``mock``) and ``VLCAP_SIDECAR_PORT`` (default 8901).
"""

import uvicorn

from .app import create_app
from .models import port_from_env


def main() -> None:
    uvicorn.run(create_app(), host="0.0.0.0", port=port_from_env())


if __name__ == "__main__":
    main()
