"""Run the service with uvicorn. Port comes from RESTORATION_SERVICE_PORT
(default 8081), bind host from RESTORATION_SERVICE_HOST (default 127.0.0.1).
"""

import os

import uvicorn


def main() -> None:
    uvicorn.run("restoration_service.app:app",
                host=os.environ.get("RESTORATION_SERVICE_HOST", "127.0.0.1"),
                port=int(os.environ.get("RESTORATION_SERVICE_PORT", "8081")))


if __name__ == "__main__":
    main()
