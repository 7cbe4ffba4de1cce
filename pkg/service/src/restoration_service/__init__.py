"""Reference restoration and embedding microservice."""

from .app import app, create_app

__all__ = ["app", "create_app"]
