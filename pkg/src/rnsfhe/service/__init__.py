"""HTTP front end for the query protocol."""

from .app import create_app
from .client import HttpTransport

__all__ = ["create_app", "HttpTransport"]
