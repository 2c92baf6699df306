"""REST service wrapping the probing, auditing, and dominance pipeline."""

from .app import create_app

__all__ = ["create_app"]
