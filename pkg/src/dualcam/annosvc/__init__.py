"""Human-in-the-loop review service for the dataset manifest."""

from .app import create_app
from .masks import rasterize_polygons

__all__ = ["create_app", "rasterize_polygons"]
