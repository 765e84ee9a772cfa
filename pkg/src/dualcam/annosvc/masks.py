"""Even-odd polygon rasterization for problematic-region masks.

A pixel is inside when a rightward ray from its center (x + 0.5, y + 0.5)
crosses the pooled edge set an odd number of times; overlapping regions
therefore cancel. Mask convention: 0 = valid, 255 = problematic.
"""

from __future__ import annotations

import numpy as np


def rasterize_polygons(
    polygons: list[list[tuple[float, float]]], width: int, height: int
) -> np.ndarray:
    """Rasterize polygons into a (h, w) uint8 mask, 255 inside."""
    mask = np.zeros((height, width), dtype=np.uint8)
    edges = []
    for poly in polygons:
        n = len(poly)
        for i in range(n):
            x1, y1 = poly[i]
            x2, y2 = poly[(i + 1) % n]
            if y1 != y2:  # horizontal edges never cross a horizontal ray
                edges.append((float(x1), float(y1), float(x2), float(y2)))
    if not edges:
        return mask

    ex1 = np.array([e[0] for e in edges])
    ey1 = np.array([e[1] for e in edges])
    ex2 = np.array([e[2] for e in edges])
    ey2 = np.array([e[3] for e in edges])
    px = np.arange(width, dtype=np.float64) + 0.5

    for row in range(height):
        py = row + 0.5
        crossing = (ey1 <= py) != (ey2 <= py)
        if not crossing.any():
            continue
        x_int = ex1[crossing] + (py - ey1[crossing]) * (ex2[crossing] - ex1[crossing]) / (
            ey2[crossing] - ey1[crossing]
        )
        x_int.sort()
        # crossings strictly right of the pixel center
        right = x_int.size - np.searchsorted(x_int, px, side="right")
        mask[row, right % 2 == 1] = 255
    return mask
