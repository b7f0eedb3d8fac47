"""Preprocessing primitives: consecutive differencing and the patch transform."""

import numpy as np

from .errors import InvalidInput


def diff_frames(frames):
    """Consecutive differences D_t = X_{t+1} - X_t (length n-1)."""
    frames = list(frames)
    if len(frames) < 2:
        raise InvalidInput("differencing needs at least 2 frames")
    return [
        np.asarray(b, dtype=np.float64) - np.asarray(a, dtype=np.float64)
        for a, b in zip(frames, frames[1:])
    ]


def patch_transform(frame, b):
    """Rearrange a p1 x p2 frame into a b^2 x (p1/b * p2/b) matrix.

    Non-overlapping b x b tiles are scanned row-major across the frame; each
    tile is vectorized column-major into one column of the output.
    """
    a = np.asarray(frame, dtype=np.float64)
    if a.ndim != 2:
        raise InvalidInput("frame must be 2-D")
    p1, p2 = a.shape
    if b < 1 or p1 % b or p2 % b:
        raise InvalidInput(
            f"patch side {b} must divide frame dims ({p1}, {p2}); crop the frame first"
        )
    n1, n2 = p1 // b, p2 // b
    out = np.empty((b * b, n1 * n2))
    col = 0
    for i in range(n1):
        for j in range(n2):
            tile = a[i * b : (i + 1) * b, j * b : (j + 1) * b]
            out[:, col] = tile.reshape(-1, order="F")
            col += 1
    return out
