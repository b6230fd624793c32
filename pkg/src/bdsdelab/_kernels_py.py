"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""

from __future__ import annotations

import numpy as np


def _cell(p: np.ndarray, lo: float, hi: float, h: float, n: int):
    s = (np.clip(p, lo, hi) - lo) / h
    i = np.clip(np.floor(s).astype(np.intp), 0, n - 2)
    return i, s - i


def interp_1d(fields: np.ndarray, lo: float, hi: float, h: float, pts: np.ndarray) -> np.ndarray:
    n = fields.shape[1]
    i, w = _cell(pts, lo, hi, h, n)
    return (1.0 - w) * fields[:, i] + w * fields[:, i + 1]


def interp_2d(fields: np.ndarray, lo: float, hi: float, h: float, n: int, pts: np.ndarray) -> np.ndarray:
    i, w0 = _cell(pts[:, 0], lo, hi, h, n)
    j, w1 = _cell(pts[:, 1], lo, hi, h, n)
    base = i * n + j
    low = (1.0 - w1) * fields[:, base] + w1 * fields[:, base + 1]
    high = (1.0 - w1) * fields[:, base + n] + w1 * fields[:, base + n + 1]
    return (1.0 - w0) * low + w0 * high
