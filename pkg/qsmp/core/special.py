"""Even-function forms of cosh and sinh(x)/x evaluated from x².

Closed forms containing sqrt(d²) with d² of either sign stay real when written
through these helpers: for x² < 0 they turn into cos and sin(x)/x.
"""

from __future__ import annotations

import numpy as np

SERIES_CUTOFF = 1e-4


def cosh_even(x2):
    x2 = np.asarray(x2, dtype=float)
    root = np.sqrt(np.abs(x2))
    out = np.where(x2 >= 0, np.cosh(root), np.cos(root))
    small = np.abs(x2) < SERIES_CUTOFF
    series = 1 + x2 / 2 + x2**2 / 24 + x2**3 / 720 + x2**4 / 40320 + x2**5 / 3628800
    return np.where(small, series, out)


def sinhc_even(x2):
    x2 = np.asarray(x2, dtype=float)
    root = np.sqrt(np.abs(x2))
    safe = np.where(root == 0, 1.0, root)
    out = np.where(x2 >= 0, np.sinh(safe) / safe, np.sin(safe) / safe)
    small = np.abs(x2) < SERIES_CUTOFF
    series = 1 + x2 / 6 + x2**2 / 120 + x2**3 / 5040 + x2**4 / 362880 + x2**5 / 39916800
    return np.where(small, series, out)
