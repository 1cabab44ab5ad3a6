"""NumPy implementations of the hot kernels.

Same signatures as the Cython module ``_ckernels``; used when the extension
is not built or when ``LADDERLAB_PURE_PYTHON`` is set.
"""

import numpy as np

_CHUNK = 1 << 16


def hermite_eval(x, y, dy, h):
    """Evaluate an even function tabulated at ``k*h`` by cubic Hermite interpolation.

    Values beyond the end of the table are zero.
    """
    x = np.abs(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    dy = np.asarray(dy, dtype=np.float64)
    last = y.shape[0] - 1
    out = np.zeros_like(x)
    inside = x <= last * h
    xi = x[inside]
    k = np.minimum((xi / h).astype(np.int64), last - 1)
    t = xi / h - k
    t2 = t * t
    t3 = t2 * t
    out[inside] = (
        (2 * t3 - 3 * t2 + 1) * y[k]
        + (t3 - 2 * t2 + t) * h * dy[k]
        + (-2 * t3 + 3 * t2) * y[k + 1]
        + (t3 - t2) * h * dy[k + 1]
    )
    return out


def hermite_sum(x, w, y, dy, h):
    """Return ``sum_i w[i] * psi(x[i])`` with ``psi`` the interpolated table."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    total = 0.0
    for start in range(0, x.shape[0], _CHUNK):
        sl = slice(start, start + _CHUNK)
        total += float(np.dot(w[sl], hermite_eval(x[sl], y, dy, h)))
    return total


def phase_sum(freqs, weights, s):
    """Return ``out[k] = sum_j weights[j] * exp(1j * freqs[j] * s[k])``."""
    freqs = np.asarray(freqs, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    out = np.zeros(s.shape[0], dtype=np.complex128)
    step = max(1, _CHUNK // max(1, s.shape[0]) * 16)
    for start in range(0, freqs.shape[0], step):
        f = freqs[start:start + step]
        w = weights[start:start + step]
        out += w @ np.exp(1j * np.outer(f, s))
    return out
