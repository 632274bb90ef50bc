"""Extended-precision helpers built on gmpy2.

At strong driving the populations of adjacent levels differ by ~1e-12 of
their size, so the driving flux w_n (p_{n-1} - p_n) cancels catastrophically
in double precision. The stochastic steady state is therefore carried as
mpfr numbers; every routine that consumes it runs inside ``context()``.
"""

from contextlib import contextmanager

import gmpy2
import numpy as np

PRECISION = 200


@contextmanager
def context(precision=PRECISION):
    with gmpy2.context(gmpy2.get_context(), precision=precision):
        yield


def is_extended(x):
    return isinstance(x, np.ndarray) and x.dtype == object


def to_mpfr(a):
    """Exact conversion of a float array to an object array of mpfr."""
    a = np.asarray(a, dtype=float)
    out = np.empty(a.shape, dtype=object)
    flat = out.reshape(-1)
    for i, v in enumerate(a.reshape(-1)):
        flat[i] = gmpy2.mpfr(float(v), PRECISION)
    return out


def to_float(a):
    return np.array([float(v) for v in np.asarray(a).reshape(-1)]).reshape(np.shape(a))


def log(a):
    return np.array([gmpy2.log(v) for v in a], dtype=object)


def solve(a, b):
    """Gaussian elimination with partial pivoting on object arrays.

    Returns None when a zero pivot is met (singular system).
    """
    a = np.array(a, dtype=object)
    b = np.array(b, dtype=object)
    n = b.size
    with context():
        for k in range(n):
            col = a[k:, k]
            piv = k + max(range(n - k), key=lambda i: abs(col[i]))
            if a[piv, k] == 0:
                return None
            if piv != k:
                a[[k, piv]] = a[[piv, k]]
                b[[k, piv]] = b[[piv, k]]
            # rows with a zero in the pivot column need no update
            rows = [i for i in range(k + 1, n) if a[i, k] != 0]
            if rows:
                f = a[rows, k] / a[k, k]
                a[rows, k:] -= np.outer(f, a[k, k:])
                b[rows] -= f * b[k]
        x = np.empty(n, dtype=object)
        for k in range(n - 1, -1, -1):
            x[k] = (b[k] - np.dot(a[k, k + 1:], x[k + 1:])) / a[k, k]
    return x
