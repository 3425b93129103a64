"""Batched central finite differences."""
import numpy as np


def central_jacobian(func, X, steps):
    """Jacobian of ``func`` at each row of ``X`` by central differences.

    Parameters
    ----------
    func : callable
        Maps an ``(n, d)`` array to ``(n, m)`` (or ``(n,)`` for scalar outputs).
    X : ndarray, shape (n, d)
    steps : array_like, broadcastable to ``(n, d)``
        Absolute step per sample and variable.

    Returns
    -------
    ndarray, shape (n, m, d)
    """
    X = np.asarray(X, dtype=float)
    steps = np.broadcast_to(np.asarray(steps, dtype=float), X.shape)
    cols = []
    for k in range(X.shape[1]):
        Xp = X.copy()
        Xm = X.copy()
        Xp[:, k] += steps[:, k]
        Xm[:, k] -= steps[:, k]
        # use the actually representable step
        dk = Xp[:, k] - Xm[:, k]
        fp = np.asarray(func(Xp), dtype=float)
        fm = np.asarray(func(Xm), dtype=float)
        if fp.ndim == 1:
            fp, fm = fp[:, None], fm[:, None]
        cols.append((fp - fm) / dk[:, None])
    return np.stack(cols, axis=-1)


def relative_error(approx, exact, scale=None):
    """``|approx - exact| / scale`` with ``scale`` defaulting to ``max(|exact|, tiny)``."""
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    if scale is None:
        scale = np.abs(exact)
    scale = np.maximum(np.asarray(scale, dtype=float), np.finfo(float).tiny)
    return np.abs(approx - exact) / scale
