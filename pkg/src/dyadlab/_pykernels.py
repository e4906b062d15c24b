"""Pure numpy implementations of the hot kernels (fallback backend)."""

import numpy as np

KIND_ZERO, KIND_HILBERT, KIND_RIESZ, KIND_FRACINT = 0, 1, 2, 3


def _ramp(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)


def truncation_profile(r, delta, R, w, smooth):
    r = np.asarray(r, dtype=np.float64)
    if smooth:
        return _ramp((r - delta) / (w * delta)) * _ramp((R - r) / (w * R))
    return ((r > delta) & (r < R)).astype(np.float64)


def kernel_values(diff, kind, alpha, comp):
    """Kernel at displacement ``diff = x - y`` (last axis is the dimension)."""
    n = diff.shape[-1]
    r = np.sqrt(np.sum(diff * diff, axis=-1))
    out = np.zeros(r.shape)
    nz = r > 0
    if kind == KIND_HILBERT:
        out[nz] = 1.0 / diff[..., 0][nz]
    elif kind == KIND_RIESZ:
        out[nz] = diff[..., comp][nz] / r[nz] ** (n + 1 - alpha)
    elif kind == KIND_FRACINT:
        out[nz] = r[nz] ** (alpha - n)
    return out


def kernel_matrix(xs, ys, kind, alpha, comp, delta, R, w, smooth):
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    out = np.empty((xs.shape[0], ys.shape[0]))
    step = max(1, 4_000_000 // max(1, ys.shape[0] * xs.shape[1]))
    for a in range(0, xs.shape[0], step):
        diff = xs[a : a + step, None, :] - ys[None, :, :]
        r = np.sqrt(np.sum(diff * diff, axis=-1))
        out[a : a + step] = kernel_values(diff, kind, alpha, comp) * truncation_profile(r, delta, R, w, smooth)
    return out


def poisson_sums(centers, sides, ys, masses, alpha, m, reproducing):
    """Poisson integrals of the cubes ``(centers, sides)`` against cell masses.

    ``masses`` is ``(M,)`` or ``(M, p)``; returns ``(K,)`` or ``(K, p)``.
    """
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    sides = np.asarray(sides, dtype=np.float64)
    masses = np.asarray(masses, dtype=np.float64)
    n = ys.shape[1]
    out = np.empty((centers.shape[0],) + masses.shape[1:])
    step = max(1, 4_000_000 // max(1, ys.shape[0] * n))
    for a in range(0, centers.shape[0], step):
        diff = centers[a : a + step, None, :] - ys[None, :, :]
        r = np.sqrt(np.sum(diff * diff, axis=-1))
        ell = sides[a : a + step, None]
        if reproducing:
            vals = (ell / (ell + r) ** 2) ** (n - alpha)
        else:
            vals = ell**m / (ell + r) ** (n + m - alpha)
        out[a : a + step] = vals @ masses
    return out


def frac_potential(xs, ys, masses, alpha):
    """``sum_j |x_i - y_j|**(alpha-n) m_j`` over ``y_j != x_i``."""
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    masses = np.asarray(masses, dtype=np.float64)
    n = ys.shape[1]
    out = np.empty(xs.shape[0])
    step = max(1, 4_000_000 // max(1, ys.shape[0] * n))
    for a in range(0, xs.shape[0], step):
        diff = xs[a : a + step, None, :] - ys[None, :, :]
        r = np.sqrt(np.sum(diff * diff, axis=-1))
        with np.errstate(divide="ignore"):
            k = np.where(r > 0, r ** (alpha - n), 0.0)
        out[a : a + step] = k @ masses
    return out
