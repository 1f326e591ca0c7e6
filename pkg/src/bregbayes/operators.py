"""Matrix-free forward operators: blur, Radon, Haar wavelets, restriction.

Every operator carries an explicit adjoint. Adjoints are exact transposes
of the assembled action, so randomized probe tests hold at tight
tolerances rather than only asymptotically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.ndimage import convolve1d

from .grids import Grid


@dataclass(frozen=True)
class LinearOperator:
    """Matrix-free linear map with an explicit adjoint."""

    in_dim: int
    out_dim: int
    apply: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    adjoint_apply: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    name: str = "operator"

    def __post_init__(self):
        if self.in_dim <= 0 or self.out_dim <= 0:
            raise ValueError("operator dimensions must be positive")


def adjoint_probe_error(op: LinearOperator, rng=None, n_probes: int = 20) -> float:
    """Max relative defect of <Ku, v> = <u, K^T v> over random probes."""
    rng = np.random.default_rng(rng)
    worst = 0.0
    for _ in range(n_probes):
        u = rng.standard_normal(op.in_dim)
        v = rng.standard_normal(op.out_dim)
        lhs = float(op.apply(u) @ v)
        rhs = float(u @ op.adjoint_apply(v))
        scale = max(abs(lhs), abs(rhs), 1e-30)
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst


def check_adjoint(op: LinearOperator, rng=None, n_probes: int = 20,
                  tol: float = 1e-10) -> None:
    err = adjoint_probe_error(op, rng, n_probes)
    if err > tol:
        raise AssertionError(f"{op.name}: adjoint probe error {err:.3e} > {tol:g}")


def identity(n: int) -> LinearOperator:
    return LinearOperator(n, n, lambda u: u.copy(), lambda v: v.copy(), "identity")


def from_matrix(a: np.ndarray, name: str = "matrix") -> LinearOperator:
    a = np.asarray(a, dtype=np.float64)
    m, n = a.shape
    return LinearOperator(n, m, lambda u: a @ u, lambda v: a.T @ v, name)


def compose(outer: LinearOperator, inner: LinearOperator) -> LinearOperator:
    """outer after inner: (outer . inner) u = outer(inner(u))."""
    if inner.out_dim != outer.in_dim:
        raise ValueError("composition dimension mismatch")
    return LinearOperator(
        inner.in_dim, outer.out_dim,
        lambda u: outer.apply(inner.apply(u)),
        lambda v: inner.adjoint_apply(outer.adjoint_apply(v)),
        f"{outer.name}.{inner.name}",
    )


def sparse_columns(op: LinearOperator) -> list[tuple[np.ndarray, np.ndarray]]:
    """Column sparsity of K, probed with unit vectors.

    Returns one (indices, values) pair per input coordinate. Used by the
    samplers for incremental residual updates.
    """
    cols = []
    e = np.zeros(op.in_dim)
    for i in range(op.in_dim):
        e[i] = 1.0
        k = op.apply(e)
        e[i] = 0.0
        idx = np.nonzero(k)[0]
        cols.append((idx, k[idx].copy()))
    return cols


# ---------------------------------------------------------------------------
# Gaussian blur
# ---------------------------------------------------------------------------


def _gaussian_kernel(sigma_phys: float, h: float) -> np.ndarray:
    # truncate at 4 sigma, renormalize so constants are preserved exactly
    radius = max(1, int(np.ceil(4.0 * sigma_phys / h)))
    x = np.arange(-radius, radius + 1) * h
    k = np.exp(-0.5 * (x / sigma_phys) ** 2)
    return k / k.sum()


def gaussian_blur(grid: Grid, kernel_sigma: float) -> LinearOperator:
    """Separable Gaussian convolution with reflective boundary handling.

    ``kernel_sigma`` is in physical units of the grid extent. The kernel is
    truncated at 4 sigma and renormalized; with the reflective (half-sample
    symmetric) boundary the resulting matrix is exactly symmetric, so the
    operator is self-adjoint.
    """
    if kernel_sigma <= 0:
        raise ValueError(f"kernel_sigma must be positive, got {kernel_sigma}")
    shape = grid.shape
    widths = grid.cell_widths()
    kernels = [_gaussian_kernel(kernel_sigma, h) for h in widths]

    if grid.dim == 1:
        k0 = kernels[0]

        def apply(u: np.ndarray) -> np.ndarray:
            return convolve1d(u, k0, mode="reflect")
    else:
        k0, k1 = kernels

        def apply(u: np.ndarray) -> np.ndarray:
            img = u.reshape(shape)
            img = convolve1d(img, k0, axis=0, mode="reflect")
            img = convolve1d(img, k1, axis=1, mode="reflect")
            return img.reshape(-1)

    n = grid.size
    return LinearOperator(n, n, apply, apply, f"blur(sigma={kernel_sigma:g})")


# ---------------------------------------------------------------------------
# Radon transform (parallel beam, pixel driven)
# ---------------------------------------------------------------------------


def radon(grid: Grid, num_angles: int, num_bins: int) -> LinearOperator:
    """Parallel-beam projections by pixel-driven linear interpolation.

    Angles are uniform on [0, pi). Each pixel deposits its value times the
    pixel area onto the two detector bins bracketing its projected
    coordinate, so the sum over bins of one angle's projection equals the
    total image mass. The adjoint is the transpose of this assembled
    action (a matching back-projection).
    """
    if grid.dim != 2:
        raise ValueError("radon requires a 2D grid")
    if num_angles <= 0 or num_bins <= 0:
        raise ValueError("need at least one angle and one bin")
    rows, cols = grid.shape
    hy, hx = grid.cell_widths()
    area = hx * hy
    # pixel centers, centered coordinates
    y = (np.arange(rows) + 0.5) * hy - 0.5 * grid.extent[0]
    x = (np.arange(cols) + 0.5) * hx - 0.5 * grid.extent[1]
    xg, yg = np.meshgrid(x, y)
    xg = xg.reshape(-1)
    yg = yg.reshape(-1)

    s_max = 0.5 * float(np.hypot(*grid.extent))
    ds = 2.0 * s_max / num_bins
    angles = np.arange(num_angles) * (np.pi / num_angles)

    plans = []
    for theta in angles:
        s = xg * np.cos(theta) + yg * np.sin(theta)
        g = (s + s_max) / ds - 0.5  # fractional bin index
        i0 = np.floor(g).astype(np.int64)
        w1 = g - i0
        w0 = 1.0 - w1
        m0 = (i0 >= 0) & (i0 < num_bins)
        m1 = (i0 + 1 >= 0) & (i0 + 1 < num_bins)
        plans.append((i0, w0 * area, w1 * area, m0, m1))

    n = grid.size
    out_dim = num_angles * num_bins

    def apply(u: np.ndarray) -> np.ndarray:
        sino = np.empty((num_angles, num_bins))
        for k, (i0, w0, w1, m0, m1) in enumerate(plans):
            row = np.bincount(i0[m0], weights=u[m0] * w0[m0], minlength=num_bins)
            row += np.bincount(i0[m1] + 1, weights=u[m1] * w1[m1], minlength=num_bins)
            sino[k] = row
        return sino.reshape(-1)

    def adjoint_apply(v: np.ndarray) -> np.ndarray:
        sino = v.reshape(num_angles, num_bins)
        out = np.zeros(n)
        for k, (i0, w0, w1, m0, m1) in enumerate(plans):
            out[m0] += sino[k, i0[m0]] * w0[m0]
            out[m1] += sino[k, i0[m1] + 1] * w1[m1]
        return out

    return LinearOperator(n, out_dim, apply, adjoint_apply,
                          f"radon({num_angles}x{num_bins})")


# ---------------------------------------------------------------------------
# Haar wavelet transform
# ---------------------------------------------------------------------------


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


_SQRT2 = np.sqrt(2.0)


def haar_transform(grid: Grid, levels: int | None = None) -> LinearOperator:
    """Orthonormal Haar analysis operator; the adjoint is the synthesis.

    Requires every grid side to be a power of two. Coefficient layout:
    final approximation block first, then detail blocks from coarsest to
    finest (2D: LH, HL, HH per level).
    """
    sides = grid.shape
    for s in sides:
        if not _is_pow2(s):
            raise ValueError(f"grid side {s} is not a power of two")
    max_levels = int(min(np.log2(s) for s in sides))
    if levels is None:
        levels = max_levels
    levels = int(levels)
    if not 1 <= levels <= max_levels:
        raise ValueError(f"levels must be in [1, {max_levels}], got {levels}")
    n = grid.size

    if grid.dim == 1:

        def apply(u: np.ndarray) -> np.ndarray:
            out = u.copy()
            m = n
            for _ in range(levels):
                a = out[:m]
                s = (a[0::2] + a[1::2]) / _SQRT2
                d = (a[0::2] - a[1::2]) / _SQRT2
                out[: m // 2] = s
                out[m // 2 : m] = d
                m //= 2
            return out

        def adjoint_apply(c: np.ndarray) -> np.ndarray:
            out = c.copy()
            m = n >> levels
            for _ in range(levels):
                s = out[:m].copy()
                d = out[m : 2 * m].copy()
                out[0 : 2 * m : 2] = (s + d) / _SQRT2
                out[1 : 2 * m : 2] = (s - d) / _SQRT2
                m *= 2
            return out

    else:
        rows, cols = sides

        def _fwd_step(block: np.ndarray) -> np.ndarray:
            lo = (block[:, 0::2] + block[:, 1::2]) / _SQRT2
            hi = (block[:, 0::2] - block[:, 1::2]) / _SQRT2
            block = np.hstack([lo, hi])
            lo = (block[0::2, :] + block[1::2, :]) / _SQRT2
            hi = (block[0::2, :] - block[1::2, :]) / _SQRT2
            return np.vstack([lo, hi])

        def _inv_step(block: np.ndarray) -> np.ndarray:
            m = block.shape[0] // 2
            out = np.empty_like(block)
            out[0::2, :] = (block[:m, :] + block[m:, :]) / _SQRT2
            out[1::2, :] = (block[:m, :] - block[m:, :]) / _SQRT2
            m = block.shape[1] // 2
            res = np.empty_like(out)
            res[:, 0::2] = (out[:, :m] + out[:, m:]) / _SQRT2
            res[:, 1::2] = (out[:, :m] - out[:, m:]) / _SQRT2
            return res

        def apply(u: np.ndarray) -> np.ndarray:
            img = u.reshape(rows, cols).copy()
            r, c = rows, cols
            for _ in range(levels):
                img[:r, :c] = _fwd_step(img[:r, :c])
                r //= 2
                c //= 2
            return img.reshape(-1)

        def adjoint_apply(coef: np.ndarray) -> np.ndarray:
            img = coef.reshape(rows, cols).copy()
            r = rows >> (levels - 1)
            c = cols >> (levels - 1)
            for _ in range(levels):
                img[:r, :c] = _inv_step(img[:r, :c])
                r *= 2
                c *= 2
            return img.reshape(-1)

    return LinearOperator(n, n, apply, adjoint_apply, f"haar(levels={levels})")


# ---------------------------------------------------------------------------
# restriction / measurement averaging
# ---------------------------------------------------------------------------


def cell_average_restriction(fine: Grid, coarse: Grid) -> LinearOperator:
    """Block cell averaging from a finer grid onto a coarser one.

    Each fine side must be an integer multiple of the matching coarse
    side; constants map to constants.
    """
    if fine.dim != coarse.dim:
        raise ValueError("grids must have the same dimension")
    factors = []
    for nf, nc in zip(fine.shape, coarse.shape):
        if nf % nc != 0:
            raise ValueError(f"fine side {nf} not divisible by coarse side {nc}")
        factors.append(nf // nc)

    if fine.dim == 1:
        (q,) = factors
        nc = coarse.shape[0]

        def apply(u: np.ndarray) -> np.ndarray:
            return u.reshape(nc, q).mean(axis=1)

        def adjoint_apply(v: np.ndarray) -> np.ndarray:
            return np.repeat(v / q, q)

    else:
        qr, qc = factors
        rc, cc = coarse.shape
        rf, cf = fine.shape

        def apply(u: np.ndarray) -> np.ndarray:
            img = u.reshape(rc, qr, cc, qc)
            return img.mean(axis=(1, 3)).reshape(-1)

        def adjoint_apply(v: np.ndarray) -> np.ndarray:
            img = v.reshape(rc, cc) / (qr * qc)
            return np.broadcast_to(
                img[:, None, :, None], (rc, qr, cc, qc)
            ).reshape(rf * cf).copy()

    return LinearOperator(fine.size, coarse.size, apply, adjoint_apply,
                          "cell_average")


def interval_average_1d(fine: Grid, num_intervals: int) -> LinearOperator:
    """Averages of a 1D signal over equidistant intervals (CCD-style pixels).

    Unlike :func:`cell_average_restriction` the interval count need not
    divide the grid size; overlaps are weighted by intersection length.
    """
    if fine.dim != 1:
        raise ValueError("interval_average_1d requires a 1D grid")
    if num_intervals <= 0:
        raise ValueError("need at least one interval")
    n = fine.shape[0]
    ext = fine.extent[0]
    h = ext / n
    width = ext / num_intervals
    # overlap of cell i = [i h, (i+1) h) with interval j = [j w, (j+1) w)
    a = np.empty((num_intervals, n))
    edges = np.arange(n + 1) * h
    for j in range(num_intervals):
        lo, hi = j * width, (j + 1) * width
        overlap = np.minimum(edges[1:], hi) - np.maximum(edges[:-1], lo)
        a[j] = np.clip(overlap, 0.0, None) / width
    return from_matrix(a, f"interval_average({num_intervals})")
