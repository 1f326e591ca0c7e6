"""Grids, signals, and signal serialization (CSV / PGM)."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Regular grid on the unit interval / unit square.

    ``shape`` is ``(n,)`` for 1D or ``(rows, cols)`` for 2D. Physical
    extents default to 1.0 per axis; pixel i sits at its cell center.
    """

    shape: tuple[int, ...]
    extent: tuple[float, ...] = None  # type: ignore[assignment]

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        if len(shape) not in (1, 2):
            raise ValueError(f"grid must be 1D or 2D, got shape {shape}")
        if any(s <= 0 for s in shape):
            raise ValueError(f"grid shape must be positive, got {shape}")
        extent = self.extent
        if extent is None:
            extent = (1.0,) * len(shape)
        extent = tuple(float(e) for e in extent)
        if len(extent) != len(shape):
            raise ValueError("extent must match grid dimension")
        if any(e <= 0 for e in extent):
            raise ValueError(f"extents must be positive, got {extent}")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "extent", extent)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def cell_widths(self) -> tuple[float, ...]:
        return tuple(e / s for e, s in zip(self.extent, self.shape))

    def cell_centers(self, axis: int = 0) -> np.ndarray:
        """Physical coordinates of cell centers along one axis."""
        n = self.shape[axis]
        h = self.extent[axis] / n
        return (np.arange(n) + 0.5) * h


def grid1d(n: int, extent: float = 1.0) -> Grid:
    return Grid((n,), (extent,))


def grid2d(rows: int, cols: int | None = None, extent: float = 1.0) -> Grid:
    if cols is None:
        cols = rows
    return Grid((rows, cols), (extent, extent))


@dataclass(frozen=True)
class Signal:
    """A real-valued function sampled on a grid, stored as a flat vector."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).reshape(-1).copy()
        if values.size != self.grid.size:
            raise ValueError(
                f"signal length {values.size} != grid size {self.grid.size}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("signal values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def as_image(self) -> np.ndarray:
        """Values reshaped to the grid shape (read-only view)."""
        return self.values.reshape(self.grid.shape)

    def with_values(self, values: np.ndarray) -> "Signal":
        return Signal(self.grid, values)


def as_vector(u) -> np.ndarray:
    """Accept a Signal or array-like, return a flat float64 vector."""
    if isinstance(u, Signal):
        return u.values
    return np.asarray(u, dtype=np.float64).reshape(-1)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

_CSV_HEADER = "rows,cols"


def save_signal_csv(sig: Signal, path) -> None:
    """Write a signal as CSV.

    Format: a literal ``rows,cols`` header line, a ``<rows>,<cols>``
    dimension line, then one value per line in row-major order with full
    float64 precision. 1D signals are written as a single row.
    """
    shape = sig.grid.shape
    rows, cols = (1, shape[0]) if len(shape) == 1 else shape
    lines = [_CSV_HEADER, f"{rows},{cols}"]
    lines.extend(np.format_float_positional(v, unique=True) for v in sig.values)
    Path(path).write_text("\n".join(lines) + "\n")


def load_signal_csv(path) -> Signal:
    """Read a signal written by :func:`save_signal_csv`."""
    text = Path(path).read_text().strip().splitlines()
    if not text or text[0].strip() != _CSV_HEADER:
        raise ValueError(f"{path}: missing '{_CSV_HEADER}' header")
    try:
        rows, cols = (int(t) for t in text[1].split(","))
    except Exception as exc:
        raise ValueError(f"{path}: bad dimension line {text[1]!r}") from exc
    values = np.array([float(t) for t in text[2:]], dtype=np.float64)
    if values.size != rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} values, got {values.size}")
    grid = grid1d(cols) if rows == 1 else grid2d(rows, cols)
    return Signal(grid, values)


def save_signal_pgm(sig: Signal, path) -> None:
    """Write a linearly rescaled P2 PGM image for visual inspection only."""
    img = np.atleast_2d(sig.as_image())
    lo, hi = float(img.min()), float(img.max())
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    pix = np.round((img - lo) * scale).astype(int)
    rows, cols = pix.shape
    lines = ["P2", f"# rescaled from [{lo:g}, {hi:g}]", f"{cols} {rows}", "255"]
    lines.extend(" ".join(str(v) for v in row) for row in pix)
    Path(path).write_text("\n".join(lines) + "\n")
