"""Grid evaluation of learned energies and score fields, curl, denoising, writers.

Grids are stored row-major with ``y`` along rows and ``x`` along columns,
``values[j, i]`` sitting at ``(xs[i], ys[j])``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import DimensionError
from .model import NetParams, energy, score, score_of


@dataclass(frozen=True)
class GridGeometry:
    x_min: float = -4.0
    x_max: float = 4.0
    y_min: float = -4.0
    y_max: float = 4.0
    nx: int = 100
    ny: int = 100

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError("grid extent must be increasing")
        if self.nx < 1 or self.ny < 1:
            raise ValueError("grid needs at least one point per axis")

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def ys(self) -> np.ndarray:
        return np.linspace(self.y_min, self.y_max, self.ny)

    @property
    def hx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def hy(self) -> float:
        return (self.y_max - self.y_min) / (self.ny - 1)

    def points(self) -> np.ndarray:
        X, Y = np.meshgrid(self.xs, self.ys)
        return np.stack([X.ravel(), Y.ravel()], axis=1)


@dataclass
class Grid2D:
    geometry: GridGeometry
    values: np.ndarray
    meta: dict = field(default_factory=dict)


@dataclass
class VectorField2D:
    geometry: GridGeometry
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        if self.u.shape != self.v.shape:
            raise DimensionError("field components differ in shape")


def _check_2d(p: NetParams):
    if p.config.input_dim != 2:
        raise DimensionError(f"grid evaluation needs a 2-D model, got d={p.config.input_dim}")


def eval_energy_grid(p: NetParams, geom: GridGeometry) -> tuple[Grid2D, Grid2D]:
    """Energy and display density ``q = exp(-(E - min E))`` on the grid."""
    _check_2d(p)
    e = energy(p, geom.points()).reshape(geom.ny, geom.nx)
    shift = float(e.min())
    q = np.exp(-(e - shift))
    return Grid2D(geom, e), Grid2D(geom, q, {"energy_shift": shift})


def eval_score_grid(p: NetParams, geom: GridGeometry) -> VectorField2D:
    """Score of an energy net, or the raw output of a direct score net."""
    _check_2d(p)
    s = score_of(p, geom.points())
    return VectorField2D(geom, s[:, 0].reshape(geom.ny, geom.nx), s[:, 1].reshape(geom.ny, geom.nx))


def curl_grid(field_: VectorField2D) -> Grid2D:
    """``dv/dx - du/dy`` by central differences on interior points.

    Boundary values are set to 0; ``meta["interior"]`` is the boolean mask of
    points where the curl was actually computed.
    """
    g = field_.geometry
    if g.nx < 3 or g.ny < 3:
        raise ValueError("curl needs at least a 3x3 grid")
    curl = np.zeros_like(field_.u)
    dv_dx = (field_.v[1:-1, 2:] - field_.v[1:-1, :-2]) / (2.0 * g.hx)
    du_dy = (field_.u[2:, 1:-1] - field_.u[:-2, 1:-1]) / (2.0 * g.hy)
    curl[1:-1, 1:-1] = dv_dx - du_dy
    interior = np.zeros(curl.shape, dtype=bool)
    interior[1:-1, 1:-1] = True
    return Grid2D(g, curl, {"interior": interior})


def curl_stats(curl: Grid2D) -> dict:
    vals = np.abs(curl.values[curl.meta["interior"]])
    return {"median_abs": float(np.median(vals)), "max_abs": float(vals.max()),
            "mean_abs": float(vals.mean())}


def ssd_denoise(p: NetParams, xi, sigma_prime: float) -> np.ndarray:
    """Single-step denoising ``xi + sigma'^2 psi(xi)``."""
    xi = np.asarray(xi, dtype=np.float64)
    if sigma_prime == 0:
        return xi.copy()
    return xi + sigma_prime ** 2 * score(p, xi)


# -- writers --------------------------------------------------------------------

def write_grid_csv(grid, path) -> None:
    """``x,y,value`` rows for a Grid2D, ``x,y,u,v`` rows for a VectorField2D."""
    pts = grid.geometry.points()
    if isinstance(grid, VectorField2D):
        header, cols = "x,y,u,v", [grid.u.ravel(), grid.v.ravel()]
    else:
        header, cols = "x,y,value", [grid.values.ravel()]
    table = np.column_stack([pts, *cols])
    if not np.all(np.isfinite(table)):
        raise ValueError("refusing to write non-finite grid values")
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in table:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def pgm_bytes(image) -> tuple[bytes, float, float]:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise DimensionError("PGM images are 2-D")
    if not np.all(np.isfinite(img)):
        raise ValueError("refusing to write non-finite image values")
    lo, hi = float(img.min()), float(img.max())
    if hi > lo:
        pix = np.rint((img - lo) * (255.0 / (hi - lo))).astype(np.uint8)
    else:
        pix = np.zeros(img.shape, dtype=np.uint8)
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pix.tobytes(), lo, hi


def write_pgm(image, path) -> None:
    """Binary PGM with a linear min-max map to 0..255.

    A constant image maps to all zeros.  The mapping constants go to a
    sidecar ``<path>.txt`` so pixel values can be mapped back.
    """
    data, lo, hi = pgm_bytes(image)
    path = Path(path)
    path.write_bytes(data)
    path.with_name(path.name + ".txt").write_text(
        f"min {lo!r}\nmax {hi!r}\nvalue = min + byte * (max - min) / 255\n"
    )


def tile_patches(patches: np.ndarray, height: int, width: int, cols: int = 8, pad: int = 1) -> np.ndarray:
    """Arrange flattened patches in a grid image for viewing."""
    patches = np.atleast_2d(patches)
    n = patches.shape[0]
    rows = -(-n // cols)
    fill = float(patches.min())
    out = np.full((rows * (height + pad) - pad, cols * (width + pad) - pad), fill)
    for k in range(n):
        r, c = divmod(k, cols)
        out[r * (height + pad):r * (height + pad) + height,
            c * (width + pad):c * (width + pad) + width] = patches[k].reshape(height, width)
    return out
