"""Scalar fields on the unit sphere.

The grid is cell centred in colatitude and longitude::

    theta_j = (j + 1/2) * pi / n_theta,   phi_k = 2 pi k / n_phi

so no node sits on a pole of the grid frame.  A rotation ``R`` maps grid
frame coordinates to physical coordinates; it is used to keep marked points
away from the grid poles, where cells degenerate.  Cell areas are exact, so
the weights sum to ``4 pi`` up to rounding.

The Laplace-Beltrami operator is the finite-volume discretization

    (W L f)_jk = sum over the four faces of (flux through the face),

which is symmetric after multiplication by the cell areas ``W``; therefore
``sum(W * L f) == 0`` for every ``f`` (discrete divergence theorem).
"""
from __future__ import annotations

import json
import math
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RectBivariateSpline
from scipy.special import roots_jacobi

__all__ = [
    "SphereGrid",
    "SphereField",
    "ChartView",
    "SingularEvaluationError",
    "ChartRangeError",
    "green",
    "singular_part",
    "laplace_beltrami",
    "quadrature",
    "disk_quadrature",
    "polar_quadrature",
    "chart_frame",
    "sphere_to_chart",
    "chart_to_sphere",
    "to_chart",
    "from_chart",
    "parse_grid",
    "rotation_to_axis",
    "geodesic_distance",
]


class SingularEvaluationError(ValueError):
    """Evaluation requested exactly at a singular point."""


class ChartRangeError(ValueError):
    """Chart radius outside the validity range."""


def parse_grid(text: str) -> tuple[int, int]:
    """Parse ``"NxM"`` as (n_phi, n_theta) = (N, M); returns ``(n_theta, n_phi)``.

    The first number is the longitudinal count, e.g. ``"256x128"`` gives
    128 colatitude rows of 256 cells.
    """
    try:
        a, b = text.lower().split("x")
        n_phi, n_theta = int(a), int(b)
    except ValueError as exc:
        raise ValueError(f"grid must look like 256x128, got {text!r}") from exc
    if n_theta < 4 or n_phi < 4 or n_phi % 2:
        raise ValueError("grid needs n_theta >= 4 and an even n_phi >= 4")
    return n_theta, n_phi


def rotation_to_axis(axis) -> np.ndarray:
    """Rotation matrix whose third column is ``axis`` (maps e_z to ``axis``)."""
    a = np.asarray(axis, float)
    a = a / np.linalg.norm(a)
    trial = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = trial - a * (trial @ a)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(a, e1)
    return np.stack([e1, e2, a], axis=1)


def geodesic_distance(x, p) -> np.ndarray:
    """Great-circle distance between unit vectors (broadcasting over leading axes)."""
    x = np.asarray(x, float)
    p = np.asarray(p, float)
    cross = np.linalg.norm(np.cross(x, p), axis=-1)
    dot = np.sum(x * p, axis=-1)
    return np.arctan2(cross, dot)


class SphereGrid:
    """Equiangular cell-centred colatitude-longitude grid.

    Parameters
    ----------
    n_theta, n_phi : int
        Number of colatitude rows and longitude columns (``n_phi`` even).
    rotation : (3, 3) array, optional
        Orthogonal matrix taking grid-frame vectors to physical vectors.
    """

    def __init__(self, n_theta: int, n_phi: int, rotation=None):
        if n_phi % 2:
            raise ValueError("n_phi must be even (antipodal symmetry, pole ghosts)")
        self.n_theta = int(n_theta)
        self.n_phi = int(n_phi)
        self.rotation = np.eye(3) if rotation is None else np.asarray(rotation, float)
        if not np.allclose(self.rotation @ self.rotation.T, np.eye(3), atol=1e-12):
            raise ValueError("rotation must be orthogonal")
        self.dtheta = math.pi / self.n_theta
        self.dphi = 2 * math.pi / self.n_phi
        self.theta = (np.arange(self.n_theta) + 0.5) * self.dtheta
        self.phi = np.arange(self.n_phi) * self.dphi
        faces = np.arange(self.n_theta + 1) * self.dtheta
        row_area = self.dphi * (np.cos(faces[:-1]) - np.cos(faces[1:]))
        self.weights = np.repeat(row_area[:, None], self.n_phi, axis=1)
        st, ct = np.sin(self.theta), np.cos(self.theta)
        local = np.stack([st[:, None] * np.cos(self.phi)[None, :],
                          st[:, None] * np.sin(self.phi)[None, :],
                          np.repeat(ct[:, None], self.n_phi, axis=1)], axis=-1)
        self.nodes = local @ self.rotation.T
        self._lap = None

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_theta, self.n_phi)

    @property
    def h(self) -> float:
        """Colatitude spacing, the grid's nominal resolution."""
        return self.dtheta

    @property
    def poles(self) -> np.ndarray:
        return np.stack([self.rotation[:, 2], -self.rotation[:, 2]])

    def __repr__(self) -> str:
        return f"SphereGrid({self.n_theta}x{self.n_phi})"

    def same_as(self, other: "SphereGrid") -> bool:
        return (self.shape == other.shape and np.array_equal(self.rotation, other.rotation))

    @classmethod
    def from_string(cls, text: str, rotation=None) -> "SphereGrid":
        return cls(*parse_grid(text), rotation=rotation)

    @classmethod
    def avoiding(cls, n_theta: int, n_phi: int, points, clearance: float | None = None
                 ) -> "SphereGrid":
        """Grid whose poles stay at least ``clearance`` from every point.

        The identity frame is kept when it already qualifies; otherwise the
        polar axis maximizing the clearance over a deterministic candidate
        set is used.  Default clearance is ``16 * pi / n_theta``.
        """
        pts = np.asarray(points, float).reshape(-1, 3)
        need = 16 * math.pi / n_theta if clearance is None else clearance

        def gap(axis):
            if len(pts) == 0:
                return math.pi
            return float(np.min(np.arccos(np.clip(np.abs(pts @ axis), -1, 1))))

        ez = np.array([0.0, 0.0, 1.0])
        if gap(ez) >= need:
            return cls(n_theta, n_phi)
        k = np.arange(400) + 0.5
        zc = 1 - k / 400  # upper hemisphere suffices (axis and its antipode)
        rc = np.sqrt(1 - zc * zc)
        ang = math.pi * (3 - math.sqrt(5)) * k
        cands = np.stack([rc * np.cos(ang), rc * np.sin(ang), zc], axis=1)
        best = max(cands, key=gap)
        return cls(n_theta, n_phi, rotation=rotation_to_axis(best))

    def pole_clearance(self, points) -> float:
        pts = np.asarray(points, float).reshape(-1, 3)
        if len(pts) == 0:
            return math.pi
        return float(np.min(np.arccos(np.clip(np.abs(pts @ self.rotation[:, 2]), -1, 1))))

    # coordinates ----------------------------------------------------------
    def to_local(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Grid-frame colatitude and longitude of physical points."""
        loc = np.asarray(points, float) @ self.rotation
        th = np.arccos(np.clip(loc[..., 2], -1.0, 1.0))
        ph = np.mod(np.arctan2(loc[..., 1], loc[..., 0]), 2 * math.pi)
        return th, ph

    def frame_vectors(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Physical unit vectors e_theta, e_phi at ``points``."""
        th, ph = self.to_local(points)
        e_th = np.stack([np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), -np.sin(th)], -1)
        e_ph = np.stack([-np.sin(ph), np.cos(ph), np.zeros_like(ph)], -1)
        return e_th @ self.rotation.T, e_ph @ self.rotation.T

    # operator -------------------------------------------------------------
    def _coefficients(self, dtype=np.float64):
        dth = dtype(math.pi) / self.n_theta
        dph = 2 * dtype(math.pi) / self.n_phi
        faces = np.arange(self.n_theta + 1, dtype=dtype) * dth
        centers = (np.arange(self.n_theta, dtype=dtype) + dtype(0.5)) * dth
        area = (dph * (np.cos(faces[:-1]) - np.cos(faces[1:])))[:, None]
        radial = (dph * np.sin(faces[1:-1]) / dth)[:, None]
        azim = (dth / (np.sin(centers) * dph))[:, None]
        return area, radial, azim

    def apply_laplacian(self, f: np.ndarray, dtype=np.float64) -> np.ndarray:
        """Apply the discrete Laplace-Beltrami operator in precision ``dtype``."""
        area, radial, azim = self._coefficients(dtype)
        f = np.asarray(f, dtype=dtype).reshape(self.shape)
        flux = radial * (f[1:] - f[:-1])
        out = np.zeros_like(f)
        out[:-1] += flux
        out[1:] -= flux
        d = np.roll(f, -1, axis=1) - f
        out += azim * (d - np.roll(d, 1, axis=1))
        return out / area

    def stiffness(self) -> sp.csr_matrix:
        """Symmetric negative semidefinite matrix ``W L`` (float64)."""
        _, radial, azim = self._coefficients()
        nt, nph = self.shape
        idx = np.arange(nt * nph).reshape(nt, nph)
        rows, cols, vals = [], [], []

        def couple(a, b, c):
            a, b, c = a.ravel(), b.ravel(), np.broadcast_to(c, a.shape).ravel()
            rows.extend([a, b, a, b])
            cols.extend([b, a, a, b])
            vals.extend([c, c, -c, -c])

        couple(idx[:-1], idx[1:], radial)
        couple(idx, np.roll(idx, -1, axis=1), azim)
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(nt * nph, nt * nph))

    def laplacian_matrix(self) -> sp.csr_matrix:
        """Sparse discrete Laplacian ``L = W^{-1} (W L)`` acting on raveled fields."""
        if self._lap is None:
            inv = sp.diags(1.0 / self.weights.ravel())
            self._lap = (inv @ self.stiffness()).tocsr()
        return self._lap

    def field(self, values, name: str = "", units: str = "") -> "SphereField":
        return SphereField(self, np.asarray(values, float).reshape(self.shape), name, units)

    def evaluate(self, func: Callable[[np.ndarray], np.ndarray], name: str = "") -> "SphereField":
        """Field from a vectorized function of physical coordinates ``(..., 3)``."""
        return self.field(func(self.nodes), name=name)


@dataclass
class SphereField:
    """Node values on a :class:`SphereGrid` with optional exclusion mask.

    ``mask`` marks nodes whose values are declared singular (not used by
    quadratures or interpolation).
    """

    grid: SphereGrid
    values: np.ndarray
    name: str = ""
    units: str = ""
    mask: np.ndarray | None = None
    _splines: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(self.grid.shape)

    def copy(self, values=None, name=None) -> "SphereField":
        return SphereField(self.grid, self.values.copy() if values is None else values,
                           self.name if name is None else name, self.units,
                           None if self.mask is None else self.mask.copy())

    def __add__(self, other):
        ov = other.values if isinstance(other, SphereField) else other
        return self.copy(self.values + ov)

    def __sub__(self, other):
        ov = other.values if isinstance(other, SphereField) else other
        return self.copy(self.values - ov)

    def integrate(self) -> float:
        return quadrature(self)

    # interpolation ---------------------------------------------------------
    def _spline(self, order: int) -> RectBivariateSpline:
        if order not in self._splines:
            g = self.grid
            ng = max(order + 1, 4)
            half = g.n_phi // 2
            v = self.values
            top = np.roll(v[:ng][::-1], half, axis=1)
            bot = np.roll(v[-ng:][::-1], half, axis=1)
            ext = np.concatenate([top, v, bot], axis=0)
            ext = np.concatenate([ext[:, -ng:], ext, ext[:, :ng]], axis=1)
            th = (np.arange(-ng, g.n_theta + ng) + 0.5) * g.dtheta
            ph = np.arange(-ng, g.n_phi + ng) * g.dphi
            self._splines[order] = RectBivariateSpline(th, ph, ext, kx=order, ky=order, s=0)
        return self._splines[order]

    def interpolate(self, points, order: int = 3) -> np.ndarray:
        """Spline interpolation at physical points ``(..., 3)``."""
        pts = np.asarray(points, float)
        th, ph = self.grid.to_local(pts)
        return self._spline(order)(th.ravel(), ph.ravel(), grid=False).reshape(th.shape)

    def gradient(self, points, order: int = 3) -> np.ndarray:
        """Tangential gradient of the interpolant at physical points, shape ``(..., 3)``.

        Uses ``grad f = f_theta e_theta + f_phi / sin(theta) e_phi`` in the grid
        frame; points should not sit on a grid pole.
        """
        pts = np.asarray(points, float)
        th, ph = self.grid.to_local(pts)
        spl = self._spline(order)
        ft = spl(th.ravel(), ph.ravel(), dx=1, grid=False).reshape(th.shape)
        fp = spl(th.ravel(), ph.ravel(), dy=1, grid=False).reshape(th.shape)
        e_th, e_ph = self.grid.frame_vectors(pts)
        return ft[..., None] * e_th + (fp / np.sin(th))[..., None] * e_ph

    # persistence --------------------------------------------------------------
    _MAGIC = b"SLFIELD1"
    _HEADER = struct.Struct("<8sIIII9d")

    def save(self, path: str | Path) -> Path:
        """Write ``path`` (binary) and ``path.json`` (sidecar) atomically.

        Layout: little-endian header ``magic, version, n_theta, n_phi,
        convention, rotation[9]`` followed by row-major float64 values
        (colatitude rows, longitude columns).
        """
        path = Path(path)
        g = self.grid
        header = self._HEADER.pack(self._MAGIC, 1, g.n_theta, g.n_phi, 0,
                                   *g.rotation.ravel().tolist())
        payload = header + self.values.astype("<f8").tobytes(order="C")
        atomic_write(path, payload)
        side = {"name": self.name, "units": self.units, "n_theta": g.n_theta, "n_phi": g.n_phi,
                "convention": "cell-centred: theta_j=(j+1/2)pi/n_theta, phi_k=2pi k/n_phi; "
                              "rows are colatitude; physical = rotation @ grid-frame",
                "rotation": g.rotation.tolist(), "dtype": "float64", "byte_order": "little",
                "header_bytes": self._HEADER.size,
                "masked_nodes": [] if self.mask is None else np.flatnonzero(self.mask).tolist()}
        atomic_write(path.with_name(path.name + ".json"), json.dumps(side, indent=2).encode())
        return path

    @classmethod
    def load(cls, path: str | Path) -> "SphereField":
        path = Path(path)
        raw = path.read_bytes()
        magic, version, nt, nph, conv, *rot = cls._HEADER.unpack_from(raw)
        if magic != cls._MAGIC or version != 1 or conv != 0:
            raise ValueError(f"{path} is not a field snapshot")
        vals = np.frombuffer(raw, dtype="<f8", offset=cls._HEADER.size).reshape(nt, nph)
        grid = SphereGrid(nt, nph, rotation=np.array(rot).reshape(3, 3))
        name, units, mask = "", "", None
        side = path.with_name(path.name + ".json")
        if side.exists():
            meta = json.loads(side.read_text())
            name, units = meta.get("name", ""), meta.get("units", "")
            if meta.get("masked_nodes"):
                mask = np.zeros(nt * nph, bool)
                mask[meta["masked_nodes"]] = True
                mask = mask.reshape(nt, nph)
        return cls(grid, vals.copy(), name, units, mask)


def atomic_write(path: Path, data: bytes) -> None:
    """Write bytes via a temporary file in the same directory and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# Green function and singular part -----------------------------------------------

def green(x, p) -> np.ndarray:
    """``G_p(x) = -ln|x - p| / (2 pi)``, with ``-Lap G_p = delta_p - 1/(4 pi)``.

    Raises
    ------
    SingularEvaluationError
        If some ``x`` coincides with ``p``.
    """
    x = np.asarray(x, float)
    dist = np.linalg.norm(x - np.asarray(p, float), axis=-1)
    if np.any(dist == 0.0):
        raise SingularEvaluationError("Green function evaluated at its pole")
    return -np.log(dist) / (2 * math.pi)


def log_distance_sum(x, points, beta) -> np.ndarray:
    """``sum_i beta_i ln|x - p_i|`` (``-inf``/``inf`` at coincident points)."""
    x = np.asarray(x, float)
    out = np.zeros(x.shape[:-1])
    with np.errstate(divide="ignore", invalid="ignore"):
        for p, b in zip(np.asarray(points, float).reshape(-1, 3), beta):
            out = out + float(b) * np.log(np.linalg.norm(x - p, axis=-1))
    return out


def singular_part(d, grid: SphereGrid) -> tuple[SphereField, SphereField]:
    """Return ``S = sum beta_i ln|x - p_i|`` and ``h = exp(2 S)`` on ``grid``.

    ``S`` satisfies ``-Lap S = -2 pi sum beta_i delta_{p_i} + sum(beta)/2``.
    Nodes that coincide with a marked point are masked and hold NaN.
    """
    pts = d.point_array
    beta = d.beta_float
    S = log_distance_sum(grid.nodes, pts, beta)
    mask = ~np.isfinite(S)
    S = np.where(mask, np.nan, S)
    Sf = SphereField(grid, S, "S", "", mask if mask.any() else None)
    hf = SphereField(grid, np.exp(2 * S), "h", "", mask if mask.any() else None)
    return Sf, hf


def laplace_beltrami(f: SphereField) -> SphereField:
    """Discrete Laplace-Beltrami of a field (second order for smooth data)."""
    return f.copy(f.grid.apply_laplacian(f.values), name=f"lap({f.name})")


# quadrature --------------------------------------------------------------------

def quadrature(f: SphereField) -> float:
    """Cell-area weighted sum (pairwise summation; masked nodes skipped)."""
    vals = f.values if f.mask is None else np.where(f.mask, 0.0, f.values)
    return float(np.sum(f.grid.weights * vals))


def disk_quadrature(f: SphereField, x, r: float, subsample: int = 8) -> float:
    """Integral of ``f`` over the geodesic disk ``B_r(x)``.

    Cells entirely inside contribute their full area; cells cut by the
    boundary contribute the fraction of their area inside, estimated with a
    ``subsample x subsample`` sub-grid.  The field is constant per cell.
    """
    g = f.grid
    x = np.asarray(x, float)
    dist = geodesic_distance(g.nodes, x)
    sth_hi = np.maximum(np.sin(g.theta - g.dtheta / 2), np.sin(g.theta + g.dtheta / 2))
    half_diag = 0.5 * np.hypot(g.dtheta, sth_hi * g.dphi)[:, None] + 1e-15
    inside = dist + half_diag < r
    cut = ~inside & (dist - half_diag < r)
    vals = f.values if f.mask is None else np.where(f.mask, 0.0, f.values)
    total = float(np.sum(g.weights[inside] * vals[inside]))
    if np.any(cut):
        j, k = np.nonzero(cut)
        a = (np.arange(subsample) + 0.5) / subsample - 0.5
        th = g.theta[j][:, None, None] + a[None, :, None] * g.dtheta
        ph = g.phi[k][:, None, None] + a[None, None, :] * g.dphi
        th, ph = np.broadcast_arrays(th, ph)
        loc = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], -1)
        phys = loc @ g.rotation.T
        w = np.sin(th)
        frac = np.sum(w * (geodesic_distance(phys, x) < r), axis=(1, 2)) / np.sum(w, axis=(1, 2))
        total += float(np.sum(g.weights[j, k] * frac * vals[j, k]))
    return total


def polar_quadrature(func: Callable[[np.ndarray], np.ndarray], center, r: float,
                     n_rad: int = 64, n_ang: int = 128, alpha: float = 0.0,
                     r_inner: float = 0.0) -> float:
    """Integral over ``B_r(center)`` for integrands behaving like ``rho^alpha`` at the center.

    Geodesic polar coordinates ``(rho, psi)``; Gauss-Jacobi nodes in ``rho``
    absorb the factor ``rho^alpha`` exactly, the trapezoid rule handles
    ``psi``.  With ``r_inner > 0`` the annulus ``r_inner < rho < r`` is
    integrated by Gauss-Legendre instead.  ``func`` receives points of shape
    ``(n_rad, n_ang, 3)``.
    """
    if alpha <= -2:
        raise ValueError("integrand not integrable")
    c = np.asarray(center, float)
    R = rotation_to_axis(c)
    if r_inner > 0:
        xi, wj = np.polynomial.legendre.leggauss(n_rad)
        rho = r_inner + 0.5 * (r - r_inner) * (1 + xi)
        wr = wj * 0.5 * (r - r_inner)
        jac = np.sin(rho)
    else:
        # the area element sin(rho) contributes one more power of rho
        xi, wj = roots_jacobi(n_rad, 0.0, alpha + 1)
        rho = 0.5 * r * (1 + xi)
        # integral_0^r rho^(alpha+1) g(rho) d rho = (r/2)^(alpha+2) sum wj g(rho)
        wr = wj * (0.5 * r) ** (alpha + 2)
        jac = np.sin(rho) / rho ** (alpha + 1)
    psi = np.arange(n_ang) * (2 * math.pi / n_ang)
    loc = np.stack([np.sin(rho)[:, None] * np.cos(psi)[None, :],
                    np.sin(rho)[:, None] * np.sin(psi)[None, :],
                    np.repeat(np.cos(rho)[:, None], n_ang, axis=1)], -1)
    pts = loc @ R.T
    vals = np.asarray(func(pts), float)
    return float(np.sum(wr[:, None] * jac[:, None] * vals) * (2 * math.pi / n_ang))


# stereographic charts ----------------------------------------------------------------

def chart_frame(center) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Orthonormal ``(e1, e2, c)`` with ``c`` the chart center."""
    R = rotation_to_axis(center)
    return R[:, 0], R[:, 1], R[:, 2]


def sphere_to_chart(x, center) -> np.ndarray:
    """Stereographic coordinate ``z`` (complex) from the antipode of ``center``.

    ``z = (x.e1 + i x.e2) / (1 + x.c)``; the center maps to 0, the great
    circle orthogonal to it to ``|z| = 1``.
    """
    e1, e2, c = chart_frame(center)
    x = np.asarray(x, float)
    return (x @ e1 + 1j * (x @ e2)) / (1 + x @ c)


def chart_to_sphere(z, center) -> np.ndarray:
    """Inverse of :func:`sphere_to_chart`; returns points of shape ``z.shape + (3,)``."""
    e1, e2, c = chart_frame(center)
    z = np.asarray(z, complex)
    q = 1 + np.abs(z) ** 2
    return ((2 * z.real / q)[..., None] * e1 + (2 * z.imag / q)[..., None] * e2
            + ((2 - q) / q)[..., None] * c)


def chart_log_factor(rad) -> np.ndarray:
    """``v0 = log(2 / (1 + |z|^2))``: the round metric is ``e^{2 v0} |dz|^2``."""
    rad = np.asarray(rad, float)
    return np.log(2.0 / (1.0 + rad * rad))


@dataclass
class ChartView:
    """Field samples on circles ``|z| = radii[i]`` at angles ``angles[k]``.

    ``samples`` hold the spherical field; ``planar`` adds the log factor so a
    conformal factor ``u`` becomes the Euclidean one ``u~ = u + v0``.
    """

    center: np.ndarray
    radii: np.ndarray
    angles: np.ndarray
    samples: np.ndarray
    log_factor: np.ndarray

    @property
    def planar(self) -> np.ndarray:
        return self.samples + self.log_factor[:, None]

    def points(self) -> np.ndarray:
        z = self.radii[:, None] * np.exp(1j * self.angles[None, :])
        return chart_to_sphere(z, self.center)

    def to_csv(self, path) -> None:
        lines = ["radius,angle,sample,planar"]
        pl = self.planar
        for i, r in enumerate(self.radii):
            for k, a in enumerate(self.angles):
                lines.append(f"{r!r},{a!r},{self.samples[i, k]!r},{pl[i, k]!r}")
        atomic_write(Path(path), ("\n".join(lines) + "\n").encode())


def chart_radii(r_min: float, r_max: float, n: int) -> np.ndarray:
    return np.geomspace(r_min, r_max, n)


def to_chart(f, center, r_min: float = 0.05, r_max: float = 0.8, n_radii: int = 64,
             n_circle: int = 128, radii=None, limit: float = 1.0, order: int = 5) -> ChartView:
    """Sample a field on chart circles around ``center``.

    ``f`` is a :class:`SphereField` (spline interpolation of order ``order``)
    or a callable on physical points.  Radii default to a geometric ladder.

    Raises
    ------
    ChartRangeError
        If a radius is not positive or exceeds ``limit`` (the equator by default).
    """
    radii = chart_radii(r_min, r_max, n_radii) if radii is None else np.asarray(radii, float)
    if np.any(radii <= 0) or np.any(radii > limit):
        raise ChartRangeError(f"chart radii must lie in (0, {limit}]")
    ang = np.arange(n_circle) * (2 * math.pi / n_circle)
    z = radii[:, None] * np.exp(1j * ang[None, :])
    pts = chart_to_sphere(z, center)
    vals = f.interpolate(pts, order=order) if isinstance(f, SphereField) else np.asarray(f(pts))
    return ChartView(np.asarray(center, float), radii, ang, vals, chart_log_factor(radii))


def from_chart(view: ChartView, grid: SphereGrid, order: int = 5) -> SphereField:
    """Interpolate chart samples back to the grid nodes covered by the chart.

    Interpolation is a tensor spline in ``(log|z|, arg z)`` with periodic
    padding in angle; nodes outside the sampled annulus are masked (NaN).
    """
    n_pad = order + 1
    ang = view.angles
    ang_ext = np.concatenate([ang[-n_pad:] - 2 * math.pi, ang, ang[:n_pad] + 2 * math.pi])
    vals = np.concatenate([view.samples[:, -n_pad:], view.samples, view.samples[:, :n_pad]], 1)
    lr = np.log(view.radii)
    spl = RectBivariateSpline(lr, ang_ext, vals, kx=order, ky=order, s=0)
    z = sphere_to_chart(grid.nodes, view.center)
    rad = np.abs(z)
    ok = (rad >= view.radii[0]) & (rad <= view.radii[-1]) & np.isfinite(rad)
    out = np.full(grid.shape, np.nan)
    arg = np.mod(np.angle(z[ok]), 2 * math.pi)
    out[ok] = spl(np.log(rad[ok]), arg, grid=False)
    return SphereField(grid, out, "from_chart", "", ~ok)
