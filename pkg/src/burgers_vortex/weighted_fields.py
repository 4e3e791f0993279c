"""Grids, fields and weighted norms.

Transverse fields live on a cell-centered square box [-L, L]^2 with N nodes per
axis; axis 0 of every array is x1 and axis 1 is x2. Sliced 3D fields stack N3
transverse slices along a leading x3 axis. All integrals use the midpoint rule.

The weight is b(x1, x2) = sqrt((1 + x1^2)(1 + x2^2)) and
||f||_{L^p(m)} = ||b^m f||_{L^p}.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np


def _check_finite(values: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{what} contains non-finite values")


def _freeze(values) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Axis:
    """Cell-centered 1D grid on [-L, L] with N nodes."""

    L: float
    N: int

    def __post_init__(self):
        if not (self.L > 0):
            raise ValueError("half-width must be positive")
        if self.N < 1:
            raise ValueError("need at least one node")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def x(self) -> np.ndarray:
        return -self.L + (np.arange(self.N) + 0.5) * self.h


@dataclass(frozen=True)
class Grid2D:
    """Square transverse box with N nodes per axis."""

    L: float = 12.0
    N: int = 128

    def __post_init__(self):
        if self.N < 16 or self.N % 2:
            raise ValueError(f"N_perp must be even and >= 16, got {self.N}")
        if not (self.L > 0):
            raise ValueError("L_perp must be positive")

    @property
    def axis(self) -> Axis:
        return Axis(self.L, self.N)

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def x(self) -> np.ndarray:
        return self.axis.x

    @property
    def shape(self) -> tuple[int, int]:
        return (self.N, self.N)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.x, indexing="ij")

    def weight(self, m: float) -> np.ndarray:
        """b^m sampled on the nodes (read-only, cached)."""
        return _weight_array(self.L, self.N, float(m))

    def digest(self) -> str:
        return hashlib.sha256(f"Grid2D:{self.L!r}:{self.N}".encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Grid3D:
    transverse: Grid2D = field(default_factory=Grid2D)
    L3: float = 8.0
    N3: int = 64

    def __post_init__(self):
        if self.N3 < 1:
            raise ValueError("N_3 must be positive")
        if not (self.L3 > 0):
            raise ValueError("L_3 must be positive")

    @property
    def axial(self) -> Axis:
        return Axis(self.L3, self.N3)

    @property
    def h3(self) -> float:
        return 2.0 * self.L3 / self.N3

    @property
    def x3(self) -> np.ndarray:
        return -self.L3 + (np.arange(self.N3) + 0.5) * self.h3

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.N3, self.transverse.N, self.transverse.N)

    def digest(self) -> str:
        key = f"Grid3D:{self.transverse.L!r}:{self.transverse.N}:{self.L3!r}:{self.N3}"
        return hashlib.sha256(key.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class WeightParams:
    m: float = 2.0
    p: float = 2.0

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("weight exponent m must be non-negative")
        if not (1.0 <= self.p <= np.inf):
            raise ValueError("p must lie in [1, inf]")

    def require_embedding(self) -> None:
        if self.m <= 0.5:
            raise ValueError("this operation needs m > 1/2")

    def require_decay(self) -> None:
        if self.m <= 1.5:
            raise ValueError("decay estimates need m > 3/2")


@dataclass(frozen=True, eq=False)
class Field2D:
    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        vals = _freeze(self.values)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values shape {vals.shape} does not match grid {self.grid.shape}")
        _check_finite(vals, "Field2D")
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, grid: Grid2D) -> "Field2D":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid: Grid2D, func) -> "Field2D":
        x1, x2 = grid.mesh()
        return cls(grid, func(x1, x2))

    def __add__(self, other: "Field2D") -> "Field2D":
        return Field2D(self.grid, self.values + other.values)

    def __sub__(self, other: "Field2D") -> "Field2D":
        return Field2D(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "Field2D":
        return Field2D(self.grid, c * self.values)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class SlicedField3D:
    """Stack of transverse slices; values has shape (N3, N, N)."""

    grid: Grid3D
    values: np.ndarray

    def __post_init__(self):
        vals = _freeze(self.values)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values shape {vals.shape} does not match grid {self.grid.shape}")
        _check_finite(vals, "SlicedField3D")
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, grid: Grid3D) -> "SlicedField3D":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_slices(cls, grid: Grid3D, slices) -> "SlicedField3D":
        slices = list(slices)
        if not slices:
            raise ValueError("empty slice list")
        for s in slices:
            if isinstance(s, Field2D) and s.grid != grid.transverse:
                raise ValueError("all slices must share the transverse grid")
        return cls(grid, np.stack([getattr(s, "values", s) for s in slices]))

    @classmethod
    def constant_in_x3(cls, grid: Grid3D, f: Field2D) -> "SlicedField3D":
        return cls(grid, np.broadcast_to(f.values, grid.shape))

    def slice(self, k: int) -> Field2D:
        return Field2D(self.grid.transverse, self.values[k])

    @property
    def slices(self) -> list[Field2D]:
        return [self.slice(k) for k in range(self.grid.N3)]


# ---------------------------------------------------------------- weights, norms

def weight_b(x1, x2):
    """b(x1, x2) = sqrt((1 + x1^2)(1 + x2^2))."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    return np.sqrt((1.0 + x1 * x1) * (1.0 + x2 * x2))


@lru_cache(maxsize=32)
def _weight_array(L: float, N: int, m: float) -> np.ndarray:
    x = Axis(L, N).x
    x1, x2 = np.meshgrid(x, x, indexing="ij")
    return _freeze(weight_b(x1, x2) ** m)


def _values(f) -> tuple[np.ndarray, Grid2D]:
    if isinstance(f, Field2D):
        return f.values, f.grid
    raise TypeError("expected a Field2D")


def norm_Lpm(f: Field2D, m: float, p: float) -> float:
    if m < 0:
        raise ValueError("m must be non-negative")
    vals, grid = _values(f)
    _check_finite(vals, "field")
    g = np.abs(grid.weight(m) * vals)
    if np.isinf(p):
        return float(g.max())
    if p < 1:
        raise ValueError("p must be >= 1")
    return float((np.sum(g**p) * grid.h**2) ** (1.0 / p))


def norm_L2m(f: Field2D, m: float) -> float:
    if m < 0:
        raise ValueError("m must be non-negative")
    vals, grid = _values(f)
    _check_finite(vals, "field")
    g = grid.weight(m) * vals
    return float(np.sqrt(np.sum(g * g)) * grid.h)


def slice_norms_L2m(values: np.ndarray, grid: Grid2D, m: float) -> np.ndarray:
    """L^2(m) norm of every slice of an array (..., N, N)."""
    g = values * grid.weight(m)
    return np.sqrt(np.sum(g * g, axis=(-2, -1))) * grid.h


def norm_X2m(w, m: float) -> float:
    """sup over x3 of the slice L^2(m) norm.

    ``w`` is a SlicedField3D or a sequence of them (a vector field), in which
    case the pointwise Euclidean length is used.
    """
    if m < 0:
        raise ValueError("m must be non-negative")
    comps = [w] if isinstance(w, SlicedField3D) else list(w)
    if not comps or comps[0].grid.N3 == 0:
        raise ValueError("empty slice list")
    grid = comps[0].grid.transverse
    sq = sum(slice_norms_L2m(c.values, grid, m) ** 2 for c in comps)
    return float(np.sqrt(sq).max())


def transverse_integral(f: Field2D) -> float:
    vals, grid = _values(f)
    return float(vals.sum() * grid.h**2)


def slice_integrals(values: np.ndarray, grid: Grid2D) -> np.ndarray:
    return values.sum(axis=(-2, -1)) * grid.h**2


def project_zero_mean(f: Field2D, profile: Field2D) -> Field2D:
    """Remove the mass of f along a unit-mass profile."""
    mass_p = transverse_integral(profile)
    if abs(mass_p) < 1e-12:
        raise ValueError("reference profile has zero integral")
    return Field2D(f.grid, f.values - transverse_integral(f) / mass_p * profile.values)


def project_slices_zero_mean(values: np.ndarray, grid: Grid2D, profile: np.ndarray) -> np.ndarray:
    """Slice-wise version of project_zero_mean for arrays (..., N, N)."""
    mass_p = profile.sum() * grid.h**2
    if abs(mass_p) < 1e-12:
        raise ValueError("reference profile has zero integral")
    masses = slice_integrals(values, grid) / mass_p
    return values - masses[..., None, None] * profile


# ------------------------------------------------------------------- derivatives

_FD4 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0


def diff4(values: np.ndarray, axis: int, h: float, boundary: str = "zero") -> np.ndarray:
    """Fourth-order centered first derivative along ``axis``.

    Ghost cells are zero (``boundary="zero"``, decaying transverse data) or
    copies of the end value (``"clamp"``, bounded axial data).
    """
    v = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    n = v.shape[0]
    if n < 4:
        raise ValueError("need at least 4 points along the derivative axis")
    out = np.empty_like(v)
    c1, c2 = 8.0 / (12.0 * h), 1.0 / (12.0 * h)
    # interior
    np.subtract(v[3:n - 1], v[1:n - 3], out=out[2:n - 2])
    out[2:n - 2] *= c1
    out[2:n - 2] -= c2 * (v[4:] - v[:n - 4])
    if boundary == "zero":
        lo1 = lo2 = hi1 = hi2 = 0.0
    else:
        lo1 = lo2 = v[0]
        hi1 = hi2 = v[n - 1]
    # the two cells next to each end read ghost values
    out[0] = c1 * (v[1] - lo1) - c2 * (v[2] - lo2)
    out[1] = c1 * (v[2] - v[0]) - c2 * (v[3] - lo1)
    out[n - 2] = c1 * (v[n - 1] - v[n - 3]) - c2 * (hi1 - v[n - 4])
    out[n - 1] = c1 * (hi1 - v[n - 2]) - c2 * (hi2 - v[n - 3])
    return np.moveaxis(out, 0, axis)


def laplacian4(values: np.ndarray, h: float, axes=(-2, -1)) -> np.ndarray:
    """Fourth-order centered Laplacian with zero ghost cells."""
    out = np.zeros_like(values)
    for axis in axes:
        n = values.shape[axis]
        pad = [(0, 0)] * values.ndim
        pad[axis] = (2, 2)
        v = np.pad(values, pad)
        idx = [slice(None)] * values.ndim

        def sl(a):
            idx[axis] = slice(a, a + n)
            return v[tuple(idx)]

        out += (-sl(0) + 16 * sl(1) - 30 * sl(2) + 16 * sl(3) - sl(4)) / (12.0 * h * h)
    return out


def spectral_derivative(values: np.ndarray, h: float, orders=(1, 0)) -> np.ndarray:
    """Spectral derivative of the last two axes on the periodic box.

    Fields decaying to round-off at the box edge are treated as periodic.
    ``orders`` gives the derivative order along (x1, x2).
    """
    n1, n2 = values.shape[-2:]
    k1 = 2 * np.pi * np.fft.fftfreq(n1, d=h)
    k2 = 2 * np.pi * np.fft.fftfreq(n2, d=h)
    o1, o2 = orders
    if o1 % 2:
        k1[n1 // 2] = 0.0
    if o2 % 2:
        k2[n2 // 2] = 0.0
    mult = np.outer((1j * k1) ** o1, (1j * k2) ** o2)
    return np.real(np.fft.ifft2(np.fft.fft2(values) * mult))


# --------------------------------------------------------------------- snapshots

_MAGIC = b"BVSNAP1\n"


def write_snapshot(path, values: np.ndarray, grid, meta: dict | None = None) -> Path:
    """Write an array of slices (or a 2D field) with a JSON header line.

    Layout: magic line, one JSON header line, then little-endian float64 data
    in C order (slice-major, then x1 rows, then x2).
    """
    path = Path(path)
    values = np.ascontiguousarray(values, dtype="<f8")
    if isinstance(grid, Grid3D):
        L_perp, N_perp, L3, N3 = grid.transverse.L, grid.transverse.N, grid.L3, grid.N3
    else:
        L_perp, N_perp, L3, N3 = grid.L, grid.N, None, 1
    header = {
        "L_perp": L_perp,
        "N_perp": N_perp,
        "L_3": L3,
        "N_3": N3,
        "shape": list(values.shape),
        "ordering": "row-major, slice-major",
        "dtype": "<f8",
    }
    if meta:
        header["meta"] = meta
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(values.tobytes())
    tmp.replace(path)
    return path


def read_snapshot(path) -> tuple[np.ndarray, dict]:
    """Read a snapshot; raises ValueError on any header/payload mismatch."""
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.readline() != _MAGIC:
            raise ValueError(f"{path}: not a field snapshot")
        try:
            header = json.loads(fh.readline().decode())
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ValueError(f"{path}: corrupt header") from exc
        payload = fh.read()
    shape = tuple(header.get("shape", ()))
    N, N3 = header.get("N_perp"), header.get("N_3")
    if not shape or shape[-2:] != (N, N):
        raise ValueError(f"{path}: shape {shape} inconsistent with N_perp={N}")
    if len(shape) >= 3 and shape[-3] != N3:
        raise ValueError(f"{path}: shape {shape} inconsistent with N_3={N3}")
    count = int(np.prod(shape))
    if len(payload) != 8 * count:
        raise ValueError(f"{path}: payload has {len(payload)} bytes, expected {8 * count}")
    values = np.frombuffer(payload, dtype="<f8").reshape(shape)
    _check_finite(values, str(path))
    return values.astype(float), header
