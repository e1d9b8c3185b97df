"""Grid, complex field container and the observables built on them.

All quantities are dimensionless: lengths in units of the radial oscillator
length, time in units of 1/omega, energies in units of hbar*omega.
"""
from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.fft as sfft


class DegenerateStateError(ValueError):
    """Raised when a field with zero norm has to be normalized."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on the square [-L, L)^2 with M points per axis."""

    extent: float = 8.0
    points: int = 256

    def __post_init__(self):
        if not self.extent > 0:
            raise ValueError(f"extent must be positive, got {self.extent}")
        m = int(self.points)
        if m < 2 or m & (m - 1):
            raise ValueError(f"points per axis must be a power of two, got {self.points}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.extent / self.points

    @property
    def axis(self) -> np.ndarray:
        return -self.extent + self.spacing * np.arange(self.points)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinate arrays X, Y with X[i, j] = x_i and Y[i, j] = y_j."""
        a = self.axis
        return np.meshgrid(a, a, indexing="ij")

    def wavenumbers(self) -> np.ndarray:
        return 2.0 * np.pi * sfft.fftfreq(self.points, d=self.spacing)

    def k_mesh(self) -> tuple[np.ndarray, np.ndarray]:
        k = self.wavenumbers()
        return np.meshgrid(k, k, indexing="ij")

    def refined(self) -> "GridSpec":
        return GridSpec(self.extent, 2 * self.points)


@dataclass(frozen=True)
class ComplexField2D:
    grid: GridSpec
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.grid.points, self.grid.points):
            raise ValueError(
                f"values shape {v.shape} does not match grid {self.grid.points}x{self.grid.points}"
            )
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: GridSpec, func, time: float = 0.0) -> "ComplexField2D":
        X, Y = grid.mesh()
        return cls(grid, np.broadcast_to(func(X, Y), X.shape).astype(complex), time)

    def with_values(self, values: np.ndarray, time: float | None = None) -> "ComplexField2D":
        return ComplexField2D(self.grid, values, self.time if time is None else time)

    def conj(self) -> "ComplexField2D":
        return self.with_values(np.conj(self.values))

    def __mul__(self, other) -> "ComplexField2D":
        return self.with_values(self.values * other)

    __rmul__ = __mul__


@dataclass(frozen=True)
class PhysicalParams:
    """Laboratory parameters, only used to derive the interaction strength."""

    atom_number: float
    scattering_length: float
    omega: float
    omega_z: float
    oscillator_length: float


def norm(f: ComplexField2D) -> float:
    return float(np.sqrt(np.sum(np.abs(f.values) ** 2)) * f.grid.spacing)


def normalize(f: ComplexField2D) -> ComplexField2D:
    n = norm(f)
    if not n > 0.0 or not np.isfinite(n):
        raise DegenerateStateError("cannot normalize a field with zero (or non-finite) norm")
    return f.with_values(f.values / n)


def gradient(f: ComplexField2D) -> tuple[np.ndarray, np.ndarray]:
    """Spectral x and y derivatives of the field values."""
    kx, ky = f.grid.k_mesh()
    fh = sfft.fft2(f.values)
    return sfft.ifft2(1j * kx * fh), sfft.ifft2(1j * ky * fh)


def kinetic_energy(f: ComplexField2D) -> float:
    kx, ky = f.grid.k_mesh()
    fh = sfft.fft2(f.values)
    m = f.grid.points
    return float(0.5 * np.sum((kx**2 + ky**2) * np.abs(fh) ** 2) * f.grid.spacing**2 / m**2)


def energy(f: ComplexField2D, beta: float) -> float:
    """Energy per particle of a normalized field.

    Kinetic part from the Fourier representation, trap and contact terms by
    grid quadrature.
    """
    X, Y = f.grid.mesh()
    rho = np.abs(f.values) ** 2
    dA = f.grid.spacing**2
    potential = 0.5 * np.sum((X**2 + Y**2) * rho) * dA
    contact = 0.5 * beta * np.sum(rho**2) * dA
    return kinetic_energy(f) + float(potential) + float(contact)


def current_density(f: ComplexField2D) -> tuple[np.ndarray, np.ndarray]:
    """j = -i (psi* grad psi - psi grad psi*) / 2 = Im(psi* grad psi)."""
    gx, gy = gradient(f)
    c = np.conj(f.values)
    return np.imag(c * gx), np.imag(c * gy)


def beta_from_physical(p: PhysicalParams) -> float:
    """Dimensionless interaction 2 N a_s sqrt(2 pi omega_z / omega) / a_0."""
    if p.atom_number < 0:
        raise ValueError("atom number must be non-negative")
    for name in ("scattering_length", "omega", "omega_z", "oscillator_length"):
        if not getattr(p, name) > 0:
            raise ValueError(f"{name} must be positive")
    if p.omega_z < 10.0 * p.omega:
        warnings.warn(
            "omega_z is not much larger than omega; the 2D reduction may not hold",
            stacklevel=2,
        )
    return (
        2.0
        * p.atom_number
        * p.scattering_length
        * np.sqrt(2.0 * np.pi * p.omega_z / p.omega)
        / p.oscillator_length
    )


# -- snapshot files -----------------------------------------------------------

_HEADER = struct.Struct("<dqd")


def write_snapshot(f: ComplexField2D, path: str | Path) -> Path:
    """Write the binary snapshot plus a JSON sidecar next to it.

    Layout: little-endian (L: f64, M: i64, t: f64), then M*M (re, im) f64
    pairs in row-major order of values[i, j] = psi(x_i, y_j).
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    g = f.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(float(g.extent), int(g.points), float(f.time)))
        fh.write(np.ascontiguousarray(f.values, dtype="<c16").tobytes())
    meta = {"extent": g.extent, "points": g.points, "time": f.time, "layout": "row-major x,y; complex128 LE"}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2) + "\n")
    return path


def read_snapshot(path: str | Path) -> ComplexField2D:
    raw = Path(path).read_bytes()
    extent, m, t = _HEADER.unpack_from(raw, 0)
    body = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size)
    if body.size != m * m:
        raise ValueError(f"snapshot {path} holds {body.size} values, expected {m * m}")
    return ComplexField2D(GridSpec(extent, int(m)), body.reshape(m, m).copy(), t)
