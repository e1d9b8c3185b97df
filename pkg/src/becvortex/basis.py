"""Oscillator eigenmodes, their interaction-broadened variants and
coefficient-space evolution.

A broadened mode of width sigma is

    psi_nmb(x, y, t) = exp(-i mu_nm t) h_n(x/sigma) h_m(y/sigma) / sigma

with h_n the normalized Hermite functions. At beta = 0, sigma = 1 and
mu_nm = 1 + n + m, which are the exact oscillator eigenstates.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from numpy.polynomial.hermite import hermgauss

from .field import ComplexField2D, GridSpec


def hermite(n: int, x):
    """Physicists' Hermite polynomial H_n(x) by three-term recurrence."""
    if n < 0:
        raise ValueError("degree must be non-negative")
    x = np.asarray(x, dtype=float)
    h_prev = np.ones_like(x)
    if n == 0:
        return h_prev
    h = 2.0 * x
    for k in range(1, n):
        h_prev, h = h, 2.0 * x * h - 2.0 * k * h_prev
    return h


def _hermite_poly_table(nmax: int, u: np.ndarray) -> np.ndarray:
    """Rows k = H_k(u) / sqrt(2^k k! sqrt(pi)), without the Gaussian factor.

    The normalized recurrence stays finite for large k where H_k overflows.
    """
    u = np.asarray(u, dtype=float)
    out = np.empty((nmax + 1,) + u.shape)
    out[0] = np.pi**-0.25
    if nmax >= 1:
        out[1] = np.sqrt(2.0) * u * out[0]
    for k in range(2, nmax + 1):
        out[k] = np.sqrt(2.0 / k) * u * out[k - 1] - np.sqrt((k - 1) / k) * out[k - 2]
    return out


def hermite_functions(nmax: int, u) -> np.ndarray:
    """Normalized 1D oscillator eigenfunctions h_0..h_nmax at u."""
    u = np.asarray(u, dtype=float)
    return _hermite_poly_table(nmax, u) * np.exp(-0.5 * u**2)


def sigma_broadening(beta: float) -> float:
    """Width minimizing the Gaussian energy 1/(2s^2) + s^2/2 + beta/(4 pi s^2)."""
    if beta < 0:
        raise ValueError("attractive interactions (beta < 0) are not supported")
    return float(((beta + 2.0 * np.pi) / (2.0 * np.pi)) ** 0.25)


@lru_cache(maxsize=None)
def _mode_integrals(n: int) -> tuple[float, float, float]:
    """(int h_n'^2, int u^2 h_n^2, int h_n^4) by Gauss-Hermite quadrature.

    Node counts are chosen so that every integrand is integrated exactly.
    """
    v, w = hermgauss(n + 2)
    P = _hermite_poly_table(n + 1, v)
    pn = P[n]
    dpn = np.sqrt(2.0 * n) * P[n - 1] if n > 0 else 0.0
    kinetic = float(np.sum(w * (dpn - v * pn) ** 2))
    moment = float(np.sum(w * v**2 * pn**2))
    v4, w4 = hermgauss(2 * n + 2)
    q = _hermite_poly_table(n, v4 / np.sqrt(2.0))[n]
    quartic = float(np.sum(w4 * q**4) / np.sqrt(2.0))
    return kinetic, moment, quartic


def mu_constant(n: int, m: int, beta: float) -> float:
    """Phase rate of the broadened (n, m) mode.

    Expectation of the GPE operator with the full |psi|^4 term, i.e.
    int |grad psi|^2/2 + r^2 |psi|^2/2 + beta |psi|^4.
    """
    if n < 0 or m < 0:
        raise ValueError("mode indices must be non-negative")
    s2 = sigma_broadening(beta) ** 2
    kn, xn, qn = _mode_integrals(n)
    km, xm, qm = _mode_integrals(m)
    return 0.5 * (kn + km) / s2 + 0.5 * s2 * (xn + xm) + beta * qn * qm / s2


@dataclass(frozen=True)
class BasisState:
    n: int
    m: int
    beta: float = 0.0

    @property
    def sigma(self) -> float:
        return sigma_broadening(self.beta)

    @property
    def mu(self) -> float:
        return mu_constant(self.n, self.m, self.beta)

    @property
    def energy(self) -> int:
        return 1 + self.n + self.m


def mode_function(state: BasisState, x, y, t: float = 0.0):
    s = state.sigma
    nmax = max(state.n, state.m)
    hx = hermite_functions(nmax, np.asarray(x, dtype=float) / s)[state.n]
    hy = hermite_functions(nmax, np.asarray(y, dtype=float) / s)[state.m]
    return np.exp(-1j * state.mu * t) * hx * hy / s


@dataclass(frozen=True)
class SpectralState:
    """Coefficients c[n, m] for 0 <= n, m <= degree of a broadened basis."""

    coefficients: np.ndarray
    beta: float = 0.0
    time: float = 0.0
    captured_weight: float | None = None

    @property
    def degree(self) -> int:
        return self.coefficients.shape[0] - 1

    def weight(self) -> float:
        return float(np.sum(np.abs(self.coefficients) ** 2))

    def to_json(self) -> str:
        D = self.degree
        flat = [
            [n, m, float(self.coefficients[n, m].real), float(self.coefficients[n, m].imag)]
            for n in range(D + 1)
            for m in range(D + 1)
        ]
        return json.dumps({"D": D, "beta": self.beta, "t": self.time, "coefficients": flat})

    @classmethod
    def from_json(cls, text: str) -> "SpectralState":
        doc = json.loads(text)
        D = int(doc["D"])
        c = np.zeros((D + 1, D + 1), dtype=complex)
        for n, m, re, im in doc["coefficients"]:
            c[int(n), int(m)] = re + 1j * im
        return cls(c, float(doc["beta"]), float(doc["t"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")


@lru_cache(maxsize=64)
def mu_table(degree: int, beta: float) -> np.ndarray:
    table = np.array([[mu_constant(n, m, beta) for m in range(degree + 1)] for n in range(degree + 1)])
    table.setflags(write=False)
    return table


def _axis_modes(grid: GridSpec, degree: int, beta: float) -> np.ndarray:
    """Matrix A[i, n] = h_n(x_i / sigma) / sqrt(sigma)."""
    s = sigma_broadening(beta)
    return (hermite_functions(degree, grid.axis / s) / np.sqrt(s)).T


def project(f: ComplexField2D, beta: float, degree: int = 12, min_weight: float = 0.999) -> SpectralState:
    """Expand a field in the broadened basis by grid quadrature.

    Modes are taken at t = 0 and the field's time is carried over. A
    warning is issued if the retained weight falls below ``min_weight``.
    """
    A = _axis_modes(f.grid, degree, beta)
    c = A.T @ f.values @ A * f.grid.spacing**2
    weight = float(np.sum(np.abs(c) ** 2))
    if weight < min_weight:
        warnings.warn(
            f"basis truncation at degree {degree} keeps only {weight:.6f} of the norm",
            stacklevel=2,
        )
    return SpectralState(c, beta, f.time, weight)


def evolve(s: SpectralState, t: float) -> SpectralState:
    """Advance by a duration t; each mode picks up exp(-i mu_nm t)."""
    if t == 0:
        return s
    c = s.coefficients * np.exp(-1j * mu_table(s.degree, s.beta) * t)
    return SpectralState(c, s.beta, s.time + t, s.captured_weight)


def synthesize(s: SpectralState, grid: GridSpec) -> ComplexField2D:
    A = _axis_modes(grid, s.degree, s.beta)
    return ComplexField2D(grid, A @ s.coefficients @ A.T, s.time)


def polynomial_state(coeffs: dict[tuple[int, int], complex], beta: float, degree: int | None = None) -> SpectralState:
    """Exact expansion of P(x, y) * exp(-r^2 / (2 sigma^2)) in the broadened basis.

    ``coeffs`` maps exponents (i, j) of x^i y^j to complex coefficients. The
    result is not normalized.
    """
    s = sigma_broadening(beta)
    top = max(max(i, j) for i, j in coeffs)
    degree = top if degree is None else degree
    if degree < top:
        raise ValueError("degree too small for the polynomial")
    # u^k = sum_n T[k, n] h_n(u) exp(u^2/2); get T from Gauss-Hermite quadrature
    v, w = hermgauss(top + 2)
    P = _hermite_poly_table(top, v)
    T = np.array([[np.sum(w * v**k * P[n]) for n in range(top + 1)] for k in range(top + 1)])
    c = np.zeros((degree + 1, degree + 1), dtype=complex)
    for (i, j), a in coeffs.items():
        # x^i y^j e^{-r^2/2s^2} = s^(i+j+1) (u^i e^{-u^2/2})(v^j e^{-v^2/2}) / s
        c[: top + 1, : top + 1] += a * s ** (i + j + 1) * np.outer(T[i], T[j])
    return SpectralState(c, beta, 0.0)
