"""Analytic vortex wavefunctions, trajectories and event times.

Every closed form used here has the structure

    psi(x, y, t) = A(t) * exp(-(x^2 + y^2) / (2 sigma^2)) * P_t(x, y)

with P_t a polynomial in x and y whose coefficients depend on time. Vortex
positions are zeros of P_t, so zero finding works on the polynomial with exact
derivatives. Polynomials are stored as coefficient matrices C with
P(x, y) = sum_ij C[i, j] x^i y^j (numpy.polynomial convention).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

from . import basis
from .basis import sigma_broadening

log = logging.getLogger(__name__)

FAMILIES = ("single", "pair", "dipole", "tripole")
SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class VortexConfig:
    """Initial vortex positions and charges.

    ``vortices`` holds (x, y, q) triples with q = +1 or -1.
    """

    vortices: tuple[tuple[float, float, int], ...]
    beta: float = 0.0
    family: str = "general"
    x0: float | None = None

    def __post_init__(self):
        vs = tuple((float(x), float(y), int(q)) for x, y, q in self.vortices)
        for _, _, q in vs:
            if q not in (1, -1):
                raise ValueError(f"vortex charges must be +1 or -1, got {q}")
        object.__setattr__(self, "vortices", vs)

    @property
    def total_charge(self) -> int:
        return sum(q for _, _, q in self.vortices)

    @classmethod
    def named(cls, family: str, x0: float, beta: float = 0.0) -> "VortexConfig":
        if family == "single":
            vs = [(x0, 0.0, 1)]
        elif family == "pair":
            vs = [(x0, 0.0, 1), (-x0, 0.0, 1)]
        elif family == "dipole":
            vs = [(x0, 0.0, 1), (-x0, 0.0, -1)]
        elif family == "tripole":
            vs = [(x0, 0.0, 1), (0.0, 0.0, -1), (-x0, 0.0, 1)]
        else:
            raise ValueError(f"unknown vortex family {family!r}")
        return cls(tuple(vs), beta, family, x0)

    def polynomial(self) -> np.ndarray:
        """Coefficient matrix of prod_j (x - x_j + i q_j (y - y_j))."""
        C = np.ones((1, 1), dtype=complex)
        for xj, yj, q in self.vortices:
            factor = np.array([[-xj - 1j * q * yj, 1j * q], [1.0, 0.0]], dtype=complex)
            C = _polymul2d(C, factor)
        return C


@dataclass
class TrajectorySample:
    """Vortices present at one instant.

    ``neutral`` lists zeros of the wavefunction that carry no net winding,
    e.g. two coincident opposite charges; they are not vortices.
    """

    t: float
    positions: np.ndarray
    charges: np.ndarray
    neutral: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    diagnostics: list[str] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.charges)

    @property
    def total_charge(self) -> int:
        return int(np.sum(self.charges))

    @classmethod
    def empty(cls, t: float) -> "TrajectorySample":
        return cls(t, np.zeros((0, 2)), np.zeros(0, dtype=int))


def _polymul2d(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros((a.shape[0] + b.shape[0] - 1, a.shape[1] + b.shape[1] - 1), dtype=complex)
    for (i, j), v in np.ndenumerate(b):
        if v != 0:
            out[i : i + a.shape[0], j : j + a.shape[1]] += v * a
    return out


def _poly(terms: dict[tuple[int, int], complex]) -> np.ndarray:
    n = max(i for i, _ in terms) + 1
    m = max(j for _, j in terms) + 1
    C = np.zeros((n, m), dtype=complex)
    for (i, j), v in terms.items():
        C[i, j] += v
    return C


# -- the non-interacting condensate ------------------------------------------


def ideal_single_vortex(x1: float, t: float, x, y):
    """Single +1 vortex released from (x1, 0) in the ideal trap."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.exp(-(x**2 + y**2) / 2 - 2j * t) * (x + 1j * y - np.exp(1j * t) * x1)


def ideal_single_position(x1: float, t):
    return x1 * np.cos(t), x1 * np.sin(t)


def ideal_pair_trajectories(r1, r2, t):
    """Both vortices of an ideal same-charge pair rotate rigidly by angle t."""
    c, s = np.cos(t), np.sin(t)
    out = []
    for xj, yj in (r1, r2):
        out.append((xj * c - yj * s, xj * s + yj * c))
    return tuple(out)


def ideal_dipole_field(x0: float, t: float, x, y):
    """Ideal-trap evolution of (z - x0)(conj(z) + x0) exp(-r^2/2).

    The r^2 - 1 part sits on energy-3 modes, y on energy-2 modes and the
    constant 1 - x0^2 on the ground state.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r2 = x**2 + y**2
    poly = (r2 - 1.0) * np.exp(-3j * t) + 2j * x0 * y * np.exp(-2j * t) + (1.0 - x0**2) * np.exp(-1j * t)
    return np.exp(-r2 / 2) * poly


def dipole_trajectory_ideal(x0: float, t: float) -> TrajectorySample:
    """Vortex positions of the symmetric ideal dipole.

    The +1 vortex starts at (x0, 0). Charges swap whenever cos t changes
    sign, which is when the current density momentarily vanishes.
    """
    if not x0 > 0:
        raise ValueError("x0 must be positive")
    y = np.sin(t) * (x0**2 - 1.0) / x0
    disc = x0**2 - y**2
    if disc < 0:
        return TrajectorySample.empty(t)
    x = np.sqrt(disc)
    q = int(np.sign(np.cos(t)))
    return TrajectorySample(t, np.array([[x, y], [-x, y]]), np.array([q, -q]))


def dipole_annihilation_times(x0: float) -> tuple[float, float] | None:
    """First annihilation and reappearance time in [0, pi], or None."""
    if not x0 > 0:
        raise ValueError("x0 must be positive")
    if x0 == 1.0:
        return None
    ratio = abs(x0**2 / (x0**2 - 1.0))
    if ratio > 1.0:
        return None
    ta = float(np.arcsin(ratio))
    return ta, float(np.pi - ta)


def ideal_tripole_field(x0: float, t: float, x, y):
    """Ideal tripole: +1 at (+-x0, 0), -1 at the origin."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    e2 = np.exp(2j * t)
    return np.exp(-(x**2 + y**2) / 2 - 4j * t) * (
        x**3
        + 1j * y * x**2
        + (y**2 - e2 * (x0**2 - 2) - 2) * x
        + 1j * y * (y**2 + e2 * (x0**2 + 2) - 2)
    )


def tripole_satellite_positions(t: float) -> np.ndarray | None:
    """Positions of the two extra zeros of the ideal tripole at x0 = sqrt(2)."""
    d2 = 2.0 - 4.0 * np.cos(2 * t)
    if d2 < 0:
        return None
    d = np.sqrt(d2)
    s, c = np.sin(2 * t), np.cos(2 * t)
    return np.array([[d * s, -d * c], [-d * s, d * c]])


@dataclass(frozen=True)
class Event:
    t: float
    kind: str
    x: float
    y: float


EVENT_KINDS = ("creation", "annihilation", "charge_flip", "crossing")


def tripole_event_times(x0: float = SQRT2, periods: int = 1) -> list[Event]:
    """Creation, crossing and annihilation schedule of the ideal tripole.

    Only known in closed form for x0 = sqrt(2); other separations need the
    numeric zero scan.
    """
    if not np.isclose(x0, SQRT2, rtol=0, atol=1e-12):
        raise NotImplementedError("closed-form tripole events exist only for x0 = sqrt(2)")
    events = []
    for k in range(periods):
        t0 = k * np.pi
        events += [
            Event(t0 + np.pi / 6, "creation", 0.0, 0.0),
            Event(t0 + np.pi / 6, "charge_flip", 0.0, 0.0),
            Event(t0 + np.pi / 4, "crossing", SQRT2, 0.0),
            Event(t0 + np.pi / 4, "crossing", -SQRT2, 0.0),
            Event(t0 + 3 * np.pi / 4, "crossing", SQRT2, 0.0),
            Event(t0 + 3 * np.pi / 4, "crossing", -SQRT2, 0.0),
            Event(t0 + 5 * np.pi / 6, "annihilation", 0.0, 0.0),
            Event(t0 + 5 * np.pi / 6, "charge_flip", 0.0, 0.0),
        ]
    return events


def tripole_vortex_count(t: float) -> int:
    """Number of vortices of the ideal tripole at x0 = sqrt(2)."""
    tau = float(np.mod(t, np.pi))
    if np.isclose(tau, np.pi / 4, atol=1e-12) or np.isclose(tau, 3 * np.pi / 4, atol=1e-12):
        return 1
    if np.pi / 6 < tau < 5 * np.pi / 6:
        return 5
    return 3


# -- the weakly interacting condensate (Ritz ansatz) --------------------------


def _ritz_denominator(beta: float) -> float:
    return float(np.sqrt(2 * np.pi) * np.sqrt(beta + 2 * np.pi))


def precession_frequency(beta: float) -> float:
    """(beta + 8 pi) / (4 sqrt(2 pi) sqrt(beta + 2 pi))."""
    if beta < 0:
        raise ValueError("beta must be non-negative")
    return (beta + 8 * np.pi) / (4 * np.sqrt(2 * np.pi) * np.sqrt(beta + 2 * np.pi))


def precession_coefficient_analytic() -> float:
    return -1.0 / (8.0 * np.pi)


def coherence_length(beta: float) -> float:
    """Bulk healing length, xi^2 = sqrt(pi / (4 beta)). Diagnostic only."""
    if beta <= 0:
        return float("inf")
    return float((np.pi / (4.0 * beta)) ** 0.25)


def interacting_single_vortex_trajectory(x0: float, beta: float, t):
    w = precession_frequency(beta)
    return x0 * np.cos(w * t), x0 * np.sin(w * t)


class ClosedForm:
    """A wavefunction A(t) exp(-r^2 / 2 sigma^2) P_t(x, y)."""

    sigma: float = 1.0
    total_charge: int = 0

    def prefactor(self, t: float) -> complex:
        raise NotImplementedError

    def poly(self, t: float) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x, y, t: float):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        gauss = np.exp(-(x**2 + y**2) / (2 * self.sigma**2))
        return self.prefactor(t) * gauss * npoly.polyval2d(x, y, self.poly(t))


class RitzSingle(ClosedForm):
    def __init__(self, x0: float, beta: float):
        self.x0, self.beta = x0, beta
        self.sigma = sigma_broadening(beta)
        self.total_charge = 1
        self._D = _ritz_denominator(beta)

    def prefactor(self, t):
        b, D = self.beta, self._D
        return np.exp(-1j * (7 * b + 16 * np.pi) * t / (4 * D))

    def poly(self, t):
        b, D = self.beta, self._D
        return _poly({(1, 0): 1.0, (0, 1): 1j, (0, 0): -np.exp(1j * (b + 8 * np.pi) * t / (4 * D)) * self.x0})


class RitzPair(ClosedForm):
    def __init__(self, x0: float, beta: float):
        self.x0, self.beta = x0, beta
        self.sigma = sigma_broadening(beta)
        self.total_charge = 2
        self._D = _ritz_denominator(beta)

    def prefactor(self, t):
        b, D = self.beta, self._D
        return np.exp(-1j * (137 * b + 384 * np.pi) * t / (64 * D))

    def poly(self, t):
        b, D, x0 = self.beta, self._D, self.x0
        return _poly(
            {
                (2, 0): 1.0,
                (1, 1): 2j * np.exp(5j * b * t / (64 * D)),
                (0, 0): -np.exp(1j * (41 * b + 256 * np.pi) * t / (64 * D)) * x0**2,
                (0, 2): -1.0,
            }
        )


class RitzDipole(ClosedForm):
    def __init__(self, x0: float, beta: float):
        self.x0, self.beta = x0, beta
        self.sigma = sigma_broadening(beta)
        self.total_charge = 0
        self._D = _ritz_denominator(beta)

    def prefactor(self, t):
        b, D = self.beta, self._D
        return np.exp(-3j * (115 * b + 256 * np.pi) * t / (64 * D))

    def poly(self, t):
        b, D, x0, s = self.beta, self._D, self.x0, self.sigma
        e_y = np.exp(1j * (233 * b + 512 * np.pi) * t / (64 * D))
        e_c = np.exp(1j * (249 * b + 640 * np.pi) * t / (64 * D))
        e_r = np.exp(1j * (13 * b + 24 * np.pi) * t / (4 * D))
        return _poly(
            {
                (0, 1): 2j * e_y * x0,
                (0, 0): e_c * (s - x0) * (s + x0) - e_r * s**2,
                (2, 0): e_r,
                (0, 2): e_r,
            }
        )


class RitzTripole(ClosedForm):
    def __init__(self, x0: float, beta: float):
        self.x0, self.beta = x0, beta
        self.sigma = sigma_broadening(beta)
        self.total_charge = 1
        self._D = _ritz_denominator(beta)

    def prefactor(self, t):
        b, D, s2 = self.beta, self._D, self.sigma**2
        # the time-dependent part of the exponent shared with the Gaussian
        shared = (20j * np.sqrt(2 * np.pi) * t * s2 / np.sqrt(b + 2 * np.pi)) / (2 * s2)
        return np.exp(-871j * b * t / (128 * D) - shared)

    def poly(self, t):
        b, D, s2, x0 = self.beta, self._D, self.sigma**2, self.x0
        ea = np.exp(3j * (369 * b + 1024 * np.pi) * t / (256 * D))
        eb = np.exp(3j * (361 * b + 1024 * np.pi) * t / (256 * D))
        ec = -2 * np.exp(1j * (647 * b + 2048 * np.pi) * t / (128 * D))
        # ea [s2 (x + iy) - 2i x (x - iy) y] + eb [3 s2 (x + iy) - 2 (x^3 + i y^3)]
        #   + ec [2 s2 (x + iy) - (x - iy) x0^2]
        return _poly(
            {
                (1, 0): ea * s2 + 3 * eb * s2 + ec * (2 * s2 - x0**2),
                (0, 1): 1j * (ea * s2 + 3 * eb * s2 + ec * (2 * s2 + x0**2)),
                (2, 1): -2j * ea,
                (1, 2): -2 * ea,
                (3, 0): -2 * eb,
                (0, 3): -2j * eb,
            }
        )


class RitzExpansion(ClosedForm):
    """Any vortex product state evolved in the broadened basis.

    The initial state is P(x, y) exp(-r^2 / 2 sigma^2) with P the product of
    vortex factors; each basis mode then rotates with its own mu.
    """

    def __init__(self, config: VortexConfig, beta: float | None = None):
        self.config = config
        self.beta = config.beta if beta is None else beta
        self.sigma = sigma_broadening(self.beta)
        self.total_charge = config.total_charge
        P = config.polynomial()
        terms = {(i, j): v for (i, j), v in np.ndenumerate(P) if v != 0}
        self.state0 = basis.polynomial_state(terms, self.beta)
        self._to_poly = _hermite_to_monomial(self.state0.degree, self.sigma)

    def prefactor(self, t):
        return 1.0

    def poly(self, t):
        c = basis.evolve(self.state0, t).coefficients
        # psi = sum c_nm h_n(x/s) h_m(y/s) / s; h_n(u) = sum_k B[n, k] u^k e^{-u^2/2}
        B = self._to_poly
        return B.T @ c @ B / self.sigma


def _hermite_to_monomial(degree: int, sigma: float) -> np.ndarray:
    """B[n, k]: coefficient of x^k in h_n(x / sigma) exp(+x^2 / 2 sigma^2)."""
    B = np.zeros((degree + 1, degree + 1))
    B[0, 0] = np.pi**-0.25
    if degree >= 1:
        B[1, 1] = np.sqrt(2.0) * B[0, 0]
    for n in range(2, degree + 1):
        B[n, 1:] = np.sqrt(2.0 / n) * B[n - 1, :-1]
        B[n] -= np.sqrt((n - 1) / n) * B[n - 2]
    return B / sigma ** np.arange(degree + 1)


_FAMILY_CLASSES = {"single": RitzSingle, "pair": RitzPair, "dipole": RitzDipole, "tripole": RitzTripole}


def closed_form(family: str, x0: float, beta: float) -> ClosedForm:
    try:
        cls = _FAMILY_CLASSES[family]
    except KeyError:
        raise ValueError(f"unknown vortex family {family!r}; expected one of {FAMILIES}") from None
    if beta < 0:
        raise ValueError("beta must be non-negative")
    return cls(x0, beta)


def interacting_field(family: str, x0: float, beta: float, t: float, x, y):
    return closed_form(family, x0, beta)(x, y, t)


# -- zero finding ---------------------------------------------------------------


def _winding_on_circle(C: np.ndarray, x: float, y: float, radius: float, n: int = 64) -> int:
    th = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    vals = npoly.polyval2d(x + radius * np.cos(th), y + radius * np.sin(th), C)
    d = np.angle(np.roll(vals, -1) / vals)
    return int(np.rint(d.sum() / (2 * np.pi)))


def _newton(C: np.ndarray, pts: np.ndarray, tol: float, max_iter: int = 100):
    Cx = npoly.polyder(C, axis=0)
    Cy = npoly.polyder(C, axis=1)
    x, y = pts[:, 0].copy(), pts[:, 1].copy()
    for _ in range(max_iter):
        f = npoly.polyval2d(x, y, C)
        done = np.abs(f) < tol
        if done.all():
            break
        fx = npoly.polyval2d(x, y, Cx)
        fy = npoly.polyval2d(x, y, Cy)
        # real 2x2 Jacobian of (Re P, Im P) w.r.t. (x, y)
        a, b, c, d = fx.real, fy.real, fx.imag, fy.imag
        det = a * d - b * c
        safe = np.abs(det) > 1e-300
        det = np.where(safe, det, 1.0)
        dx = np.where(safe, (d * f.real - b * f.imag) / det, 0.0)
        dy = np.where(safe, (-c * f.real + a * f.imag) / det, 0.0)
        x = np.where(done, x, x - dx)
        y = np.where(done, y, y - dy)
    f = npoly.polyval2d(x, y, C)
    return np.column_stack([x, y]), np.abs(f)


def find_zeros(
    C: np.ndarray,
    r_edge: float,
    t: float = 0.0,
    scan_points: int = 512,
    tol: float = 1e-12,
    merge_radius: float = 1e-6,
    loop_radius: float = 1e-3,
) -> TrajectorySample:
    """All zeros of the polynomial inside the disc r <= r_edge, tagged by winding."""
    ax = np.linspace(-r_edge, r_edge, scan_points)
    # separable evaluation on the scan grid: P = Vx C Vy^T
    V = np.vander(ax, max(C.shape), increasing=True)
    P = V[:, : C.shape[0]] @ C @ V[:, : C.shape[1]].T
    scale = max(float(np.abs(P).max()), 1e-300)
    re, im = np.sign(P.real), np.sign(P.imag)

    def changes(s):
        a, b, c, d = s[:-1, :-1], s[1:, :-1], s[1:, 1:], s[:-1, 1:]
        return (a != b) | (a != c) | (a != d)

    cand = changes(re) & changes(im)
    # also seed from cells with nonzero discrete winding
    dx = np.angle(P[1:, :] * np.conj(P[:-1, :]))
    dy = np.angle(P[:, 1:] * np.conj(P[:, :-1]))
    wind = dx[:, :-1] + dy[1:, :] - dx[:, 1:] - dy[:-1, :]
    cand |= np.abs(wind) > np.pi
    ii, jj = np.nonzero(cand)
    h = ax[1] - ax[0]
    seeds = np.column_stack([ax[ii] + h / 2, ax[jj] + h / 2])
    diagnostics = []
    if len(seeds) == 0:
        return TrajectorySample.empty(t)
    roots, resid = _newton(C, seeds, tol * scale)
    ok = (resid < tol * scale) & np.all(np.isfinite(roots), axis=1)
    if (~ok).any():
        diagnostics.append(f"{int((~ok).sum())} candidate(s) dropped: Newton did not converge")
    roots = roots[ok]
    # merge duplicates
    merged: list[np.ndarray] = []
    for r in roots:
        if not any(np.hypot(*(r - m)) < merge_radius for m in merged):
            merged.append(r)
    merged = [m for m in merged if np.hypot(*m) <= r_edge]
    # zeros closer than the winding loop form one cluster with a common winding
    clusters: list[list[np.ndarray]] = []
    for m in merged:
        for cl in clusters:
            if any(np.hypot(*(m - o)) < loop_radius for o in cl):
                cl.append(m)
                break
        else:
            clusters.append([m])
    pos, charges, neutral = [], [], []
    centers = [np.mean(cl, axis=0) for cl in clusters]
    for k, c in enumerate(centers):
        others = [np.hypot(*(c - o)) for j, o in enumerate(centers) if j != k]
        rad = loop_radius if not others else min(loop_radius, 0.4 * min(others))
        q = _winding_on_circle(C, c[0], c[1], rad)
        if q == 0:
            neutral.append(c)
        elif abs(q) == 1:
            pos.append(c)
            charges.append(q)
        else:
            diagnostics.append(f"zero at ({c[0]:.6f}, {c[1]:.6f}) has winding {q}")
            pos.append(c)
            charges.append(q)
    order = np.lexsort((np.array([p[1] for p in pos]), np.array([p[0] for p in pos]))) if pos else []
    sample = TrajectorySample(
        t,
        np.array(pos).reshape(-1, 2)[order] if pos else np.zeros((0, 2)),
        np.array(charges, dtype=int)[order] if pos else np.zeros(0, dtype=int),
        np.array(neutral).reshape(-1, 2),
        diagnostics,
    )
    for msg in diagnostics:
        log.debug("t=%g: %s", t, msg)
    return sample


def zeros_of_closed_form(
    family: str | ClosedForm,
    x0: float | None = None,
    beta: float = 0.0,
    t: float = 0.0,
    r_edge: float | None = None,
    scan_points: int = 512,
) -> TrajectorySample:
    cf = family if isinstance(family, ClosedForm) else closed_form(family, x0, beta)
    if r_edge is None:
        r_edge = 4.0 * cf.sigma
    return find_zeros(cf.poly(t), r_edge, t=t, scan_points=scan_points)


def closed_form_trajectory(cf: ClosedForm, times: Sequence[float], r_edge: float | None = None, scan_points: int = 256):
    return [zeros_of_closed_form(cf, t=float(t), r_edge=r_edge, scan_points=scan_points) for t in times]
