"""Vortex detection on gridded fields, frame-to-frame association and
vortex-number statistics."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import linear_sum_assignment

from .basis import sigma_broadening
from .field import ComplexField2D

log = logging.getLogger(__name__)


class DetectionError(ValueError):
    """The grid is too coarse to resolve the phase winding."""


@dataclass(frozen=True)
class VortexObservation:
    t: float
    x: float
    y: float
    charge: int
    plaquette: tuple[int, int] = (-1, -1)
    residual: float = 0.0

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


def plaquette_winding(psi: np.ndarray) -> np.ndarray:
    """Integer winding of every grid cell, counter-clockwise in (x, y).

    Each edge phase difference is wrapped once and shared by the two cells
    it borders, so cell windings always sum to the winding of the enclosing
    boundary.
    """
    dx = np.angle(psi[1:, :] * np.conj(psi[:-1, :]))
    dy = np.angle(psi[:, 1:] * np.conj(psi[:, :-1]))
    total = dx[:, :-1] + dy[1:, :] - dx[:, 1:] - dy[:-1, :]
    return np.rint(total / (2 * np.pi)).astype(int)


def _lift_exact_zeros(psi: np.ndarray, rel: float = 1e-14) -> np.ndarray:
    """Replace samples that vanish to round-off by a tiny positive real value.

    A zero lying exactly on a grid node has undefined phase there and drops
    out of every cell's winding. The lift moves it by a negligible amount
    into one of the adjacent cells, deterministically.
    """
    a = np.abs(psi)
    floor = rel * a.max(initial=0.0)
    dead = a <= floor
    if not dead.any() or floor == 0.0:
        return psi
    out = psi.copy()
    out[dead] = 10.0 * floor
    return out


def _bilinear_zero(f00, f10, f01, f11, iters: int = 30):
    """Zero of the bilinear interpolant on the unit cell, vectorized Newton."""
    a, b, c, d = f00, f10 - f00, f01 - f00, f11 - f10 - f01 + f00
    u = np.full(np.shape(f00), 0.5)
    v = np.full(np.shape(f00), 0.5)
    for _ in range(iters):
        F = a + b * u + c * v + d * u * v
        Fu = b + d * v
        Fv = c + d * u
        det = Fu.real * Fv.imag - Fv.real * Fu.imag
        det = np.where(np.abs(det) > 1e-300, det, 1e-300)
        du = (Fv.imag * F.real - Fv.real * F.imag) / det
        dv = (-Fu.imag * F.real + Fu.real * F.imag) / det
        u = np.clip(u - du, -0.5, 1.5)
        v = np.clip(v - dv, -0.5, 1.5)
    F = a + b * u + c * v + d * u * v
    scale = np.maximum.reduce([abs(f00), abs(f10), abs(f01), abs(f11)])
    resid = np.abs(F) / np.where(scale > 0, scale, 1.0)
    inside = (u > -1e-6) & (u < 1 + 1e-6) & (v > -1e-6) & (v < 1 + 1e-6)
    ok = inside & (resid < 1e-6)
    u = np.where(ok, np.clip(u, 0, 1), 0.5)
    v = np.where(ok, np.clip(v, 0, 1), 0.5)
    return u, v, np.where(ok, resid, 1.0)


def detection_radius(beta: float) -> float:
    return 4.0 * sigma_broadening(beta)


def detect(f: ComplexField2D, r_edge: float | None = None, beta: float = 0.0) -> list[VortexObservation]:
    """Vortices of a gridded field: cells with nonzero phase winding.

    Only cells whose centre lies within ``r_edge`` (default 4 sigma(beta))
    are considered. Positions are refined to the zero of the bilinear
    interpolant inside the cell; ``residual`` is 1 when that fails and the
    cell centre is reported instead.
    """
    if r_edge is None:
        r_edge = detection_radius(beta)
    psi = _lift_exact_zeros(f.values)
    w = plaquette_winding(psi)
    h = f.grid.spacing
    ax = f.grid.axis
    cx = ax[:-1] + 0.5 * h
    inside = (cx[:, None] ** 2 + cx[None, :] ** 2) <= r_edge**2
    w = np.where(inside, w, 0)
    if np.abs(w).max(initial=0) > 1:
        i, j = np.unravel_index(np.argmax(np.abs(w)), w.shape)
        raise DetectionError(
            f"cell at ({cx[i]:.4f}, {cx[j]:.4f}) winds by {w[i, j]}; refine the grid"
        )
    ii, jj = np.nonzero(w)
    if len(ii) == 0:
        return []
    u, v, resid = _bilinear_zero(psi[ii, jj], psi[ii + 1, jj], psi[ii, jj + 1], psi[ii + 1, jj + 1])
    xs = ax[ii] + u * h
    ys = ax[jj] + v * h
    return [
        VortexObservation(float(f.time), float(x), float(y), int(q), (int(i), int(j)), float(r))
        for x, y, q, i, j, r in zip(xs, ys, w[ii, jj], ii, jj, resid)
    ]


def vortex_count(f: ComplexField2D, r_edge: float | None = None, beta: float = 0.0) -> int:
    if r_edge is None:
        r_edge = detection_radius(beta)
    h = f.grid.spacing
    cx = f.grid.axis[:-1] + 0.5 * h
    inside = (cx[:, None] ** 2 + cx[None, :] ** 2) <= r_edge**2
    return int(np.count_nonzero(plaquette_winding(_lift_exact_zeros(f.values))[inside]))


def merge_unresolved(obs: Sequence[VortexObservation], radius: float) -> list[VortexObservation]:
    """Drop opposite-charge pairs closer than ``radius``.

    A coincident +1/-1 zero pair carries no net winding but shows up on the
    lattice as a dipole about one cell wide. Pairs are removed closest
    first, each detection used at most once.
    """
    obs = list(obs)
    pairs = sorted(
        (np.hypot(a.x - b.x, a.y - b.y), i, j)
        for i, a in enumerate(obs)
        for j, b in enumerate(obs)
        if i < j and a.charge == -b.charge
    )
    gone: set[int] = set()
    for d, i, j in pairs:
        if d >= radius:
            break
        if i not in gone and j not in gone:
            gone.update((i, j))
    return [o for k, o in enumerate(obs) if k not in gone]


# -- counts ---------------------------------------------------------------------


@dataclass
class CountSeries:
    times: np.ndarray
    counts: np.ndarray
    total_charge: int | None = None
    charges: np.ndarray | None = None
    flags: list[tuple[int, str]] = field(default_factory=list)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "N"])
            for t, n in zip(self.times, self.counts):
                w.writerow([f"{t:.10g}", int(n)])

    @classmethod
    def from_csv(cls, path: str | Path) -> "CountSeries":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1].astype(int))


def count_series(
    frames: Sequence[Sequence[VortexObservation]],
    times: Sequence[float],
    total_charge: int | None = None,
) -> CountSeries:
    """N(t) from per-frame detections, with topological sanity checks.

    Frames where N < |Q|, N and Q differ in parity, or the detected charges
    do not sum to Q are flagged with a diagnostic rather than dropped.
    """
    counts = np.array([len(fr) for fr in frames], dtype=int)
    charges = np.array([sum(o.charge for o in fr) for fr in frames], dtype=int)
    Q = int(charges[0]) if total_charge is None and len(frames) else total_charge
    flags = []
    for k, (n, q) in enumerate(zip(counts, charges)):
        if Q is None:
            break
        if n < abs(Q):
            flags.append((k, f"N={n} below |Q|={abs(Q)}"))
        elif (n - Q) % 2:
            flags.append((k, f"N={n} has the wrong parity for Q={Q}"))
        elif q != Q:
            flags.append((k, f"detected charge {q} differs from Q={Q}"))
    for k, msg in flags[:10]:
        log.warning("t=%g: %s", times[k], msg)
    return CountSeries(np.asarray(times, dtype=float), counts, Q, charges, flags)


def average_count(series: CountSeries, window: tuple[float, float] | None = None) -> float:
    """Time average of N over the window, trapezoidal in the sample times."""
    t, n = series.times, series.counts.astype(float)
    if window is not None:
        lo, hi = window
        keep = (t >= lo - 1e-12) & (t <= hi + 1e-12)
        t, n = t[keep], n[keep]
    if len(t) == 0:
        raise ValueError("no samples inside the averaging window")
    if len(t) == 1 or t[-1] == t[0]:
        return float(n[0])
    return float(trapezoid(n, t) / (t[-1] - t[0]))


# -- association ----------------------------------------------------------------


@dataclass
class VortexTrack:
    id: int
    observations: list[VortexObservation] = field(default_factory=list)
    birth: str = "initial"
    death: str = "end-of-run"
    birth_partner: int | None = None
    death_partner: int | None = None
    flips: list[float] = field(default_factory=list)

    @property
    def start(self) -> float:
        return self.observations[0].t

    @property
    def end(self) -> float:
        return self.observations[-1].t

    def positions(self) -> np.ndarray:
        return np.array([[o.x, o.y] for o in self.observations])

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "birth": {"kind": self.birth, "t": self.start, "partner": self.birth_partner},
            "death": {"kind": self.death, "t": self.end, "partner": self.death_partner},
            "charge_flips": self.flips,
            "observations": [[o.t, o.x, o.y, o.charge, o.residual] for o in self.observations],
        }


@dataclass
class Association:
    tracks: list[VortexTrack]
    diagnostics: list[str] = field(default_factory=list)


def associate(
    frames: Sequence[Sequence[VortexObservation]],
    times: Sequence[float],
    v_max: float = 10.0,
    pair_radius: float = 0.5,
    r_edge: float | None = None,
) -> Association:
    """Link detections into tracks by gated minimum-cost matching.

    A matching cost is the displacement plus a penalty of half the gate when
    the charge changes, so same-charge continuations win whenever they are
    within reach. The gate is ``v_max`` times the frame spacing, widened for
    tracks that are newborn or accelerating (see ``_track_gate``). Unmatched detections start tracks (pair creation when an
    opposite-charge detection is born in the same frame within
    ``pair_radius``); unmatched tracks end (annihilation when an
    opposite-charge track ends with them, or left-detection-disc near the
    disc edge).
    """
    tracks: list[VortexTrack] = []
    diagnostics: list[str] = []
    active: list[int] = []
    for k, (t, obs) in enumerate(zip(times, frames)):
        obs = list(obs)
        if k == 0:
            for o in obs:
                tracks.append(VortexTrack(len(tracks), [o], "initial"))
                active.append(len(tracks) - 1)
            continue
        gate = v_max * (t - times[k - 1])
        matched_t, matched_o = [], []
        if active and obs:
            last = np.array([tracks[i].observations[-1].position for i in active])
            new = np.array([o.position for o in obs])
            dist = np.hypot(*(last[:, None, :] - new[None, :, :]).transpose(2, 0, 1))
            flip = np.array([[tracks[i].observations[-1].charge != o.charge for o in obs] for i in active])
            reach = np.array([_track_gate(tracks[i], gate) for i in active])
            cost = dist + 0.5 * gate * flip
            big = 1e6
            cost = np.where(dist <= reach[:, None], cost, big)
            rows, cols = linear_sum_assignment(cost)
            for r, c in zip(rows, cols):
                if cost[r, c] >= big:
                    continue
                alt = np.sort(cost[r])[1] if cost.shape[1] > 1 else big
                if alt < big and alt <= 1.1 * cost[r, c] and cost[r, c] > 0:
                    diagnostics.append(f"t={t:.6g}: ambiguous match for track {active[r]}")
                matched_t.append(r)
                matched_o.append(c)
        next_active = []
        for r, c in zip(matched_t, matched_o):
            tr = tracks[active[r]]
            if tr.observations[-1].charge != obs[c].charge:
                tr.flips.append(float(t))
            tr.observations.append(obs[c])
            next_active.append(active[r])
        # deaths
        dead = [active[r] for r in range(len(active)) if r not in matched_t]
        _pair_up(tracks, dead, lambda tr: tr.observations[-1], pair_radius, "death")
        for i in dead:
            tr = tracks[i]
            if tr.death_partner is not None:
                tr.death = "annihilation"
            elif r_edge is not None and np.hypot(tr.observations[-1].x, tr.observations[-1].y) > r_edge - gate:
                tr.death = "left-detection-disc"
            else:
                tr.death = "annihilation"
        # births
        born = []
        for c, o in enumerate(obs):
            if c not in matched_o:
                tracks.append(VortexTrack(len(tracks), [o], "creation"))
                born.append(len(tracks) - 1)
        _pair_up(tracks, born, lambda tr: tr.observations[0], pair_radius, "birth")
        active = next_active + born
    return Association(tracks, diagnostics)


def _track_gate(tr: VortexTrack, gate: float) -> float:
    """Matching radius for a track.

    Vortex speed diverges like 1/sqrt(|t - t_event|) right after a pair
    creation and right before an annihilation, so newborn tracks and
    accelerating tracks get a wider reach than the nominal gate.
    """
    reach = gate
    obs = tr.observations
    if tr.birth == "creation" and len(obs) <= 2:
        reach = 4.0 * gate
    if len(obs) >= 2:
        step = np.hypot(obs[-1].x - obs[-2].x, obs[-1].y - obs[-2].y)
        reach = max(reach, 2.5 * step)
    return reach


def _pair_up(tracks, ids, pick, radius, which):
    """Greedily pair opposite-charge tracks by distance of the picked observation."""
    free = list(ids)
    cand = []
    for a in range(len(free)):
        for b in range(a + 1, len(free)):
            oa, ob = pick(tracks[free[a]]), pick(tracks[free[b]])
            if oa.charge == -ob.charge:
                d = np.hypot(oa.x - ob.x, oa.y - ob.y)
                if d <= radius:
                    cand.append((d, free[a], free[b]))
    used = set()
    for _, a, b in sorted(cand):
        if a in used or b in used:
            continue
        used |= {a, b}
        setattr(tracks[a], f"{which}_partner", b)
        setattr(tracks[b], f"{which}_partner", a)


@dataclass(frozen=True)
class TrackEvent:
    t: float
    kind: str
    x: float
    y: float


def _grouped(obs: list[VortexObservation], kind: str, link: float) -> list[TrackEvent]:
    """One event per cluster of same-frame observations (single linkage).

    A creation can give birth to more than a pair, e.g. two same-charge
    vortices while a third flips its charge; they form one event.
    """
    out = []
    for t in sorted({o.t for o in obs}):
        pts = [o for o in obs if o.t == t]
        label = list(range(len(pts)))
        for a in range(len(pts)):
            for b in range(a + 1, len(pts)):
                if np.hypot(pts[a].x - pts[b].x, pts[a].y - pts[b].y) <= link:
                    la, lb = label[a], label[b]
                    label = [la if v == lb else v for v in label]
        for lab in sorted(set(label)):
            members = [p for p, v in zip(pts, label) if v == lab]
            out.append(TrackEvent(t, kind, float(np.mean([m.x for m in members])), float(np.mean([m.y for m in members]))))
    return out


def track_events(
    assoc: Association,
    crossing_window: float = 0.1,
    pair_radius: float = 0.5,
) -> list[TrackEvent]:
    """Creation, annihilation, charge_flip and crossing events from tracks.

    An annihilation followed within ``crossing_window`` by a creation at
    the same place is reported as one crossing: two vortices passing
    through each other closer than the grid can resolve.
    """
    tracks = assoc.tracks
    births = [tr.observations[0] for tr in tracks if tr.birth == "creation"]
    deaths = [tr.observations[-1] for tr in tracks if tr.death == "annihilation"]
    raw = _grouped(births, "creation", 2 * pair_radius) + _grouped(deaths, "annihilation", 2 * pair_radius)
    for tr in tracks:
        for tf in tr.flips:
            o = next(o for o in tr.observations if o.t == tf)
            raw.append(TrackEvent(tf, "charge_flip", o.x, o.y))
    annih = sorted((e for e in raw if e.kind == "annihilation"), key=lambda e: e.t)
    creat = sorted((e for e in raw if e.kind == "creation"), key=lambda e: e.t)
    used_c = set()
    out = [e for e in raw if e.kind == "charge_flip"]
    for a in annih:
        match = None
        for j, c in enumerate(creat):
            if j in used_c or c.t < a.t or c.t - a.t > crossing_window:
                continue
            if np.hypot(a.x - c.x, a.y - c.y) <= pair_radius:
                match = j
                break
        if match is None:
            out.append(a)
        else:
            used_c.add(match)
            c = creat[match]
            out.append(TrackEvent(0.5 * (a.t + c.t), "crossing", 0.5 * (a.x + c.x), 0.5 * (a.y + c.y)))
    out += [c for j, c in enumerate(creat) if j not in used_c]
    return sorted(out, key=lambda e: (e.t, e.kind, e.x, e.y))


# -- files ----------------------------------------------------------------------


def write_detections_csv(frames: Iterable[Sequence[VortexObservation]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "y", "charge", "residual"])
        for fr in frames:
            for o in fr:
                w.writerow([f"{o.t:.10g}", f"{o.x:.10g}", f"{o.y:.10g}", o.charge, f"{o.residual:.3g}"])


def write_tracks_json(assoc: Association, path: str | Path) -> None:
    doc = {"tracks": [tr.to_dict() for tr in assoc.tracks], "diagnostics": assoc.diagnostics}
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def write_events_csv(events: Iterable, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "event_type", "x", "y"])
        for e in events:
            w.writerow([f"{e.t:.10g}", e.kind, f"{e.x:.10g}", f"{e.y:.10g}"])
