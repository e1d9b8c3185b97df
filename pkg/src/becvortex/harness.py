"""Scenario configuration and orchestration of the three engines.

Engines
-------
closed_form
    Zeros of the analytic (ideal or Ritz) wavefunction.
ritz_basis
    The gridded initial state projected onto the broadened oscillator basis
    and rotated mode by mode, then detected on the grid.
gpe_numeric
    Split-step integration of the full equation.

Every engine writes the same set of files into its own subdirectory, so
any two of them can be compared directly.
"""
from __future__ import annotations

import copy
import csv
import itertools
import json
import logging
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import basis
from .basis import sigma_broadening
from .closed_form import (
    FAMILIES,
    RitzExpansion,
    VortexConfig,
    closed_form,
    closed_form_trajectory,
    precession_frequency,
)
from .field import GridSpec, write_snapshot
from .solver import SolverParams, StationaryStates, build_initial_state, evolve_scenario
from .tracking import (
    VortexObservation,
    associate,
    average_count,
    count_series,
    detect,
    track_events,
    write_detections_csv,
    write_events_csv,
    write_tracks_json,
)

log = logging.getLogger(__name__)

ENGINES = ("closed_form", "ritz_basis", "gpe_numeric")
WORKERS_ENV = "BECVORTEX_WORKERS"
V_MAX = 10.0


class ScenarioError(ValueError):
    """Invalid scenario configuration."""


@dataclass
class Scenario:
    name: str = "scenario"
    family: str = "single"
    x0: float = 1.0
    vortices: list[list[float]] | None = None
    beta: float = 0.0
    T: float = 20.0
    stride: float = 0.01
    dt: float = 1e-3
    grid: dict = field(default_factory=lambda: {"extent": 8.0, "points": 256})
    engines: list[str] = field(default_factory=lambda: list(ENGINES))
    output: str = "out"
    degree: int = 12
    r_edge: float | None = None
    field_stride: float | None = None
    profile_beta: float | None = None
    figures: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.engines:
            raise ScenarioError("at least one engine is required")
        bad = [e for e in self.engines if e not in ENGINES]
        if bad:
            raise ScenarioError(f"unknown engine(s) {bad}; choose from {list(ENGINES)}")
        if not self.T > 0:
            raise ScenarioError("T must be positive")
        if not self.stride > 0 or not self.dt > 0:
            raise ScenarioError("stride and dt must be positive")
        if self.beta < 0:
            raise ScenarioError("beta must be non-negative")
        if self.vortices is None and self.family not in FAMILIES:
            raise ScenarioError(f"family must be one of {FAMILIES} unless vortices are given")
        GridSpec(float(self.grid["extent"]), int(self.grid["points"]))

    # construction

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        known = set(cls.__dataclass_fields__)
        extra = set(doc) - known
        if extra:
            raise ScenarioError(f"unknown scenario keys {sorted(extra)}")
        doc = copy.deepcopy(doc)
        if "grid" in doc:
            doc["grid"] = {"extent": 8.0, "points": 256, **doc["grid"]}
        return cls(**doc)

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return asdict(self)

    def with_overrides(self, overrides: dict[str, Any]) -> "Scenario":
        """Apply dotted-key overrides such as {"grid.points": 128}."""
        doc = self.to_dict()
        for key, value in overrides.items():
            node = doc
            parts = key.split(".")
            for p in parts[:-1]:
                if not isinstance(node.get(p), dict):
                    raise ScenarioError(f"cannot override {key!r}")
                node = node[p]
            if parts[-1] not in node:
                raise ScenarioError(f"unknown scenario key {key!r}")
            node[parts[-1]] = value
        return Scenario.from_dict(doc)

    # derived objects

    @property
    def grid_spec(self) -> GridSpec:
        return GridSpec(float(self.grid["extent"]), int(self.grid["points"]))

    @property
    def config(self) -> VortexConfig:
        if self.vortices is not None:
            return VortexConfig(tuple(tuple(v) for v in self.vortices), self.beta, "custom")
        return VortexConfig.named(self.family, self.x0, self.beta)

    @property
    def detection_radius(self) -> float:
        return self.r_edge if self.r_edge is not None else 4.0 * sigma_broadening(self.beta)

    @property
    def solver_params(self) -> SolverParams:
        return SolverParams(dt=self.dt, stride=self.stride, beta=self.beta, grid=self.grid_spec)

    def sample_times(self) -> np.ndarray:
        n = int(round(self.T / self.stride))
        return self.stride * np.arange(n + 1)


def parse_value(text: str):
    """Scalar or JSON value from a command-line override."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


# -- engines --------------------------------------------------------------------

Frames = list[list[VortexObservation]]


def _closed_form_frames(s: Scenario, times: np.ndarray) -> Frames:
    cfg = s.config
    if cfg.family in FAMILIES:
        cf = closed_form(cfg.family, cfg.x0, s.beta)
    else:
        cf = RitzExpansion(cfg, s.beta)
    frames = []
    for smp in closed_form_trajectory(cf, times, r_edge=s.detection_radius):
        frames.append(
            [VortexObservation(float(smp.t), float(p[0]), float(p[1]), int(q)) for p, q in zip(smp.positions, smp.charges)]
        )
    return frames


def _initial_state(s: Scenario):
    params = s.solver_params
    states = StationaryStates.compute(params, s.profile_beta)
    return build_initial_state(s.config, params, states, r_edge=s.detection_radius)


def _ritz_basis_frames(s: Scenario, times: np.ndarray, out: Path) -> Frames:
    f0 = _initial_state(s)
    state = basis.project(f0, s.beta, s.degree)
    state.save(out / "spectral_state.json")
    frames = []
    for t in times:
        f = basis.synthesize(basis.evolve(state, float(t)), s.grid_spec)
        frames.append(detect(f, r_edge=s.detection_radius))
    return frames


def _gpe_frames(s: Scenario, times: np.ndarray, out: Path) -> Frames:
    f0 = _initial_state(s)
    params = s.solver_params
    field_every = None
    if s.field_stride:
        field_every = max(1, int(round(s.field_stride / s.stride)))
    fields_dir = out / "fields"
    counter = itertools.count()

    def observe(f):
        k = next(counter)
        if field_every is not None and k % field_every == 0:
            write_snapshot(f, fields_dir / f"psi_{k:06d}.bin")
        return detect(f, r_edge=s.detection_radius)

    rec = evolve_scenario(f0, params, s.T, observer=observe, keep_fields=False)
    write_snapshot(f0, fields_dir / "psi_initial.bin")
    (out / "evolution.json").write_text(json.dumps(rec.manifest(), indent=1) + "\n")
    return rec.observations


@dataclass
class EngineResult:
    engine: str
    status: str
    times: np.ndarray | None = None
    frames: Frames | None = None
    error: str | None = None


def _write_engine_outputs(s: Scenario, engine: str, times, frames: Frames, out: Path) -> dict:
    cfg = s.config
    series = count_series(frames, times, cfg.total_charge)
    series.to_csv(out / "counts.csv")
    write_detections_csv(frames, out / "detections.csv")
    assoc = associate(frames, times, v_max=V_MAX, r_edge=s.detection_radius)
    write_tracks_json(assoc, out / "tracks.json")
    events = track_events(assoc)
    write_events_csv(events, out / "events.csv")
    x0 = "" if s.vortices is not None else f"{s.x0:.10g}"
    with open(out / "trajectories.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "vortex_index", "x", "y", "charge", "family", "beta", "x0"])
        rows = []
        for tr in assoc.tracks:
            for o in tr.observations:
                rows.append((o.t, tr.id, o.x, o.y, o.charge))
        for t, i, x, y, q in sorted(rows):
            w.writerow([f"{t:.10g}", i, f"{x:.10g}", f"{y:.10g}", q, cfg.family, f"{s.beta:.10g}", x0])
    summary = {
        "engine": engine,
        "frames": len(frames),
        "mean_count": average_count(series, (0.0, s.T)),
        "max_count": int(series.counts.max()),
        "flagged_frames": [[float(times[k]), msg] for k, msg in series.flags],
        "events": len(events),
        "association_diagnostics": len(assoc.diagnostics),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=1) + "\n")
    return summary


def run_scenario(s: Scenario, output: str | Path | None = None) -> dict:
    """Run every requested engine and write the artifact bundle.

    A failing engine does not stop the others; the bundle manifest lists
    its status and the error. Returns the manifest.
    """
    root = Path(output if output is not None else s.output)
    root.mkdir(parents=True, exist_ok=True)
    (root / "scenario.json").write_text(json.dumps(s.to_dict(), indent=1, sort_keys=True) + "\n")
    times = s.sample_times()
    manifest: dict[str, Any] = {"scenario": s.name, "engines": {}}
    for engine in s.engines:
        out = root / engine
        out.mkdir(exist_ok=True)
        try:
            if engine == "closed_form":
                frames = _closed_form_frames(s, times)
            elif engine == "ritz_basis":
                frames = _ritz_basis_frames(s, times, out)
            else:
                frames = _gpe_frames(s, times, out)
            summary = _write_engine_outputs(s, engine, times, frames, out)
            manifest["engines"][engine] = {"status": "ok", "mean_count": summary["mean_count"]}
            if s.figures:
                from .plotting import plot_engine_bundle

                plot_engine_bundle(out, title=f"{s.name}: {engine}")
        except Exception as exc:  # noqa: BLE001  partial bundle on any engine failure
            log.error("engine %s failed: %s", engine, exc)
            manifest["engines"][engine] = {
                "status": "failed",
                "error_type": type(exc).__name__,
                "message": str(exc),
                "traceback": traceback.format_exc(limit=4),
            }
    manifest["ok"] = all(v["status"] == "ok" for v in manifest["engines"].values())
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest


# -- comparison -----------------------------------------------------------------


def _load_detections(path: Path) -> dict[float, list[tuple[float, float, int]]]:
    frames: dict[float, list] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            frames.setdefault(float(row["t"]), []).append((float(row["x"]), float(row["y"]), int(row["charge"])))
    return frames


def _load_times(bundle: Path) -> np.ndarray:
    data = np.loadtxt(bundle / "counts.csv", delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0]


def _load_events(path: Path) -> list[tuple[float, str, float, float]]:
    if not path.exists():
        return []
    with open(path, newline="") as fh:
        return [(float(r["t"]), r["event_type"], float(r["x"]), float(r["y"])) for r in csv.DictReader(fh)]


def _engine_dir(path: Path) -> Path:
    if (path / "detections.csv").exists():
        return path
    subs = [path / e for e in ENGINES if (path / e / "detections.csv").exists()]
    if len(subs) == 1:
        return subs[0]
    raise ScenarioError(f"{path} is not an engine bundle (no detections.csv)")


def compare(dir_a: str | Path, dir_b: str | Path, gate: float | None = None) -> dict:
    """Frame-by-frame matching of two engines' vortex sets.

    Only same-charge vortices are matched, by minimum total distance within
    the association gate. Event times are matched per event kind.
    """
    a_dir, b_dir = _engine_dir(Path(dir_a)), _engine_dir(Path(dir_b))
    ta, tb = _load_times(a_dir), _load_times(b_dir)
    if len(ta) != len(tb) or np.abs(ta - tb).max(initial=0) > 1e-9:
        raise ScenarioError("frame grids of the two bundles differ")
    if gate is None:
        gate = V_MAX * (ta[1] - ta[0]) if len(ta) > 1 else np.inf
    da, db = _load_detections(a_dir / "detections.csv"), _load_detections(b_dir / "detections.csv")
    frames, errs = [], []
    unmatched_a = unmatched_b = 0
    a_only_frames = 0
    for t in ta:
        A = da.get(float(f"{t:.10g}"), [])
        B = db.get(float(f"{t:.10g}"), [])
        pairs = []
        for q in (-1, 1):
            ia = [k for k, v in enumerate(A) if v[2] == q]
            ib = [k for k, v in enumerate(B) if v[2] == q]
            if not ia or not ib:
                continue
            d = np.array([[np.hypot(A[i][0] - B[j][0], A[i][1] - B[j][1]) for j in ib] for i in ia])
            cost = np.where(d <= gate, d, 1e6)
            for r, c in zip(*linear_sum_assignment(cost)):
                if d[r, c] <= gate:
                    pairs.append((ia[r], ib[c], float(d[r, c])))
        pairs.sort()
        errs += [p[2] for p in pairs]
        ua, ub = len(A) - len(pairs), len(B) - len(pairs)
        unmatched_a += ua
        unmatched_b += ub
        if ua > 0:
            a_only_frames += 1
        frames.append(
            {
                "t": float(t),
                "a": [list(v) for v in A],
                "b": [list(v) for v in B],
                "matched": [list(p) for p in pairs],
                "unmatched_a": ua,
                "unmatched_b": ub,
            }
        )
    ev_a, ev_b = _load_events(a_dir / "events.csv"), _load_events(b_dir / "events.csv")
    offsets = []
    for t, kind, x, y in ev_a:
        cand = [tb_ for tb_, kb, _, _ in ev_b if kb == kind]
        if cand:
            j = int(np.argmin([abs(c - t) for c in cand]))
            offsets.append({"kind": kind, "t_a": t, "t_b": cand[j], "offset": cand[j] - t})
        else:
            offsets.append({"kind": kind, "t_a": t, "t_b": None, "offset": None})
    errs_arr = np.array(errs)
    summary = {
        "frames": len(frames),
        "matched": len(errs),
        "mean_position_error": float(errs_arr.mean()) if len(errs) else 0.0,
        "max_position_error": float(errs_arr.max()) if len(errs) else 0.0,
        "unmatched_a": unmatched_a,
        "unmatched_b": unmatched_b,
        "frames_with_unmatched_a": a_only_frames,
        "max_event_offset": max((abs(o["offset"]) for o in offsets if o["offset"] is not None), default=0.0),
    }
    return {"a": str(a_dir), "b": str(b_dir), "gate": gate, "summary": summary, "events": offsets, "frames": frames}


# -- sweeps ---------------------------------------------------------------------


def parse_range(item: str) -> tuple[str, list[float]]:
    """'beta=0:1:0.1' or 'x0=0.5,1,1.5' -> (key, sorted values)."""
    if "=" not in item:
        raise ScenarioError(f"sweep parameter {item!r} must look like key=start:stop:step or key=v1,v2")
    key, rng = item.split("=", 1)
    if ":" in rng:
        try:
            lo, hi, step = (float(v) for v in rng.split(":"))
        except ValueError:
            raise ScenarioError(f"bad range {rng!r}") from None
        if not step > 0 or hi < lo:
            raise ScenarioError(f"bad range {rng!r}")
        n = int(np.floor((hi - lo) / step + 1e-9))
        values = [round(lo + k * step, 12) for k in range(n + 1)]
    else:
        values = [float(v) for v in rng.split(",") if v.strip()]
    if not values:
        raise ScenarioError(f"empty sweep for {key}")
    return key.strip(), sorted(set(values))


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ScenarioError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def _point_dir(key_values: Sequence[tuple[str, float]]) -> str:
    return "_".join(f"{k}={v:g}" for k, v in key_values)


def _run_point(args):
    doc, overrides, out = args
    s = Scenario.from_dict(doc).with_overrides(dict(overrides))
    return run_scenario(s, out)


def sweep(s: Scenario, params: Sequence[str], output: str | Path | None = None, workers: int | None = None) -> dict:
    """Run the scenario on the Cartesian product of the swept values.

    Each point owns a subdirectory named after its values. The summary
    table is ordered by value, independent of execution order.
    """
    root = Path(output if output is not None else s.output)
    root.mkdir(parents=True, exist_ok=True)
    axes = [parse_range(p) for p in params]
    keys = [k for k, _ in axes]
    points = [tuple(zip(keys, combo)) for combo in itertools.product(*(v for _, v in axes))]
    jobs = [(s.to_dict(), pt, str(root / _point_dir(pt))) for pt in points]
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            manifests = list(pool.map(_run_point, jobs))
    else:
        manifests = [_run_point(j) for j in jobs]
    rows = []
    for pt, man in zip(points, manifests):
        for engine, info in sorted(man["engines"].items()):
            rows.append([*(v for _, v in pt), engine, info["status"], info.get("mean_count", "")])
    with open(root / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*keys, "engine", "status", "mean_count"])
        for r in rows:
            w.writerow([*(f"{v:g}" for v in r[: len(keys)]), r[-3], r[-2], "" if r[-1] == "" else f"{r[-1]:.10g}"])
    result = {"parameters": keys, "points": [dict(pt) for pt in points], "ok": all(m["ok"] for m in manifests)}
    (root / "sweep.json").write_text(json.dumps(result, indent=1) + "\n")
    if s.figures:
        from .plotting import plot_sweep

        plot_sweep(root / "sweep.csv", root / "sweep.png")
    return result


# -- precession -----------------------------------------------------------------


@dataclass
class PrecessionResult:
    x0: float
    beta: float
    omega_numeric: float | None
    omega_analytic: float
    valid: bool
    note: str = ""


def measure_precession(
    x0: float,
    beta: float,
    grid: GridSpec = GridSpec(),
    dt: float = 1e-3,
    stride: float = 0.02,
    periods: float = 2.0,
) -> PrecessionResult:
    """Precession rate of a single off-centre vortex from the tracked angle.

    The vortex is followed over ``periods`` revolutions at the analytic
    rate; the unwrapped polar angle is fitted by least squares.
    """
    w_an = precession_frequency(beta)
    T = periods * 2 * np.pi / w_an
    params = SolverParams(dt=dt, stride=stride, beta=beta, grid=grid)
    f0 = build_initial_state(VortexConfig.named("single", x0, beta), params, StationaryStates.compute(params))
    r_edge = 4.0 * sigma_broadening(beta)
    rec = evolve_scenario(f0, params, T, observer=lambda f: detect(f, r_edge=r_edge), keep_fields=False)
    frames = rec.observations
    assoc = associate(frames, rec.times, v_max=V_MAX, r_edge=r_edge)
    first = [tr for tr in assoc.tracks if tr.birth == "initial"]
    if len(first) != 1 or first[0].end < rec.times[-1] - 1e-9 or len(first[0].observations) != len(frames):
        return PrecessionResult(x0, beta, None, w_an, False, "track lost")
    pos = first[0].positions()
    t = np.array([o.t for o in first[0].observations])
    ang = np.unwrap(np.arctan2(pos[:, 1], pos[:, 0]))
    slope = np.polyfit(t, ang, 1)[0]
    return PrecessionResult(x0, beta, float(slope), w_an, True)


def fit_precession_coefficient(betas: Sequence[float], omegas: Sequence[float]) -> float:
    """Least-squares c in omega_p = 1 + c beta."""
    b, w = np.asarray(betas, float), np.asarray(omegas, float)
    if not np.any(b != 0):
        raise ValueError("need at least one nonzero beta to fit c")
    return float(np.sum(b * (w - 1.0)) / np.sum(b * b))


def precession_experiment(
    x0_list: Sequence[float],
    beta_list: Sequence[float],
    grid: GridSpec = GridSpec(),
    dt: float = 1e-3,
    stride: float = 0.02,
    periods: float = 2.0,
    output: str | Path | None = None,
) -> dict:
    if not len(x0_list) or not len(beta_list):
        raise ScenarioError("x0 and beta lists must be non-empty")
    results = [
        measure_precession(x0, b, grid, dt, stride, periods) for x0 in sorted(x0_list) for b in sorted(beta_list)
    ]
    coeffs = {}
    for x0 in sorted(x0_list):
        rows = [r for r in results if r.x0 == x0 and r.valid]
        try:
            coeffs[x0] = fit_precession_coefficient([r.beta for r in rows], [r.omega_numeric for r in rows])
        except ValueError:
            coeffs[x0] = None
    out = {"results": [asdict(r) for r in results], "c": {f"{k:g}": v for k, v in coeffs.items()}}
    if output is not None:
        root = Path(output)
        root.mkdir(parents=True, exist_ok=True)
        with open(root / "precession.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x0", "beta", "omega_numeric", "omega_analytic", "valid"])
            for r in results:
                w.writerow([f"{r.x0:g}", f"{r.beta:g}", "" if r.omega_numeric is None else f"{r.omega_numeric:.10g}", f"{r.omega_analytic:.10g}", int(r.valid)])
        with open(root / "precession_c.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x0", "c"])
            for k, v in coeffs.items():
                w.writerow([f"{k:g}", "" if v is None else f"{v:.10g}"])
        (root / "precession.json").write_text(json.dumps(out, indent=1) + "\n")
        from .plotting import plot_precession

        plot_precession(root / "precession.csv", root / "precession_c.csv", root / "precession.png")
    return out
