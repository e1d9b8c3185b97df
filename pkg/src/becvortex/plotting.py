"""Static figures written next to the CSV outputs (Agg backend, no display)."""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_STYLE = {
    "figure.dpi": 110,
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.bbox": "tight",
    "svg.hashsalt": "becvortex",
}
_CHARGE_COLORS = {1: "tab:red", -1: "tab:blue"}


def _read_rows(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _save(fig, path: Path) -> Path:
    # fixed metadata keeps the files byte-stable across runs
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_trajectories(csv_path: str | Path, png_path: str | Path, title: str = "") -> Path:
    rows = _read_rows(Path(csv_path))
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 4.0))
        tracks: dict[int, list] = {}
        for r in rows:
            tracks.setdefault(int(r["vortex_index"]), []).append((float(r["x"]), float(r["y"]), int(r["charge"])))
        for pts in tracks.values():
            a = np.array(pts)
            ax.plot(a[:, 0], a[:, 1], lw=0.9, color=_CHARGE_COLORS.get(int(a[0, 2]), "k"))
            ax.plot(a[0, 0], a[0, 1], "o", ms=3, color=_CHARGE_COLORS.get(int(a[0, 2]), "k"))
        ax.set_aspect("equal")
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        ax.set_title(title or "vortex trajectories")
        return _save(fig, Path(png_path))


def plot_counts(csv_path: str | Path, png_path: str | Path, title: str = "") -> Path:
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 2.4))
        if len(data):
            ax.step(data[:, 0], data[:, 1], where="post", lw=0.9, color="k")
        ax.set_xlabel("t")
        ax.set_ylabel("N")
        ax.set_title(title or "vortex number")
        return _save(fig, Path(png_path))


def plot_engine_bundle(directory: str | Path, title: str = "") -> list[Path]:
    d = Path(directory)
    out = []
    if (d / "trajectories.csv").exists():
        out.append(plot_trajectories(d / "trajectories.csv", d / "trajectories.png", title))
    if (d / "counts.csv").exists():
        out.append(plot_counts(d / "counts.csv", d / "counts.png", title))
    return out


def plot_sweep(csv_path: str | Path, png_path: str | Path) -> Path:
    rows = _read_rows(Path(csv_path))
    keys = [k for k in rows[0] if k not in ("engine", "status", "mean_count")] if rows else []
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        if keys:
            key = keys[0]
            for engine in sorted({r["engine"] for r in rows}):
                sel = [r for r in rows if r["engine"] == engine and r["mean_count"]]
                if sel:
                    ax.plot([float(r[key]) for r in sel], [float(r["mean_count"]) for r in sel], "o-", ms=3, label=engine)
            ax.set_xlabel(key)
            ax.legend(frameon=False)
        ax.set_ylabel("<N>")
        return _save(fig, Path(png_path))


def plot_precession(omega_csv: str | Path, c_csv: str | Path, png_path: str | Path) -> Path:
    rows = _read_rows(Path(omega_csv))
    crow = _read_rows(Path(c_csv))
    with plt.rc_context(_STYLE):
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(7.5, 3.0))
        for x0 in sorted({r["x0"] for r in rows}, key=float):
            sel = [r for r in rows if r["x0"] == x0 and r["omega_numeric"]]
            a1.plot([float(r["beta"]) for r in sel], [float(r["omega_numeric"]) for r in sel], "o", ms=3, label=f"x0={x0}")
        b = sorted({float(r["beta"]) for r in rows})
        an = {float(r["beta"]): float(r["omega_analytic"]) for r in rows}
        a1.plot(b, [an[v] for v in b], "k-", lw=0.9, label="analytic")
        a1.set_xlabel("beta")
        a1.set_ylabel("omega_p")
        a1.legend(frameon=False, fontsize=7)
        sel = [r for r in crow if r["c"]]
        a2.plot([float(r["x0"]) for r in sel], [float(r["c"]) for r in sel], "o-", ms=3)
        a2.axhline(-1 / (8 * np.pi), color="k", lw=0.8, ls="--")
        a2.set_xlabel("x0")
        a2.set_ylabel("c")
        return _save(fig, Path(png_path))
