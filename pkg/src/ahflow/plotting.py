"""SVG plot emission for persisted run bundles.

Plots are rendered from the bundle files alone (records.csv, snapshots.csv,
resolved.cfg), never from in-memory solver state, so they can be regenerated
long after a run.  Output is deterministic for fixed input: the SVG hash salt
is pinned and no timestamps are embedded.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .diagnostics import tail_fit
from .errors import IoError, MissingColumn

__all__ = ["plot_bundle", "read_records"]

RECORD_COLUMNS = (
    "t", "sup_rm_plus_k", "min_lambda", "max_lambda", "min_kappa",
    "max_kappa", "sup_r2_lambda", "sup_kml_abs", "bianchi_res", "dt",
)
SNAPSHOT_COLUMNS = ("t", "x", "r", "lambda", "kappa", "f")

# series identically zero (exact fixed point) still need a visible log plot
LOG_FLOOR = 1e-18


def _read_csv(path: Path, required: tuple[str, ...]) -> dict[str, np.ndarray]:
    if not path.exists():
        raise MissingColumn(f"{path} does not exist")
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise MissingColumn(f"{path} is empty")
            rows = list(reader)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    for col in required:
        if col not in header:
            raise MissingColumn(f"{path} lacks column {col!r}")
    if not rows:
        raise MissingColumn(f"{path} has a header but no rows")
    data = np.array([[float(v) for v in row] for row in rows])
    return {name: data[:, i] for i, name in enumerate(header)}


def read_records(out_dir: str | Path) -> dict[str, np.ndarray]:
    return _read_csv(Path(out_dir) / "records.csv", RECORD_COLUMNS)


def _read_config(out_dir: Path) -> dict[str, str]:
    cfg = {}
    path = out_dir / "resolved.cfg"
    if path.exists():
        for line in path.read_text().splitlines():
            if "=" in line:
                key, _, val = line.partition("=")
                cfg[key.strip()] = val.strip()
    return cfg


def _setup_matplotlib():
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "ahflow"
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path: Path):
    fig.savefig(path, format="svg", metadata={"Date": None})


def plot_bundle(out_dir: str | Path) -> list[Path]:
    """Emit the four standard plots for a run bundle; returns written paths."""
    out_dir = Path(out_dir)
    rec = read_records(out_dir)
    plt = _setup_matplotlib()
    paths = []

    # (a) deviation-from-hyperbolic norm, log scale, with fitted tail overlay
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    t = rec["t"]
    y = np.maximum(rec["sup_rm_plus_k"], LOG_FLOOR)
    ax.semilogy(t, y, color="tab:blue", label="sup |Rm+K|")
    fit = tail_fit(t, rec["sup_rm_plus_k"]) if t.size >= 10 else None
    if fit is not None:
        tt = np.linspace(fit.window[0], fit.window[1], 50)
        ax.semilogy(tt, fit.C_fit * np.exp(-fit.rate_fit * tt), "--",
                    color="tab:red",
                    label=f"fit: rate {fit.rate_fit:.3g}")
    ax.set_xlabel("t")
    ax.set_ylabel("sup |Rm+K|")
    ax.legend(loc="best")
    ax.set_title("curvature deviation from the constant -1 model")
    fig.tight_layout()
    p = out_dir / "rm_decay.svg"
    _save(fig, p)
    plt.close(fig)
    paths.append(p)

    # (b) curvature profiles at selected snapshot times
    snap_path = out_dir / "snapshots.csv"
    if snap_path.exists():
        snap = _read_csv(snap_path, SNAPSHOT_COLUMNS)
        times = np.unique(snap["t"])
        pick = times[np.unique(np.linspace(0, times.size - 1, 6).astype(int))]
        fig, ax = plt.subplots(figsize=(6.4, 4.2))
        for tv in pick:
            sel = snap["t"] == tv
            r = snap["r"][sel]
            keep = r <= 12.0
            ax.plot(r[keep], snap["lambda"][sel][keep], label=f"t = {tv:.3g}")
        ax.set_xlabel("r")
        ax.set_ylabel("orbit curvature")
        ax.legend(loc="best", fontsize=8)
        ax.set_title("profile snapshots")
        fig.tight_layout()
        p = out_dir / "profiles.svg"
        _save(fig, p)
        plt.close(fig)
        paths.append(p)

        # (c) extrema against the theorem envelopes, when n is recoverable
        cfg = _read_config(out_dir)
        n = int(cfg.get("n", "3"))
        sel0 = snap["t"] == times[0]
        lam0 = snap["lambda"][sel0]
        inf0 = float(np.min(lam0 + 1.0))
        max0 = float(np.max(lam0))
        fig, ax = plt.subplots(figsize=(6.4, 4.2))
        ax.plot(t, rec["min_lambda"], color="tab:blue", label="min lam")
        ax.plot(t, rec["max_lambda"], color="tab:orange", label="max lam")
        ax.plot(t, -1.0 + np.exp(-2 * (n - 1) * t) * inf0, "--",
                color="tab:blue", label="lower envelope")
        if max0 < 0:
            dsq = 0.99 * (-max0)
            ax.plot(t, -1.0 + (1 - dsq) * np.exp(-2 * (n - 1) * dsq * t), "--",
                    color="tab:orange", label="upper envelope")
        ax.set_xlabel("t")
        ax.set_ylabel("orbit curvature extrema")
        ax.legend(loc="best", fontsize=8)
        ax.set_title("extrema vs proved envelopes")
        fig.tight_layout()
        p = out_dir / "envelopes.svg"
        _save(fig, p)
        plt.close(fig)
        paths.append(p)

    # (d) minimal-sphere proximity monitor
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.plot(t, rec["sup_r2_lambda"], color="tab:green")
    ax.axhline(1.0, color="tab:red", linestyle=":", label="minimal sphere")
    ax.set_xlabel("t")
    ax.set_ylabel("sup r^2 lam")
    ax.legend(loc="best")
    ax.set_title("neckpinch proximity monitor")
    fig.tight_layout()
    p = out_dir / "pinch.svg"
    _save(fig, p)
    plt.close(fig)
    paths.append(p)

    return paths
