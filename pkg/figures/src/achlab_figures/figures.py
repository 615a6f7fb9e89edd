"""Render publication-style figures from achlioptas-lab CSV outputs.

Five kinds:
  transition      largest-component fraction vs time, one curve per
                  trajectory CSV
  overlay         ensemble mean +- stddev band against the integrated
                  ODE survival curve, max gap annotated
  window_scaling  mean transition window delta/n vs n from a sweep table
  second_giant    largest and second-largest fractions vs time
  sigma_heatmap   dyadic size-bin occupancies over time

Inputs are the exact CSV schemas written by the achlab CLI; mismatches
fail before any rendering with the offending column named.  Rendering is
read-only and reruns produce identical image bytes (timestamps are
suppressed).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

plt.rcParams["svg.hashsalt"] = "achlab-figures"

KINDS = ("transition", "overlay", "window_scaling", "second_giant",
         "sigma_heatmap")


class FigureError(Exception):
    pass


@dataclass
class FigureSpec:
    kind: str
    inputs: list[Path]
    out: Path
    ode: Path | None = None
    title: str | None = None
    dpi: int = 150


def _load(path: Path, required: tuple[str, ...]) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise FigureError(f"input not found: {path}")
    try:
        df = pd.read_csv(path)
    except Exception as exc:
        raise FigureError(f"cannot parse {path}: {exc}") from None
    for col in required:
        if col not in df.columns:
            raise FigureError(f"missing column {col!r} in {path}")
    if len(df) == 0:
        raise FigureError(f"no data rows in {path}")
    return df


def _traj_n(df: pd.DataFrame, path: Path) -> int:
    first = df.iloc[0]
    if first["m"] != 0:
        raise FigureError(f"{path}: first row is not m=0; cannot infer n")
    return int(first["comp_count"])


def _save(fig, spec: FigureSpec) -> None:
    out = Path(spec.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    kwargs = {"dpi": spec.dpi}
    if out.suffix.lower() == ".svg":
        kwargs["metadata"] = {"Date": None}
    fig.savefig(out, **kwargs)
    plt.close(fig)


def _render_transition(spec: FigureSpec):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for path in spec.inputs:
        df = _load(path, ("m", "t", "l1", "comp_count"))
        n = _traj_n(df, path)
        ax.plot(df["t"], df["l1"] / n, lw=1.5, label=Path(path).stem)
    ax.set_xlabel("t = m/n")
    ax.set_ylabel("L1 / n")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=8)
    ax.set_title(spec.title or "largest component fraction")
    return fig


def _overlay_sim_curves(spec: FigureSpec):
    """Mean and std of L1/n on the common grid, from either a single
    ensemble-mean table (t, l1_mean, l1_std) or several trajectory CSVs."""
    first = _load(spec.inputs[0], ("t",))
    if "l1_mean" in first.columns:
        if "l1_std" not in first.columns:
            raise FigureError(f"missing column 'l1_std' in {spec.inputs[0]}")
        return (first["t"].to_numpy(), first["l1_mean"].to_numpy(),
                first["l1_std"].to_numpy())
    curves = []
    ts = None
    for path in spec.inputs:
        df = _load(path, ("m", "t", "l1", "comp_count"))
        n = _traj_n(df, path)
        if ts is None:
            ts = df["t"].to_numpy()
        elif len(df) != len(ts) or not np.allclose(df["t"], ts):
            raise FigureError(f"{path}: time grid differs from {spec.inputs[0]}")
        curves.append(df["l1"].to_numpy() / n)
    stack = np.stack(curves)
    return ts, stack.mean(axis=0), stack.std(axis=0)


def _render_overlay(spec: FigureSpec):
    if spec.ode is None:
        raise FigureError("overlay needs --ode <csv>")
    ts, mean, std = _overlay_sim_curves(spec)
    ode = _load(spec.ode, ("t", "rho_inf"))
    ode_on_grid = np.interp(ts, ode["t"].to_numpy(), ode["rho_inf"].to_numpy())
    gap = float(np.abs(mean - ode_on_grid).max())
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.fill_between(ts, mean - std, mean + std, alpha=0.3,
                    color="tab:blue", label="simulation mean +- std")
    ax.plot(ts, mean, color="tab:blue", lw=1.2)
    ax.plot(ode["t"], ode["rho_inf"], color="tab:red", lw=1.2, ls="--",
            label="ODE survival curve")
    ax.annotate(f"max gap = {gap:.6f}", xy=(0.03, 0.92),
                xycoords="axes fraction", fontsize=9)
    ax.set_xlabel("t = m/n")
    ax.set_ylabel("giant fraction")
    ax.legend(fontsize=8, loc="lower right")
    ax.set_title(spec.title or "simulation vs ODE limit")
    print(f"max_gap={gap:.9g}")
    return fig


def _render_window_scaling(spec: FigureSpec):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for path in spec.inputs:
        df = _load(path, ("rule", "n", "delta_over_n"))
        rules = df["rule"].unique()
        for rule in rules:
            sub = df[df["rule"] == rule].dropna(subset=["delta_over_n"])
            if len(sub) == 0:
                raise FigureError(f"{path}: no attained windows for {rule}")
            grouped = sub.groupby("n")["delta_over_n"]
            ns = np.array(sorted(grouped.groups))
            means = grouped.mean().loc[ns].to_numpy()
            stds = grouped.std().fillna(0.0).loc[ns].to_numpy()
            ax.errorbar(ns, means, yerr=stds, marker="o", capsize=3,
                        label=f"{rule}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("window delta / n")
    ax.legend(fontsize=8)
    ax.set_title(spec.title or "transition window scaling")
    return fig


def _render_second_giant(spec: FigureSpec):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for path in spec.inputs:
        df = _load(path, ("m", "t", "l1", "l2", "comp_count"))
        n = _traj_n(df, path)
        stem = Path(path).stem
        ax.plot(df["t"], df["l1"] / n, lw=1.5, label=f"{stem} L1/n")
        ax.plot(df["t"], df["l2"] / n, lw=1.5, ls="--", label=f"{stem} L2/n")
    ax.set_xlabel("t = m/n")
    ax.set_ylabel("component fraction")
    ax.legend(fontsize=8)
    ax.set_title(spec.title or "largest and second-largest components")
    return fig


def _render_sigma_heatmap(spec: FigureSpec):
    if len(spec.inputs) != 1:
        raise FigureError("sigma_heatmap takes exactly one trajectory CSV")
    df = _load(spec.inputs[0], ("m", "t", "comp_count"))
    sigma_cols = sorted((c for c in df.columns if c.startswith("sigma_")),
                        key=lambda c: int(c.split("_")[1]))
    if not sigma_cols:
        raise FigureError(f"missing column 'sigma_0' in {spec.inputs[0]}")
    n = _traj_n(df, spec.inputs[0])
    mat = df[sigma_cols].to_numpy().T / n
    fig, ax = plt.subplots(figsize=(6.5, 4.0))
    im = ax.imshow(mat, aspect="auto", origin="lower", cmap="viridis",
                   extent=(float(df["t"].iloc[0]), float(df["t"].iloc[-1]),
                           -0.5, len(sigma_cols) - 0.5))
    ax.set_xlabel("t = m/n")
    ax.set_ylabel("dyadic size bin j  (sizes in [2^j, 2^(j+1)))")
    fig.colorbar(im, ax=ax, label="vertex fraction")
    ax.set_title(spec.title or "component size spectrum")
    return fig


_RENDERERS = {
    "transition": _render_transition,
    "overlay": _render_overlay,
    "window_scaling": _render_window_scaling,
    "second_giant": _render_second_giant,
    "sigma_heatmap": _render_sigma_heatmap,
}


def render(spec: FigureSpec) -> Path:
    """Validate inputs, draw, and write the image; returns the output path."""
    if spec.kind not in KINDS:
        raise FigureError(f"unknown figure kind {spec.kind!r}")
    if not spec.inputs:
        raise FigureError("at least one input CSV is required")
    fig = _RENDERERS[spec.kind](spec)
    _save(fig, spec)
    return Path(spec.out)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="figures",
        description="Render figures from achlioptas-lab CSV outputs")
    ap.add_argument("kind", choices=KINDS)
    ap.add_argument("--in", dest="inputs", nargs="+", required=True,
                    help="input CSV file(s)")
    ap.add_argument("--ode", default=None, help="ODE CSV (overlay kind)")
    ap.add_argument("--out", required=True, help="output image (.png or .svg)")
    ap.add_argument("--title", default=None)
    ap.add_argument("--dpi", type=int, default=150)
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    spec = FigureSpec(kind=args.kind, inputs=[Path(p) for p in args.inputs],
                      out=Path(args.out),
                      ode=Path(args.ode) if args.ode else None,
                      title=args.title, dpi=args.dpi)
    try:
        out = render(spec)
    except FigureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
