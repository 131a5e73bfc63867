"""Render multi-panel figures from long-format result CSVs.

Input rows carry (alpha, beta, seed, generation, entity, metric, target,
value). Figure ``fig3`` plots relative efficiency against alpha, one panel
per beta and one line per entity; ``fig4`` and ``fig5`` plot per-task
prediction error against generation on a panel grid over (alpha, beta), one
line per (entity, task) pair.

Rendering is a pure function of the CSV: fixed style, fixed colors keyed by
entity index, a pinned SVG hash salt and no embedded timestamps, so
re-rendering the same CSV produces a byte-identical SVG.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

REQUIRED_COLUMNS = ("alpha", "beta", "seed", "generation", "entity", "metric", "target", "value")
FIGURES = ("fig3", "fig4", "fig5")

# fixed, entity-indexed style assignments keep panels comparable across figures
ENTITY_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
TARGET_STYLES = ("-", "--", ":", "-.")


class SchemaError(ValueError):
    """The CSV does not carry the expected columns."""


class NoRowsError(ValueError):
    """The CSV parsed but holds no rows for the requested figure."""


@dataclass(frozen=True)
class FigureSpec:
    input_csv: Path
    figure: str
    output: Path

    def __post_init__(self):
        if self.figure not in FIGURES:
            raise ValueError(f"figure must be one of {FIGURES}, got {self.figure!r}")
        object.__setattr__(self, "input_csv", Path(self.input_csv))
        object.__setattr__(self, "output", Path(self.output))


def load_rows(path: Path) -> list[dict]:
    """Parse and type-check the CSV; missing columns raise SchemaError."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            missing = [c for c in REQUIRED_COLUMNS if c not in header]
            if missing:
                raise SchemaError(f"CSV {path} is missing columns: {', '.join(missing)}")
            rows = []
            for raw in reader:
                rows.append(
                    {
                        "alpha": float(raw["alpha"]),
                        "beta": float(raw["beta"]),
                        "seed": int(raw["seed"]),
                        "generation": int(raw["generation"]),
                        "entity": int(raw["entity"]),
                        "metric": raw["metric"],
                        "target": int(raw["target"]) if raw["target"] not in ("", None) else None,
                        "value": float(raw["value"]),
                    }
                )
    except OSError as exc:
        raise SchemaError(f"cannot read CSV {path}: {exc}") from exc
    return rows


def _entity_color(entity: int) -> str:
    if entity < 0:
        return "#7f7f7f"
    return ENTITY_COLORS[entity % len(ENTITY_COLORS)]


def _render_efficiency(rows: list[dict]):
    """One panel per beta: relative efficiency vs alpha, one line per entity."""
    selected = [r for r in rows if r["metric"] == "rel_efficiency"]
    limit_rows = [r for r in selected if r["generation"] == -1]
    if limit_rows:
        selected = limit_rows
    if not selected:
        raise NoRowsError("no relative-efficiency rows in this CSV")
    betas = sorted({r["beta"] for r in selected})
    entities = sorted({r["entity"] for r in selected})
    fig, axes = plt.subplots(
        1, len(betas), figsize=(4.0 * len(betas), 3.4), sharey=True, squeeze=False
    )
    for ax, beta in zip(axes[0], betas):
        for entity in entities:
            points = sorted(
                ((r["alpha"], r["value"]) for r in selected
                 if r["beta"] == beta and r["entity"] == entity),
                key=lambda p: p[0],
            )
            if not points:
                continue
            xs, ys = zip(*points)
            if entity < 0:
                ax.plot(xs, ys, color=_entity_color(entity), linestyle="--", label="mean")
            else:
                ax.plot(xs, ys, color=_entity_color(entity), label=f"model {entity}")
        ax.set_title(f"beta = {beta:g}")
        ax.set_xlabel("alpha")
        ax.grid(True, alpha=0.3)
    axes[0][0].set_ylabel("relative efficiency")
    axes[0][-1].legend(loc="best", fontsize=8)
    return fig


def _render_trajectories(rows: list[dict]):
    """Panel grid over (alpha, beta): per-task error vs generation, one line
    per (entity, task) pair."""
    selected = [r for r in rows if r["metric"] == "mspe" and r["generation"] >= 0]
    if not selected:
        raise NoRowsError("no per-generation prediction-error rows in this CSV")
    alphas = sorted({r["alpha"] for r in selected})
    betas = sorted({r["beta"] for r in selected})
    entities = sorted({r["entity"] for r in selected})
    targets = sorted({r["target"] for r in selected if r["target"] is not None})
    fig, axes = plt.subplots(
        len(alphas), len(betas),
        figsize=(3.6 * len(betas), 2.8 * len(alphas)),
        sharex=True, squeeze=False,
    )
    for i, alpha in enumerate(alphas):
        for j, beta in enumerate(betas):
            ax = axes[i][j]
            for entity in entities:
                for target in targets:
                    points = sorted(
                        ((r["generation"], r["value"]) for r in selected
                         if r["alpha"] == alpha and r["beta"] == beta
                         and r["entity"] == entity and r["target"] == target),
                        key=lambda p: p[0],
                    )
                    if not points:
                        continue
                    xs, ys = zip(*points)
                    ax.plot(
                        xs, ys,
                        color=_entity_color(entity),
                        linestyle=TARGET_STYLES[target % len(TARGET_STYLES)],
                        linewidth=1.2,
                        label=f"model {entity} on task {target}",
                    )
            ax.set_title(f"alpha = {alpha:g}, beta = {beta:g}", fontsize=9)
            ax.grid(True, alpha=0.3)
            if i == len(alphas) - 1:
                ax.set_xlabel("generation")
            if j == 0:
                ax.set_ylabel("prediction error")
    handles, labels = axes[0][0].get_legend_handles_labels()
    if handles:
        fig.legend(handles, labels, loc="lower center", ncol=min(len(labels), 4), fontsize=7)
        fig.subplots_adjust(bottom=0.06 + 0.03 * (len(labels) // 5 + 1))
    return fig


def render(spec: FigureSpec) -> Path:
    """Render the requested figure; returns the output path."""
    rows = load_rows(spec.input_csv)
    with plt.rc_context({"svg.hashsalt": "plotfigs", "figure.dpi": 100}):
        if spec.figure == "fig3":
            fig = _render_efficiency(rows)
        else:
            fig = _render_trajectories(rows)
        try:
            spec.output.parent.mkdir(parents=True, exist_ok=True)
            fmt = spec.output.suffix.lstrip(".").lower() or "svg"
            fig.savefig(spec.output, format=fmt, metadata={"Date": None} if fmt == "svg" else None)
        finally:
            plt.close(fig)
    return spec.output
