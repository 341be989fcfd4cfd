"""CSV writers and matplotlib figure rendering for the report outputs.

Every report path emits delimited data plus a rendered figure next to it;
figures go through the Agg backend so everything works headless.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .imaging import PlanarImage
from .isp import BLOCK_PARAM_SPECS, BlockId
from .refgen import NoiseModel
from .tuner import (
    EVAL_LABELS,
    REPEAT_FLOWS,
    EvalRow,
    RepeatabilityReport,
    SmoothnessReport,
    TuningLadder,
)

_FLOW_TITLES = {
    "global": "Global",
    "global_local": "Global→Local",
    "global_local_prior": "Global→Local w/ Prior",
}
_LABEL_TITLES = {
    "not_tuned": "Not-tuned",
    "hand_proxy": "Hand-proxy",
    "auto": "Auto-tuned",
    "reference": "Reference",
}


class Manifest:
    """Collects emitted artifacts for one CLI invocation."""

    def __init__(self, out_dir: str | Path, command: str, seed: int):
        self.out_dir = Path(out_dir)
        self.command = command
        self.seed = seed
        self.artifacts: list[dict] = []

    def add(self, path: Path, kind: str) -> Path:
        self.artifacts.append({"path": str(path.relative_to(self.out_dir)), "kind": kind})
        return path

    def save(self) -> Path:
        path = self.out_dir / "manifest.json"
        doc = {"command": self.command, "seed": self.seed,
               "artifacts": sorted(self.artifacts, key=lambda a: a["path"])}
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return path


def write_csv(path: str | Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def write_eval_csv(path: str | Path, rows: list[EvalRow]) -> None:
    write_csv(path, ["gain", "block", "tuning", "mad_8bit", "ssim", "ms_ssim"],
              [[r.gain, r.block, r.tuning, r.mad_8bit, r.ssim, r.ms_ssim] for r in rows])


def read_eval_csv(path: str | Path) -> list[EvalRow]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(EvalRow(float(rec["gain"]), rec["block"], rec["tuning"],
                                float(rec["mad_8bit"]), float(rec["ssim"]),
                                float(rec["ms_ssim"])))
    return rows


def write_repeat_csv(path: str | Path, report: RepeatabilityReport) -> None:
    rows = [[flow, report.ave[flow], report.std[flow], report.runs, report.budget]
            for flow in REPEAT_FLOWS]
    write_csv(path, ["flow", "ave_mad", "std_mad", "runs", "budget"], rows)


def write_smoothness_csv(path: str | Path, report: SmoothnessReport) -> None:
    rows = [[r.block, r.param, r.gain_from, r.gain_to, r.jump] for r in report.rows]
    rows.append(["all", "mean", "", "", report.mean_jump])
    write_csv(path, ["block", "param", "gain_from", "gain_to", "normalized_jump"], rows)


def write_trace_csv(path: str | Path, traces: dict[str, list[tuple[int, float]]]) -> None:
    rows = [[name, idx, best] for name in sorted(traces) for idx, best in traces[name]]
    write_csv(path, ["block", "eval_index", "best_f"], rows)


def _to_display(img: PlanarImage) -> np.ndarray:
    arr = np.clip(np.moveaxis(img.data, 0, -1), 0.0, 1.0)
    return arr[..., 0] if arr.shape[-1] == 1 else arr


def plot_comparison(path: str | Path, images: dict[str, PlanarImage],
                    crop: tuple[int, int, int, int] | None = None,
                    title: str = "") -> None:
    """Side-by-side crops of reference / not-tuned / hand-proxy / auto."""
    order = [k for k in ("reference", *EVAL_LABELS) if k in images]
    fig, axes = plt.subplots(1, len(order), figsize=(3.2 * len(order), 3.6))
    if len(order) == 1:
        axes = [axes]
    for ax, key in zip(axes, order):
        view = _to_display(images[key])
        if crop is not None:
            x0, y0, w, h = crop
            view = view[y0:y0 + h, x0:x0 + w]
        ax.imshow(view, interpolation="nearest",
                  cmap="gray" if view.ndim == 2 else None, vmin=0.0, vmax=1.0)
        ax.set_title(_LABEL_TITLES.get(key, key), fontsize=10)
        ax.set_axis_off()
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_convergence(path: str | Path, traces: dict[str, list[tuple[int, float]]],
                     title: str = "Best-so-far fitness") -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for name in sorted(traces):
        trace = traces[name]
        if not trace:
            continue
        xs, ys = zip(*trace)
        ax.step(xs, ys, where="post", label=name)
    ax.set_xlabel("objective evaluations")
    ax.set_ylabel("SAD")
    ax.set_yscale("log")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_repeatability(path: str | Path, report: RepeatabilityReport) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    xs = np.arange(len(REPEAT_FLOWS))
    aves = [report.ave[f] for f in REPEAT_FLOWS]
    stds = [report.std[f] for f in REPEAT_FLOWS]
    ax.bar(xs, aves, yerr=stds, capsize=6, color="#4878a8")
    ax.set_xticks(xs)
    ax.set_xticklabels([_FLOW_TITLES[f] for f in REPEAT_FLOWS], fontsize=9)
    ax.set_ylabel("final MAD (8-bit scale)")
    ax.set_title(f"BayerNR repeatability, {report.runs} runs @ gain {report.gain:g}")
    lo = min(a - s for a, s in zip(aves, stds))
    hi = max(a + s for a, s in zip(aves, stds))
    pad = 0.25 * (hi - lo) if hi > lo else 0.01
    ax.set_ylim(lo - pad, hi + pad)
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_smoothness(path: str | Path, reports: dict[str, SmoothnessReport],
                    block: str = "bayer_nr") -> None:
    """Grouped bars of per-parameter jumps between adjacent gains."""
    fig, ax = plt.subplots(figsize=(8.0, 4.0))
    colors = ["#4878a8", "#e08a3c", "#6aa86a", "#a86a6a"]
    width = 0.8 / max(len(reports), 1)
    labels_done = False
    for li, (label, report) in enumerate(sorted(reports.items())):
        rows = [r for r in report.rows if r.block == block]
        keys = [f"{r.param}\n{r.gain_from:g}→{r.gain_to:g}" for r in rows]
        xs = np.arange(len(rows))
        ax.bar(xs + li * width, [r.jump for r in rows], width=width,
               label=label, color=colors[li % len(colors)])
        if not labels_done:
            ax.set_xticks(xs + 0.4 - width / 2)
            ax.set_xticklabels(keys, fontsize=6)
            labels_done = True
    ax.set_ylabel("|normalized jump|")
    ax.set_title(f"Parameter transition between adjacent gains ({block})")
    ax.legend()
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_noise_fit(path: str | Path, levels, variances, nm: NoiseModel) -> None:
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    ax.scatter(levels, variances, label="measured", color="#4878a8", zorder=3)
    grid = np.linspace(0.0, max(levels) * 1.1, 100)
    ax.plot(grid, nm.variance(grid), label=f"fit a={nm.a:.3e}, b={nm.b:.3e}",
            color="#e08a3c")
    ax.set_xlabel("mean level")
    ax.set_ylabel("sample variance")
    ax.set_title("Noise model calibration")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_ladder(path: str | Path, ladder: TuningLadder) -> None:
    """Normalized parameter values per gain, one subplot per block."""
    blocks = sorted(ladder.entries[0].normalized)
    fig, axes = plt.subplots(1, len(blocks), figsize=(3.4 * len(blocks), 3.4),
                             sharey=True)
    if len(blocks) == 1:
        axes = [axes]
    gains = ladder.gains()
    for ax, block in zip(axes, blocks):
        values = np.array([e.normalized[block] for e in ladder.entries])
        names = [s.name for s in BLOCK_PARAM_SPECS[BlockId(block)]]
        for i in range(values.shape[1]):
            ax.plot(gains, values[:, i], marker="o", label=names[i])
        ax.set_xscale("log", base=2)
        ax.set_xticks(gains)
        ax.set_xticklabels([f"{g:g}x" for g in gains])
        ax.set_title(block, fontsize=10)
        ax.set_xlabel("sensor gain")
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=6)
    axes[0].set_ylabel("normalized value")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
