"""Figure and CSV emission from loaded runs.

Each figure family writes one SVG plus the CSV holding the plotted
numbers. SVG output is made reproducible by pinning the hash salt and
dropping the creation date; every SVG carries a provenance comment
listing the config hashes of the runs it was built from.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from scipy import stats as scipy_stats

from .analysis import (
    RunData,
    build_summary,
    confidence_interval,
    default_overlay_window,
    group_runs,
    mislabeled_fraction_overlay,
    selection_occurrence_curve,
)

FIGURE_FAMILIES = ("errors", "occurrence", "overlay", "entropy", "sensitivity")

matplotlib.rcParams["svg.hashsalt"] = "banditbatch"

_SAMPLER_ORDER = ("uniform", "active_bias", "exp3", "fpl")
_COLORS = {
    "uniform": "tab:gray",
    "active_bias": "tab:green",
    "exp3": "tab:orange",
    "fpl": "tab:blue",
}


def _sampler_sort_key(name: str):
    try:
        return (_SAMPLER_ORDER.index(name), name)
    except ValueError:
        return (len(_SAMPLER_ORDER), name)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _save_svg(fig, path: Path, runs: list[RunData]) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    hashes = sorted({r.meta.get("config_hash", "unknown") for r in runs})
    text = path.read_text()
    comment = f"<!-- data provenance: config hashes {','.join(hashes)} -->\n"
    lines = text.split("\n", 1)
    path.write_text(lines[0] + "\n" + comment + (lines[1] if len(lines) > 1 else ""))


def _fmt(value) -> str:
    return "" if value is None else repr(float(value))


def emit_errors(runs: list[RunData], out: Path) -> list[Path]:
    groups = group_runs(runs)
    if not groups:
        raise ValueError("no completed runs to plot")
    ratios = sorted({ratio for _, ratio in groups})
    rows = []
    for (sampler, ratio), group in sorted(
        groups.items(), key=lambda kv: (kv[0][1], _sampler_sort_key(kv[0][0]))
    ):
        n_epochs = min(len(r.epochs) for r in group)
        for e in range(n_epochs):
            errs = [r.epochs[e]["test_error"] for r in group]
            if len(errs) >= 2:
                mean, hw = confidence_interval(errs)
            else:
                mean, hw = float(errs[0]), None
            rows.append(
                [
                    sampler,
                    repr(float(ratio)),
                    e + 1,
                    group[0].epochs[e]["phase"],
                    len(errs),
                    repr(mean),
                    _fmt(hw),
                ]
            )
    _write_csv(
        out / "errors.csv",
        ["sampler", "noise_ratio", "epoch", "phase", "n_seeds", "mean_error", "ci_half_width"],
        rows,
    )

    summary = build_summary(runs)
    _write_csv(
        out / "summary.csv",
        [
            "sampler",
            "noise_ratio",
            "n_seeds",
            "best_mean",
            "best_ci_half_width",
            "last_mean",
            "last_ci_half_width",
        ],
        [
            [
                r.sampler,
                repr(float(r.noise_ratio)),
                r.n_seeds,
                repr(r.best_mean),
                _fmt(r.best_half_width),
                repr(r.last_mean),
                _fmt(r.last_half_width),
            ]
            for r in summary.rows
        ],
    )

    fig, axes = plt.subplots(
        1, len(ratios), figsize=(4.2 * len(ratios), 3.4), squeeze=False, sharey=True
    )
    for ax, ratio in zip(axes[0], ratios):
        for sampler in sorted({s for s, r in groups if r == ratio}, key=_sampler_sort_key):
            group = groups[(sampler, ratio)]
            n_epochs = min(len(r.epochs) for r in group)
            errs = np.array(
                [[r.epochs[e]["test_error"] for e in range(n_epochs)] for r in group]
            )
            epochs = np.arange(1, n_epochs + 1)
            mean = errs.mean(axis=0)
            color = _COLORS.get(sampler)
            ax.plot(epochs, mean, label=sampler, color=color)
            if errs.shape[0] >= 2:
                sd = errs.std(axis=0, ddof=1)
                t = scipy_stats.t.ppf(0.975, errs.shape[0] - 1)
                hw = t * sd / np.sqrt(errs.shape[0])
                ax.fill_between(epochs, mean - hw, mean + hw, alpha=0.2, color=color)
        ax.set_title(f"noise {ratio:g}")
        ax.set_xlabel("epoch")
        ax.grid(alpha=0.3)
    axes[0][0].set_ylabel("test error")
    axes[0][-1].legend(fontsize=8)
    fig.tight_layout()
    _save_svg(fig, out / "errors.svg", runs)
    return [out / "errors.csv", out / "summary.csv", out / "errors.svg"]


def _counts_in_window(run: RunData, first: bool, window_epochs: int) -> np.ndarray:
    """Selection counts accumulated during the first/last few epochs."""
    snaps = [np.asarray(e["selection_counts"]) for e in run.epochs]
    w = min(window_epochs, len(snaps))
    if first:
        return snaps[w - 1]
    if len(snaps) == w:
        return snaps[-1]
    return snaps[-1] - snaps[-1 - w]


def emit_occurrence(runs: list[RunData], out: Path, window_epochs: int = 1) -> list[Path]:
    groups = group_runs(runs)
    if not groups:
        raise ValueError("no completed runs to plot")
    rows = []
    curves: dict[tuple[str, float, str], np.ndarray] = {}
    for (sampler, ratio), group in sorted(
        groups.items(), key=lambda kv: (kv[0][1], _sampler_sort_key(kv[0][0]))
    ):
        for label, first in (("first", True), ("last", False), ("total", False)):
            per_seed = []
            for run in group:
                if label == "total":
                    counts = run.final_counts()
                else:
                    counts = _counts_in_window(run, first, window_epochs)
                per_seed.append(selection_occurrence_curve(counts))
            curve = np.mean(per_seed, axis=0)
            curves[(sampler, ratio, label)] = curve
            for rank, value in enumerate(curve):
                rows.append([sampler, repr(float(ratio)), label, rank, repr(float(value))])
    _write_csv(
        out / "occurrence.csv",
        ["sampler", "noise_ratio", "window", "rank", "mean_count"],
        rows,
    )

    fig, axes = plt.subplots(1, 3, figsize=(12.0, 3.4))
    for ax, label in zip(axes, ("first", "last", "total")):
        for (sampler, ratio, lab), curve in sorted(
            curves.items(), key=lambda kv: (_sampler_sort_key(kv[0][0]), kv[0][1])
        ):
            if lab != label:
                continue
            name = f"{sampler}" if len({r for _, r, _ in curves} ) == 1 else f"{sampler}@{ratio:g}"
            ax.plot(curve, label=name, color=_COLORS.get(sampler))
        ax.set_title(f"{label} window" if label != "total" else "whole run")
        ax.set_xlabel("instance rank")
        ax.grid(alpha=0.3)
    axes[0].set_ylabel("selection count")
    axes[-1].legend(fontsize=8)
    fig.tight_layout()
    _save_svg(fig, out / "occurrence.svg", runs)
    return [out / "occurrence.csv", out / "occurrence.svg"]


def emit_overlay(runs: list[RunData], out: Path, window: int | None = None) -> list[Path]:
    groups = group_runs(runs)
    if not groups:
        raise ValueError("no completed runs to plot")
    rows = []
    panels = []
    for (sampler, ratio), group in sorted(
        groups.items(), key=lambda kv: (kv[0][1], _sampler_sort_key(kv[0][0]))
    ):
        usable = [r for r in group if r.corrupted_mask is not None]
        if not usable:
            continue
        w = window or default_overlay_window(int(usable[0].meta["n_train"]))
        overlay = np.mean(
            [
                mislabeled_fraction_overlay(r.final_counts(), r.corrupted_mask, w)
                for r in usable
            ],
            axis=0,
        )
        counts = np.mean(
            [selection_occurrence_curve(r.final_counts()) for r in usable], axis=0
        )
        panels.append((sampler, ratio, w, counts, overlay))
        for rank, value in enumerate(overlay):
            rows.append([sampler, repr(float(ratio)), w, rank, repr(float(value))])
    if not panels:
        raise ValueError("no runs carry a noise manifest; cannot build the overlay")
    _write_csv(
        out / "overlay.csv",
        ["sampler", "noise_ratio", "window", "rank", "mislabeled_fraction"],
        rows,
    )

    fig, axes = plt.subplots(1, len(panels), figsize=(4.2 * len(panels), 3.4), squeeze=False)
    for ax, (sampler, ratio, w, counts, overlay) in zip(axes[0], panels):
        twin = ax.twinx()
        twin.fill_between(
            np.arange(counts.size), counts, color="tab:gray", alpha=0.25, linewidth=0
        )
        twin.set_ylabel("mean selection count", color="tab:gray", fontsize=8)
        ax.plot(np.arange(overlay.size), overlay, color="tab:red", linewidth=1.2)
        ax.axhline(ratio, color="black", linestyle=":", linewidth=0.8)
        ax.set_title(f"{sampler} @ noise {ratio:g} (window {w})", fontsize=9)
        ax.set_xlabel("instance rank (most selected first)")
        ax.set_ylabel("mislabeled fraction")
        ax.set_ylim(0.0, 1.0)
        ax.set_zorder(twin.get_zorder() + 1)
        ax.patch.set_visible(False)
    fig.tight_layout()
    _save_svg(fig, out / "overlay.svg", runs)
    return [out / "overlay.csv", out / "overlay.svg"]


def emit_entropy(runs: list[RunData], out: Path) -> list[Path]:
    groups = group_runs(runs)
    rows = []
    series = {}
    for (sampler, ratio), group in sorted(
        groups.items(), key=lambda kv: (_sampler_sort_key(kv[0][0]), kv[0][1])
    ):
        per_seed = [r.entropy_series() for r in group]
        if any(v is None for s in per_seed for v in s):
            continue
        n_epochs = min(len(s) for s in per_seed)
        mean = np.mean([s[:n_epochs] for s in per_seed], axis=0)
        series[(sampler, ratio)] = mean
        for e, value in enumerate(mean):
            rows.append([sampler, repr(float(ratio)), e + 1, repr(float(value))])
    if not series:
        raise ValueError("no runs carry weight snapshots; entropy needs a bandit sampler")
    _write_csv(
        out / "entropy.csv",
        ["sampler", "noise_ratio", "epoch", "mean_entropy"],
        rows,
    )

    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    for (sampler, ratio), mean in series.items():
        label = f"{sampler}" if len({r for _, r in series} ) == 1 else f"{sampler}@{ratio:g}"
        ax.plot(np.arange(1, mean.size + 1), mean, label=label, color=_COLORS.get(sampler))
    ax.set_xlabel("epoch")
    ax.set_ylabel("weight entropy (nats)")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save_svg(fig, out / "entropy.svg", runs)
    return [out / "entropy.csv", out / "entropy.svg"]


def emit_sensitivity(runs: list[RunData], out: Path) -> list[Path]:
    """Summarise a hyperparameter grid of runs of one sampler kind."""
    usable = [r for r in runs if r.ok]
    if not usable:
        raise ValueError("no completed runs to summarise")
    groups: dict[tuple[float, float, float], list[RunData]] = {}
    for run in usable:
        params = run.meta["sampler_params"]
        key = (float(params["eta"]), float(params["beta"]), float(params["shape"]))
        groups.setdefault(key, []).append(run)
    rows = []
    table = {}
    for key in sorted(groups):
        group = groups[key]
        last_mean, last_hw = _mean_ci_list([r.last_error for r in group])
        best_mean, _ = _mean_ci_list([r.best_error for r in group])
        table[key] = last_mean
        rows.append(
            [
                repr(key[0]),
                repr(key[1]),
                repr(key[2]),
                len(group),
                repr(last_mean),
                _fmt(last_hw),
                repr(best_mean),
            ]
        )
    _write_csv(
        out / "sensitivity.csv",
        ["eta", "beta", "shape", "n_runs", "last_mean", "last_ci_half_width", "best_mean"],
        rows,
    )

    etas = sorted({k[0] for k in table})
    betas = sorted({k[1] for k in table})
    shapes = sorted({k[2] for k in table})
    center = (
        etas[len(etas) // 2],
        betas[len(betas) // 2],
        shapes[len(shapes) // 2],
    )
    fig, axes = plt.subplots(1, 3, figsize=(10.5, 3.2))
    panels = [
        ("eta", etas, lambda v: (v, center[1], center[2])),
        ("beta", betas, lambda v: (center[0], v, center[2])),
        ("shape", shapes, lambda v: (center[0], center[1], v)),
    ]
    for ax, (name, values, keyfn) in zip(axes, panels):
        xs = [v for v in values if keyfn(v) in table]
        ys = [table[keyfn(v)] for v in xs]
        ax.plot(xs, ys, marker="o", color="tab:blue")
        ax.set_xlabel(name)
        ax.grid(alpha=0.3)
    axes[0].set_ylabel("last test error")
    fig.suptitle(
        f"slices through eta={center[0]:g}, beta={center[1]:g}, shape={center[2]:g}",
        fontsize=9,
    )
    fig.tight_layout()
    _save_svg(fig, out / "sensitivity.svg", usable)
    return [out / "sensitivity.csv", out / "sensitivity.svg"]


def _mean_ci_list(values) -> tuple[float, float | None]:
    vals = list(values)
    if len(vals) < 2:
        return float(vals[0]), None
    return confidence_interval(vals)


def emit_plots(
    runs: list[RunData],
    out_dir,
    figures=FIGURE_FAMILIES,
    window: int | None = None,
    occurrence_epochs: int = 1,
) -> list[Path]:
    """Write the requested figure families; returns the produced paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    produced: list[Path] = []
    for family in figures:
        if family == "errors":
            produced += emit_errors(runs, out)
        elif family == "occurrence":
            produced += emit_occurrence(runs, out, window_epochs=occurrence_epochs)
        elif family == "overlay":
            produced += emit_overlay(runs, out, window=window)
        elif family == "entropy":
            produced += emit_entropy(runs, out)
        elif family == "sensitivity":
            produced += emit_sensitivity(runs, out)
        else:
            raise ValueError(f"unknown figure family {family!r}")
    return produced
