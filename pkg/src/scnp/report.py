"""Summary tables and standalone SVG charts from sweep output directories."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from xml.sax.saxutils import escape

from .errors import ConfigError, IoError
from .evaluation import aggregate
from .experiment import AGGREGATE_COLUMNS, _atomic_text, _sort_key, aggregate_rows, read_csv, write_csv
from .pipelines import read_history

log = logging.getLogger("scnp")

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf")
W, H = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 60, 170, 40, 50


def _n(x):
    return f"{x:.2f}"


def _frame(title, xlabel, ylabel, config_hash):
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f"<!-- config_hash: {escape(config_hash)} -->",
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2}" y="22" text-anchor="middle" font-family="sans-serif" font-size="15">{escape(title)}</text>',
        f'<text x="{LEFT + (W - LEFT - RIGHT) / 2}" y="{H - 10}" text-anchor="middle" font-family="sans-serif" font-size="12">{escape(xlabel)}</text>',
        f'<text x="15" y="{TOP + (H - TOP - BOTTOM) / 2}" text-anchor="middle" font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 15 {TOP + (H - TOP - BOTTOM) / 2})">{escape(ylabel)}</text>',
    ]


def _y_axis(lines, ymin, ymax):
    plot_h = H - TOP - BOTTOM

    def sy(v):
        return TOP + plot_h * (1 - (v - ymin) / (ymax - ymin))

    for i in range(6):
        v = ymin + (ymax - ymin) * i / 5
        y = sy(v)
        lines.append(f'<line x1="{LEFT}" y1="{_n(y)}" x2="{W - RIGHT}" y2="{_n(y)}" stroke="#ddd"/>')
        lines.append(f'<text x="{LEFT - 6}" y="{_n(y + 4)}" text-anchor="end" font-family="sans-serif" font-size="10">{v:.2f}</text>')
    lines.append(f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{H - BOTTOM}" stroke="black"/>')
    lines.append(f'<line x1="{LEFT}" y1="{H - BOTTOM}" x2="{W - RIGHT}" y2="{H - BOTTOM}" stroke="black"/>')
    return sy


def _legend(lines, labels):
    for i, label in enumerate(labels):
        y = TOP + 10 + 18 * i
        color = PALETTE[i % len(PALETTE)]
        lines.append(f'<rect x="{W - RIGHT + 12}" y="{y - 9}" width="12" height="12" fill="{color}"/>')
        lines.append(f'<text x="{W - RIGHT + 30}" y="{y + 1}" font-family="sans-serif" font-size="11">{escape(label)}</text>')


def line_chart(series, title, xlabel, ylabel, config_hash, ymin=0.0, ymax=1.0) -> str:
    """``series``: list of ``(label, xs, means, stds)``; std drawn as a band."""
    lines = _frame(title, xlabel, ylabel, config_hash)
    sy = _y_axis(lines, ymin, ymax)
    xs_all = [x for _, xs, _, _ in series for x in xs] or [0, 1]
    xmin, xmax = min(xs_all), max(xs_all)
    if xmax == xmin:
        xmax = xmin + 1
    plot_w = W - LEFT - RIGHT

    def sx(v):
        return LEFT + plot_w * (v - xmin) / (xmax - xmin)

    for v in sorted(set(xs_all)) if len(set(xs_all)) <= 10 else [xmin + (xmax - xmin) * i / 8 for i in range(9)]:
        lines.append(f'<text x="{_n(sx(v))}" y="{H - BOTTOM + 16}" text-anchor="middle" font-family="sans-serif" font-size="10">{v:g}</text>')

    def clip(v):
        return min(max(v, ymin), ymax)

    for i, (_, xs, means, stds) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        upper = [f"{_n(sx(x))},{_n(sy(clip(m + s)))}" for x, m, s in zip(xs, means, stds)]
        lower = [f"{_n(sx(x))},{_n(sy(clip(m - s)))}" for x, m, s in zip(xs, means, stds)]
        lines.append(f'<polygon points="{" ".join(upper + lower[::-1])}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        pts = " ".join(f"{_n(sx(x))},{_n(sy(clip(m)))}" for x, m in zip(xs, means))
        lines.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
    _legend(lines, [s[0] for s in series])
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def bar_chart(groups, labels, values, title, xlabel, ylabel, config_hash, ymin=0.0, ymax=1.0) -> str:
    """Grouped bars: ``values[label][group] = (mean, std)``; missing cells are skipped."""
    lines = _frame(title, xlabel, ylabel, config_hash)
    sy = _y_axis(lines, ymin, ymax)
    plot_w = W - LEFT - RIGHT
    slot = plot_w / max(len(groups), 1)
    bar = slot * 0.8 / max(len(labels), 1)
    for gi, g in enumerate(groups):
        x0 = LEFT + slot * gi + slot * 0.1
        lines.append(f'<text x="{_n(LEFT + slot * (gi + 0.5))}" y="{H - BOTTOM + 16}" text-anchor="middle" font-family="sans-serif" font-size="10">{escape(str(g))}</text>')
        for li, label in enumerate(labels):
            cell = values.get(label, {}).get(g)
            if cell is None:
                continue
            mean, std = cell
            color = PALETTE[li % len(PALETTE)]
            x = x0 + bar * li
            top = sy(min(max(mean, ymin), ymax))
            lines.append(f'<rect x="{_n(x)}" y="{_n(top)}" width="{_n(bar)}" height="{_n(H - BOTTOM - top)}" fill="{color}"/>')
            cx = x + bar / 2
            hi, lo = sy(min(mean + std, ymax)), sy(max(mean - std, ymin))
            lines.append(f'<line x1="{_n(cx)}" y1="{_n(hi)}" x2="{_n(cx)}" y2="{_n(lo)}" stroke="black"/>')
    _legend(lines, labels)
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def series_label(model, epsilon):
    return f"{model} eps={epsilon}" if epsilon else model


def _load_histories(directory):
    out = {}
    for path in sorted((Path(directory) / "histories").glob("*.jsonl")):
        epochs, summary = read_history(path)
        if summary is None:
            log.warning("skipping %s: no summary record", path)
            continue
        out[path.name] = (epochs, summary)
    return out


def report(dirs, out=None, force=False, csv_only=False):
    """Write ``summary.csv`` and, unless ``csv_only``, curve and bar SVGs.

    Returns the list of files written."""
    dirs = [Path(d) for d in dirs]
    rows, hashes, histories = [], set(), []
    for d in dirs:
        path = d / "results.csv"
        if not path.is_file():
            raise IoError(f"no results.csv in {d}")
        part = read_csv(path)
        rows.extend(part)
        hashes.update(r["config_hash"] for r in part)
        for epochs, summary in _load_histories(d).values():
            hashes.add(summary.get("config_hash", ""))
            histories.append((epochs, summary))
    if len(hashes) > 1 and not force:
        raise ConfigError(f"results mix config hashes {sorted(hashes)}; use --force to combine them")
    tag = ",".join(sorted(hashes))
    out = Path(out) if out else dirs[0] / "report"
    out.mkdir(parents=True, exist_ok=True)
    rows.sort(key=_sort_key)
    summary = aggregate_rows(rows)
    written = [out / "summary.csv"]
    write_csv(written[0], AGGREGATE_COLUMNS, summary)
    if csv_only:
        return written

    for dataset in sorted({r["dataset"] for r in summary}):
        prefix = f"{dataset}_" if dataset else ""
        # per-epoch curves from the full histories
        curves = {}
        for epochs, s in histories:
            if s.get("dataset", "") != dataset or not epochs:
                continue
            eps = s.get("epsilon")
            key = (s.get("model", "?"), "" if eps is None else repr(float(eps)))
            curves.setdefault(key, []).append(epochs)
        order = sorted(curves, key=lambda k: _sort_key(dict(dataset="", model=k[0], epsilon=k[1], epochs=0, seed=0)))
        for metric in ("train_acc", "val_acc"):
            series = []
            for key in order:
                runs = curves[key]
                length = min(len(r) for r in runs)
                xs, means, stds = [], [], []
                for i in range(length):
                    vals = [r[i][metric] for r in runs if r[i].get(metric) is not None]
                    if not vals:
                        continue
                    st = aggregate(vals)
                    xs.append(runs[0][i]["epoch"])
                    means.append(st.mean)
                    stds.append(st.std)
                if xs:
                    series.append((series_label(*key), xs, means, stds))
            if series:
                path = out / f"{prefix}curves_{metric}.svg"
                _atomic_text(path, line_chart(series, f"{dataset} {metric} (mean +/- std)", "epoch", metric, tag))
                written.append(path)
        # bar charts over epoch budgets
        sub = [r for r in summary if r["dataset"] == dataset]
        groups = sorted({int(r["epochs"]) for r in sub})
        labels = []
        for r in sub:
            lab = series_label(r["model"], r["epsilon"])
            if lab not in labels:
                labels.append(lab)
        for metric in ("test_acc", "macro_f1"):
            values = {}
            for r in sub:
                if r.get(f"{metric}_mean"):
                    values.setdefault(series_label(r["model"], r["epsilon"]), {})[int(r["epochs"])] = (
                        float(r[f"{metric}_mean"]), float(r[f"{metric}_std"]))
            if values:
                path = out / f"{prefix}bars_{metric}.svg"
                _atomic_text(path, bar_chart(groups, labels, values, f"{dataset} {metric} by epoch budget",
                                             "epochs", metric, tag))
                written.append(path)
    _atomic_text(out / "sources.json", json.dumps({"dirs": [str(d) for d in dirs], "config_hash": sorted(hashes)},
                                                  indent=1, sort_keys=True) + "\n")
    return written
