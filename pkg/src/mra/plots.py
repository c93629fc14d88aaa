"""Hand-written SVG curves: no plotting dependency, byte-stable output.

Each kind gets one file. Learning curves draw the mean over metrics files
(one file per seed) as a polyline, with the min/max envelope as a polygon
when there is more than one file.
"""
from __future__ import annotations

import json
from collections import defaultdict
from pathlib import Path

import numpy as np

from mra.errors import ContractError

WIDTH, HEIGHT, PAD = 480, 320, 40
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")
FIELDS = {"returns": "role_returns", "mi": "mi_bound", "aux_loss": "aux_loss"}


def read_jsonl(path) -> list[dict]:
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def series(rows: list[dict], kind: str) -> dict:
    """Per game_id: (episodes, values) with missing values dropped."""
    key = FIELDS[kind]
    out = defaultdict(lambda: ([], []))
    for row in rows:
        v = row.get(key)
        if v is None:
            continue
        if isinstance(v, list):
            v = float(np.mean(v))
        xs, ys = out[row["game_id"]]
        xs.append(row["episode"])
        ys.append(float(v))
    return dict(out)


def seed_band(runs: list) -> tuple:
    """Mean and min/max envelope across seeds, cut to the shortest run."""
    n = min(len(ys) for _, ys in runs)
    ys = np.array([r[1][:n] for r in runs])
    return np.asarray(runs[0][0][:n], dtype=float), ys.mean(0), ys.min(0), ys.max(0)


class Canvas:
    def __init__(self, xlim, ylim, title: str, xlabel: str, ylabel: str):
        self.x0, self.x1 = _pad_range(*xlim)
        self.y0, self.y1 = _pad_range(*ylim)
        self.parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
                      f'viewBox="0 0 {WIDTH} {HEIGHT}">',
                      f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
                      f'<line x1="{PAD}" y1="{HEIGHT - PAD}" x2="{WIDTH - PAD}" y2="{HEIGHT - PAD}" stroke="black"/>',
                      f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{HEIGHT - PAD}" stroke="black"/>',
                      _text(WIDTH / 2, PAD / 2, title, "middle"),
                      _text(WIDTH / 2, HEIGHT - 8, xlabel, "middle"),
                      _text(12, HEIGHT / 2, ylabel, "middle", rotate=True)]
        for v, anchor, (px, py) in ((self.x0, "start", (PAD, HEIGHT - PAD + 14)),
                                    (self.x1, "end", (WIDTH - PAD, HEIGHT - PAD + 14))):
            self.parts.append(_text(px, py, _fmt(v), anchor))
        self.parts.append(_text(PAD - 4, HEIGHT - PAD, _fmt(self.y0), "end"))
        self.parts.append(_text(PAD - 4, PAD + 4, _fmt(self.y1), "end"))

    def px(self, x, y):
        sx = PAD + (np.asarray(x, float) - self.x0) / (self.x1 - self.x0) * (WIDTH - 2 * PAD)
        sy = HEIGHT - PAD - (np.asarray(y, float) - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2 * PAD)
        return sx, sy

    def polyline(self, x, y, color: str, label: str = ""):
        sx, sy = self.px(x, y)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(sx, sy))
        title = f"<title>{label}</title>" if label else ""
        self.parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}">{title}</polyline>')

    def band(self, x, lo, hi, color: str):
        sx, slo = self.px(x, lo)
        _, shi = self.px(x, hi)
        pts = [f"{a:.2f},{b:.2f}" for a, b in zip(sx, shi)] + [f"{a:.2f},{b:.2f}" for a, b in zip(sx[::-1], slo[::-1])]
        self.parts.append(f'<polygon fill="{color}" fill-opacity="0.2" stroke="none" points="{" ".join(pts)}"/>')

    def legend(self, labels):
        for i, (label, color) in enumerate(labels):
            self.parts.append(_text(WIDTH - PAD, PAD + 14 * i, label, "end", color))

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _pad_range(lo, hi):
    lo, hi = float(lo), float(hi)
    if hi - lo < 1e-12:
        return lo - 0.5, hi + 0.5
    return lo, hi


def _fmt(v: float) -> str:
    return f"{v:.3g}"


def _text(x, y, s: str, anchor: str, color: str = "black", rotate: bool = False) -> str:
    rot = f' transform="rotate(-90 {x:.2f} {y:.2f})"' if rotate else ""
    return (f'<text x="{x:.2f}" y="{y:.2f}" font-family="sans-serif" font-size="11" fill="{color}" '
            f'text-anchor="{anchor}"{rot}>{s}</text>')


def curve_svg(per_seed: list[dict], kind: str) -> str:
    """``per_seed`` holds one ``series`` dict per metrics file."""
    games = sorted({g for s in per_seed for g in s})
    if not games:
        raise ContractError(f"no {FIELDS[kind]} values to plot")
    curves = []
    for g in games:
        runs = [s[g] for s in per_seed if g in s and s[g][1]]
        curves.append((g, len(runs), *seed_band(runs)))
    xs = np.concatenate([c[2] for c in curves])
    ys = np.concatenate([np.concatenate([c[4], c[5]]) for c in curves])
    ylabel = {"returns": "mean return", "mi": "MI bound", "aux_loss": "aux loss"}[kind]
    canvas = Canvas((xs.min(), xs.max()), (ys.min(), ys.max()), f"{ylabel} vs episode", "episode", ylabel)
    for i, (g, n, x, mean, lo, hi) in enumerate(curves):
        color = COLORS[i % len(COLORS)]
        if n > 1:
            canvas.band(x, lo, hi, color)
        canvas.polyline(x, mean, color, f"game {g}")
    canvas.legend([(f"game {c[0]}", COLORS[i % len(COLORS)]) for i, c in enumerate(curves)])
    return canvas.render()


def trajectory_svg(rows: list[dict], episode: int = 0) -> str:
    """2-D traces of every agent in one dumped episode; landmarks at their first position."""
    steps = sorted((r for r in rows if r["episode"] == episode), key=lambda r: r["t"])
    if not steps:
        raise ContractError(f"no steps for episode {episode}")
    pos = np.array([s["pos"] for s in steps])              # (T, N, 2)
    lm = np.array(steps[0]["landmarks"]).reshape(-1, 2)
    roles = steps[0].get("roles", [0] * pos.shape[1])
    canvas = Canvas((-1.2, 1.2), (-1.2, 1.2), f"episode {episode}", "x", "y")
    for a in range(pos.shape[1]):
        canvas.polyline(pos[:, a, 0], pos[:, a, 1], COLORS[roles[a] % len(COLORS)], f"agent {a}")
    sx, sy = canvas.px(lm[:, 0], lm[:, 1])
    for a, b in zip(sx, sy):
        canvas.parts.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="4" fill="gray"/>')
    return canvas.render()


def emit_plots(metrics_paths, kinds, out_dir, trajectory_paths=()) -> list[Path]:
    """Write one SVG per kind into ``out_dir``; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics = [read_jsonl(p) for p in metrics_paths]
    written = []
    for kind in kinds:
        if kind == "trajectories":
            if not trajectory_paths:
                raise ContractError("trajectory plots need at least one trajectory dump")
            for i, p in enumerate(trajectory_paths):
                path = out / f"trajectories_{i}.svg"
                path.write_text(trajectory_svg(read_jsonl(p)))
                written.append(path)
            continue
        if not metrics or not any(metrics):
            raise ContractError("need at least one nonempty metrics file")
        path = out / f"{kind}.svg"
        path.write_text(curve_svg([series(rows, kind) for rows in metrics], kind))
        written.append(path)
    return written
