"""Report tables, SVG charts and run manifests."""
from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence
from xml.sax.saxutils import escape

from . import __version__
from .evaluation import FoldMetrics, MetricsReport
from .explain import ImportanceSummary

TABLE_COLUMNS = ["model", "evaluation", "f1", "f1_sd", "auc", "auc_sd"]
DETAIL_COLUMNS = ["table", "model", "evaluation", "fold", "f1", "auc"]

# one colour per class segment; cycles beyond ten classes
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def pct(x: float) -> str:
    """Metric in [0, 1] shown x100 with two decimals."""
    return f"{100 * x:.2f}"


@dataclass
class TableRow:
    model: str
    evaluation: str  # "cv" or "holdout"
    f1: float
    auc: float
    f1_sd: float | None = None
    auc_sd: float | None = None
    rule: str | None = None

    @classmethod
    def from_cv(cls, model: str, rep: MetricsReport, rule: str | None = None) -> "TableRow":
        return cls(model, "cv", rep.f1_mean, rep.auc_mean, rep.f1_sd, rep.auc_sd, rule)

    @classmethod
    def from_holdout(cls, model: str, m: FoldMetrics, rule: str | None = None) -> "TableRow":
        return cls(model, "holdout", m.macro_f1, m.headline_auc, rule=rule)

    def cells(self) -> list[str]:
        sd = lambda v: "" if v is None else pct(v)
        return [self.model, self.evaluation, pct(self.f1), sd(self.f1_sd), pct(self.auc), sd(self.auc_sd)]


def write_table(path: str | Path, rows: Sequence[TableRow]) -> None:
    """Table CSV; a ``rule`` column follows ``model`` when any row carries one."""
    with_rule = any(r.rule is not None for r in rows)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        head = list(TABLE_COLUMNS)
        if with_rule:
            head.insert(1, "rule")
        w.writerow(head)
        for r in rows:
            cells = r.cells()
            if with_rule:
                cells.insert(1, r.rule or "")
            w.writerow(cells)


def write_detail(path: str | Path, entries: Iterable[tuple[str, str, str, FoldMetrics | MetricsReport]]) -> None:
    """Per-fold metrics at full precision; holdout rows use fold ``holdout``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DETAIL_COLUMNS)
        for table, model, evaluation, res in entries:
            folds = res.folds if isinstance(res, MetricsReport) else [res]
            for i, f in enumerate(folds):
                fold = str(i) if isinstance(res, MetricsReport) else "holdout"
                w.writerow([table, model, evaluation, fold, repr(f.macro_f1), repr(f.headline_auc)])


# --- SVG ------------------------------------------------------------------


def importance_svg(summary: ImportanceSummary, title: str = "Mean |SHAP| (top features)",
                   class_labels: Sequence[str] | None = None, k: int = 10) -> str:
    """Horizontal bars of the top-``k`` features, one stacked segment per class."""
    top = summary.top(k)
    n_classes = summary.per_class.shape[0]
    labels = list(class_labels) if class_labels else [f"class {c}" for c in range(n_classes)]
    bar_h, gap, left, width = 22, 8, 300, 420
    top_margin = 40
    legend_y = top_margin + len(top) * (bar_h + gap) + 20
    height = legend_y + 20 * n_classes + 10
    total_w = left + width + 90
    peak = float(summary.overall[top].max()) if top else 0.0
    scale = width / peak if peak > 0 else 0.0

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" height="{height}" '
        f'viewBox="0 0 {total_w} {height}" font-family="sans-serif" font-size="12">',
        f'<text x="{total_w / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
    ]
    for row, f in enumerate(top):
        y = top_margin + row * (bar_h + gap)
        out.append(f'<text x="{left - 6}" y="{y + bar_h * 0.7:.1f}" text-anchor="end">'
                   f'{escape(summary.feature_names[f])}</text>')
        x = float(left)
        for c in range(n_classes):
            w = float(summary.per_class[c, f]) * scale
            out.append(f'<rect x="{x:.3f}" y="{y}" width="{w:.3f}" height="{bar_h}" '
                       f'fill="{PALETTE[c % len(PALETTE)]}"><title>{escape(labels[c])}: '
                       f'{summary.per_class[c, f]:.6g}</title></rect>')
            x += w
        out.append(f'<text x="{x + 4:.3f}" y="{y + bar_h * 0.7:.1f}">{summary.overall[f]:.4g}</text>')
    for c in range(n_classes):
        y = legend_y + 20 * c
        out.append(f'<rect x="{left}" y="{y}" width="12" height="12" fill="{PALETTE[c % len(PALETTE)]}"/>')
        out.append(f'<text x="{left + 18}" y="{y + 10}">{escape(labels[c])}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# --- run manifest ---------------------------------------------------------


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    argv: list[str]
    config: dict
    seed: int | None
    tool_version: str = __version__
    dataset_rows: int | None = None
    dataset_sha256: str | None = None
    started: str = field(default_factory=_now)
    finished: str | None = None
    outputs: list[dict] = field(default_factory=list)

    @property
    def config_hash(self) -> str:
        return config_hash(self.config)

    def set_dataset(self, path: str | Path, rows: int) -> None:
        self.dataset_rows = rows
        self.dataset_sha256 = file_sha256(path)

    def add_output(self, path: str | Path, root: str | Path | None = None) -> None:
        p = Path(path)
        name = str(p.relative_to(root)) if root is not None else str(p)
        self.outputs.append({"path": name, "sha256": file_sha256(p)})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["config_hash"] = self.config_hash
        return d

    def write(self, path: str | Path) -> None:
        """Stamp the finish time and replace ``path`` atomically."""
        self.finished = _now()
        write_atomic(Path(path), json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def write_atomic(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise

