"""Rendering reports with Jinja2 and writing confusion heatmaps"""

import logging
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
from jinja2 import Environment, FileSystemLoader, StrictUndefined

from egoact.config import PipelineConfig
from egoact.core.metrics import MetricsReport, normalize_confusion
from egoact.models.activity import CATEGORY_NAMES

logger = logging.getLogger(__name__)

TEMPLATE_DIR = Path(__file__).resolve().parent.parent / "templates"


def fmt(value: float) -> str:
    """Fixed six-decimal rendering so reports are byte-stable"""
    return f"{float(value):.6f}"


def _environment() -> Environment:
    env = Environment(
        loader=FileSystemLoader(str(TEMPLATE_DIR)),
        undefined=StrictUndefined,
        trim_blocks=True,
        lstrip_blocks=True,
        keep_trailing_newline=True,
        autoescape=False,
    )
    env.filters["fmt"] = fmt
    env.globals["fmt"] = fmt
    return env


templates = _environment()


def assumptions(config: Optional[PipelineConfig] = None) -> list[tuple[str, str]]:
    """Modelling defaults echoed in every report"""
    forest = config.forest if config is not None else None
    return [
        ("forest.bootstrap", str(forest.bootstrap).lower() if forest else "true"),
        ("forest.max_features", str(forest.max_features) if forest else "sqrt"),
        ("forest.thresholds", "midpoints of consecutive distinct values"),
        ("recurrent.dropout", "input and output streams"),
        ("recurrent.loss", "timestep-averaged cross-entropy"),
        ("class_weights", "N/(K_present*n_c)"),
        ("undefined_metric", "0"),
        ("aggregate", config.temporal.aggregate if config is not None else "mean"),
    ]


def render_report(
    report: MetricsReport,
    title: str = "evaluation",
    config: Optional[PipelineConfig] = None,
) -> str:
    normalized, empty = normalize_confusion(report.confusion)
    per_class = [
        {
            "name": CATEGORY_NAMES[c] if c < len(CATEGORY_NAMES) else str(c),
            "precision": report.precision[c],
            "recall": report.recall[c],
            "f1": report.f1[c],
            "support": int(report.support[c]),
        }
        for c in range(report.confusion.counts.shape[0])
    ]
    return templates.get_template("report.txt.j2").render(
        title=title,
        report=report,
        assumptions=assumptions(config),
        per_class=per_class,
        indices=list(range(report.confusion.counts.shape[0])),
        confusion=report.confusion.counts.tolist(),
        normalized=normalized.tolist(),
        empty_rows=[int(i) for i in np.flatnonzero(empty)],
    )


def write_pgm(normalized: np.ndarray, path: Union[str, Path], cell: int = 8) -> None:
    """Binary P5 graymap, one cell x cell block per matrix entry, white = 0, black = 1"""
    values = np.clip(np.asarray(normalized, dtype=np.float64), 0.0, 1.0)
    gray = np.round(255.0 * (1.0 - values)).astype(np.uint8)
    image = np.kron(gray, np.ones((cell, cell), dtype=np.uint8))
    height, width = image.shape
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + image.tobytes())


def write_report(
    report: MetricsReport,
    out_dir: Union[str, Path],
    title: str,
    config: Optional[PipelineConfig] = None,
) -> Path:
    """report.txt plus confusion.pgm in out_dir"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "report.txt"
    path.write_text(render_report(report, title, config), encoding="utf-8")
    normalized, empty = normalize_confusion(report.confusion)
    if empty.any():
        logger.warning(f"{int(empty.sum())} categories have no test frames; their confusion rows stay zero")
    write_pgm(normalized, out_dir / "confusion.pgm")
    logger.info(f"Wrote report {path}")
    return path


def render(template: str, **context: Any) -> str:
    return templates.get_template(template).render(**context)
