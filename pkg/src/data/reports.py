"""Deterministic report writers and static figures.

JSON and CSV outputs have a stable field order and 6-decimal floats; SVG
figures are rendered headless (Agg backend) with a fixed hash salt and no
date metadata, so repeated runs produce identical files.

Figures:
  - empirical vs smoothed bar chart for a single instance
  - per-category line chart of the smoothed probabilities over ε
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
import seaborn as sns  # noqa: E402

from src import constants  # noqa: E402
from src.core import ReportWriteError  # noqa: E402

logger = logging.getLogger(__name__)

plt.rcParams["svg.hashsalt"] = constants.SVG_HASH_SALT
plt.rcParams["svg.fonttype"] = "path"

CSV_FLOAT_FORMAT = f"%.{constants.FLOAT_DECIMALS}f"


def _prepare(path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportWriteError(f"cannot create {path.parent}: {exc}") from exc
    return path


def write_json(record: dict, path) -> Path:
    path = _prepare(path)
    try:
        path.write_text(json.dumps(record, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    except OSError as exc:
        raise ReportWriteError(f"cannot write {path}: {exc}") from exc
    logger.info("✅ wrote %s", path)
    return path


def write_csv(df: pd.DataFrame, path) -> Path:
    path = _prepare(path)
    try:
        df.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    except OSError as exc:
        raise ReportWriteError(f"cannot write {path}: {exc}") from exc
    logger.info("✅ wrote %s", path)
    return path


def write_svg(fig, path) -> Path:
    path = _prepare(path)
    try:
        fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as exc:
        raise ReportWriteError(f"cannot write {path}: {exc}") from exc
    finally:
        plt.close(fig)
    logger.info("✅ wrote %s", path)
    return path


def plot_estimate_comparison(p_hat: Sequence[float], x: Sequence[float], title: str):
    """Grouped bars of the empirical distribution and the smoothed estimate."""
    n = len(p_hat)
    frame = pd.DataFrame({
        "category": [str(j + 1) for j in range(n)] * 2,
        "probability": list(p_hat) + list(x),
        "distribution": ["empirical"] * n + ["smoothed"] * n,
    })
    fig, ax = plt.subplots(figsize=(7, 4))
    sns.barplot(data=frame, x="category", y="probability", hue="distribution", ax=ax)
    ax.set_title(title)
    ax.set_xlabel("category")
    ax.set_ylabel("probability")
    fig.tight_layout()
    return fig


def plot_sensitivity(eps_grid: Sequence[float], estimates: np.ndarray, title: str):
    """One line per category: smoothed probability as a function of ε."""
    estimates = np.asarray(estimates, dtype=np.float64).reshape(len(eps_grid), -1)
    n = estimates.shape[1] if estimates.size else 0
    frame = pd.DataFrame({
        "epsilon": np.repeat(np.asarray(eps_grid, dtype=np.float64), n),
        "probability": estimates.reshape(-1),
        "category": [f"x{j + 1}" for _ in eps_grid for j in range(n)],
    })
    fig, ax = plt.subplots(figsize=(7, 4))
    if len(frame):
        sns.lineplot(data=frame, x="epsilon", y="probability", hue="category", marker="o", ax=ax)
    if n:
        ax.axhline(1.0 / n, color="grey", linestyle="--", linewidth=1)
    ax.set_title(title)
    ax.set_xlabel("robustness radius ε")
    ax.set_ylabel("probability")
    fig.tight_layout()
    return fig
