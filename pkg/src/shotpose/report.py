"""Report assembly: the cluster scatter figure plus the result tables.

Figures are rendered with matplotlib into self-contained SVG files. The
SVG hash salt and metadata are pinned so reruns with the same config and
seeds reproduce the file byte for byte.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import pipeline as pl

log = logging.getLogger(__name__)

SCATTER_SVG = "cluster_scatter.svg"
ASSIGNMENTS_CSV = "cluster_assignments.csv"
TSNE_COORDS_CSV = "tsne_coords.csv"
SHOT_STATS_CSV = "shot_stats.csv"
SUMMARY_CSV = "cluster_summary.csv"

CLUSTER_COLORS = ("tab:blue", "tab:orange", "tab:green", "tab:red",
                  "tab:purple", "tab:brown", "tab:pink", "tab:gray")


def render_cluster_scatter(points: np.ndarray, labels: np.ndarray, path: Path,
                           config_hash: str, seed: int) -> Path:
    """Scatter the 2-D embedding colored by cluster, saved as SVG."""
    plt.rcParams["svg.hashsalt"] = config_hash
    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    for rank, cluster in enumerate(sorted(set(int(l) for l in labels))):
        mask = labels == cluster
        ax.scatter(points[mask, 0], points[mask, 1], s=26,
                   color=CLUSTER_COLORS[rank % len(CLUSTER_COLORS)],
                   label=f"Cluster {cluster + 1}", alpha=0.85, linewidths=0)
    ax.set_xlabel("embedding dim 1")
    ax.set_ylabel("embedding dim 2")
    ax.set_title("Shot-style clusters in the latent space")
    ax.legend(loc="best", frameon=True)
    fig.tight_layout()
    fig.savefig(path, format="svg",
                metadata={"Date": None,
                          "Description": f"config_hash={config_hash} seed={seed}"})
    plt.close(fig)
    return path


def _copy_csv(src: Path, dst: Path) -> None:
    dst.write_text(src.read_text(encoding="utf-8"), encoding="utf-8")


def _metric_table(report_dir: Path, cfg, name: str, src: Path,
                  header: list[str], row: list) -> str:
    out = report_dir / name
    pl.write_csv(out, header, [row], cfg, cfg.seed)
    log.info("wrote %s from %s", out, src.name)
    return name


def write_report(cfg) -> Path:
    """Assemble the report directory from the run's artifacts."""
    run_dir = cfg.run_dir()
    report_dir = run_dir / pl.REPORT_DIR
    report_dir.mkdir(parents=True, exist_ok=True)

    _copy_csv(run_dir / pl.CLUSTERS_CSV, report_dir / ASSIGNMENTS_CSV)
    _copy_csv(run_dir / pl.TSNE_CSV, report_dir / TSNE_COORDS_CSV)
    _copy_csv(run_dir / pl.STATS_CSV, report_dir / SHOT_STATS_CSV)
    _copy_csv(run_dir / pl.SUMMARY_CSV, report_dir / SUMMARY_CSV)

    assignments = {}
    _meta, _header, rows = pl.read_csv(run_dir / pl.CLUSTERS_CSV)
    for clip_id, cluster in rows:
        assignments[clip_id] = int(cluster)
    _meta, _header, tsne_rows = pl.read_csv(run_dir / pl.TSNE_CSV)
    points = np.array([[float(r[1]), float(r[2])] for r in tsne_rows])
    labels = np.array([assignments.get(r[0], -1) for r in tsne_rows])
    render_cluster_scatter(points, labels, report_dir / SCATTER_SVG,
                           cfg.config_hash, cfg.tsne_seed)

    extras = []
    eval_tables = (
        (pl.EVAL_DETECT_JSON, "detection_metrics.csv",
         ["precision", "recall", "ap"], ("precision", "recall", "ap")),
        (pl.EVAL_TRACK_JSON, "tracking_metrics.csv",
         ["deta", "assa", "hota"], ("deta", "assa", "hota")),
        (pl.EVAL_SELECT_JSON, "selection_metrics.csv",
         ["precision", "recall", "accuracy", "clip_accuracy"],
         ("precision", "recall", "accuracy", "clip_accuracy")),
    )
    for src_name, out_name, header, keys in eval_tables:
        src = run_dir / src_name
        if src.exists():
            doc = json.loads(src.read_text())
            extras.append(_metric_table(report_dir, cfg, out_name, src, list(header),
                                        [doc[k] for k in keys]))
    pose_src = run_dir / pl.EVAL_POSE_JSON
    if pose_src.exists():
        doc = json.loads(pose_src.read_text())
        groups = doc["groups"]
        header = list(groups.keys()) + ["PDJ", "AUC"]
        row = [("" if groups[g] is None else groups[g]) for g in groups] \
            + [doc["pdj"], doc["auc"]]
        extras.append(_metric_table(report_dir, cfg, "pose_metrics.csv",
                                    pose_src, header, row))

    manifest = {
        "config_hash": cfg.config_hash,
        "seeds": cfg.seeds_dict(),
        "artifacts": sorted([ASSIGNMENTS_CSV, TSNE_COORDS_CSV, SHOT_STATS_CSV,
                             SUMMARY_CSV, SCATTER_SVG] + extras),
    }
    (report_dir / pl.MANIFEST_JSON).write_text(
        json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return report_dir
