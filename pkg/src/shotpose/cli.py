"""Command-line interface for the shot-pose analysis pipeline."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .errors import ShotposeError
from .pipeline import (
    cmd_cluster, cmd_embed, cmd_eval_detect, cmd_eval_pose, cmd_eval_select,
    cmd_eval_track, cmd_report, cmd_stats, cmd_train, cmd_tsne, cmd_validate,
    load_run_config,
)
from .synthetic import generate_dataset

log = logging.getLogger("shotpose")

CONFIG_OVERRIDES = (
    "dataset_root", "out_dir", "joint_map_id", "seed", "k", "perplexity",
    "tsne_iters", "epochs", "lstm_hidden", "gcn_hidden", "gcn_out",
    "learning_rate", "batch_size", "decision_threshold", "pdj_threshold",
    "iou_threshold",
)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="path to a run-config JSON file")
    parser.add_argument("--dataset", dest="dataset_root", help="dataset root directory")
    parser.add_argument("--out", dest="out_dir", help="run output directory")
    parser.add_argument("--seed", type=int, help="base seed for every stage")
    parser.add_argument("--joint-map", dest="joint_map_id", help="joint map id")
    # Model and analysis knobs are part of the run config (and its hash),
    # so every stage accepts them even if it does not use them directly.
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--lstm-hidden", dest="lstm_hidden", type=int)
    parser.add_argument("--gcn-hidden", dest="gcn_hidden", type=int)
    parser.add_argument("--gcn-out", dest="gcn_out", type=int)
    parser.add_argument("--learning-rate", dest="learning_rate", type=float)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--k", type=int)
    parser.add_argument("--perplexity", type=float)
    parser.add_argument("--tsne-iters", dest="tsne_iters", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shotpose",
        description="Embed, cluster, and evaluate 20-frame soccer shot pose sequences.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", dest="out_dir", required=True, help="dataset directory to create")
    p.add_argument("--clips", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("validate", help="validate every clip in a dataset")
    _add_common(p)

    p = sub.add_parser("train", help="fit the pose-sequence autoencoder")
    _add_common(p)

    p = sub.add_parser("embed", help="embed every clip with a trained model")
    _add_common(p)

    p = sub.add_parser("cluster", help="k-means cluster the latent vectors")
    _add_common(p)

    p = sub.add_parser("stats", help="per-clip shot statistics and cluster summary")
    _add_common(p)

    p = sub.add_parser("tsne", help="2-D embedding of the latents for plotting")
    _add_common(p)

    p = sub.add_parser("eval-pose", help="keypoint PDJ/AUC against annotations")
    _add_common(p)
    p.add_argument("--gt", required=True, help="ground-truth pose file")
    p.add_argument("--pred", required=True, help="predicted pose file")
    p.add_argument("--pdj-threshold", dest="pdj_threshold", type=float)

    p = sub.add_parser("eval-detect", help="detection precision/recall/AP")
    _add_common(p)
    p.add_argument("--gt", required=True, help="ground-truth detections file")
    p.add_argument("--pred", required=True, help="predicted detections file")
    p.add_argument("--iou-threshold", dest="iou_threshold", type=float)

    p = sub.add_parser("eval-track", help="tracking HOTA/DetA/AssA")
    _add_common(p)
    p.add_argument("--gt", required=True, help="ground-truth tracks file")
    p.add_argument("--pred", required=True, help="predicted tracks file")

    p = sub.add_parser("eval-select", help="tracklet-selection accuracy")
    _add_common(p)
    p.add_argument("--scores", required=True, help="selection scores file")
    p.add_argument("--decision-threshold", dest="decision_threshold", type=float)

    p = sub.add_parser("report", help="assemble figures and tables from a run")
    _add_common(p)

    return parser


def _config_from_args(args: argparse.Namespace):
    overrides = {name: getattr(args, name, None) for name in CONFIG_OVERRIDES}
    return load_run_config(getattr(args, "config", None), **overrides)


def _print_rows(rows) -> None:
    for row in rows:
        print("  ".join(str(v) for v in row))


def run_command(args: argparse.Namespace) -> int:
    if args.command == "synth":
        dataset = generate_dataset(args.out_dir, clips=args.clips, seed=args.seed)
        print(f"wrote {len(dataset.clips)} synthetic clips to {args.out_dir}")
        return 0

    cfg = _config_from_args(args)

    if args.command == "validate":
        report = cmd_validate(cfg)
        for entry in report.entries:
            status = "pass" if entry.ok else f"FAIL  {entry.reason}"
            print(f"{entry.clip_id}: {status}")
        print(f"{sum(e.ok for e in report.entries)}/{len(report.entries)} clips valid")
        return 0 if report.ok else 1

    if args.command == "train":
        result = cmd_train(cfg)
        print(f"trained {cfg.epochs} epochs; "
              f"loss {result.loss_history[0]:.6f} -> {result.loss_history[-1]:.6f}")
        return 0

    if args.command == "embed":
        latents = cmd_embed(cfg)
        print(f"embedded {len(latents)} clips (latent dim {cfg.lstm_hidden})")
        return 0

    if args.command == "cluster":
        model = cmd_cluster(cfg)
        print(f"k={model.k} inertia={model.inertia:.6f} after {model.n_iter} iterations")
        return 0

    if args.command == "stats":
        comparison = cmd_stats(cfg)
        _print_rows([["cluster", "count", "ankle_travel", "max_vertical", "min_knee_angle"]])
        for entry in comparison.per_cluster:
            _print_rows([[entry.cluster, entry.count,
                          f"{entry.mean_ankle_travel:.4f}",
                          f"{entry.mean_max_vertical:.4f}",
                          f"{entry.mean_min_knee_angle:.2f}"]])
        return 0

    if args.command == "tsne":
        embedding = cmd_tsne(cfg)
        print(f"t-SNE finished; KL {embedding.kl_history[0][1]:.4f} -> {embedding.final_kl:.4f}")
        return 0

    if args.command == "eval-pose":
        payload = cmd_eval_pose(cfg, args.gt, args.pred)
        groups = payload["groups"]
        header = [g for g in groups] + ["PDJ", "AUC"]
        values = [("-" if groups[g] is None else f"{100 * groups[g]:.2f}%") for g in groups]
        values += [f"{100 * payload['pdj']:.2f}%", f"{100 * payload['auc']:.2f}%"]
        _print_rows([header, values])
        return 0

    if args.command == "eval-detect":
        payload = cmd_eval_detect(cfg, args.gt, args.pred)
        _print_rows([["precision", "recall", "ap"],
                     [f"{100 * payload['precision']:.2f}%",
                      f"{100 * payload['recall']:.2f}%",
                      f"{100 * payload['ap']:.2f}%"]])
        return 0

    if args.command == "eval-track":
        payload = cmd_eval_track(cfg, args.gt, args.pred)
        _print_rows([["deta", "assa", "hota"],
                     [f"{100 * payload['deta']:.2f}%",
                      f"{100 * payload['assa']:.2f}%",
                      f"{100 * payload['hota']:.2f}%"]])
        return 0

    if args.command == "eval-select":
        payload = cmd_eval_select(cfg, args.scores)
        _print_rows([["precision", "recall", "accuracy", "clip_accuracy"],
                     [f"{100 * payload['precision']:.2f}%",
                      f"{100 * payload['recall']:.2f}%",
                      f"{100 * payload['accuracy']:.2f}%",
                      f"{100 * payload['clip_accuracy']:.2f}%"]])
        return 0

    if args.command == "report":
        report_dir = cmd_report(cfg)
        print(f"report written to {report_dir}")
        return 0

    raise AssertionError(f"unhandled command {args.command}")


def main(argv=None) -> int:
    level = os.environ.get("SHOTPOSE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run_command(args)
    except ShotposeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
