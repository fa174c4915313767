"""Command-line pipeline. Every subcommand prints a JSON summary on stdout."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .annealing import SaConfig, make_schedule, sa_search
from .core import fe_score
from .data import (
    NoiseSpec,
    generate_toy,
    load_dataset,
    normalize_and_noise,
    read_idx,
    save_dataset,
    subsample,
)
from .density import ScoreFitConfig, anomaly_probability, pdf_table, threshold_for, train_score_model
from .pipeline import ModelBundle, classify, evaluate, file_sha256, load_bundle, save_bundle
from .trainer import TrainConfig, train

log = logging.getLogger("gbrbm_ad")


def _emit(summary: dict) -> None:
    json.dump(summary, sys.stdout, indent=2, sort_keys=True, default=float)
    sys.stdout.write("\n")


def _write_csv(path, columns: dict) -> None:
    names = list(columns)
    rows = zip(*(np.asarray(columns[n]).tolist() for n in names))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        writer.writerows(rows)


def cmd_gen_toy(args) -> dict:
    noise = NoiseSpec(args.gaussian_std, args.flip_prob, truncate=True, seed=args.seed)
    ds = generate_toy(
        args.per_class, noise, include_anomalies=args.with_anomalies,
        rng=np.random.default_rng(args.seed), n_anomalous=args.n_anomalous,
    )
    save_dataset(ds, args.out)
    return {"out": args.out, "n_points": len(ds), "n_anomalous": int(ds.labels.sum()), "sha256": file_sha256(args.out)}


def cmd_prep_idx(args) -> dict:
    images = read_idx(args.images)
    labels = read_idx(args.labels) if args.labels else None
    noise = NoiseSpec(gaussian_std=args.noise_std, truncate=False, seed=args.seed)
    rng = np.random.default_rng(args.seed)
    ds = normalize_and_noise(images, noise, labels, keep_labels=args.normal_class, rng=rng)
    if args.n_normal is not None or args.n_anomalous is not None:
        ds = subsample(
            ds, args.n_normal if args.n_normal is not None else len(ds),
            args.n_anomalous if args.n_anomalous is not None else len(ds), rng,
        )
    save_dataset(ds, args.out)
    return {"out": args.out, "n_points": len(ds), "n_anomalous": int(ds.labels.sum()), "sha256": file_sha256(args.out)}


def cmd_train(args) -> dict:
    ds = load_dataset(args.data)
    cfg = TrainConfig(
        batch_size=args.batch, epochs=args.epochs, cd_steps=args.cd_k, persistent=args.persistent,
        learning_rate=args.lr, seed=args.seed, negative_sample_count=args.neg_samples,
        chain_init=args.chain_init,
    )
    params, report = train(ds.normal, cfg, args.nh)
    provenance = {
        "train": {"data": args.data, "data_sha256": file_sha256(args.data), "n_hidden": args.nh,
                  "config": vars(cfg), "negative_phase": report.negative_phase},
    }
    digest = save_bundle(ModelBundle(params, provenance=provenance), args.out)
    return {
        "out": args.out, "bundle_sha256": digest, "negative_phase": report.negative_phase,
        "final_mean_fe": report.epochs[-1]["mean_fe"], "wall_time": report.wall_time,
    }


def cmd_min_fe(args) -> dict:
    bundle = load_bundle(args.model)
    data_path = args.data or bundle.provenance.get("train", {}).get("data")
    pool = None
    policy = args.init
    if policy == "from-training-data":
        if not data_path or not Path(data_path).exists():
            raise ValueError("no training data available for initialization; pass --data")
        pool = load_dataset(data_path).normal
    cfg = SaConfig(
        schedule=make_schedule(args.K), restarts=args.restarts, steps_per_temperature=args.steps,
        init_policy=policy, seed=args.seed,
    )
    result = sa_search(bundle.data_model, cfg, pool)
    bundle.f_star, bundle.v_star = result.f_star, result.v_star
    bundle.provenance["min_fe"] = {"K": args.K, "restarts": args.restarts, "steps": args.steps,
                                   "init": policy, "seed": args.seed}
    summary = {"f_star": result.f_star, "restart_finals": [r.final_fe for r in result.per_restart]}
    if pool is not None:
        summary["min_data_fe"] = float(np.min(fe_score(bundle.data_model, pool)))
    out = args.out or args.model
    summary.update(out=out, bundle_sha256=save_bundle(bundle, out))
    return summary


def cmd_fit_density(args) -> dict:
    bundle = load_bundle(args.model)
    bundle.require("f_star")
    ds = load_dataset(args.data)
    scores = fe_score(bundle.data_model, ds.normal)
    cfg = ScoreFitConfig(
        n_hidden=args.nh1d, epochs=args.epochs, learning_rate=args.lr, panels=args.panels,
        nodes_per_panel=args.nodes, seed=args.seed,
    )
    bundle.score_model = train_score_model(scores, bundle.f_star, cfg)
    bundle.calibration = None
    bundle.provenance["fit_density"] = {"data": args.data, "config": vars(cfg)}
    if args.out_csv:
        _write_csv(args.out_csv, pdf_table(bundle.score_model))
    out = args.out or args.model
    return {
        "out": out, "bundle_sha256": save_bundle(bundle, out),
        "normalizer": vars(bundle.score_model.normalizer), "fit": bundle.score_model.fit_info,
    }


def cmd_calibrate(args) -> dict:
    bundle = load_bundle(args.bundle)
    bundle.require("score_model")
    cal = threshold_for(bundle.score_model, args.p_anom)
    bundle.calibration = cal
    out = args.out or args.bundle
    return {"out": out, "bundle_sha256": save_bundle(bundle, out), **vars(cal)}


def cmd_score(args) -> dict:
    bundle = load_bundle(args.bundle)
    ds = load_dataset(args.data)
    f = fe_score(bundle.data_model, ds.points)
    columns = {"index": np.arange(len(ds)), "label": ds.labels, "fe_score": f}
    if bundle.score_model is not None:
        columns["z"] = bundle.score_model.normalizer.to_z(f)
        columns["anomaly_probability"] = anomaly_probability(bundle.score_model, f)
    if bundle.calibration is not None:
        columns["predicted"] = classify(bundle, ds.points)
    if args.out_csv:
        _write_csv(args.out_csv, columns)
    summary = {"n_points": len(ds), "mean_fe": float(np.mean(f)), "min_fe": float(np.min(f)), "max_fe": float(np.max(f))}
    if "predicted" in columns:
        summary["n_flagged"] = int(np.sum(columns["predicted"]))
    return summary


def cmd_eval(args) -> dict:
    bundle = load_bundle(args.bundle)
    test = load_dataset(args.test)
    report = evaluate(bundle, test, bins=args.bins)
    if args.out_csv:
        _write_csv(args.out_csv, report.histogram)
    return report.summary()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gbrbm-ad", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--seed", type=int, default=0)
        p.set_defaults(func=func)
        return p

    p = add("gen-toy", cmd_gen_toy, "generate the four-image toy dataset")
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--gaussian-std", type=float, default=0.5)
    p.add_argument("--flip-prob", type=float, default=0.1)
    p.add_argument("--with-anomalies", action="store_true")
    p.add_argument("--n-anomalous", type=int, default=None)
    p.add_argument("--out", required=True)

    p = add("prep-idx", cmd_prep_idx, "normalize an IDX image corpus and add noise")
    p.add_argument("--images", required=True)
    p.add_argument("--labels", default=None)
    p.add_argument("--normal-class", type=int, action="append", default=None)
    p.add_argument("--noise-std", type=float, default=0.05)
    p.add_argument("--n-normal", type=int, default=None)
    p.add_argument("--n-anomalous", type=int, default=None)
    p.add_argument("--out", required=True)

    p = add("train", cmd_train, "train the data GBRBM on the normal points of a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--nh", type=int, required=True)
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--cd-k", type=int, default=10)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--persistent", action="store_true")
    p.add_argument("--neg-samples", type=int, default=128)
    p.add_argument("--chain-init", choices=["data", "standard-normal"], default="data")
    p.add_argument("--out", required=True)

    p = add("min-fe", cmd_min_fe, "anneal for the minimum FE score")
    p.add_argument("--model", required=True)
    p.add_argument("--K", type=int, default=1000)
    p.add_argument("--restarts", type=int, default=100)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--init", choices=["from-training-data", "standard-normal"], default="from-training-data")
    p.add_argument("--data", default=None)
    p.add_argument("--out", default=None)

    p = add("fit-density", cmd_fit_density, "fit the 1-D FE-score density model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--nh1d", type=int, default=50)
    p.add_argument("--panels", type=int, default=64)
    p.add_argument("--nodes", type=int, default=16)
    p.add_argument("--epochs", type=int, default=1_000_000)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--out", default=None)
    p.add_argument("--out-csv", default=None)

    p = add("calibrate", cmd_calibrate, "set the threshold from an anomalous probability")
    p.add_argument("--bundle", required=True)
    p.add_argument("--p-anom", type=float, default=0.9)
    p.add_argument("--out", default=None)

    p = add("score", cmd_score, "score a dataset")
    p.add_argument("--bundle", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out-csv", default=None)

    p = add("eval", cmd_eval, "MCC at the calibrated threshold and the best achievable MCC")
    p.add_argument("--bundle", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--bins", type=int, default=60)
    p.add_argument("--out-csv", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        summary = args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        # bad inputs, malformed files and failed fits all derive from these
        print(f"gbrbm-ad {args.command}: error: {exc}", file=sys.stderr)
        return 1
    _emit(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
