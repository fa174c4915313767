"""One-class anomaly detection on an MNIST-style IDX corpus.

Digit ``--normal-class`` is normal and every other class anomalous. The training set is
the normal class only; the test set mixes 1000 normal and 9000 anomalous images by
default. Corpus files must be supplied locally, nothing is downloaded.

    python scripts/idx_experiment.py --train-images train-images-idx3-ubyte \
        --train-labels train-labels-idx1-ubyte --test-images t10k-images-idx3-ubyte \
        --test-labels t10k-labels-idx1-ubyte --normal-class 1
"""

import argparse
import json
import logging
import time

import numpy as np

from gbrbm_ad.annealing import SaConfig, make_schedule, sa_search
from gbrbm_ad.core import fe_score
from gbrbm_ad.data import NoiseSpec, normalize_and_noise, read_idx, subsample
from gbrbm_ad.density import ScoreFitConfig, threshold_for, train_score_model
from gbrbm_ad.pipeline import ModelBundle, evaluate, save_bundle
from gbrbm_ad.trainer import TrainConfig, train


def load(images, labels, normal_class, noise_std, rng):
    noise = NoiseSpec(gaussian_std=noise_std, truncate=False)
    return normalize_and_noise(read_idx(images), noise, read_idx(labels), [normal_class], rng)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--train-images", required=True)
    p.add_argument("--train-labels", required=True)
    p.add_argument("--test-images", required=True)
    p.add_argument("--test-labels", required=True)
    p.add_argument("--normal-class", type=int, default=1)
    p.add_argument("--noise-std", type=float, default=0.05)
    p.add_argument("--n-train", type=int, default=None, help="cap on normal training images")
    p.add_argument("--nh", type=int, default=200)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--cd-k", type=int, default=5)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--K", type=int, default=1000)
    p.add_argument("--restarts", type=int, default=100)
    p.add_argument("--score-epochs", type=int, default=5000)
    p.add_argument("--p-anom", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="optional bundle path")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO)
    rng = np.random.default_rng(args.seed)

    full = load(args.train_images, args.train_labels, args.normal_class, args.noise_std, rng)
    train_x = full.normal
    if args.n_train is not None and args.n_train < len(train_x):
        train_x = train_x[np.sort(rng.choice(len(train_x), args.n_train, replace=False))]
    test = subsample(load(args.test_images, args.test_labels, args.normal_class, 0.0, rng), 1000, 9000, rng)

    timings = {}
    t = time.perf_counter()
    cfg = TrainConfig(batch_size=args.batch, epochs=args.epochs, cd_steps=args.cd_k, learning_rate=args.lr,
                      chain_init="standard-normal", seed=args.seed)
    params, report = train(train_x, cfg, args.nh)
    timings["train"] = time.perf_counter() - t

    t = time.perf_counter()
    sa = sa_search(params, SaConfig(make_schedule(args.K), args.restarts, 10, seed=args.seed), train_x)
    timings["min_fe"] = time.perf_counter() - t

    t = time.perf_counter()
    scores = fe_score(params, train_x)
    sm = train_score_model(scores, sa.f_star, ScoreFitConfig(epochs=args.score_epochs, learning_rate=1e-2, seed=args.seed))
    cal = threshold_for(sm, args.p_anom)
    timings["density"] = time.perf_counter() - t

    bundle = ModelBundle(params, sm, sa.f_star, sa.v_star, cal, {"normal_class": args.normal_class, "seed": args.seed})
    result = evaluate(bundle, test).summary()
    result.update(f_star=sa.f_star, min_train_fe=float(scores.min()), n_train=len(train_x),
                  negative_phase=report.negative_phase, timings=timings)
    if args.out:
        result["bundle_sha256"] = save_bundle(bundle, args.out)
    print(json.dumps(result, indent=2))


if __name__ == "__main__":
    main()
