"""Command-line interface: ingest, train, evaluate, recommend, explain, sweep.

Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence,
4 partial grid failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import dataset, experiment, rbm
from .explain import ExplanationError, render_explanation
from .neighborhood import explainability_matrix, k_nearest_neighbors

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3
EXIT_PARTIAL = 4

TRAIN_FILE = "train.tsv"
TEST_FILE = "test.tsv"


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_data_dir(parser: argparse.ArgumentParser) -> None:
    # ERBM_DATA_DIR may supply the default; the flag always wins.
    env = os.environ.get("ERBM_DATA_DIR")
    parser.add_argument(
        "--data-dir", default=env, required=env is None,
        help="directory holding train.tsv/test.tsv (default: $ERBM_DATA_DIR)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="erbm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p_ingest = sub.add_parser(
        "ingest", help="parse ratings and write the temporal split", formatter_class=fmt
    )
    p_ingest.add_argument("--ratings", required=True, help="tab-separated user item rating timestamp file")
    p_ingest.add_argument("--out-dir", required=True)
    p_ingest.add_argument("--test-fraction", type=float, default=0.1)
    p_ingest.add_argument("--r-scale", type=int, default=5)

    defaults = rbm.TrainConfig()
    p_train = sub.add_parser("train", help="train a model on an ingested split", formatter_class=fmt)
    _add_data_dir(p_train)
    p_train.add_argument("--out", required=True, help="model file to write")
    p_train.add_argument("--f", type=int, default=defaults.f, help="hidden units")
    p_train.add_argument("--k", type=int, default=50, help="neighborhood size for conditioning")
    p_train.add_argument("--epochs", type=int, default=defaults.epochs)
    p_train.add_argument("--seed", type=int, default=defaults.seed)
    p_train.add_argument("--mode", choices=rbm.EXPLAINABILITY_MODES,
                         default=defaults.explainability_mode)
    p_train.add_argument("--m-treatment", choices=rbm.M_TREATMENTS,
                         default=defaults.m_treatment)
    p_train.add_argument("--hidden-data-stats", choices=rbm.HIDDEN_DATA_STATS,
                         default=defaults.hidden_data_stats)
    p_train.add_argument("--learning-rate-w", type=float, default=defaults.learning_rate_w)
    p_train.add_argument("--learning-rate-d", type=float, default=defaults.learning_rate_d)
    p_train.add_argument("--cd-steps", type=int, default=defaults.cd_steps)
    p_train.add_argument("--minibatch", type=int, default=defaults.minibatch)
    p_train.add_argument("--momentum-initial", type=float, default=defaults.momentum_initial)
    p_train.add_argument("--momentum-final", type=float, default=defaults.momentum_final)
    p_train.add_argument("--momentum-switch-epoch", type=int,
                         default=defaults.momentum_switch_epoch)
    p_train.add_argument("--weight-decay", type=float, default=defaults.weight_decay)
    p_train.add_argument("--init-std", type=float, default=defaults.init_std)

    p_eval = sub.add_parser(
        "evaluate", help="score a trained model on the held-out test set", formatter_class=fmt
    )
    _add_data_dir(p_eval)
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--k", type=int, default=50)
    p_eval.add_argument("--theta", type=float, default=0.0)
    p_eval.add_argument("--top-n", type=int, default=10)

    p_rec = sub.add_parser(
        "recommend", help="print a user's top-n items with scores", formatter_class=fmt
    )
    _add_data_dir(p_rec)
    p_rec.add_argument("--model", required=True)
    p_rec.add_argument("--user", type=int, required=True, help="external user id")
    p_rec.add_argument("--n", type=int, default=10)
    p_rec.add_argument("--k", type=int, default=50)

    p_exp = sub.add_parser(
        "explain", help="neighbor-style explanation for one (user, item)", formatter_class=fmt
    )
    _add_data_dir(p_exp)
    p_exp.add_argument("--user", type=int, required=True, help="external user id")
    p_exp.add_argument("--item", type=int, required=True, help="external item id")
    p_exp.add_argument("--k", type=int, default=50)

    p_sweep = sub.add_parser("sweep", help="run a configured experiment grid", formatter_class=fmt)
    p_sweep.add_argument("--config", required=True, help="flat key=value config file")
    return parser


def _load_split(data_dir: str) -> dataset.DatasetSplit:
    train_path = Path(data_dir) / TRAIN_FILE
    test_path = Path(data_dir) / TEST_FILE
    if not train_path.exists() or not test_path.exists():
        raise FileNotFoundError(f"no {TRAIN_FILE}/{TEST_FILE} under {data_dir}; run `erbm ingest` first")
    return dataset.load_split(train_path, test_path)


def _cmd_ingest(args) -> int:
    table = dataset.load_ratings(args.ratings, r_scale=args.r_scale)
    split = dataset.temporal_split(table, args.test_fraction)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset.save_split(split, out / TRAIN_FILE, out / TEST_FILE)
    print(f"users: {table.n_users}")
    print(f"items: {table.n_items}")
    print(f"ratings: {table.n_ratings}")
    print(f"train: {split.train_table.n_ratings}")
    print(f"test: {split.test.n_ratings}")
    print(f"wrote {out / TRAIN_FILE} and {out / TEST_FILE}")
    return EXIT_OK


def _cmd_train(args) -> int:
    split = _load_split(args.data_dir)
    config = rbm.TrainConfig(
        f=args.f,
        epochs=args.epochs,
        learning_rate_w=args.learning_rate_w,
        learning_rate_d=args.learning_rate_d,
        cd_steps=args.cd_steps,
        minibatch=args.minibatch,
        momentum_initial=args.momentum_initial,
        momentum_final=args.momentum_final,
        momentum_switch_epoch=args.momentum_switch_epoch,
        weight_decay=args.weight_decay,
        init_std=args.init_std,
        seed=args.seed,
        explainability_mode=args.mode,
        m_treatment=args.m_treatment,
        hidden_data_stats=args.hidden_data_stats,
    )
    expl = None
    if args.mode == "conditioned":
        expl = explainability_matrix(split.train, args.k)
    result = rbm.train(split, expl, config)
    rbm.save_model(result.params, args.out, mode=args.mode)
    if result.log:
        print(f"final reconstruction rmse: {result.log[-1].recon_rmse:.6f}")
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    split = _load_split(args.data_dir)
    params, mode = rbm.load_model(args.model)
    if params.n_items != split.train.n_items:
        raise ValueError(
            f"model has {params.n_items} items but split has {split.train.n_items}"
        )
    expl = explainability_matrix(split.train, args.k, args.theta)
    conditioned = mode == "conditioned"
    scores = rbm.predict_matrix(params, split.train, expl.scores if conditioned else None)
    gains = experiment.relevance_gains(split)
    rmse_val, ndcg, mep_val, mer_val = experiment.evaluate_scores(
        scores, split, expl, gains, args.top_n, args.theta,
        explainable_only=conditioned,
    )
    print(f"rmse={rmse_val:.6f}")
    print(f"ndcg{args.top_n}={ndcg:.6f}")
    print(f"mep={mep_val:.6f}")
    print(f"mer={mer_val:.6f}")
    return EXIT_OK


def _cmd_recommend(args) -> int:
    split = _load_split(args.data_dir)
    params, mode = rbm.load_model(args.model)
    matrix = split.train
    user_index = {ext: idx for idx, ext in enumerate(matrix.user_ids)}
    if args.user not in user_index:
        raise ValueError(f"unknown user id {args.user}")
    user = user_index[args.user]
    expl = explainability_matrix(matrix, args.k)
    conditioned = mode == "conditioned"
    items = rbm.top_n(
        params, user, args.n, split,
        expl if conditioned else None,
        explainable_only=conditioned,
    )
    preds = rbm.predict_ratings(
        params,
        matrix.normalized()[user],
        expl.row(user) if conditioned else np.zeros(matrix.n_items),
        r_scale=matrix.r_scale,
    )
    for rank, item in enumerate(items, start=1):
        print(
            f"{rank}\t{matrix.item_ids[item]}\t{preds[item]:.2f}\t{expl.score(user, item):.3f}"
        )
    return EXIT_OK


def _cmd_explain(args) -> int:
    split = _load_split(args.data_dir)
    matrix = split.train
    user_index = {ext: idx for idx, ext in enumerate(matrix.user_ids)}
    item_index = {ext: idx for idx, ext in enumerate(matrix.item_ids)}
    if args.user not in user_index:
        raise ValueError(f"unknown user id {args.user}")
    if args.item not in item_index:
        raise ValueError(f"unknown item id {args.item}")
    neighbors = k_nearest_neighbors(matrix, args.k)
    statement = render_explanation(
        user_index[args.user], item_index[args.item], matrix, neighbors
    )
    print(statement.text)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    settings = experiment.load_sweep_settings(args.config)
    if not settings.ratings:
        raise ValueError("config must set ratings=<path>")
    table = dataset.load_ratings(settings.ratings, r_scale=settings.r_scale)
    split = dataset.temporal_split(table, settings.test_fraction)
    report = experiment.run_experiment(
        split,
        settings.cells(),
        runs=settings.runs,
        top_n=settings.top_n,
        theta=settings.theta,
        like_threshold=settings.like_threshold,
        base_config=settings.train_config(),
    )
    experiment.write_report(report, settings.out)
    print(f"wrote {settings.out} ({len(report.rows)} rows)")
    if report.failures:
        for failure in report.failures:
            print(f"failed: {failure}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


_COMMANDS = {
    "ingest": _cmd_ingest,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "recommend": _cmd_recommend,
    "explain": _cmd_explain,
    "sweep": _cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except rbm.TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, ValueError, ExplanationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
