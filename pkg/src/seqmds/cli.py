"""Command-line surface: `seqmds <subcommand>`.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 numerical
failure. Every output file is written atomically (temp file + rename), every
run echoes its fully resolved configuration to <out>/resolved_config.txt,
and every stochastic command requires --seed. A flat `key = value` config
file can supply any flag; explicit flags win.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from ._util import atomic_open
from .corpus import load_alphabet, load_corpus, save_alphabet, save_corpus
from .dissim import dissimilarity_matrix, export_matrix_csv, load_matrix, save_matrix
from .errors import DataError, NumericalError
from .experiments import (
    StudyConfig,
    derive_variables,
    run_cross_outcome,
    run_score_prediction,
    run_simulation_study,
    save_derived,
    save_report,
    save_report_csv,
)
from .glm import (
    default_l2_grid,
    evaluate,
    fit_linear,
    fit_logistic,
    make_design,
    predict_class,
    predict_response,
    save_metrics,
    save_model,
    select_l2,
)
from .mds import SgdConfig, choose_k, embed, load_embedding, save_cv_report, save_embedding
from .pca import fit_pca, load_pca, save_pca, transform
from .simulate import generate_corpus, load_truth, save_truth


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise _UsageError(message)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _ratios(text: str) -> tuple[int, ...]:
    try:
        parts = tuple(int(tok) for tok in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected ratios like 4:1:1, got {text!r}")
    if not parts or any(p < 1 for p in parts):
        raise argparse.ArgumentTypeError("all ratio parts must be positive")
    return parts


def _write_resolved_config(args: argparse.Namespace, out_dir: str) -> None:
    skip = {"func", "config"}
    lines = []
    for key in sorted(vars(args)):
        if key in skip:
            continue
        value = getattr(args, key)
        if isinstance(value, (tuple, list)):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {value}\n")
    os.makedirs(out_dir, exist_ok=True)
    with atomic_open(os.path.join(out_dir, "resolved_config.txt")) as fh:
        fh.writelines(lines)


def _out(args, name: str) -> str:
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _sgd_config(args) -> SgdConfig:
    return SgdConfig(
        seed=args.sgd_seed if getattr(args, "sgd_seed", None) is not None else args.seed,
        epochs=args.epochs,
        initial_step=args.initial_step,
        step_decay=args.step_decay,
        init_scale=args.init_scale,
        pair_batch=args.pair_batch,
    )


def _add_sgd_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--epochs", type=_positive_int, default=200)
    parser.add_argument("--initial-step", type=float, default=0.1)
    parser.add_argument("--step-decay", type=float, default=0.05)
    parser.add_argument("--init-scale", type=float, default=None)
    parser.add_argument("--pair-batch", type=_positive_int, default=32768)
    parser.add_argument(
        "--sgd-seed", type=int, default=None, help="seed for the SGD runs (default: --seed)"
    )


# ---------------------------------------------------------------------------
# Subcommand handlers


def _cmd_simulate(args) -> int:
    corpus, truth = generate_corpus(
        args.strategy, args.n, args.seed, max_len=args.max_len, resamples=args.resamples
    )
    _write_resolved_config(args, args.out)
    save_corpus(corpus, _out(args, "corpus.jsonl"))
    save_alphabet(corpus.alphabet, _out(args, "alphabet.txt"))
    save_truth(truth, _out(args, "truth.csv"))
    return 0


def _cmd_dissim(args) -> int:
    alphabet = load_alphabet(args.alphabet) if args.alphabet else None
    corpus = load_corpus(getattr(args, "in"), alphabet=alphabet)
    matrix = dissimilarity_matrix(corpus, threads=args.threads)
    _write_resolved_config(args, args.out)
    save_matrix(matrix, _out(args, "dissim.pdm"))
    if args.csv:
        export_matrix_csv(matrix, _out(args, "dissim.csv"))
    return 0


def _cmd_choose_k(args) -> int:
    matrix = load_matrix(args.matrix)
    report = choose_k(
        matrix, args.grid, args.folds, _sgd_config(args), args.seed, threads=args.threads
    )
    _write_resolved_config(args, args.out)
    save_cv_report(report, _out(args, "cv_report.json"))
    return 0


def _cmd_embed(args) -> int:
    matrix = load_matrix(args.matrix)
    embedding = embed(matrix, args.k, _sgd_config(args))
    _write_resolved_config(args, args.out)
    save_embedding(embedding, _out(args, "embedding.csv"))
    return 0


def _cmd_pca(args) -> int:
    raw = load_embedding(args.embedding)
    model = fit_pca(raw)
    principal = transform(model, raw)
    _write_resolved_config(args, args.out)
    save_pca(model, _out(args, "pca_model.json"))
    save_embedding(principal, _out(args, "principal.csv"))
    return 0


def _cmd_derive(args) -> int:
    corpus = load_corpus(getattr(args, "in"))
    dv = derive_variables(corpus, threshold_frac=args.threshold)
    _write_resolved_config(args, args.out)
    save_derived(dv, _out(args, "derived.csv"))
    return 0


def _load_targets(path, ids) -> np.ndarray:
    import csv as _csv

    with open(path, encoding="utf-8") as fh:
        reader = _csv.reader(fh)
        header = next(reader, None)
        if not header or len(header) < 2 or header[0] != "id":
            raise DataError(f"{path} must be a CSV with columns id,<value>")
        table = {row[0]: float(row[1]) for row in reader}
    missing = [sid for sid in ids if sid not in table]
    if missing:
        raise DataError(f"{path} is missing target for id {missing[0]!r}")
    return np.array([table[sid] for sid in ids])


def _cmd_predict(args) -> int:
    features = load_embedding(args.features)
    y = _load_targets(args.targets, features.ids)
    from .corpus import split_ids

    split = split_ids(features.ids, args.ratios, args.seed)
    idx = {label: split.indices_for(label, features.ids) for label in split.labels}
    cols = [(f"f{j + 1}", features.coords[:, j]) for j in range(features.k)]
    design_all = make_design(cols, recipe="intercept+features")

    def subset(indices):
        return make_design(
            [(name, col[indices]) for name, col in cols], recipe="intercept+features"
        )

    train = subset(idx["train"])
    test = subset(idx["test"])
    if "val" in idx:
        grid = args.l2_grid if args.l2_grid is not None else default_l2_grid(len(idx["train"]))
        model, _ = select_l2(args.kind, train, y[idx["train"]], subset(idx["val"]), y[idx["val"]], grid)
    elif args.kind == "logistic":
        model = fit_logistic(train, y[idx["train"]], l2=args.l2)
    else:
        model = fit_linear(train, y[idx["train"]], l2=args.l2)

    if args.kind == "logistic":
        metrics = evaluate(predict_class(model, test), y[idx["test"]], "accuracy")
    else:
        metrics = evaluate(predict_response(model, test), y[idx["test"]], "osr2")

    _write_resolved_config(args, args.out)
    save_model(model, _out(args, "model.json"))
    save_metrics(metrics, _out(args, "metrics.json"))
    predictions = predict_response(model, design_all)
    import csv as _csv

    with atomic_open(_out(args, "predictions.csv")) as fh:
        writer = _csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "split", "prediction"])
        for sid, pred in zip(features.ids, predictions):
            writer.writerow([sid, split.assignment[sid], repr(float(pred))])
    return 0


def _cmd_sim_study(args) -> int:
    reps = args.reps
    if args.full and reps == 10:
        reps = 100
    study = StudyConfig(
        grid=args.grid,
        folds=args.folds,
        threshold_frac=args.threshold,
        epochs=args.epochs,
        cv_epochs=args.cv_epochs,
    )
    report = run_simulation_study(
        args.strategy, args.n, reps=reps, seed=args.seed, study=study, threads=args.threads
    )
    _write_resolved_config(args, args.out)
    save_report(report, _out(args, "report.json"))
    save_report_csv(report, _out(args, "report.csv"))
    return 0


def _cmd_cross_outcome(args) -> int:
    features = load_embedding(args.predictor_features)
    y_pred = _load_targets(args.predictor_outcome, features.ids)
    y_tgt = _load_targets(args.target_outcome, features.ids)
    report = run_cross_outcome(
        features, y_pred, y_tgt, ratios=args.ratios, seed=args.seed
    )
    _write_resolved_config(args, args.out)
    save_report(report, _out(args, "report.json"))
    save_report_csv(report, _out(args, "report.csv"))
    return 0


def _parse_item(text: str):
    try:
        name, paths = text.split("=", 1)
        feat_path, out_path = paths.rsplit(":", 1)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected NAME=FEATURES.csv:OUTCOMES.csv, got {text!r}"
        )
    return name, feat_path, out_path


def _cmd_score(args) -> int:
    if not args.item:
        raise DataError("at least one --item is required")
    items = {}
    score_ids = None
    for name, feat_path, out_path in args.item:
        features = load_embedding(feat_path)
        outcomes = _load_targets(out_path, features.ids)
        items[name] = (features, outcomes)
        score_ids = features.ids if score_ids is None else score_ids
    score = _load_targets(args.score, score_ids)
    report = run_score_prediction(
        items,
        score,
        mode=args.mode,
        m=args.m,
        ratios=args.ratios,
        seed=args.seed,
        n_leading=args.n_leading,
    )
    _write_resolved_config(args, args.out)
    save_report(report, _out(args, "report.json"))
    save_report_csv(report, _out(args, "report.csv"))
    return 0


# ---------------------------------------------------------------------------
# Parser assembly


def build_parser() -> _Parser:
    parser = _Parser(prog="seqmds", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--config", default=None, help="flat key = value config file")

    p = sub.add_parser("simulate", help="generate a synthetic corpus")
    p.add_argument("--strategy", choices=("group", "continuous"), required=True)
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--max-len", type=_positive_int, default=10_000)
    p.add_argument("--resamples", type=_positive_int, default=100)
    common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("dissim", help="compute the pairwise dissimilarity matrix")
    p.add_argument("--in", required=True, help="corpus JSON Lines file")
    p.add_argument("--alphabet", default=None, help="explicit alphabet file")
    p.add_argument("--csv", action="store_true", help="also export the full matrix as CSV")
    p.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1)
    common(p)
    p.set_defaults(func=_cmd_dissim)

    p = sub.add_parser("choose-k", help="pick the embedding dimension by cross-validation")
    p.add_argument("--matrix", required=True, help="PDM1 matrix file")
    p.add_argument("--grid", type=_int_list, required=True, help="e.g. 5,10,15")
    p.add_argument("--folds", type=_positive_int, default=5)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1)
    _add_sgd_flags(p)
    common(p)
    p.set_defaults(func=_cmd_choose_k)

    p = sub.add_parser("embed", help="embed a dissimilarity matrix")
    p.add_argument("--matrix", required=True)
    p.add_argument("--k", type=_positive_int, required=True)
    p.add_argument("--seed", type=int, required=True)
    _add_sgd_flags(p)
    common(p)
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("pca", help="rotate raw features into principal features")
    p.add_argument("--embedding", required=True, help="embedding CSV")
    common(p)
    p.set_defaults(func=_cmd_pca)

    p = sub.add_parser("derive", help="derive unigram/bigram indicator variables")
    p.add_argument("--in", required=True, help="corpus JSON Lines file")
    p.add_argument("--threshold", type=float, default=0.05)
    common(p)
    p.set_defaults(func=_cmd_derive)

    p = sub.add_parser("predict", help="fit a prediction head on features")
    p.add_argument("--features", required=True, help="embedding CSV")
    p.add_argument("--targets", required=True, help="CSV with columns id,<value>")
    p.add_argument("--kind", choices=("logistic", "linear"), required=True)
    p.add_argument("--ratios", type=_ratios, default=(4, 1))
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--l2", type=float, default=0.0)
    p.add_argument(
        "--l2-grid",
        type=lambda t: tuple(float(x) for x in t.split(",")),
        default=None,
        help="penalty grid for 4:1:1 runs (default: {0,...,10} x n_train)",
    )
    common(p)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("experiment", help="run an evaluation design")
    exp = p.add_subparsers(dest="design", required=True, parser_class=_Parser)

    q = exp.add_parser("sim-study", help="simulate corpora, extract, reconstruct, recover")
    q.add_argument("--strategy", choices=("group", "continuous"), required=True)
    q.add_argument("--n", type=_positive_int, required=True)
    q.add_argument("--reps", type=_positive_int, default=10)
    q.add_argument("--full", action="store_true", help="run 100 replications")
    q.add_argument("--seed", type=int, required=True)
    q.add_argument("--grid", type=_int_list, default=StudyConfig().grid)
    q.add_argument("--folds", type=_positive_int, default=5)
    q.add_argument("--threshold", type=float, default=0.05)
    q.add_argument("--epochs", type=_positive_int, default=StudyConfig().epochs)
    q.add_argument("--cv-epochs", type=_positive_int, default=StudyConfig().cv_epochs)
    q.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1)
    common(q)
    q.set_defaults(func=_cmd_sim_study)

    q = exp.add_parser("cross-outcome", help="predict one item's outcome from another item")
    q.add_argument("--predictor-features", required=True)
    q.add_argument("--predictor-outcome", required=True)
    q.add_argument("--target-outcome", required=True)
    q.add_argument("--ratios", type=_ratios, default=(4, 1, 1))
    q.add_argument("--seed", type=int, required=True)
    common(q)
    q.set_defaults(func=_cmd_cross_outcome)

    q = exp.add_parser("score", help="predict a score from item outcomes and features")
    q.add_argument("--mode", choices=("single_item", "multi_item"), required=True)
    q.add_argument("--score", required=True, help="CSV with columns id,<value>")
    q.add_argument(
        "--item",
        action="append",
        type=_parse_item,
        help="NAME=FEATURES.csv:OUTCOMES.csv (repeatable)",
    )
    q.add_argument("--m", type=_positive_int, default=None)
    q.add_argument("--n-leading", type=_positive_int, default=20)
    q.add_argument("--ratios", type=_ratios, default=(4, 1, 1))
    q.add_argument("--seed", type=int, required=True)
    common(q)
    q.set_defaults(func=_cmd_score)

    return parser


def _find_config_path(argv: list[str]) -> str | None:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _inject_config(argv: list[str], path: str) -> list[str]:
    """Insert flags from a flat `key = value` file after the command tokens.

    Explicit flags come later on the line and therefore win.
    """
    flags: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            flag = "--" + key.replace("_", "-")
            if value.lower() == "true":
                flags.append(flag)
            elif value.lower() == "false":
                continue
            else:
                flags.extend([flag, value])
    prefix_len = 0
    while prefix_len < len(argv) and not argv[prefix_len].startswith("-"):
        prefix_len += 1
    return argv[:prefix_len] + flags + argv[prefix_len:]


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    config_path = _find_config_path(argv)
    try:
        if config_path is not None:
            argv = _inject_config(argv, config_path)
        parser = build_parser()
        try:
            args = parser.parse_args(argv)
        except _UsageError:
            return 1
        return args.func(args)
    except DataError as exc:
        print(f"seqmds: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"seqmds: error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"seqmds: numerical failure: {exc}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
