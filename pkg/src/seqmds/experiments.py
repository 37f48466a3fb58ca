"""Evaluation harnesses quantifying the information content of features.

Designs: reconstruction of derived unigram/bigram indicators from features,
recovery of latent group labels or a continuous trait, cross-item outcome
prediction (baseline outcome-only model vs. process model with features and
interactions), score prediction from one or many items, and the end-to-end
simulation study that ties the simulator, the extraction pipeline, and the
prediction heads together.

Every harness is a pure function of (inputs, config, seed) and emits an
ExperimentReport serializable as JSON plus a flat CSV of per-row metrics.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._util import atomic_open, derive_seed
from .corpus import Corpus, split_ids
from .errors import DataError, FitWarning, SeqmdsError
from .glm import (
    DesignMatrix,
    default_l2_grid,
    evaluate,
    fit_linear,
    fit_logistic,
    make_design,
    predict_class,
    predict_response,
    select_l2,
)
from .mds import Embedding, SgdConfig
from .pipeline import extract_features
from .simulate import GroundTruth, generate_corpus

BIGRAM_SEP = "→"  # arrow between the two actions of a bigram name


# ---------------------------------------------------------------------------
# Derived variables


@dataclass(frozen=True)
class DerivedVariableSet:
    """Binary presence indicators for unigram/bigram patterns."""

    ids: tuple[str, ...]
    names: tuple[str, ...]
    indicators: np.ndarray
    threshold_count: int

    @property
    def n_variables(self) -> int:
        return len(self.names)


def derive_variables(corpus: Corpus, threshold_frac: float = 0.05) -> DerivedVariableSet:
    """Enumerate unigram and bigram presence indicators over a corpus.

    A pattern counts once per sequence containing it. With a positive
    threshold, patterns present in fewer than ceil(threshold_frac * n)
    sequences are dropped, as are constant ones (present in every
    sequence). threshold_frac=0 disables both filters and returns every
    observed pattern. Variables are ordered lexicographically by name.
    """
    if not 0 <= threshold_frac < 1:
        raise DataError("threshold_frac must lie in [0, 1)")
    n = corpus.n
    symbols = corpus.alphabet.symbols
    presence: dict[str, set[int]] = {}
    for row, seq in enumerate(corpus.sequences):
        a = seq.actions
        for t, act in enumerate(a):
            presence.setdefault(symbols[act], set()).add(row)
            if t + 1 < len(a):
                name = f"{symbols[act]}{BIGRAM_SEP}{symbols[a[t + 1]]}"
                presence.setdefault(name, set()).add(row)
    threshold_count = math.ceil(threshold_frac * n)
    kept = []
    for name in sorted(presence):
        count = len(presence[name])
        if threshold_frac > 0 and (count < threshold_count or count == n):
            continue
        kept.append(name)
    indicators = np.zeros((n, len(kept)))
    for v, name in enumerate(kept):
        indicators[list(presence[name]), v] = 1.0
    return DerivedVariableSet(
        ids=corpus.ids,
        names=tuple(kept),
        indicators=indicators,
        threshold_count=threshold_count,
    )


def save_derived(dv: DerivedVariableSet, path) -> None:
    """Write indicators as CSV with an id column followed by one 0/1 column per variable."""
    with atomic_open(path, "w") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", *dv.names])
        for sid, row in zip(dv.ids, dv.indicators):
            writer.writerow([sid, *(int(x) for x in row)])


# ---------------------------------------------------------------------------
# Reports


@dataclass
class ExperimentReport:
    """Machine-readable record of one experiment run."""

    design: str
    config: dict
    rows: list[dict]
    summary: dict
    notes: list[str] = field(default_factory=list)


def _plain(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def save_report(report: ExperimentReport, path) -> None:
    with atomic_open(path, "w") as fh:
        json.dump(
            {
                "design": report.design,
                "config": _plain(report.config),
                "summary": _plain(report.summary),
                "notes": list(report.notes),
                "rows": _plain(report.rows),
            },
            fh,
            indent=2,
        )
        fh.write("\n")


def load_report(path) -> ExperimentReport:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    return ExperimentReport(
        design=obj["design"],
        config=obj["config"],
        rows=obj["rows"],
        summary=obj["summary"],
        notes=obj["notes"],
    )


def save_report_csv(report: ExperimentReport, path) -> None:
    """Flat per-row CSV (plot-ready); columns in first-appearance order."""
    columns: list[str] = []
    for row in report.rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    with atomic_open(path, "w") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in report.rows:
            writer.writerow([_plain(row.get(c, "")) for c in columns])


def _quartiles(values) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    qs = np.percentile(arr, [0, 25, 50, 75, 100])
    return {
        "min": float(qs[0]),
        "q1": float(qs[1]),
        "median": float(qs[2]),
        "q3": float(qs[3]),
        "max": float(qs[4]),
    }


# ---------------------------------------------------------------------------
# Split plumbing


def _split_indices(ids, ratios, seed):
    split = split_ids(ids, ratios, seed)
    parts = [split.indices_for(label, ids) for label in split.labels]
    used = np.concatenate(parts)
    assert len(np.unique(used)) == len(ids), "split parts must be disjoint and exhaustive"
    return split.labels, parts


def _feature_columns(coords: np.ndarray, prefix: str = "f"):
    return [(f"{prefix}{j + 1}", coords[:, j]) for j in range(coords.shape[1])]


# ---------------------------------------------------------------------------
# Reconstruction of derived variables


def run_reconstruction(
    corpus: Corpus,
    features: Embedding,
    ratios=(4, 1),
    seed: int = 0,
    threshold_frac: float = 0.05,
    variables: DerivedVariableSet | None = None,
) -> ExperimentReport:
    """Reconstruct each derived variable from features by logistic regression.

    One unpenalized fit per variable on the training split; reports per-
    variable test accuracy plus the average and worst accuracy. Fits that
    hit the iteration cap (e.g. separation) are recorded, not fatal.
    """
    if features.ids != corpus.ids:
        raise DataError("features must be row-aligned with the corpus")
    dv = variables if variables is not None else derive_variables(corpus, threshold_frac)
    _, (train_idx, test_idx) = _split_indices(corpus.ids, ratios, seed)

    x = features.coords
    train = make_design(_feature_columns(x[train_idx]), recipe="intercept+features")
    test = make_design(_feature_columns(x[test_idx]), recipe="intercept+features")

    rows = []
    accuracies = []
    n_capped = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FitWarning)
        for v, name in enumerate(dv.names):
            y = dv.indicators[:, v]
            model = fit_logistic(train, y[train_idx], l2=0.0)
            acc = evaluate(predict_class(model, test), y[test_idx], "accuracy").accuracy
            accuracies.append(acc)
            n_capped += 0 if model.converged else 1
            rows.append({"variable": name, "test_accuracy": acc, "converged": model.converged})

    summary = {
        "n_variables": dv.n_variables,
        "average_accuracy": float(np.mean(accuracies)) if accuracies else float("nan"),
        "worst_accuracy": float(np.min(accuracies)) if accuracies else float("nan"),
        "n_nonconverged": n_capped,
    }
    return ExperimentReport(
        design="reconstruction",
        config={
            "ratios": list(ratios),
            "seed": seed,
            "threshold_frac": threshold_frac,
            "n": corpus.n,
            "k": features.k,
        },
        rows=rows,
        summary=summary,
    )


# ---------------------------------------------------------------------------
# Latent structure recovery


def run_latent_recovery(
    strategy: str,
    ground_truth: GroundTruth,
    features: Embedding,
    ratios=(4, 1),
    seed: int = 0,
) -> ExperimentReport:
    """Predict the latent group (logistic, accuracy) or trait (linear, OSR^2)."""
    if ground_truth.kind != strategy:
        raise DataError(f"ground truth is {ground_truth.kind!r}, not {strategy!r}")
    if ground_truth.ids != features.ids:
        raise DataError("ground truth must be row-aligned with the features")
    _, (train_idx, test_idx) = _split_indices(features.ids, ratios, seed)
    x = features.coords
    train = make_design(_feature_columns(x[train_idx]), recipe="intercept+features")
    test = make_design(_feature_columns(x[test_idx]), recipe="intercept+features")
    y = ground_truth.values.astype(np.float64)

    if strategy == "group":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", FitWarning)
            model = fit_logistic(train, y[train_idx], l2=0.0)
        acc = evaluate(predict_class(model, test), y[test_idx], "accuracy").accuracy
        summary = {"group_accuracy": acc}
        row = {"group_accuracy": acc, "converged": model.converged}
    else:
        model = fit_linear(train, y[train_idx], l2=0.0)
        osr2 = evaluate(predict_response(model, test), y[test_idx], "osr2").osr2
        summary = {"theta0_osr2": osr2}
        row = {"theta0_osr2": osr2, "converged": model.converged}

    return ExperimentReport(
        design="latent_recovery",
        config={"strategy": strategy, "ratios": list(ratios), "seed": seed, "k": features.k},
        rows=[row],
        summary=summary,
    )


# ---------------------------------------------------------------------------
# Cross-item outcome prediction


def _stratified_accuracy(pred, truth, stratum_mask):
    if not stratum_mask.any():
        return None, 0
    m = stratum_mask
    return float((pred[m] == truth[m]).mean()), int(m.sum())


def run_cross_outcome(
    predictor_features: Embedding,
    predictor_outcome,
    target_outcome,
    ratios=(4, 1, 1),
    seed: int = 0,
    l2_grid=None,
) -> ExperimentReport:
    """Predict one item's outcome from another item's outcome and features.

    The baseline model uses (1, Y'); the process model adds the predictor
    item's features and their interactions with Y'. The process penalty is
    chosen on validation accuracy. Test accuracy is reported overall and
    stratified by Y'.
    """
    y_pred = np.asarray(predictor_outcome, dtype=np.float64)
    y_tgt = np.asarray(target_outcome, dtype=np.float64)
    ids = predictor_features.ids
    if y_pred.shape != (len(ids),) or y_tgt.shape != (len(ids),):
        raise DataError("outcomes must align with the predictor features")
    x = predictor_features.coords
    _, (train_idx, val_idx, test_idx) = _split_indices(ids, ratios, seed)

    def designs(idx):
        base = make_design([("y_prime", y_pred[idx])], recipe="intercept+outcome")
        proc_cols = [("y_prime", y_pred[idx])]
        proc_cols += _feature_columns(x[idx])
        proc_cols += [
            (f"y_prime*f{j + 1}", y_pred[idx] * x[idx][:, j]) for j in range(x.shape[1])
        ]
        proc = make_design(proc_cols, recipe="intercept+outcome+features+interactions")
        return base, proc

    base_train, proc_train = designs(train_idx)
    base_val, proc_val = designs(val_idx)
    base_test, proc_test = designs(test_idx)
    assert set(base_train.columns) <= set(proc_train.columns)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FitWarning)
        baseline = fit_logistic(base_train, y_tgt[train_idx], l2=0.0)
        grid = default_l2_grid(len(train_idx)) if l2_grid is None else l2_grid
        process, _ = select_l2(
            "logistic", proc_train, y_tgt[train_idx], proc_val, y_tgt[val_idx], grid
        )

    truth = y_tgt[test_idx]
    base_pred = predict_class(baseline, base_test)
    proc_pred = predict_class(process, proc_test)
    row = {
        "baseline_accuracy": float((base_pred == truth).mean()),
        "process_accuracy": float((proc_pred == truth).mean()),
        "process_l2": process.l2,
        "n_test": len(test_idx),
    }
    notes = []
    for label, mask in (("y1", y_pred[test_idx] == 1.0), ("y0", y_pred[test_idx] == 0.0)):
        for model_name, pred in (("baseline", base_pred), ("process", proc_pred)):
            acc, count = _stratified_accuracy(pred, truth, mask)
            if acc is None:
                notes.append(f"stratum {label} empty on test; metric omitted")
                break
            row[f"{model_name}_accuracy_{label}"] = acc
            row[f"n_test_{label}"] = count
    # stratified correct counts must recombine to the overall count
    for model_name, pred in (("baseline", base_pred), ("process", proc_pred)):
        total = int((pred == truth).sum())
        parts = sum(
            int((pred[y_pred[test_idx] == v] == truth[y_pred[test_idx] == v]).sum())
            for v in (0.0, 1.0)
        )
        assert total == parts, "stratified correct counts must recombine"

    return ExperimentReport(
        design="cross_outcome",
        config={"ratios": list(ratios), "seed": seed, "k": predictor_features.k},
        rows=[row],
        summary={k: v for k, v in row.items() if k.endswith("accuracy")},
        notes=notes,
    )


# ---------------------------------------------------------------------------
# Score prediction


def forward_aic_order(outcomes: np.ndarray, names, z: np.ndarray) -> list[str]:
    """Order items by greedy forward selection under AIC on a linear model.

    AIC convention: n * log(RSS / n) + 2 * (p + 1), with p the coefficient
    count including the intercept (the +1 accounts for the noise variance);
    constants cancel in comparisons. Selection continues through all items
    so that any prefix is available.
    """
    names = list(names)
    n, j = outcomes.shape
    if len(names) != j:
        raise DataError("names must match outcome columns")

    def aic(cols: list[int]) -> float:
        design = make_design([(names[c], outcomes[:, c]) for c in cols])
        model = fit_linear(design, z, l2=0.0)
        rss = float(((z - predict_response(model, design)) ** 2).sum())
        return n * math.log(max(rss, 1e-300) / n) + 2 * (len(cols) + 2)

    remaining = list(range(j))
    chosen: list[int] = []
    while remaining:
        scores = [aic(chosen + [c]) for c in remaining]
        best = remaining[int(np.argmin(scores))]
        chosen.append(best)
        remaining.remove(best)
    return [names[c] for c in chosen]


def run_score_prediction(
    items: dict[str, tuple[Embedding, np.ndarray]],
    score,
    mode: str,
    m: int | None = None,
    ratios=(4, 1, 1),
    seed: int = 0,
    l2_grid=None,
    n_leading: int = 20,
) -> ExperimentReport:
    """Predict a continuous score from item outcomes and process features.

    single_item: for every item, compare the outcome-only baseline with the
    process model (outcome, features, interactions); report test OSR^2
    overall and stratified by the outcome. multi_item: order items by
    forward AIC on their outcomes over the training split, then for each
    prefix size up to m compare the outcomes-only baseline with the process
    model that adds the first `n_leading` principal features per item. The
    process penalty is validated on OSR^2 in both modes.
    """
    if mode not in ("single_item", "multi_item"):
        raise DataError(f"unknown mode {mode!r}")
    if not items:
        raise DataError("need at least one item")
    z = np.asarray(score, dtype=np.float64)
    names = list(items)
    first_ids = items[names[0]][0].ids
    for name, (feat, outcome) in items.items():
        if np.asarray(outcome).shape != (len(feat.ids),):
            raise DataError(f"outcomes of item {name!r} must align with its features")

    notes: list[str] = []
    rows: list[dict] = []

    if mode == "single_item":
        for name in names:
            feat, outcome = items[name]
            y = np.asarray(outcome, dtype=np.float64)
            if z.shape != (len(feat.ids),):
                raise DataError("score must align with item features")
            x = feat.coords
            _, (train_idx, val_idx, test_idx) = _split_indices(feat.ids, ratios, seed)

            def designs(idx):
                base = make_design([("y", y[idx])], recipe="intercept+outcome")
                cols = [("y", y[idx])]
                cols += _feature_columns(x[idx])
                cols += [(f"y*f{j + 1}", y[idx] * x[idx][:, j]) for j in range(x.shape[1])]
                proc = make_design(cols, recipe="intercept+outcome+features+interactions")
                return base, proc

            base_train, proc_train = designs(train_idx)
            base_val, proc_val = designs(val_idx)
            base_test, proc_test = designs(test_idx)
            assert set(base_train.columns) <= set(proc_train.columns)

            baseline = fit_linear(base_train, z[train_idx], l2=0.0)
            grid = default_l2_grid(len(train_idx)) if l2_grid is None else l2_grid
            process, _ = select_l2(
                "linear", proc_train, z[train_idx], proc_val, z[val_idx], grid
            )
            base_osr2 = evaluate(
                predict_response(baseline, base_test), z[test_idx], "osr2"
            ).osr2
            proc_pred = predict_response(process, proc_test)
            row = {
                "item": name,
                "baseline_osr2": base_osr2,
                "process_osr2": evaluate(proc_pred, z[test_idx], "osr2").osr2,
                "process_l2": process.l2,
            }
            for label, mask in (("y1", y[test_idx] == 1.0), ("y0", y[test_idx] == 0.0)):
                if not mask.any():
                    notes.append(f"item {name}: stratum {label} empty on test")
                    continue
                row[f"process_osr2_{label}"] = evaluate(
                    proc_pred[mask], z[test_idx][mask], "osr2"
                ).osr2
            rows.append(row)
        summary = {
            "mean_baseline_osr2": float(np.mean([r["baseline_osr2"] for r in rows])),
            "mean_process_osr2": float(np.mean([r["process_osr2"] for r in rows])),
        }
    else:
        for name, (feat, _) in items.items():
            if feat.ids != first_ids:
                raise DataError(
                    "multi_item mode needs every item answered by the same respondents"
                )
        if z.shape != (len(first_ids),):
            raise DataError("score must align with the shared respondents")
        if m is None:
            m = len(names)
        if m > len(names):
            raise DataError(f"m={m} exceeds the {len(names)} available items")
        _, (train_idx, val_idx, test_idx) = _split_indices(first_ids, ratios, seed)
        outcome_mat = np.column_stack(
            [np.asarray(items[name][1], dtype=np.float64) for name in names]
        )
        order = forward_aic_order(outcome_mat[train_idx], names, z[train_idx])

        def designs(selected, idx):
            base_cols = [(f"y_{name}", outcome_mat[idx][:, names.index(name)]) for name in selected]
            base = make_design(base_cols, recipe="intercept+outcomes")
            proc_cols = list(base_cols)
            for name in selected:
                coords = items[name][0].coords[idx][:, :n_leading]
                proc_cols += _feature_columns(coords, prefix=f"{name}.f")
            proc = make_design(proc_cols, recipe="intercept+outcomes+leading-features")
            return base, proc

        for prefix_len in range(1, m + 1):
            selected = order[:prefix_len]
            base_train, proc_train = designs(selected, train_idx)
            base_val, proc_val = designs(selected, val_idx)
            base_test, proc_test = designs(selected, test_idx)
            assert set(base_train.columns) <= set(proc_train.columns)
            baseline = fit_linear(base_train, z[train_idx], l2=0.0)
            grid = default_l2_grid(len(train_idx)) if l2_grid is None else l2_grid
            process, _ = select_l2(
                "linear", proc_train, z[train_idx], proc_val, z[val_idx], grid
            )
            rows.append(
                {
                    "m": prefix_len,
                    "items": ";".join(selected),
                    "baseline_osr2": evaluate(
                        predict_response(baseline, base_test), z[test_idx], "osr2"
                    ).osr2,
                    "process_osr2": evaluate(
                        predict_response(process, proc_test), z[test_idx], "osr2"
                    ).osr2,
                    "process_l2": process.l2,
                }
            )
        summary = {"selection_order": order[:m]}

    return ExperimentReport(
        design=f"score_prediction_{mode}",
        config={
            "mode": mode,
            "m": m,
            "ratios": list(ratios),
            "seed": seed,
            "n_leading": n_leading,
        },
        rows=rows,
        summary=summary,
        notes=notes,
    )


# ---------------------------------------------------------------------------
# Simulation study


@dataclass(frozen=True)
class StudyConfig:
    """Tunable parameters of the simulation study."""

    grid: tuple[int, ...] = (5, 10, 15, 20, 25, 30, 35, 40, 45, 50)
    folds: int = 5
    threshold_frac: float = 0.05
    ratios: tuple[int, int] = (4, 1)
    epochs: int = 200
    cv_epochs: int = 100
    initial_step: float = 0.1
    step_decay: float = 0.05


def _run_replication(strategy, n, seed, rep, study: StudyConfig):
    corpus_seed = derive_seed(seed, rep, 0)
    sgd_seed = derive_seed(seed, rep, 1)
    cv_seed = derive_seed(seed, rep, 2)
    split_seed = derive_seed(seed, rep, 3)

    corpus, truth = generate_corpus(strategy, n, corpus_seed)
    config = SgdConfig(
        seed=sgd_seed,
        epochs=study.epochs,
        initial_step=study.initial_step,
        step_decay=study.step_decay,
    )
    cv_config = SgdConfig(
        seed=sgd_seed,
        epochs=study.cv_epochs,
        initial_step=study.initial_step,
        step_decay=study.step_decay,
    )
    extraction = extract_features(
        corpus,
        grid=study.grid,
        folds=study.folds,
        config=config,
        cv_config=cv_config,
        cv_seed=cv_seed,
    )
    recon = run_reconstruction(
        corpus,
        extraction.principal,
        ratios=study.ratios,
        seed=split_seed,
        threshold_frac=study.threshold_frac,
    )
    latent = run_latent_recovery(
        strategy, truth, extraction.principal, ratios=study.ratios, seed=split_seed
    )
    row = {
        "rep": rep,
        "corpus_seed": corpus_seed,
        "chosen_k": extraction.k,
        "n_variables": recon.summary["n_variables"],
        "average_accuracy": recon.summary["average_accuracy"],
        "worst_accuracy": recon.summary["worst_accuracy"],
    }
    row.update(latent.summary)
    return row


def run_simulation_study(
    strategy: str,
    n: int,
    reps: int = 10,
    seed: int = 0,
    study: StudyConfig | None = None,
    threads: int = 1,
) -> ExperimentReport:
    """Run the full pipeline on `reps` simulated corpora and summarize.

    Per replication: simulate a corpus, extract features (dimension chosen
    by cross-validation), reconstruct the derived variables, and recover
    the latent structure. The summary holds quartiles of each metric,
    suitable for box plots. Failed replications are recorded in the notes
    and skipped.
    """
    if reps < 1:
        raise DataError("reps must be >= 1")
    study = study or StudyConfig()

    notes: list[str] = []
    rows: list[dict] = []

    def job(rep):
        try:
            return rep, _run_replication(strategy, n, seed, rep, study), None
        except SeqmdsError as exc:
            return rep, None, f"replication {rep} failed: {exc}"

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, range(reps)))
    else:
        results = [job(rep) for rep in range(reps)]
    for _, row, note in sorted(results, key=lambda r: r[0]):
        if note is not None:
            notes.append(note)
        else:
            rows.append(row)

    metric_names = ["average_accuracy", "worst_accuracy"]
    metric_names.append("group_accuracy" if strategy == "group" else "theta0_osr2")
    summary = {}
    for metric in metric_names:
        values = [r[metric] for r in rows if metric in r]
        if values:
            summary[metric] = _quartiles(values)
    summary["chosen_k"] = _quartiles([r["chosen_k"] for r in rows]) if rows else {}
    summary["n_completed"] = len(rows)

    return ExperimentReport(
        design="simulation_study",
        config={
            "strategy": strategy,
            "n": n,
            "reps": reps,
            "seed": seed,
            "grid": list(study.grid),
            "folds": study.folds,
            "threshold_frac": study.threshold_frac,
            "ratios": list(study.ratios),
            "epochs": study.epochs,
            "cv_epochs": study.cv_epochs,
            "initial_step": study.initial_step,
            "step_decay": study.step_decay,
        },
        rows=rows,
        summary=summary,
        notes=notes,
    )
