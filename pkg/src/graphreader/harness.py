"""Training loop, evaluation, grouped reporting, and ablation protocol.

Training accumulates per-sample gradients into fixed-size batches (no
padded batching; graphs vary too much in size for that to pay off), takes
one optimizer step per batch, evaluates the dev set on a fixed cadence,
and keeps the best-dev checkpoint. Runs are deterministic for a given
config and seed under single-worker execution.

The metrics log is JSON-lines: one ``{"event": "epoch", ...}`` object per
epoch and one final ``{"event": "final", ...}`` summary.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .config import RunConfig
from .errors import CheckpointError, DataError, NonFiniteError
from .gnn import normalize_blocked_kinds
from .model import Model, PreparedSample, Preprocessor, build_vocab
from .numeric import Adam, Tape, load_checkpoint, save_checkpoint
from .scorer import predict
from .text import Sample

log = logging.getLogger(__name__)

DOC_BINS = ("1-10", "11-20", "21-30", "31-40", "41-50", "51+")

# Annotation categories, reported in this order. The first four require
# every annotator (three or more of them) to agree on the exact pair; the
# last holds samples where no annotator chose "not_follows".
ANNOTATION_CATEGORIES = (
    ("follows_multiple", ("follows", "multiple")),
    ("follows_single", ("follows", "single")),
    ("likely_multiple", ("likely", "multiple")),
    ("likely_single", ("likely", "single")),
    ("not_follows_not_given", None),
)

MIN_ANNOTATORS = 3


def doc_count_bin(n_docs: int) -> str:
    if n_docs > 50:
        return "51+"
    lo = ((n_docs - 1) // 10) * 10 + 1
    return f"{lo}-{lo + 9}"


@dataclass
class SampleResult:
    sample_id: str
    n_docs: int
    correct: bool
    predicted: str
    annotations: list[tuple[str, str]] | None = None


@dataclass
class EvalReport:
    accuracy: float
    n_samples: int
    bins: dict[str, dict]
    annotation_categories: dict[str, dict]
    predictions: dict[str, str]

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "n_samples": self.n_samples,
            "bins": self.bins,
            "annotation_categories": self.annotation_categories,
            "predictions": self.predictions,
        }


def grouped_accuracy(results: list[SampleResult]) -> dict[str, dict]:
    """Accuracy per support-document-count bin; empty bins are absent."""
    grouped: dict[str, list[bool]] = {}
    for r in results:
        grouped.setdefault(doc_count_bin(r.n_docs), []).append(r.correct)
    out = {}
    for label in DOC_BINS:
        if label in grouped:
            flags = grouped[label]
            out[label] = {"n": len(flags), "accuracy": sum(flags) / len(flags)}
    return out


def annotation_subsets(results: list[SampleResult]) -> dict[str, dict]:
    """Accuracy over the annotated dev subsets; see ANNOTATION_CATEGORIES."""
    buckets: dict[str, list[bool]] = {name: [] for name, _ in ANNOTATION_CATEGORIES}
    for r in results:
        ann = r.annotations
        if not ann or len(ann) < MIN_ANNOTATORS:
            continue
        for name, pair in ANNOTATION_CATEGORIES:
            if pair is None:
                if all(fact != "not_follows" for fact, _ in ann):
                    buckets[name].append(r.correct)
            elif all((fact, docs) == pair for fact, docs in ann):
                buckets[name].append(r.correct)
    out = {}
    for name, _ in ANNOTATION_CATEGORIES:
        flags = buckets[name]
        if flags:
            out[name] = {"n": len(flags), "accuracy": sum(flags) / len(flags)}
    return out


def evaluate_prepared(model: Model, prepared: list[PreparedSample],
                      workers: int = 1) -> EvalReport:
    """Forward every sample (no tape, no dropout) and report accuracy.

    With workers > 1, samples run data-parallel over read-only parameters;
    results are collected in dataset order either way.
    """
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            all_scores = list(pool.map(lambda ps: model.forward(ps, train=False),
                                       prepared))
    else:
        all_scores = [model.forward(ps, train=False) for ps in prepared]
    results = []
    predictions = {}
    for ps, scores in zip(prepared, all_scores):
        pred = ps.sample.candidates[predict(scores)]
        predictions[ps.sample.id] = pred
        results.append(
            SampleResult(
                sample_id=ps.sample.id,
                n_docs=len(ps.sample.documents),
                correct=(ps.sample.answer is not None and pred == ps.sample.answer),
                predicted=pred,
                annotations=ps.sample.annotations,
            )
        )
    n = len(results)
    accuracy = sum(r.correct for r in results) / n if n else 0.0
    return EvalReport(
        accuracy=accuracy,
        n_samples=n,
        bins=grouped_accuracy(results),
        annotation_categories=annotation_subsets(results),
        predictions=predictions,
    )


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    model: Model
    best_dev_accuracy: float
    metrics: list[dict] = field(default_factory=list)
    checkpoint_path: str | None = None


class TrainingDiverged(NonFiniteError):
    pass


def _checkpoint_meta(config: RunConfig, model: Model, extra: dict | None = None) -> dict:
    meta = {"config": config.to_dict(), "vocab": model.vocab}
    meta.update(extra or {})
    return meta


def train(config: RunConfig, train_samples: list[Sample],
          dev_samples: list[Sample], checkpoint_path=None,
          metrics_path=None) -> TrainResult:
    """Train from scratch; returns the best-dev model (reloaded in memory).

    Dev accuracy is measured every ``eval_every`` epochs; training stops
    early after ``patience`` evaluations without improvement. Non-finite
    losses abort with a diagnostic rather than continuing.
    """
    if not train_samples:
        raise DataError("empty training set")
    blocked = normalize_blocked_kinds(config.blocked_node_kinds)
    if "candidate" in blocked and config.gamma == 1.0:
        log.warning(
            "blocking candidate nodes with gamma=1: the scoring head reads "
            "features that message passing never updates"
        )
    vocab = None
    if config.trainable_embeddings:
        vocab = build_vocab(list(train_samples) + list(dev_samples), config)
    prep = Preprocessor(config, vocab=vocab)
    model = Model(config, prep, vocab=vocab)
    prepared_train = prep.prepare_all(train_samples)
    prepared_dev = prep.prepare_all(dev_samples)

    seeds = np.random.SeedSequence(config.seed).spawn(2)
    order_rng = np.random.default_rng(seeds[0])
    dropout_rng = np.random.default_rng(seeds[1])

    params = model.parameters()
    optimizer = Adam(params, lr=config.learning_rate)
    optimizer.zero_grad()

    metrics: list[dict] = []
    best_acc = -1.0
    best_arrays: dict[str, np.ndarray] | None = None
    evals_since_best = 0
    stopped_early = False

    for epoch in range(config.epochs):
        order = order_rng.permutation(len(prepared_train))
        total_loss = 0.0
        pending = 0
        for idx in order:
            ps = prepared_train[int(idx)]
            try:
                with Tape() as tape:
                    loss = model.loss(ps, train=True, rng=dropout_rng)
                    tape.backward(loss)
            except NonFiniteError as exc:
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, sample {ps.sample.id}: {exc}"
                ) from exc
            total_loss += loss.item()
            pending += 1
            if pending == config.batch_size:
                optimizer.step()
                optimizer.zero_grad()
                pending = 0
        if pending:
            optimizer.step()
            optimizer.zero_grad()
        entry = {
            "event": "epoch",
            "epoch": epoch,
            "train_loss": total_loss / len(prepared_train),
        }
        if (epoch + 1) % config.eval_every == 0 or epoch == config.epochs - 1:
            report = evaluate_prepared(model, prepared_dev)
            entry["dev_accuracy"] = report.accuracy
            if report.accuracy > best_acc:
                best_acc = report.accuracy
                best_arrays = {k: p.data.copy() for k, p in params.items()}
                evals_since_best = 0
            else:
                evals_since_best += 1
        metrics.append(entry)
        log.info("epoch %d: train_loss=%.4f dev_acc=%s", epoch, entry["train_loss"],
                 entry.get("dev_accuracy"))
        if evals_since_best >= config.patience:
            stopped_early = True
            break

    if best_arrays is None:  # never evaluated (epochs < eval_every edge case)
        best_acc = 0.0
        best_arrays = {k: p.data.copy() for k, p in params.items()}
    model.load_parameters(best_arrays)
    metrics.append(
        {
            "event": "final",
            "epochs_run": len([m for m in metrics if m["event"] == "epoch"]),
            "best_dev_accuracy": best_acc,
            "stopped_early": stopped_early,
        }
    )
    if checkpoint_path is not None:
        save_checkpoint(
            checkpoint_path, model.parameters(),
            _checkpoint_meta(config, model, {"best_dev_accuracy": best_acc}),
        )
    if metrics_path is not None:
        with open(metrics_path, "w", encoding="utf-8") as fh:
            for entry in metrics:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
    return TrainResult(
        model=model,
        best_dev_accuracy=best_acc,
        metrics=metrics,
        checkpoint_path=str(checkpoint_path) if checkpoint_path else None,
    )


def load_model(checkpoint_path) -> Model:
    """Rebuild a Model from a checkpoint (config and vocab ride in the meta)."""
    arrays, meta = load_checkpoint(checkpoint_path)
    try:
        config = RunConfig.from_dict(meta["config"])
    except KeyError as exc:
        raise CheckpointError(f"{checkpoint_path}: missing config in metadata") from exc
    vocab = meta.get("vocab")
    prep = Preprocessor(config, vocab=vocab)
    model = Model(config, prep, vocab=vocab)
    try:
        model.load_parameters(arrays)
    except DataError as exc:
        raise CheckpointError(f"{checkpoint_path}: {exc}") from exc
    return model


def evaluate(checkpoint_path, samples: list[Sample], workers: int = 1) -> EvalReport:
    """Load a checkpoint and evaluate exact-match accuracy on `samples`."""
    model = load_model(checkpoint_path)
    prepared = model.preprocessor.prepare_all(samples)
    return evaluate_prepared(model, prepared, workers=workers)


# ---------------------------------------------------------------------------
# ablations
# ---------------------------------------------------------------------------

HOPS_GRID = (3, 4, 5, 6)
GAMMA_GRID = (0.0, 0.5, 1.0, 1.5)
NODE_KIND_SWITCHES = ("sub", "rea", "men", "sup", "can")


def ablate(config: RunConfig, train_samples: list[Sample],
           dev_samples: list[Sample],
           parts=("gat", "nodes", "hops", "gamma")) -> list[dict]:
    """Train/evaluate the full model and the requested ablations.

    Node-kind blocking isolates the blocked nodes (edges removed, features
    kept); "gat" disables message passing entirely; "hops"/"gamma" sweep
    the printed grids. Rows carry the dev accuracy and the delta against
    the full model (positive delta = ablation hurts).
    """

    def run(cfg: RunConfig) -> float:
        return train(cfg, train_samples, dev_samples).best_dev_accuracy

    full_acc = run(config)
    rows = [{"name": "full", "accuracy": full_acc, "delta": 0.0}]

    def add(name: str, cfg: RunConfig):
        acc = run(cfg)
        rows.append({"name": name, "accuracy": acc, "delta": full_acc - acc})

    if "gat" in parts:
        add("no_gat", replace(config, gat_off=True))
    if "nodes" in parts:
        for kind in NODE_KIND_SWITCHES:
            add(f"block_{kind}", replace(config, blocked_node_kinds=[kind]))
    if "hops" in parts:
        for hops in HOPS_GRID:
            add(f"hops_{hops}", replace(config, hops=hops))
    if "gamma" in parts:
        for gamma in GAMMA_GRID:
            add(f"gamma_{gamma:g}", replace(config, gamma=gamma))
    return rows
