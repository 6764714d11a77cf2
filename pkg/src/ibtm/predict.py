"""Held-out inference, label ranking, budgeted prediction, and evaluation.

A new drawing is quantized to a bag of location words, its shared topic
mixture is inferred against fixed global topics (label view absent), and
diagnostic labels are ranked by the mixture of the shared label topics.
The number of labels returned is the budget derived from mean-shift region
counting: twice the region count, clamped to [5, 50].
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .corpus import Corpus, DEFAULT_LABEL_SCALE, Document
from .featurize import (DEFAULT_BANDWIDTH, BagOfWords, RegionCount,
                        count_regions, encode_drawing, label_budget)
from .model import (DocPosterior, DocTokens, GlobalTopics, HyperParams,
                    ModelConfig, TrainedModel, e_step_document)
from .pipeline import fit_corpus


@dataclass(frozen=True)
class Prediction:
    """Budgeted ranking over the label vocabulary for one drawing."""

    ranked: tuple[tuple[str, float], ...]
    budget: int
    regions: RegionCount


def infer_heldout(bag: BagOfWords, topics: GlobalTopics,
                  hyper: HyperParams) -> DocPosterior:
    """Local inference for an unlabeled drawing (label view absent)."""
    if not bag.counts:
        raise ValueError("cannot infer from an empty bag")
    ids, counts = bag.to_arrays()
    doc = DocTokens(word_ids=ids, word_counts=counts,
                    label_ids=np.zeros(0, dtype=np.int64),
                    label_counts=np.zeros(0))
    return e_step_document(doc, topics, hyper)


def rank_scores(posterior: DocPosterior, topics: GlobalTopics) -> np.ndarray:
    """Label scores: the shared-topic mixture of expected label topics.

    Scores form a probability distribution over the label vocabulary.
    """
    theta = posterior.theta_mean()
    return theta @ topics.eta_mean()


def rank_labels(posterior: DocPosterior, topics: GlobalTopics,
                ) -> list[tuple[int, float]]:
    """Full descending ranking of label ids; ties break to the lower id."""
    scores = rank_scores(posterior, topics)
    order = np.argsort(-scores, kind="stable")
    return [(int(i), float(scores[i])) for i in order]


def predict(points: Sequence, model: TrainedModel,
            bandwidth: float = DEFAULT_BANDWIDTH) -> Prediction:
    """Rank labels for a drawing and cut the list at the region budget."""
    if model.location_vocab is None or model.label_vocab is None:
        raise ValueError("model has no vocabularies attached")
    bag = encode_drawing(points, model.location_vocab)
    posterior = infer_heldout(bag, model.topics, model.config.hyper)
    ranking = rank_labels(posterior, model.topics)
    regions = count_regions(points, bandwidth)
    budget = label_budget(regions.n)
    top = ranking[:budget]
    labels = model.label_vocab.labels
    return Prediction(
        ranked=tuple((labels[i], score) for i, score in top),
        budget=budget,
        regions=regions,
    )


def f_measure(predicted: set[str] | Sequence[str],
              truth: set[str] | Sequence[str]) -> tuple[float, float, float]:
    """Precision, recall, and their harmonic mean over label sets.

    Empty sides yield zero for the corresponding rate, and F is 0 whenever
    P + R is 0.
    """
    pred = set(predicted)
    true = set(truth)
    hits = len(pred & true)
    p = hits / len(pred) if pred else 0.0
    r = hits / len(true) if true else 0.0
    f = 2.0 * p * r / (p + r) if (p + r) > 0.0 else 0.0
    return p, r, f


# ---------------------------------------------------------------------------
# Evaluation protocol: repeated random 50/50 splits, several training seeds
# per split, one selected result per split.
# ---------------------------------------------------------------------------

Predictor = Callable[[Document], set[str]]
PredictorFactory = Callable[[Corpus, ModelConfig, int], tuple[Predictor, float]]


@dataclass(frozen=True)
class EvalProtocol:
    """Knobs of the split/seed evaluation harness.

    selection picks which seed's result a split reports: "elbo" keeps the
    seed with the best training bound (no test leakage), "best_f" keeps the
    best test F-measure, which is optimistic and provided only to mirror
    best-result reporting.
    """

    n_splits: int = 10
    n_seeds: int = 10
    selection: str = "elbo"
    bandwidth: float = DEFAULT_BANDWIDTH
    scale: int = DEFAULT_LABEL_SCALE
    base_seed: int = 0
    predictor_factory: PredictorFactory | None = None

    def __post_init__(self):
        if self.selection not in ("elbo", "best_f"):
            raise ValueError("selection must be 'elbo' or 'best_f'")
        if self.n_splits < 1 or self.n_seeds < 1:
            raise ValueError("n_splits and n_seeds must be >= 1")


@dataclass(frozen=True)
class DocScore:
    doc_id: str
    precision: float
    recall: float
    f: float


@dataclass(frozen=True)
class SplitResult:
    split: int
    seed: int
    f: float
    per_doc: tuple[DocScore, ...]


@dataclass(frozen=True)
class EvalReport:
    splits: tuple[SplitResult, ...]
    mean_f: float
    std_f: float
    n_splits: int
    n_seeds: int
    selection: str
    k: int


def _default_factory(protocol: EvalProtocol) -> PredictorFactory:
    def factory(train_corpus: Corpus, config: ModelConfig, seed: int):
        model = fit_corpus(train_corpus, replace(config, seed=seed),
                           scale=protocol.scale, preprocess=False)

        def predictor(doc: Document) -> set[str]:
            pred = predict(doc.points, model, bandwidth=protocol.bandwidth)
            return {label for label, _ in pred.ranked}

        return predictor, model.final_elbo

    return factory


def _macro_f(predictor: Predictor, docs: Sequence[Document],
             ) -> tuple[float, tuple[DocScore, ...]]:
    scores = []
    for doc in docs:
        p, r, f = f_measure(predictor(doc), set(doc.labels))
        scores.append(DocScore(doc_id=doc.id, precision=p, recall=r, f=f))
    mean = float(np.mean([s.f for s in scores])) if scores else 0.0
    return mean, tuple(scores)


def evaluate(corpus: Corpus, config: ModelConfig,
             protocol: EvalProtocol = EvalProtocol()) -> EvalReport:
    """Run the repeated-split protocol and report mean and std F-measure.

    Each split trains on a random half with labels and predicts the other
    half from drawings alone.  Per-document F is macro-averaged.
    """
    docs = list(corpus.documents)
    if len(docs) < 2:
        raise ValueError("corpus too small to split (need >= 2 documents)")
    factory = protocol.predictor_factory or _default_factory(protocol)

    results = []
    for split in range(protocol.n_splits):
        rng = np.random.default_rng(protocol.base_seed + split)
        order = rng.permutation(len(docs))
        half = len(docs) - len(docs) // 2
        train_docs = [docs[i] for i in order[:half]]
        test_docs = [docs[i] for i in order[half:]]
        train_corpus = Corpus(documents=tuple(train_docs),
                              language=corpus.language)

        candidates = []
        for seed in range(protocol.n_seeds):
            predictor, train_score = factory(train_corpus, config, seed)
            f, per_doc = _macro_f(predictor, test_docs)
            key = f if protocol.selection == "best_f" else train_score
            candidates.append((key, seed, f, per_doc))
        _, seed, f, per_doc = max(candidates, key=lambda c: c[0])
        results.append(SplitResult(split=split, seed=seed, f=f, per_doc=per_doc))

    fs = np.array([r.f for r in results])
    std = float(fs.std(ddof=1)) if len(fs) > 1 else 0.0
    return EvalReport(splits=tuple(results), mean_f=float(fs.mean()),
                      std_f=std, n_splits=protocol.n_splits,
                      n_seeds=protocol.n_seeds, selection=protocol.selection,
                      k=config.k)


def format_eval_report(report: EvalReport) -> str:
    """Flat text table (split, seed, F) with a mean-and-std summary line."""
    lines = ["split\tseed\tF"]
    for r in report.splits:
        lines.append(f"{r.split}\t{r.seed}\t{r.f:.4f}")
    lines.append(f"F = {report.mean_f:.4f} ± {report.std_f:.4f}")
    return "\n".join(lines) + "\n"
