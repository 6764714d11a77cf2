"""Synthetic corpora drawn from known topic matrices.

Used to exercise the whole pipeline without clinical data: build peaked
ground-truth topics, sample documents ancestrally, and materialize them as
drawings by placing each word token at a fixed synthetic body location.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, Document, DrawingPoint
from .featurize import LocationVocab
from .model import HyperParams, TopicEstimates, sample_document


def peaked_rows(n_rows: int, n_cols: int, peak_mass: float = 0.9,
                region: tuple[int, int] | None = None,
                block: int | None = None) -> np.ndarray:
    """Row-stochastic matrix where row i concentrates peak_mass on its own
    contiguous block and spreads the rest uniformly over ``region``.

    Blocks tile the region from its start; columns outside the region get
    zero mass, which keeps different topic groups on disjoint supports.
    """
    if not 0.0 < peak_mass < 1.0:
        raise ValueError("peak_mass must lie in (0, 1)")
    lo, hi = region if region is not None else (0, n_cols)
    width = hi - lo
    if block is None:
        block = width // n_rows if n_rows else width
    if block < 1 or n_rows * block > width:
        raise ValueError(
            f"cannot fit {n_rows} blocks into {width} columns")
    rows = np.zeros((n_rows, n_cols), dtype=np.float64)
    rows[:, lo:hi] = (1.0 - peak_mass) / width
    for i in range(n_rows):
        start = lo + i * block
        rows[i, start:start + block] += peak_mass / block
    return rows / rows.sum(axis=1, keepdims=True)


def _split_regions(n_cols: int, k: int, t: int) -> tuple[int, int]:
    """Column budget for k shared and t private blocks: equal block sizes,
    shared region first, private region taking the tail (including any
    remainder columns, covered by private background mass)."""
    block = n_cols // (k + t)
    if block < 1:
        raise ValueError(f"need at least {k + t} columns, got {n_cols}")
    return block, k * block


def make_peaked_truth(k: int, t: int, s: int, v: int, l_vocab: int,
                      peak_mass: float = 0.9,
                      label_peak_mass: float | None = None) -> TopicEstimates:
    """Ground-truth topics with block structure on disjoint supports:
    shared topics own the leading columns, private topics the trailing
    ones, so the shared/private decomposition is identifiable."""
    if label_peak_mass is None:
        label_peak_mass = peak_mass
    block_w, split_w = _split_regions(v, k, t)
    block_a, split_a = _split_regions(l_vocab, k, s)
    if t:
        beta = peaked_rows(k, v, peak_mass, region=(0, split_w), block=block_w)
        zeta = peaked_rows(t, v, peak_mass, region=(split_w, v), block=block_w)
    else:
        beta = peaked_rows(k, v, peak_mass)
        zeta = np.zeros((0, v))
    if s:
        eta = peaked_rows(k, l_vocab, label_peak_mass,
                          region=(0, split_a), block=block_a)
        tau = peaked_rows(s, l_vocab, label_peak_mass,
                          region=(split_a, l_vocab), block=block_a)
    else:
        eta = peaked_rows(k, l_vocab, label_peak_mass)
        tau = np.zeros((0, l_vocab))
    return TopicEstimates(beta=beta, zeta=zeta, eta=eta, tau=tau)


def synthetic_layout(v: int, span: float = 0.12, center: tuple[float, float] = (0.5, 0.5),
                     ) -> LocationVocab:
    """Front-view grid of v locations packed into a small box.

    The compact span keeps synthetic drawings to a handful of discomfort
    regions (grid spacing well under the default mean-shift bandwidth), so
    budgets stay near the minimum clamp.
    """
    side = int(np.ceil(np.sqrt(v)))
    xs = np.linspace(center[0] - span / 2, center[0] + span / 2, side)
    ys = np.linspace(center[1] - span / 2, center[1] + span / 2, side)
    grid = np.array([(x, y) for y in ys for x in xs][:v], dtype=np.float64)
    return LocationVocab(centroids=grid)


@dataclass(frozen=True)
class SyntheticCorpus:
    corpus: Corpus
    truth: TopicEstimates
    layout: LocationVocab
    word_tokens: list[np.ndarray]
    label_tokens: list[np.ndarray]


def sample_corpus(truth: TopicEstimates, m: int, n_words: int, n_labels: int,
                  sampling_hyper: HyperParams, rng: np.random.Generator,
                  layout: LocationVocab | None = None,
                  label_names: list[str] | None = None) -> SyntheticCorpus:
    """Sample m documents and materialize them as a drawing corpus.

    Each word token becomes a point at its layout location; each distinct
    label token becomes a label string ("syn-000" style unless names are
    given).
    """
    v = truth.beta.shape[1]
    l_vocab = truth.eta.shape[1]
    if layout is None:
        layout = synthetic_layout(v)
    if layout.size != v:
        raise ValueError("layout size must match the word vocabulary")
    if label_names is None:
        label_names = [f"syn-{i:03d}" for i in range(l_vocab)]

    docs = []
    word_tokens = []
    label_tokens = []
    for i in range(m):
        words, labels = sample_document(truth, n_words, n_labels,
                                        sampling_hyper, rng)
        word_tokens.append(words)
        label_tokens.append(labels)
        points = tuple(
            DrawingPoint(view=view, x=x, y=y)
            for view, x, y in (layout.unembed(int(w)) for w in words))
        distinct = sorted(set(int(a) for a in labels))
        docs.append(Document(
            id=f"doc-{i:04d}",
            points=points,
            labels=tuple(label_names[a] for a in distinct),
        ))
    corpus = Corpus(documents=tuple(docs))
    return SyntheticCorpus(corpus=corpus, truth=truth, layout=layout,
                           word_tokens=word_tokens, label_tokens=label_tokens)
