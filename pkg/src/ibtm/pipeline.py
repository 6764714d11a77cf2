"""End-to-end glue: corpus in, trained model out.

Keeps the one canonical path from raw documents to token bags so the CLI,
the evaluation protocol, and the service all train and predict identically.
"""

from __future__ import annotations

from dataclasses import replace

from .corpus import (Corpus, DEFAULT_LABEL_SCALE, Document, LabelMaps,
                     LabelVocab, build_label_vocab, preprocess_corpus,
                     scale_label_counts)
from .featurize import LocationVocab, build_location_vocab, encode_drawing
from .model import DocTokens, ModelConfig, TrainedModel, train


def doc_to_tokens(doc: Document, location_vocab: LocationVocab,
                  label_vocab: LabelVocab | None,
                  scale: int = DEFAULT_LABEL_SCALE,
                  keep_labels: bool = True) -> DocTokens:
    """Quantize a document's drawing and scale its label counts into a bag."""
    bag = encode_drawing(doc.points, location_vocab)
    label_counts: dict[int, float] = {}
    if keep_labels and label_vocab is not None:
        raw = {label_vocab[lab]: 1 for lab in doc.labels if lab in label_vocab}
        label_counts = scale_label_counts(raw, scale)
    return DocTokens.from_counts(dict(bag.counts), label_counts)


def corpus_to_tokens(corpus: Corpus, location_vocab: LocationVocab,
                     label_vocab: LabelVocab | None,
                     scale: int = DEFAULT_LABEL_SCALE,
                     keep_labels: bool = True) -> list[DocTokens]:
    return [doc_to_tokens(d, location_vocab, label_vocab, scale, keep_labels)
            for d in corpus]


def fit_corpus(corpus: Corpus, config: ModelConfig,
               maps: LabelMaps | None = None,
               scale: int = DEFAULT_LABEL_SCALE,
               preprocess: bool = True,
               sweep_callback=None) -> TrainedModel:
    """Train on a labeled corpus: normalize labels, build both vocabularies
    on the training data, scale the label view, and run variational
    training.  The returned model carries the vocabularies."""
    if preprocess:
        corpus = preprocess_corpus(corpus, maps)
    all_points = [p for doc in corpus for p in doc.points]
    location_vocab = build_location_vocab(all_points, v=config.v, seed=config.seed)
    label_vocab = build_label_vocab(corpus)
    config = replace(config, l_vocab=label_vocab.size)
    docs = corpus_to_tokens(corpus, location_vocab, label_vocab, scale)
    model = train(docs, config, sweep_callback=sweep_callback)
    return replace(model, location_vocab=location_vocab, label_vocab=label_vocab)
