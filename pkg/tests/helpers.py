"""Shared fixtures-in-functions for the test suite."""

import numpy as np

from ibtm.corpus import LabelVocab
from ibtm.model import (DocTokens, GlobalTopics, ModelConfig, TrainedModel,
                        HyperParams)
from ibtm.synthetic import synthetic_layout


def random_docs(m, v, l_vocab, rng, n_words=20, n_labels=3, label_scale=10):
    """Random bag corpora with no topic structure, for plumbing tests."""
    docs = []
    for _ in range(m):
        wi = rng.choice(v, size=min(n_words, v), replace=False)
        wc = rng.integers(1, 5, size=wi.size).astype(float)
        li = rng.choice(l_vocab, size=min(n_labels, l_vocab), replace=False)
        lc = np.full(li.size, float(label_scale))
        docs.append(DocTokens(word_ids=np.sort(wi), word_counts=wc,
                              label_ids=np.sort(li), label_counts=lc))
    return docs


def block_params(k, n_cols, on=1e4, off=1e-3):
    """Dirichlet parameter rows concentrated on per-row column blocks."""
    block = n_cols // k
    mat = np.full((k, n_cols), off)
    for i in range(k):
        mat[i, i * block:(i + 1) * block] = on
    return mat


def separable_model(k=3, words_per_topic=2, labels_per_topic=2,
                    t=0, s=0) -> TrainedModel:
    """Trained-model stand-in whose topics partition words and labels."""
    v = k * words_per_topic
    l_vocab = k * labels_per_topic
    topics = GlobalTopics(
        beta=block_params(k, v),
        zeta=np.full((t, v), 1.0),
        eta=block_params(k, l_vocab),
        tau=np.full((s, l_vocab), 1.0),
    )
    config = ModelConfig(k=k, t=t, s=s, v=v, l_vocab=l_vocab,
                         hyper=HyperParams())
    label_vocab = LabelVocab(labels=tuple(f"lab-{i:02d}" for i in range(l_vocab)))
    return TrainedModel(config=config, topics=topics, elbo_trace=(0.0,),
                        n_sweeps=1, location_vocab=synthetic_layout(v),
                        label_vocab=label_vocab)
