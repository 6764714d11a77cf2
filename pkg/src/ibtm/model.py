"""Two-view topic model with shared and private topic spaces.

Each document couples a drawing view (location words) and a label view
through one shared topic distribution theta.  Every token additionally
carries a switch choosing between the shared space and a per-view private
space (kappa for words, nu for labels); per-document Beta-distributed share
proportions rho and mu govern the switches.  Private topics soak up
modality-specific structure so the shared topics keep only what both views
explain together.

Inference is coordinate-ascent mean-field variational Bayes.  The factors:

* q(theta)=Dir(gamma), q(kappa)=Dir(lambda), q(nu)=Dir(xi) per document,
* q(rho), q(mu) Beta factors per document,
* one categorical per distinct token jointly over (switch, topic): a
  (K+T)-vector for word tokens, (K+S) for label tokens,
* Dirichlet factors over the four topic-word matrices (full VB).

Setting T=0 (or S=0) removes the private path for that view and pins the
switch to shared, which reduces the model to a plain two-view mixed-
membership model, and further to single-view LDA when one modality carries
no tokens.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.special import digamma, gammaln

from .corpus import LabelVocab
from .featurize import LocationVocab, vocab_from_bytes, vocab_to_bytes

MODEL_MAGIC = b"IBTMMDL1"

_PSI_FLOOR = 1e-300


class TrainingError(RuntimeError):
    """Raised when training produces non-finite parameters."""


class ModelFileError(ValueError):
    """Raised for corrupt or foreign model files."""


@dataclass(frozen=True)
class HyperParams:
    """Symmetric Dirichlet concentrations and Beta share priors."""

    alpha_s: float = 0.8
    alpha_p1: float = 0.8
    alpha_p2: float = 0.8
    sigma_s1: float = 0.6
    sigma_p1: float = 0.6
    sigma_s2: float = 0.6
    sigma_p2: float = 0.6
    iota_1: tuple[float, float] = (1.0, 1.0)
    iota_2: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        for name in ("alpha_s", "alpha_p1", "alpha_p2",
                     "sigma_s1", "sigma_p1", "sigma_s2", "sigma_p2"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        for name in ("iota_1", "iota_2"):
            pair = tuple(float(x) for x in getattr(self, name))
            if len(pair) != 2 or not all(x > 0.0 for x in pair):
                raise ValueError(f"{name} must be a pair of positive reals")
            object.__setattr__(self, name, pair)


@dataclass(frozen=True)
class ModelConfig:
    """Topic counts, vocabulary sizes, and training knobs."""

    k: int = 20
    t: int = 5
    s: int = 5
    v: int = 256
    l_vocab: int = 1
    hyper: HyperParams = field(default_factory=HyperParams)
    max_sweeps: int = 200
    elbo_rel_tol: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.t < 0 or self.s < 0:
            raise ValueError("t and s must be >= 0")
        if self.v < 1 or self.l_vocab < 1:
            raise ValueError("v and l_vocab must be >= 1")


@dataclass(frozen=True)
class DocTokens:
    """Bag representation of one document: unique token ids with counts."""

    word_ids: np.ndarray
    word_counts: np.ndarray
    label_ids: np.ndarray
    label_counts: np.ndarray

    @classmethod
    def from_counts(cls, word_counts: dict[int, float],
                    label_counts: dict[int, float]) -> "DocTokens":
        wi = np.array(sorted(word_counts), dtype=np.int64)
        li = np.array(sorted(label_counts), dtype=np.int64)
        return cls(
            word_ids=wi,
            word_counts=np.array([word_counts[i] for i in wi], dtype=np.float64),
            label_ids=li,
            label_counts=np.array([label_counts[i] for i in li], dtype=np.float64),
        )

    @property
    def n_words(self) -> float:
        return float(self.word_counts.sum())

    @property
    def n_labels(self) -> float:
        return float(self.label_counts.sum())


def _elog_dirichlet_rows(params: np.ndarray) -> np.ndarray:
    """E[log x] under row-wise Dirichlet factors."""
    p = np.maximum(params, _PSI_FLOOR)
    return digamma(p) - digamma(p.sum(axis=-1, keepdims=True))


class GlobalTopics:
    """Variational Dirichlet parameters of the four topic matrices.

    beta (K x V) and eta (K x L) are the shared word/label topics; zeta
    (T x V) and tau (S x L) the private ones.  Expected-log caches are
    refreshed on construction; instances are treated as immutable between
    sweeps.
    """

    def __init__(self, beta: np.ndarray, zeta: np.ndarray,
                 eta: np.ndarray, tau: np.ndarray):
        self.beta = np.asarray(beta, dtype=np.float64)
        self.zeta = np.asarray(zeta, dtype=np.float64)
        self.eta = np.asarray(eta, dtype=np.float64)
        self.tau = np.asarray(tau, dtype=np.float64)
        for name in ("beta", "zeta", "eta", "tau"):
            mat = getattr(self, name)
            if mat.size and not np.all(mat > 0.0):
                raise ValueError(f"{name} entries must be strictly positive")
        self.elog_beta = _elog_dirichlet_rows(self.beta)
        self.elog_zeta = _elog_dirichlet_rows(self.zeta) if self.zeta.size else np.zeros_like(self.zeta)
        self.elog_eta = _elog_dirichlet_rows(self.eta)
        self.elog_tau = _elog_dirichlet_rows(self.tau) if self.tau.size else np.zeros_like(self.tau)

    @property
    def k(self) -> int:
        return self.beta.shape[0]

    @property
    def t(self) -> int:
        return self.zeta.shape[0]

    @property
    def s(self) -> int:
        return self.tau.shape[0]

    @property
    def v(self) -> int:
        return self.beta.shape[1]

    @property
    def l_vocab(self) -> int:
        return self.eta.shape[1]

    def beta_mean(self) -> np.ndarray:
        return self.beta / self.beta.sum(axis=1, keepdims=True)

    def zeta_mean(self) -> np.ndarray:
        return self.zeta / self.zeta.sum(axis=1, keepdims=True) if self.zeta.size else self.zeta

    def eta_mean(self) -> np.ndarray:
        return self.eta / self.eta.sum(axis=1, keepdims=True)

    def tau_mean(self) -> np.ndarray:
        return self.tau / self.tau.sum(axis=1, keepdims=True) if self.tau.size else self.tau


@dataclass
class DocPosterior:
    """Per-document variational state.

    phi_w rows are (K+T)-probability vectors over (shared topic, private
    topic) for each distinct word id, phi_a likewise with (K+S) entries for
    label ids.  rho_ab / mu_cd are the Beta parameters of the share
    proportions; they stay at the prior when the corresponding private
    space is disabled.
    """

    gamma: np.ndarray
    lam: np.ndarray
    xi: np.ndarray
    rho_ab: np.ndarray
    mu_cd: np.ndarray
    phi_w: np.ndarray
    phi_a: np.ndarray

    def theta_mean(self) -> np.ndarray:
        return self.gamma / self.gamma.sum()


@dataclass(frozen=True)
class TrainedModel:
    """Training output: topic posteriors plus the vocabularies that give
    token ids meaning."""

    config: ModelConfig
    topics: GlobalTopics
    elbo_trace: tuple[float, ...]
    n_sweeps: int
    location_vocab: LocationVocab | None = None
    label_vocab: LabelVocab | None = None

    @property
    def final_elbo(self) -> float:
        return self.elbo_trace[-1] if self.elbo_trace else float("nan")


# ---------------------------------------------------------------------------
# Ancestral sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TopicEstimates:
    """Row-stochastic point estimates of the four topic matrices, used for
    sampling and for recovery comparisons."""

    beta: np.ndarray
    zeta: np.ndarray
    eta: np.ndarray
    tau: np.ndarray

    def __post_init__(self):
        for name in ("beta", "zeta", "eta", "tau"):
            mat = np.asarray(getattr(self, name), dtype=np.float64)
            object.__setattr__(self, name, mat)
            if mat.size and not np.allclose(mat.sum(axis=1), 1.0, atol=1e-8):
                raise ValueError(f"{name} rows must sum to 1")


def _draw_mixture(n: int, weights: np.ndarray, emissions: np.ndarray,
                  rng: np.random.Generator) -> np.ndarray:
    """Draw n tokens from a mixture: topic ~ weights, token ~ emissions[topic]."""
    topics = rng.choice(weights.shape[0], size=n, p=weights)
    out = np.empty(n, dtype=np.int64)
    for k in np.unique(topics):
        mask = topics == k
        out[mask] = rng.choice(emissions.shape[1], size=int(mask.sum()),
                               p=emissions[k])
    return out


def sample_document(truth: TopicEstimates, n_words: int, n_labels: int,
                    hyper: HyperParams, rng: np.random.Generator,
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Ancestral draw of one document's token lists (word ids, label ids)."""
    k = truth.beta.shape[0]
    t = truth.zeta.shape[0]
    s = truth.tau.shape[0]

    theta = rng.dirichlet(np.full(k, hyper.alpha_s))
    kappa = rng.dirichlet(np.full(t, hyper.alpha_p1)) if t > 0 else None
    nu = rng.dirichlet(np.full(s, hyper.alpha_p2)) if s > 0 else None
    rho = rng.beta(*hyper.iota_1) if t > 0 else 1.0
    mu = rng.beta(*hyper.iota_2) if s > 0 else 1.0

    def draw_view(n, share_p, priv_weights, shared_emit, priv_emit):
        ids = np.empty(n, dtype=np.int64)
        shared = rng.random(n) < share_p
        n_shared = int(shared.sum())
        if n_shared:
            ids[shared] = _draw_mixture(n_shared, theta, shared_emit, rng)
        if n - n_shared:
            ids[~shared] = _draw_mixture(n - n_shared, priv_weights, priv_emit, rng)
        return ids

    words = draw_view(n_words, rho, kappa, truth.beta, truth.zeta)
    labels = draw_view(n_labels, mu, nu, truth.eta, truth.tau)
    return words, labels


# ---------------------------------------------------------------------------
# Variational inference
# ---------------------------------------------------------------------------


def init_model(config: ModelConfig, rng: np.random.Generator,
               ) -> tuple[GlobalTopics, DocPosterior]:
    """Prior-plus-jitter topic initialization and a prior doc posterior.

    Rows start at the prior concentration plus uniform jitter scaled by
    0.01, which breaks the symmetry between topics deterministically for a
    given generator state.
    """
    h = config.hyper
    jitter = 0.01
    topics = GlobalTopics(
        beta=h.sigma_s1 + jitter * rng.random((config.k, config.v)),
        zeta=h.sigma_p1 + jitter * rng.random((config.t, config.v)),
        eta=h.sigma_s2 + jitter * rng.random((config.k, config.l_vocab)),
        tau=h.sigma_p2 + jitter * rng.random((config.s, config.l_vocab)),
    )
    return topics, prior_posterior(config)


def prior_posterior(config: ModelConfig) -> DocPosterior:
    h = config.hyper
    return DocPosterior(
        gamma=np.full(config.k, h.alpha_s),
        lam=np.full(config.t, h.alpha_p1),
        xi=np.full(config.s, h.alpha_p2),
        rho_ab=np.array(h.iota_1),
        mu_cd=np.array(h.iota_2),
        phi_w=np.zeros((0, config.k + config.t)),
        phi_a=np.zeros((0, config.k + config.s)),
    )


E_STEP_MAX_ITER = 100
E_STEP_GAMMA_TOL = 1e-4


def _check_token_ids(ids: np.ndarray, vocab_size: int, what: str) -> None:
    if ids.size and (ids.min() < 0 or ids.max() >= vocab_size):
        raise ValueError(f"{what} id out of range [0, {vocab_size})")


def e_step_document(doc: DocTokens, topics: GlobalTopics, hyper: HyperParams,
                    init: DocPosterior | None = None) -> DocPosterior:
    """Coordinate-ascent local update for a single document.

    Token responsibilities are softmaxes of expected log switch + topic
    weight + emission scores; the Dirichlet/Beta locals then absorb the
    responsibility masses.  Iterates until the mean absolute change in
    gamma falls below 1e-4 or 100 rounds.  ``init`` warm-starts the loop
    from an earlier posterior (still exact coordinate ascent, just fewer
    rounds to local convergence).
    """
    k, t, s = topics.k, topics.t, topics.s
    _check_token_ids(doc.word_ids, topics.v, "word")
    _check_token_ids(doc.label_ids, topics.l_vocab, "label")

    # Emission scores are constant during the inner loop.
    emit_w = np.vstack([topics.elog_beta[:, doc.word_ids],
                        topics.elog_zeta[:, doc.word_ids]])
    emit_a = np.vstack([topics.elog_eta[:, doc.label_ids],
                        topics.elog_tau[:, doc.label_ids]])

    if init is not None:
        gamma = init.gamma.copy()
        lam = init.lam.copy()
        xi = init.xi.copy()
        rho_ab = init.rho_ab.copy()
        mu_cd = init.mu_cd.copy()
    else:
        gamma = np.full(k, hyper.alpha_s)
        lam = np.full(t, hyper.alpha_p1)
        xi = np.full(s, hyper.alpha_p2)
        rho_ab = np.array(hyper.iota_1)
        mu_cd = np.array(hyper.iota_2)

    phi_w = np.zeros((k + t, doc.word_ids.size))
    phi_a = np.zeros((k + s, doc.label_ids.size))

    for _ in range(E_STEP_MAX_ITER):
        elog_theta = digamma(gamma) - digamma(gamma.sum())
        col_w = np.empty(k + t)
        col_w[:k] = elog_theta
        if t > 0:
            elog_rho = digamma(rho_ab) - digamma(rho_ab.sum())
            col_w[:k] += elog_rho[0]
            col_w[k:] = elog_rho[1] + digamma(lam) - digamma(lam.sum())
        col_a = np.empty(k + s)
        col_a[:k] = elog_theta
        if s > 0:
            elog_mu = digamma(mu_cd) - digamma(mu_cd.sum())
            col_a[:k] += elog_mu[0]
            col_a[k:] = elog_mu[1] + digamma(xi) - digamma(xi.sum())

        phi_w = _softmax_cols(emit_w + col_w[:, None])
        phi_a = _softmax_cols(emit_a + col_a[:, None])

        resp_w = phi_w * doc.word_counts
        resp_a = phi_a * doc.label_counts
        new_gamma = hyper.alpha_s + resp_w[:k].sum(axis=1) + resp_a[:k].sum(axis=1)
        if t > 0:
            lam = hyper.alpha_p1 + resp_w[k:].sum(axis=1)
            rho_ab = np.array(hyper.iota_1) + np.array(
                [resp_w[:k].sum(), resp_w[k:].sum()])
        if s > 0:
            xi = hyper.alpha_p2 + resp_a[k:].sum(axis=1)
            mu_cd = np.array(hyper.iota_2) + np.array(
                [resp_a[:k].sum(), resp_a[k:].sum()])

        delta = np.abs(new_gamma - gamma).mean()
        gamma = new_gamma
        if delta < E_STEP_GAMMA_TOL:
            break

    return DocPosterior(gamma=gamma, lam=lam, xi=xi, rho_ab=rho_ab,
                        mu_cd=mu_cd, phi_w=phi_w.T.copy(), phi_a=phi_a.T.copy())


def _softmax_cols(scores: np.ndarray) -> np.ndarray:
    """Column-wise softmax of a (rows, n) score matrix, safe for n = 0."""
    if scores.shape[1] == 0:
        return scores
    out = scores - scores.max(axis=0)
    np.exp(out, out=out)
    out /= out.sum(axis=0)
    return out


class _BatchEStep:
    """Vectorized local updates for a whole corpus.

    Identical math and stopping rule as :func:`e_step_document`, run on
    padded (doc, switch-topic, token) tensors; documents freeze once their
    gamma change drops below the tolerance, exactly like the per-document
    loop's break.
    """

    def __init__(self, docs: Sequence[DocTokens], k: int, t: int, s: int):
        self.m = len(docs)
        self.k, self.t, self.s = k, t, s
        self.w_len = np.array([d.word_ids.size for d in docs])
        self.a_len = np.array([d.label_ids.size for d in docs])
        w_max = int(self.w_len.max()) if self.m else 0
        a_max = int(self.a_len.max()) if self.m else 0
        self.wid = np.zeros((self.m, w_max), dtype=np.int64)
        self.wcnt = np.zeros((self.m, w_max))
        self.aid = np.zeros((self.m, a_max), dtype=np.int64)
        self.acnt = np.zeros((self.m, a_max))
        for i, d in enumerate(docs):
            self.wid[i, :d.word_ids.size] = d.word_ids
            self.wcnt[i, :d.word_ids.size] = d.word_counts
            self.aid[i, :d.label_ids.size] = d.label_ids
            self.acnt[i, :d.label_ids.size] = d.label_counts

    def run(self, topics: GlobalTopics, hyper: HyperParams,
            init: Sequence[DocPosterior] | None) -> list[DocPosterior]:
        k, t, s, m = self.k, self.t, self.s, self.m
        # (doc, switch-topic, token) emission scores, fixed for the sweep.
        emit_w = np.concatenate([topics.elog_beta, topics.elog_zeta],
                                axis=0)[:, self.wid].transpose(1, 0, 2)
        emit_a = np.concatenate([topics.elog_eta, topics.elog_tau],
                                axis=0)[:, self.aid].transpose(1, 0, 2)

        if init is not None and init[0] is not None:
            gamma = np.stack([p.gamma for p in init])
            lam = np.stack([p.lam for p in init])
            xi = np.stack([p.xi for p in init])
            rho = np.stack([p.rho_ab for p in init])
            mu = np.stack([p.mu_cd for p in init])
        else:
            gamma = np.full((m, k), hyper.alpha_s)
            lam = np.full((m, t), hyper.alpha_p1)
            xi = np.full((m, s), hyper.alpha_p2)
            rho = np.tile(np.array(hyper.iota_1), (m, 1))
            mu = np.tile(np.array(hyper.iota_2), (m, 1))

        phi_w_out = np.zeros_like(emit_w)
        phi_a_out = np.zeros_like(emit_a)
        active = np.arange(m)
        for _ in range(E_STEP_MAX_ITER):
            g = gamma[active]
            elog_theta = digamma(g) - digamma(g.sum(axis=1, keepdims=True))
            col_w = np.empty((active.size, k + t))
            col_w[:, :k] = elog_theta
            if t > 0:
                r = rho[active]
                elog_rho = digamma(r) - digamma(r.sum(axis=1, keepdims=True))
                l = lam[active]
                col_w[:, :k] += elog_rho[:, :1]
                col_w[:, k:] = (elog_rho[:, 1:] + digamma(l)
                                - digamma(l.sum(axis=1, keepdims=True)))
            col_a = np.empty((active.size, k + s))
            col_a[:, :k] = elog_theta
            if s > 0:
                mm = mu[active]
                elog_mu = digamma(mm) - digamma(mm.sum(axis=1, keepdims=True))
                x = xi[active]
                col_a[:, :k] += elog_mu[:, :1]
                col_a[:, k:] = (elog_mu[:, 1:] + digamma(x)
                                - digamma(x.sum(axis=1, keepdims=True)))

            phi_w = self._softmax(emit_w[active] + col_w[:, :, None])
            phi_a = self._softmax(emit_a[active] + col_a[:, :, None])
            phi_w_out[active] = phi_w
            phi_a_out[active] = phi_a

            resp_w = phi_w * self.wcnt[active][:, None, :]
            resp_a = phi_a * self.acnt[active][:, None, :]
            shared_w = resp_w[:, :k, :].sum(axis=2)
            shared_a = resp_a[:, :k, :].sum(axis=2)
            new_gamma = hyper.alpha_s + shared_w + shared_a
            if t > 0:
                priv_w = resp_w[:, k:, :].sum(axis=2)
                lam[active] = hyper.alpha_p1 + priv_w
                rho[active, 0] = hyper.iota_1[0] + shared_w.sum(axis=1)
                rho[active, 1] = hyper.iota_1[1] + priv_w.sum(axis=1)
            if s > 0:
                priv_a = resp_a[:, k:, :].sum(axis=2)
                xi[active] = hyper.alpha_p2 + priv_a
                mu[active, 0] = hyper.iota_2[0] + shared_a.sum(axis=1)
                mu[active, 1] = hyper.iota_2[1] + priv_a.sum(axis=1)

            delta = np.abs(new_gamma - gamma[active]).mean(axis=1)
            gamma[active] = new_gamma
            active = active[delta >= E_STEP_GAMMA_TOL]
            if active.size == 0:
                break

        return [DocPosterior(
            gamma=gamma[i], lam=lam[i], xi=xi[i],
            rho_ab=rho[i], mu_cd=mu[i],
            phi_w=phi_w_out[i, :, :self.w_len[i]].T.copy(),
            phi_a=phi_a_out[i, :, :self.a_len[i]].T.copy(),
        ) for i in range(m)]

    @staticmethod
    def _softmax(scores: np.ndarray) -> np.ndarray:
        if scores.shape[2] == 0:
            return scores
        scores -= scores.max(axis=1, keepdims=True)
        np.exp(scores, out=scores)
        scores /= scores.sum(axis=1, keepdims=True)
        return scores


def m_step(docs: Sequence[DocTokens], posteriors: Sequence[DocPosterior],
           config: ModelConfig) -> GlobalTopics:
    """Batch refresh of the topic Dirichlet parameters from responsibilities.

    Accumulation runs in document order so results are reproducible.
    """
    h = config.hyper
    k, t, s = config.k, config.t, config.s
    beta_stat = np.zeros((k, config.v))
    zeta_stat = np.zeros((t, config.v))
    eta_stat = np.zeros((k, config.l_vocab))
    tau_stat = np.zeros((s, config.l_vocab))
    for doc, post in zip(docs, posteriors):
        if doc.word_ids.size:
            resp = post.phi_w.T * doc.word_counts
            beta_stat[:, doc.word_ids] += resp[:k]
            if t > 0:
                zeta_stat[:, doc.word_ids] += resp[k:]
        if doc.label_ids.size:
            resp = post.phi_a.T * doc.label_counts
            eta_stat[:, doc.label_ids] += resp[:k]
            if s > 0:
                tau_stat[:, doc.label_ids] += resp[k:]
    return GlobalTopics(
        beta=h.sigma_s1 + beta_stat,
        zeta=h.sigma_p1 + zeta_stat,
        eta=h.sigma_s2 + eta_stat,
        tau=h.sigma_p2 + tau_stat,
    )


def _dirichlet_pq(prior: np.ndarray, params: np.ndarray, elog: np.ndarray) -> float:
    """E_q[log p(x|prior)] - E_q[log q(x)] for row-wise Dirichlet factors.

    prior broadcasts against params; rows of params/elog are independent
    factors.
    """
    prior = np.broadcast_to(prior, params.shape)
    lp = (gammaln(prior.sum(axis=-1)) - gammaln(prior).sum(axis=-1)
          + ((prior - 1.0) * elog).sum(axis=-1))
    lq = (gammaln(params.sum(axis=-1)) - gammaln(params).sum(axis=-1)
          + ((params - 1.0) * elog).sum(axis=-1))
    return float((lp - lq).sum())


def _entropy_term(phi: np.ndarray) -> np.ndarray:
    """Row-wise -sum(phi log phi) with 0 log 0 = 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(phi > 0.0, phi * np.log(phi), 0.0)
    return -x.sum(axis=-1)


def elbo(docs: Sequence[DocTokens], topics: GlobalTopics,
         posteriors: Sequence[DocPosterior], hyper: HyperParams) -> float:
    """Evidence lower bound of the full corpus at the current factors.

    Includes every Dirichlet, Beta, and categorical term; token scores are
    evaluated at the current globals against the stored responsibilities,
    so the value is the exact bound of the stored variational state.
    """
    k, t, s = topics.k, topics.t, topics.s

    total = _dirichlet_pq(np.asarray(hyper.sigma_s1), topics.beta, topics.elog_beta)
    total += _dirichlet_pq(np.asarray(hyper.sigma_s2), topics.eta, topics.elog_eta)
    if t > 0:
        total += _dirichlet_pq(np.asarray(hyper.sigma_p1), topics.zeta, topics.elog_zeta)
    if s > 0:
        total += _dirichlet_pq(np.asarray(hyper.sigma_p2), topics.tau, topics.elog_tau)

    iota_1 = np.array(hyper.iota_1)
    iota_2 = np.array(hyper.iota_2)
    for doc, post in zip(docs, posteriors):
        elog_theta = digamma(post.gamma) - digamma(post.gamma.sum())
        total += _dirichlet_pq(np.asarray(hyper.alpha_s),
                               post.gamma[None, :], elog_theta[None, :])

        col_w = np.empty(k + t)
        col_w[:k] = elog_theta
        if t > 0:
            elog_lam = digamma(post.lam) - digamma(post.lam.sum())
            elog_rho = digamma(post.rho_ab) - digamma(post.rho_ab.sum())
            total += _dirichlet_pq(np.asarray(hyper.alpha_p1),
                                   post.lam[None, :], elog_lam[None, :])
            total += _dirichlet_pq(iota_1, post.rho_ab[None, :], elog_rho[None, :])
            col_w[:k] += elog_rho[0]
            col_w[k:] = elog_rho[1] + elog_lam
        col_a = np.empty(k + s)
        col_a[:k] = elog_theta
        if s > 0:
            elog_xi = digamma(post.xi) - digamma(post.xi.sum())
            elog_mu = digamma(post.mu_cd) - digamma(post.mu_cd.sum())
            total += _dirichlet_pq(np.asarray(hyper.alpha_p2),
                                   post.xi[None, :], elog_xi[None, :])
            total += _dirichlet_pq(iota_2, post.mu_cd[None, :], elog_mu[None, :])
            col_a[:k] += elog_mu[0]
            col_a[k:] = elog_mu[1] + elog_xi

        if doc.word_ids.size:
            scores = (np.vstack([topics.elog_beta[:, doc.word_ids],
                                 topics.elog_zeta[:, doc.word_ids]])
                      + col_w[:, None]).T
            per_token = (post.phi_w * scores).sum(axis=1) + _entropy_term(post.phi_w)
            total += float(per_token @ doc.word_counts)
        if doc.label_ids.size:
            scores = (np.vstack([topics.elog_eta[:, doc.label_ids],
                                 topics.elog_tau[:, doc.label_ids]])
                      + col_a[:, None]).T
            per_token = (post.phi_a * scores).sum(axis=1) + _entropy_term(post.phi_a)
            total += float(per_token @ doc.label_counts)

    return total


def _check_finite(topics: GlobalTopics, sweep: int) -> None:
    for name in ("beta", "zeta", "eta", "tau"):
        mat = getattr(topics, name)
        if mat.size and not np.all(np.isfinite(mat)):
            raise TrainingError(
                f"non-finite values in {name} after sweep {sweep}")


def train(docs: Sequence[DocTokens], config: ModelConfig,
          initial_topics: GlobalTopics | None = None,
          sweep_callback: Callable[[int, float], None] | None = None,
          ) -> TrainedModel:
    """Alternate full local sweeps and batch global updates until the
    relative bound improvement drops below ``elbo_rel_tol`` or
    ``max_sweeps`` is hit.

    The bound is recorded after every global update; the trace is
    nondecreasing because every intermediate step is an exact coordinate
    maximization.
    """
    if len(docs) == 0:
        raise ValueError("cannot train on an empty corpus")
    for doc in docs:
        _check_token_ids(doc.word_ids, config.v, "word")
        _check_token_ids(doc.label_ids, config.l_vocab, "label")

    rng = np.random.default_rng(config.seed)
    if initial_topics is None:
        topics, _ = init_model(config, rng)
    else:
        topics = initial_topics

    trace: list[float] = []
    posteriors: list[DocPosterior] = [None] * len(docs)
    batch = _BatchEStep(docs, config.k, config.t, config.s)
    for sweep in range(1, config.max_sweeps + 1):
        posteriors = batch.run(topics, config.hyper, posteriors)
        try:
            topics = m_step(docs, posteriors, config)
        except ValueError as exc:
            raise TrainingError(
                f"invalid topic parameters after sweep {sweep}: {exc}") from exc
        _check_finite(topics, sweep)
        bound = elbo(docs, topics, posteriors, config.hyper)
        if not np.isfinite(bound):
            raise TrainingError(f"non-finite bound after sweep {sweep}")
        trace.append(bound)
        if sweep_callback is not None:
            sweep_callback(sweep, bound)
        if len(trace) >= 2:
            prev = trace[-2]
            if abs(bound - prev) < config.elbo_rel_tol * abs(prev):
                break

    return TrainedModel(config=config, topics=topics, elbo_trace=tuple(trace),
                        n_sweeps=len(trace))


# ---------------------------------------------------------------------------
# Model file: magic, little-endian u32 dims (K,T,S,V,L), 64-bit-float
# hyperparameters, four row-major float64 matrices, the embedded location
# vocabulary and label vocabulary, and a trailing CRC32.
# ---------------------------------------------------------------------------

_HYPER_FIELDS = ("alpha_s", "alpha_p1", "alpha_p2",
                 "sigma_s1", "sigma_p1", "sigma_s2", "sigma_p2")


def model_to_bytes(model: TrainedModel) -> bytes:
    if model.location_vocab is None or model.label_vocab is None:
        raise ValueError("model has no vocabularies attached; cannot serialize")
    cfg = model.config
    h = cfg.hyper
    parts = [MODEL_MAGIC,
             struct.pack("<IIIII", cfg.k, cfg.t, cfg.s, cfg.v, cfg.l_vocab),
             struct.pack("<11d", *[getattr(h, f) for f in _HYPER_FIELDS],
                         *h.iota_1, *h.iota_2)]
    for mat in (model.topics.beta, model.topics.zeta,
                model.topics.eta, model.topics.tau):
        parts.append(mat.astype("<f8").tobytes(order="C"))
    parts.append(vocab_to_bytes(model.location_vocab))
    labels = model.label_vocab.labels
    parts.append(struct.pack("<I", len(labels)))
    for label in labels:
        raw = label.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def model_from_bytes(data: bytes) -> TrainedModel:
    if len(data) < 12 or data[:8] != MODEL_MAGIC:
        raise ModelFileError("not a model file (bad magic)")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise ModelFileError("model file CRC mismatch")

    off = 8
    k, t, s, v, l_vocab = struct.unpack_from("<IIIII", body, off)
    off += 20
    hyper_vals = struct.unpack_from("<11d", body, off)
    off += 88
    hyper = HyperParams(**dict(zip(_HYPER_FIELDS, hyper_vals[:7])),
                        iota_1=tuple(hyper_vals[7:9]),
                        iota_2=tuple(hyper_vals[9:11]))

    def read_matrix(rows, cols):
        nonlocal off
        end = off + rows * cols * 8
        if len(body) < end:
            raise ModelFileError("truncated model file")
        mat = np.frombuffer(body[off:end], dtype="<f8").reshape(rows, cols).copy()
        off = end
        return mat

    beta = read_matrix(k, v)
    zeta = read_matrix(t, v)
    eta = read_matrix(k, l_vocab)
    tau = read_matrix(s, l_vocab)
    try:
        loc_vocab, off = vocab_from_bytes(body, off)
    except ValueError as exc:
        raise ModelFileError(str(exc)) from exc
    (n_labels,) = struct.unpack_from("<I", body, off)
    off += 4
    labels = []
    for _ in range(n_labels):
        (length,) = struct.unpack_from("<I", body, off)
        off += 4
        labels.append(body[off:off + length].decode("utf-8"))
        off += length
    if off != len(body):
        raise ModelFileError("trailing bytes in model file")

    config = ModelConfig(k=k, t=t, s=s, v=v, l_vocab=l_vocab, hyper=hyper)
    topics = GlobalTopics(beta=beta, zeta=zeta, eta=eta, tau=tau)
    return TrainedModel(config=config, topics=topics, elbo_trace=(),
                        n_sweeps=0, location_vocab=loc_vocab,
                        label_vocab=LabelVocab(labels=tuple(labels)))


def save_model(model: TrainedModel, path: str | Path) -> None:
    Path(path).write_bytes(model_to_bytes(model))


def load_model(path: str | Path) -> TrainedModel:
    return model_from_bytes(Path(path).read_bytes())
