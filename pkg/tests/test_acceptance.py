"""Acceptance suite: one test per release criterion.

Each test prints a [PASS]/[FAIL] line (visible with -s or on failure) and
asserts the criterion at its stated tolerance.  The expensive generative
recovery run is shared between the recovery and prediction-power criteria
via a module fixture.
"""

import time

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from ibtm.cli import main
from ibtm.corpus import DrawingPoint, LabelMaps, normalize_labels, split_bilateral
from ibtm.featurize import BagOfWords, count_regions, label_budget
from ibtm.model import (DocTokens, HyperParams, ModelConfig, TopicEstimates,
                        init_model, sample_document, train)
from ibtm.predict import f_measure, infer_heldout, rank_labels
from ibtm.synthetic import make_peaked_truth, sample_corpus

from reference_models import dirichlet_multinomial_logml, lda_trace, mmlda_trace


def check(name: str, ok: bool, detail: str = "") -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def tokens_to_bags(word_tokens, label_tokens, scale=10):
    docs = []
    for words, labels in zip(word_tokens, label_tokens):
        wc: dict = {}
        for w in words:
            wc[int(w)] = wc.get(int(w), 0) + 1
        lc: dict = {}
        for a in labels:
            lc[int(a)] = lc.get(int(a), 0) + scale
        docs.append(DocTokens.from_counts(wc, lc))
    return docs


# ---------------------------------------------------------------------------
# Shared recovery run: K=5, T=2, S=2, V=50, L_vocab=20, M=500, ~60 words and
# ~3 labels (x10 scale) per document.  Hyperparameters are matched between
# sampling and training; of five training seeds the best final bound is
# kept, mirroring the best-of-seeds protocol of the evaluation harness.
# ---------------------------------------------------------------------------

RECOVERY = dict(k=5, t=2, s=2, v=50, l_vocab=20, m=500, n_words=60, n_labels=3)
RECOVERY_HYPER = HyperParams(alpha_s=0.4, alpha_p1=0.4, alpha_p2=0.4,
                             iota_1=(9.0, 1.0), iota_2=(19.0, 1.0))
N_SEEDS = 5


@pytest.fixture(scope="module")
def recovery():
    d = RECOVERY
    truth = make_peaked_truth(d["k"], d["t"], d["s"], d["v"], d["l_vocab"],
                              peak_mass=0.9, label_peak_mass=0.98)
    synth = sample_corpus(truth, m=d["m"], n_words=d["n_words"],
                          n_labels=d["n_labels"], sampling_hyper=RECOVERY_HYPER,
                          rng=np.random.default_rng(42))
    docs = tokens_to_bags(synth.word_tokens, synth.label_tokens)
    start = time.perf_counter()
    models = [
        train(docs, ModelConfig(k=d["k"], t=d["t"], s=d["s"], v=d["v"],
                                l_vocab=d["l_vocab"], max_sweeps=100,
                                elbo_rel_tol=1e-5, seed=seed,
                                hyper=RECOVERY_HYPER))
        for seed in range(N_SEEDS)
    ]
    elapsed = time.perf_counter() - start
    best = max(models, key=lambda m: m.final_elbo)
    return {"truth": truth, "best": best, "elapsed": elapsed}


def best_permutation_tv(truth: TopicEstimates, model) -> float:
    def tv(a, b):
        return 0.5 * np.abs(a - b).sum()

    k = truth.beta.shape[0]
    beta_est = model.topics.beta_mean()
    eta_est = model.topics.eta_mean()
    cost = np.array([[tv(truth.beta[i], beta_est[j]) + tv(truth.eta[i], eta_est[j])
                      for j in range(k)] for i in range(k)])
    rows, cols = linear_sum_assignment(cost)
    vals = [tv(truth.beta[i], beta_est[j]) for i, j in zip(rows, cols)]
    vals += [tv(truth.eta[i], eta_est[j]) for i, j in zip(rows, cols)]
    return float(np.mean(vals))


class TestElboMonotonicity:
    def test_nondecreasing_on_random_corpora(self):
        n_corpora = 20
        start = time.perf_counter()
        worst = 0.0
        for c in range(n_corpora):
            rng = np.random.default_rng(1000 + c)
            k, t, s, v, l_vocab = 4, 2, 2, 25, 10
            truth = TopicEstimates(
                beta=rng.dirichlet(np.full(v, 0.5), size=k),
                zeta=rng.dirichlet(np.full(v, 0.5), size=t),
                eta=rng.dirichlet(np.full(l_vocab, 0.5), size=k),
                tau=rng.dirichlet(np.full(l_vocab, 0.5), size=s))
            hyper = HyperParams()
            words, labels = [], []
            for _ in range(50):
                w, a = sample_document(truth, 20, 2, hyper, rng)
                words.append(w)
                labels.append(a)
            docs = tokens_to_bags(words, labels)
            model = train(docs, ModelConfig(k=k, t=t, s=s, v=v, l_vocab=l_vocab,
                                            max_sweeps=30, elbo_rel_tol=0.0,
                                            seed=c, hyper=hyper))
            trace = np.array(model.elbo_trace)
            rel_drop = np.diff(trace) / np.abs(trace[:-1])
            worst = min(worst, float(rel_drop.min()))
            assert (rel_drop >= -1e-8).all(), f"corpus {c}: drop {rel_drop.min()}"
        elapsed = time.perf_counter() - start
        check("elbo-monotonicity",
              worst >= -1e-8 and elapsed < 30.0,
              f"{n_corpora} corpora, worst relative step {worst:.2e}, "
              f"{elapsed:.1f}s (< 30s)")


class TestGenerativeRecovery:
    def test_topic_matrices_recovered(self, recovery):
        mean_tv = best_permutation_tv(recovery["truth"], recovery["best"])
        ok = mean_tv < 0.15 and recovery["elapsed"] < 120.0
        check("generative-recovery", ok,
              f"mean total-variation {mean_tv:.3f} (< 0.15), "
              f"training {recovery['elapsed']:.0f}s (< 120s)")


class TestDegeneracyReductions:
    def _corpus(self, with_labels=True):
        rng = np.random.default_rng(3)
        docs = []
        for _ in range(10):
            wi = np.sort(rng.choice(14, size=7, replace=False))
            wc = rng.integers(1, 4, size=7).astype(float)
            if with_labels:
                li = np.sort(rng.choice(6, size=2, replace=False))
                lc = np.full(2, 10.0)
            else:
                li = np.zeros(0, dtype=np.int64)
                lc = np.zeros(0)
            docs.append(DocTokens(word_ids=wi, word_counts=wc,
                                  label_ids=li, label_counts=lc))
        return docs

    def test_matches_two_view_and_single_view_references(self):
        docs = self._corpus()
        cfg = ModelConfig(k=4, t=0, s=0, v=14, l_vocab=6, max_sweeps=10,
                          elbo_rel_tol=0.0, seed=11)
        topics, _ = init_model(cfg, np.random.default_rng(cfg.seed))
        mine = train(docs, cfg, initial_topics=topics)
        ref = mmlda_trace(
            [(d.word_ids, d.word_counts, d.label_ids, d.label_counts)
             for d in docs],
            k=4, v=14, l_vocab=6, alpha=cfg.hyper.alpha_s,
            sigma_w=cfg.hyper.sigma_s1, sigma_a=cfg.hyper.sigma_s2,
            beta0=topics.beta, eta0=topics.eta, n_sweeps=10)
        mmlda_gap = float(np.max(np.abs(
            (np.array(mine.elbo_trace) - np.array(ref)) / np.array(ref))))

        docs_w = self._corpus(with_labels=False)
        mine_lda = train(docs_w, cfg, initial_topics=topics)
        ref_lda = lda_trace([(d.word_ids, d.word_counts) for d in docs_w],
                            k=4, v=14, alpha=cfg.hyper.alpha_s,
                            sigma_w=cfg.hyper.sigma_s1,
                            beta0=topics.beta, n_sweeps=10)
        lda_gap = float(np.max(np.abs(
            (np.array(mine_lda.elbo_trace) - np.array(ref_lda)) / np.array(ref_lda))))

        ok = mmlda_gap < 1e-6 and lda_gap < 1e-6
        check("degeneracy-reductions", ok,
              f"two-view trace gap {mmlda_gap:.2e}, "
              f"single-view trace gap {lda_gap:.2e} (< 1e-6 relative)")


class TestPredictionPower:
    def test_beats_random_budget_baseline(self, recovery):
        d = RECOVERY
        best = recovery["best"]
        heldout = sample_corpus(recovery["truth"], m=200, n_words=d["n_words"],
                                n_labels=d["n_labels"],
                                sampling_hyper=RECOVERY_HYPER,
                                rng=np.random.default_rng(777))
        fs, baseline = [], []
        for doc, words, labels in zip(heldout.corpus, heldout.word_tokens,
                                      heldout.label_tokens):
            wc: dict = {}
            for w in words:
                wc[int(w)] = wc.get(int(w), 0) + 1
            post = infer_heldout(BagOfWords(counts=wc), best.topics,
                                 RECOVERY_HYPER)
            ranking = rank_labels(post, best.topics)
            budget = label_budget(count_regions(doc.points, 0.08).n)
            pred = {i for i, _ in ranking[:budget]}
            true = {int(a) for a in labels}
            fs.append(f_measure(pred, true)[2])
            # Random-subset baseline: overlap is hypergeometric and F is
            # linear in it, so E[F] = 2 E[X] / (budget + truth size).
            b, n = min(budget, d["l_vocab"]), len(true)
            baseline.append(2.0 * (b * n / d["l_vocab"]) / (b + n))
        macro_f = float(np.mean(fs))
        base_f = float(np.mean(baseline))
        check("prediction-power", macro_f >= 3.0 * base_f,
              f"macro F {macro_f:.3f} vs random-budget baseline {base_f:.3f} "
              f"(ratio {macro_f / base_f:.2f}, need >= 3)")


class TestExactSmallOracles:
    EXCHANGEABLE_PAIRS = [
        ("Golfer's elbow", "Medial elbow dcf"),
        ("Tennis elbow", "Lateral elbow dcf"),
        ("Myelopathy", "Nerve strain effect"),
        ("Gonarthrosis", "Medial knee arthrosis"),
        ("Medial gonarthrosis", "Medial meniscus"),
        ("Bruxism", "Jew dcf"),
        ("Hamstrings dcf", "Back thigh dcf"),
        ("Carpal Tunnel Syndrome", "Hand joint dcf"),
        ("Calcaneodynia", "Heel dcf"),
        ("Gastritis", "Upper abdominal dcf"),
        ("Piriformis tendonitis", "Side thigh dcf"),
        ("Trochanter", "Crest of the ilium dcf"),
        ("Globus hystericus", "Throat dcf"),
        ("Hip joint arthritis", "Coxarthrosis"),
    ]

    def test_fixed_point_values(self):
        maps = LabelMaps.bundled()
        ok = f_measure({"a", "b", "c", "d"}, {"a", "b", "e", "f"}) == (0.5, 0.5, 0.5)
        same = {f"l{i}" for i in range(6)}
        ok &= f_measure(same, set(same)) == (1.0, 1.0, 1.0)
        ok &= f_measure({"x"}, {"y"})[2] == 0.0
        ok &= [label_budget(n) for n in (1, 7, 16, 30)] == [5, 14, 32, 50]
        ok &= split_bilateral("B hands discomfort", maps) == [
            "L hand discomfort", "R hand discomfort"]
        bad_pairs = [alias for alias, canon in self.EXCHANGEABLE_PAIRS
                     if normalize_labels([alias], maps) != [canon]]
        ok &= not bad_pairs
        check("exact-small-oracles", bool(ok),
              f"F-measure, budget clamps, bilateral split, "
              f"{len(self.EXCHANGEABLE_PAIRS)} exchangeable pairs"
              + (f"; failed: {bad_pairs}" if bad_pairs else ""))


class TestMeanShift:
    def test_three_blobs_and_permutation_invariance(self):
        bandwidth = 0.05
        centers = [(0.25, 0.2), (0.25, 0.65), (0.75, 0.4)]
        rng = np.random.default_rng(8)
        coords = []
        for cx, cy in centers:
            coords.extend(np.clip(rng.normal([cx, cy], 0.01, size=(35, 2)),
                                  0.0, 1.0))
        base = [DrawingPoint("front", float(x), float(y)) for x, y in coords]
        counts = {count_regions([base[i] for i in rng.permutation(len(base))],
                                bandwidth).n
                  for _ in range(100)}
        ok = counts == {3}
        check("mean-shift", ok,
              f"3 blobs at >=5x bandwidth: counts over 100 shuffles = {sorted(counts)}")


class TestDeterminism:
    def test_cmd_train_byte_identical(self, tmp_path):
        corpus = tmp_path / "corpus.jsonl"
        code = main(["synth", "--out", str(corpus), "--m", "30", "--k", "3",
                     "--t", "1", "--s", "1", "--v", "12", "--l-vocab", "8",
                     "--n-words", "20", "--n-labels", "2", "--seed", "5"])
        assert code == 0
        args = ["train", "--corpus", str(corpus), "--k", "3", "--t", "1",
                "--s", "1", "--v", "12", "--seed", "13", "--max-sweeps", "8"]
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        assert main(args + ["--model", str(a)]) == 0
        assert main(args + ["--model", str(b)]) == 0
        raw_a, raw_b = a.read_bytes(), b.read_bytes()
        crc_a, crc_b = raw_a[-4:], raw_b[-4:]
        ok = raw_a == raw_b and crc_a == crc_b
        check("determinism", ok,
              f"model files {len(raw_a)} bytes, byte-identical, CRC match")


class TestClosedFormElboBound:
    def test_single_topic_bound(self):
        cfg = ModelConfig(k=1, t=0, s=0, v=5, l_vocab=1,
                          max_sweeps=50, elbo_rel_tol=1e-10)
        docs = [DocTokens.from_counts({0: 3, 1: 2}, {}),
                DocTokens.from_counts({1: 1, 3: 4}, {})]
        model = train(docs, cfg)
        counts = [np.bincount(d.word_ids, weights=d.word_counts, minlength=5)
                  for d in docs]
        logml = dirichlet_multinomial_logml(counts, cfg.hyper.sigma_s1, 5)
        gap = logml - model.final_elbo
        # The family is exact at K=1 so the bound is tight; allow float
        # slack on the <= side.
        ok = (model.final_elbo <= logml + 1e-9 * abs(logml)
              and gap < 0.05 * abs(logml))
        check("closed-form-elbo-bound", ok,
              f"elbo {model.final_elbo:.6f} <= log marginal {logml:.6f}, "
              f"gap {max(gap, 0.0):.2e} (< 5%)")
