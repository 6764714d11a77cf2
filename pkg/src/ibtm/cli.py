"""Operator entry points: train, predict, evaluate, generate, synth, serve.

Options layer as command line over a plain key=value config file over
defaults.  Output is line oriented and stable so the commands can be
scripted.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from .featurize import DEFAULT_BANDWIDTH, DEFAULT_VOCAB_SIZE
from .generate import generate_drawing, render_heatmap
from .model import HyperParams, ModelConfig, load_model, save_model
from .pipeline import fit_corpus
from .predict import EvalProtocol, evaluate, format_eval_report
from .predict import predict as predict_drawing
from .synthetic import make_peaked_truth, sample_corpus

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class UsageError(Exception):
    """Bad invocation: missing files, missing required keys."""


def load_run_config(path: str | Path) -> dict[str, str]:
    """Parse a key=value config file ('#' comments and blank lines allowed)."""
    cfg: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = stripped.split("=", 1)
        cfg[key.strip()] = value.strip()
    return cfg


class Options:
    """Flag-over-config-file-over-default resolution."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.cfg = load_run_config(args.config) if getattr(args, "config", None) else {}

    def get(self, key: str, default=None, cast=str):
        flag = getattr(self.args, key, None)
        if flag is not None:
            return flag
        if key in self.cfg:
            raw = self.cfg[key]
            return cast(raw)
        return default

    def require_path(self, key: str) -> Path:
        value = self.get(key)
        if value is None:
            raise UsageError(f"missing required option: --{key}")
        path = Path(value)
        if not path.exists():
            raise UsageError(f"{key} file not found: {path}")
        return path

    def out_path(self, key: str = "out") -> Path:
        value = self.get(key)
        if value is None:
            raise UsageError(f"missing required option: --{key}")
        return Path(value)

    def pair(self, key: str, default: tuple[float, float]) -> tuple[float, float]:
        raw = self.get(key)
        if raw is None:
            return default
        if isinstance(raw, tuple):
            return raw
        parts = [float(x) for x in str(raw).split(",")]
        if len(parts) != 2:
            raise UsageError(f"{key} must be two comma-separated numbers")
        return parts[0], parts[1]


def build_model_config(opt: Options) -> ModelConfig:
    hyper = HyperParams(
        alpha_s=opt.get("alpha_s", 0.8, float),
        alpha_p1=opt.get("alpha_p1", 0.8, float),
        alpha_p2=opt.get("alpha_p2", 0.8, float),
        sigma_s1=opt.get("sigma_s1", 0.6, float),
        sigma_p1=opt.get("sigma_p1", 0.6, float),
        sigma_s2=opt.get("sigma_s2", 0.6, float),
        sigma_p2=opt.get("sigma_p2", 0.6, float),
        iota_1=opt.pair("iota_1", (1.0, 1.0)),
        iota_2=opt.pair("iota_2", (1.0, 1.0)),
    )
    return ModelConfig(
        k=opt.get("k", 20, int),
        t=opt.get("t", 5, int),
        s=opt.get("s", 5, int),
        v=opt.get("v", DEFAULT_VOCAB_SIZE, int),
        l_vocab=opt.get("l_vocab", 1, int),
        hyper=hyper,
        max_sweeps=opt.get("max_sweeps", 200, int),
        elbo_rel_tol=opt.get("elbo_rel_tol", 1e-5, float),
        seed=opt.get("seed", 0, int),
    )


def _load_maps(opt: Options) -> corpus_mod.LabelMaps:
    return corpus_mod.load_label_maps(
        exchangeable_path=opt.get("maps"),
        translation_path=opt.get("translation"),
    )


def cmd_train(opt: Options) -> int:
    corpus_path = opt.require_path("corpus")
    model_path = opt.out_path("model")
    config = build_model_config(opt)
    corpus = corpus_mod.load_corpus(corpus_path)
    maps = _load_maps(opt)

    def report(sweep: int, bound: float) -> None:
        print(f"sweep {sweep:4d}  elbo {bound:.6f}")

    model = fit_corpus(corpus, config, maps=maps,
                       scale=opt.get("scale", corpus_mod.DEFAULT_LABEL_SCALE, int),
                       sweep_callback=report)
    save_model(model, model_path)
    print(f"trained {model.n_sweeps} sweeps, final elbo {model.final_elbo:.6f}")
    print(f"model written to {model_path}")
    return EXIT_OK


def cmd_predict(opt: Options) -> int:
    model = load_model(opt.require_path("model"))
    corpus = corpus_mod.load_corpus(opt.require_path("corpus"))
    bandwidth = opt.get("bandwidth", DEFAULT_BANDWIDTH, float)
    for doc in corpus:
        pred = predict_drawing(doc.points, model, bandwidth=bandwidth)
        print(f"doc {doc.id}  regions {pred.regions.n}  budget {pred.budget}")
        for label, score in pred.ranked:
            print(f"  {score:.6f}  {label}")
    return EXIT_OK


def cmd_evaluate(opt: Options) -> int:
    corpus = corpus_mod.load_corpus(opt.require_path("corpus"))
    corpus = corpus_mod.preprocess_corpus(corpus, _load_maps(opt))
    config = build_model_config(opt)
    protocol = EvalProtocol(
        n_splits=opt.get("splits", 10, int),
        n_seeds=opt.get("seeds", 10, int),
        selection=opt.get("selection", "elbo"),
        bandwidth=opt.get("bandwidth", DEFAULT_BANDWIDTH, float),
        scale=opt.get("scale", corpus_mod.DEFAULT_LABEL_SCALE, int),
        base_seed=opt.get("seed", 0, int),
    )
    report = evaluate(corpus, config, protocol)
    text = format_eval_report(report)
    out = opt.get("out")
    if out is not None:
        Path(out).write_text(text, "utf-8")
    print(text, end="")
    return EXIT_OK


def cmd_generate(opt: Options) -> int:
    out = opt.out_path("out")
    model = load_model(opt.require_path("model"))
    label = opt.get("label")
    if label is None:
        raise UsageError("missing required option: --label")
    drawing = generate_drawing(
        label, model,
        n_top=opt.get("n_top", 10, int),
        scale=opt.get("scale", corpus_mod.DEFAULT_LABEL_SCALE, int))
    svg = render_heatmap(drawing)
    out.write_bytes(svg)
    print(f"drawing for {label!r} written to {out}")
    return EXIT_OK


def cmd_synth(opt: Options) -> int:
    out = opt.out_path("out")
    config = build_model_config(opt)
    truth = make_peaked_truth(config.k, config.t, config.s, config.v,
                              opt.get("l_vocab", 20, int),
                              peak_mass=opt.get("peak", 0.9, float))
    rng = np.random.default_rng(config.seed)
    sampling_hyper = HyperParams(
        alpha_s=config.hyper.alpha_s,
        alpha_p1=config.hyper.alpha_p1,
        alpha_p2=config.hyper.alpha_p2,
        iota_1=opt.pair("sample_iota_1", (9.0, 1.0)),
        iota_2=opt.pair("sample_iota_2", (19.0, 1.0)),
    )
    synth = sample_corpus(
        truth,
        m=opt.get("m", 500, int),
        n_words=opt.get("n_words", 60, int),
        n_labels=opt.get("n_labels", 3, int),
        sampling_hyper=sampling_hyper,
        rng=rng,
    )
    corpus_mod.save_corpus(synth.corpus, out)
    print(f"sampled {synth.corpus.m} documents to {out}")
    return EXIT_OK


def cmd_serve(opt: Options) -> int:
    from .service import run_server
    model_path = opt.require_path("model")
    port = opt.get("port", None, int)
    if port is None:
        port = int(os.environ.get("IBTM_PORT", "8752"))
    run_server(model_path, port=port,
               bandwidth=opt.get("bandwidth", DEFAULT_BANDWIDTH, float),
               audit_log=opt.get("audit_log"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ibtm",
        description="Discomfort-drawing topic modeling toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, flags):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--config", help="key=value configuration file")
        for flag, kwargs in flags.items():
            p.add_argument(flag, **kwargs)
        return p

    model_flags = {
        "--k": {"type": int, "help": "shared topics"},
        "--t": {"type": int, "help": "private drawing topics"},
        "--s": {"type": int, "help": "private label topics"},
        "--v": {"type": int, "help": "location vocabulary size"},
        "--seed": {"type": int},
        "--scale": {"type": int, "help": "label count multiplier"},
        "--max-sweeps": {"type": int, "dest": "max_sweeps"},
    }
    add("train", cmd_train, "train a model from a labeled corpus", {
        "--corpus": {}, "--model": {}, "--maps": {}, "--translation": {},
        **model_flags,
    })
    add("predict", cmd_predict, "rank labels for each drawing in a corpus file", {
        "--corpus": {}, "--model": {}, "--bandwidth": {"type": float},
    })
    add("evaluate", cmd_evaluate, "run the repeated-split protocol", {
        "--corpus": {}, "--maps": {}, "--translation": {}, "--out": {},
        "--splits": {"type": int}, "--seeds": {"type": int},
        "--selection": {"choices": ["elbo", "best_f"]},
        "--bandwidth": {"type": float},
        **model_flags,
    })
    add("generate", cmd_generate, "render a typical drawing for a label", {
        "--model": {}, "--label": {}, "--out": {},
        "--n-top": {"type": int, "dest": "n_top"},
        "--scale": {"type": int},
    })
    add("synth", cmd_synth, "sample a synthetic corpus file", {
        "--out": {}, "--m": {"type": int}, "--n-words": {"type": int, "dest": "n_words"},
        "--n-labels": {"type": int, "dest": "n_labels"},
        "--l-vocab": {"type": int, "dest": "l_vocab"},
        "--peak": {"type": float},
        **model_flags,
    })
    add("serve", cmd_serve, "serve predictions over HTTP", {
        "--model": {}, "--port": {"type": int}, "--bandwidth": {"type": float},
        "--audit-log": {"dest": "audit_log"},
    })
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opt = Options(args)
        return args.func(opt)
    except UsageError as exc:
        print(f"ibtm: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"ibtm: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - single operator-facing surface
        print(f"ibtm: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
