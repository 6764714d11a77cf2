#!/usr/bin/env python3
"""End-to-end walk through the toolkit on synthetic data: sample a corpus
file, train a model, run the split evaluation, predict for one drawing,
and render a generated drawing, all inside a scratch directory.

Usage: python scripts/pipeline_demo.py [workdir]
"""

import sys
from pathlib import Path

from ibtm.cli import main as cli


def run(argv):
    print("$ ibtm " + " ".join(argv))
    code = cli(argv)
    if code != 0:
        sys.exit(code)


def main():
    workdir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("demo-run")
    workdir.mkdir(parents=True, exist_ok=True)
    corpus = workdir / "corpus.jsonl"
    model = workdir / "model.bin"
    cfg = workdir / "run.cfg"
    # Share priors matched to the synth sampler's defaults.
    cfg.write_text("alpha_s = 0.4\nalpha_p1 = 0.4\nalpha_p2 = 0.4\n"
                   "iota_1 = 9,1\niota_2 = 19,1\n", "utf-8")

    run(["synth", "--out", str(corpus), "--m", "150", "--k", "4", "--t", "2",
         "--s", "2", "--v", "30", "--l-vocab", "12", "--n-words", "40",
         "--n-labels", "2", "--seed", "1", "--config", str(cfg)])
    run(["train", "--corpus", str(corpus), "--model", str(model),
         "--k", "4", "--t", "2", "--s", "2", "--v", "30", "--seed", "0",
         "--max-sweeps", "40", "--config", str(cfg)])
    run(["evaluate", "--corpus", str(corpus), "--out", str(workdir / "eval.tsv"),
         "--splits", "2", "--seeds", "2", "--k", "4", "--t", "2", "--s", "2",
         "--v", "28", "--max-sweeps", "25", "--config", str(cfg)])
    run(["predict", "--model", str(model), "--corpus", str(corpus)])
    run(["generate", "--model", str(model), "--label", "syn-000",
         "--out", str(workdir / "syn-000.svg")])
    print(f"artifacts in {workdir}/")


if __name__ == "__main__":
    main()
