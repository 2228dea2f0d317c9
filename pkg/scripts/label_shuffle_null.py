"""Train on label-shuffled data over several seeds to show the chance-level floor.

    python3 scripts/label_shuffle_null.py --seeds 10 --tasks 6,7
"""

import argparse
import tempfile

import numpy as np

from mania_pipe.corpus import SynthConfig, generate_synthetic_corpus
from mania_pipe.evaluation import ExperimentSpec, PipelineParams, extract_corpus_features, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--tasks", default="6,7")
    args = ap.parse_args()
    tasks = tuple(int(t) for t in args.tasks.split(","))
    with tempfile.TemporaryDirectory() as d:
        m = generate_synthetic_corpus(SynthConfig(), d)
        feats = extract_corpus_features(m)
        real = run_experiment(ExperimentSpec(tasks), m, feats).uar
        null = [run_experiment(ExperimentSpec(tasks, params=PipelineParams(seed=s), shuffle_labels=True),
                               m, feats).uar for s in range(args.seeds)]
    print(f"true labels: UAR {real:.3f}")
    print("shuffled:    " + " ".join(f"{u:.3f}" for u in null))
    print(f"shuffled mean {np.mean(null):.3f} +- {np.std(null):.3f} (chance 0.333)")


if __name__ == "__main__":
    main()
