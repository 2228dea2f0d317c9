"""Generate a seeded synthetic corpus and print its split/label counts.

    python3 scripts/make_synthetic_corpus.py out/corpus --per-class 5 --seed 0
"""

import argparse
import json

from mania_pipe.corpus import SynthConfig, generate_synthetic_corpus, split_summary


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("out")
    ap.add_argument("--per-class", type=int, default=5, help="recordings per class in each split")
    ap.add_argument("--task-seconds", type=float, default=3.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    cfg = SynthConfig(n_per_class_per_split={s: args.per_class for s in ("Train", "Dev", "Test")},
                      task_durations_s=[args.task_seconds] * 7, seed=args.seed)
    m = generate_synthetic_corpus(cfg, args.out)
    s = split_summary(m)
    print(json.dumps({"per_split": s.per_split, "per_label": s.per_label, "segments": len(m.segments)}, indent=2))


if __name__ == "__main__":
    main()
