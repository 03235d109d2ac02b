import argparse
import os
import sys
from dataclasses import replace

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from spatiotemporal.synthetic import SyntheticPlan, expected_supra_counts, write_corpus


def main() -> int:
    parser = argparse.ArgumentParser(description="Write a synthetic tweet corpus with planted structure")
    parser.add_argument("output", help="JSONL path, e.g. data/fixtures/synthetic/corpus.jsonl")
    parser.add_argument("--records", type=int, default=100_000, help="Mapped, in-window records")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--shards", type=int, default=1, help="Split the output over N files")
    args = parser.parse_args()

    plan = replace(SyntheticPlan(), n_mapped=args.records, seed=args.seed)
    paths = write_corpus(args.output, plan, shards=args.shards)
    print(f"Wrote {len(paths)} file(s): {', '.join(str(p) for p in paths)}")
    print(f"Expected supra-region counts: {expected_supra_counts(plan)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
