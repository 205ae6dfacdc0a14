"""Write the synthetic toy KG and narratives as kg.jsonl / narratives.jsonl."""

import argparse
from pathlib import Path

from noisefacts.corpus import write_kg, write_narratives
from noisefacts.toydata import toy_kg, toy_narratives


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out", type=Path)
    parser.add_argument("--facts", type=int, default=200)
    parser.add_argument("--heads", type=int, default=40)
    parser.add_argument("--contexts", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    kg = toy_kg(args.facts, args.heads, seed=args.seed)
    samples = toy_narratives(kg, args.contexts, seed=args.seed)
    write_kg(args.out / "kg.jsonl", kg.facts)
    write_narratives(args.out / "narratives.jsonl", samples)
    print(f"wrote {len(kg)} facts and {len(samples)} narratives to {args.out}")


if __name__ == "__main__":
    main()
