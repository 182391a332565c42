"""Score a trained policy against the reference baselines and ablations.

Run demos/04_train_policy.py first; this script reloads its checkpoints,
regenerates the same dataset from the saved configuration, and compares
the greedy policy with random inquiries at the same question budget and
with the inquiry-free full-observation ceiling. It then retrains the two
ablated variants at reduced scale to show the ordering between them.
"""

import json
import math
import sys
import tempfile
from pathlib import Path

import numpy as np

from symcheck import (Agent, PartialVae, TrainerConfig, baseline_full_observation,
                      baseline_random, evaluate, generate_dataset,
                      load_knowledge_base, run_ablation)
from symcheck.diagnoser import Diagnoser

ARTIFACTS = Path(__file__).resolve().parent / "_artifacts" / "run"


def main():
    if not (ARTIFACTS / "agent.pt").exists():
        sys.exit("no checkpoints found; run demos/04_train_policy.py first")

    kb = load_knowledge_base(ARTIFACTS / "kb.json")
    config = TrainerConfig.from_dict(json.loads((ARTIFACTS / "config.json").read_text()))
    dataset = generate_dataset(kb, config.n_train, config.n_valid,
                               config.n_test, seed=config.data_seed)
    agent = Agent.load(ARTIFACTS / "agent.pt")
    diagnoser = Diagnoser.load(ARTIFACTS / "diagnoser.pt")
    vae = PartialVae.load(ARTIFACTS / "vae.pt")

    report = evaluate(agent, diagnoser, vae, dataset.test)
    budget = int(math.ceil(report.mean_turns))
    rand = baseline_random(dataset.test, diagnoser, vae, budget,
                           np.random.default_rng(0))
    ceiling = baseline_full_observation(dataset.test, diagnoser)

    print(f"{'':24}  top1   top3   top5   questions")
    for name, rep in (("trained policy", report),
                      (f"random, budget {budget}", rand),
                      ("full observation", ceiling)):
        turns = "-" if rep.mean_turns is None else f"{rep.mean_turns:.2f}"
        print(f"{name:<24}  {rep.top_k[1]:.3f}  {rep.top_k[3]:.3f}  "
              f"{rep.top_k[5]:.3f}  {turns}")

    # quick ablation at reduced scale, reusing the pretrained components
    small = TrainerConfig.from_dict({**config.to_dict(),
                                     "total_iterations": 15, "eval_every": 5})
    with tempfile.TemporaryDirectory() as tmp:
        reports = run_ablation(small, kb, tmp, dataset=dataset,
                               diagnoser=diagnoser, vae=vae, eval_limit=500)
    print("\nablation (15 iterations each, 500 eval records):")
    for variant, rep in reports.items():
        print(f"  {variant:<20} top1 {rep.top_k[1]:.3f}")


if __name__ == "__main__":
    main()
