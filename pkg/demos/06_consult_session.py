"""Drive a consultation with the trained policy, the way the service does.

Run demos/04_train_policy.py first. The session logic is the same one the
HTTP service exposes: the greedy policy picks the next question, the
client answers yes or no, and when the policy terminates (or the turn cap
is reached) the diagnoser ranks the diseases over the VAE-imputed state.

For the real server:  python3 -m symcheck.cli serve --model-dir demos/_artifacts/run
  POST /sessions                {"reports": [{"symptom": <name>, "present": true}]}
  POST /sessions/{id}/answer    {"answer": "yes"|"no", "turn": <turn>}
  GET  /sessions/{id}           resume an earlier session
"""

import sys
from pathlib import Path

from symcheck import load_knowledge_base
from symcheck.service import (ServiceModels, apply_answer, initial_state,
                              next_step)

ARTIFACTS = Path(__file__).resolve().parent / "_artifacts" / "run"


def main():
    if not (ARTIFACTS / "agent.pt").exists():
        sys.exit("no checkpoints found; run demos/04_train_policy.py first")
    models = ServiceModels.load(ARTIFACTS)
    print(f"loaded service models: {len(models.diseases)} diseases, "
          f"{len(models.symptoms)} symptoms, cap {models.n_max} questions\n")

    # scripted patient: has exactly the profile symptoms of one disease
    kb = load_knowledge_base(ARTIFACTS / "kb.json")
    target = 3
    truly_positive = {s for s, _ in kb.profiles[target]}
    print(f"scripted patient follows the profile of {kb.diseases[target]!r}")
    self_report = sorted(truly_positive)[0]
    state = initial_state(models, [(self_report, True)])
    print(f"patient reports {models.symptoms[self_report]!r}")

    pending, diagnosis = next_step(models, state)
    while pending is not None:
        answer = pending in truly_positive
        print(f"  turn {state.turn + 1}: agent asks "
              f"{models.symptoms[pending]!r:>14} -> {'yes' if answer else 'no'}")
        state = apply_answer(state, pending, answer)
        pending, diagnosis = next_step(models, state)

    print("\nranked diagnosis:")
    for entry in diagnosis[:3]:
        print(f"  {entry['disease']:<12} {entry['prob']:6.1%}")


if __name__ == "__main__":
    main()
