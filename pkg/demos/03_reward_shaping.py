"""Walk one inquiry episode and print the shaped reward at each step.

Each inquiry is scored by how much confirming that symptom would move the
diagnoser toward the true disease (the absolute change in KL divergence
from the one-hot label). Denied symptoms only earn that effect weighted
by how likely the symptom looked beforehand, minus a constant length
penalty, so the agent is pushed toward questions that are both likely
and informative. Ending the episode earns +1 or -1 for the diagnosis.
"""

import numpy as np

from symcheck import (Action, DiagnoserTrainConfig, RewardConfig,
                      VaeConfig, VaeTrainConfig, generate_dataset,
                      random_knowledge_base, reset, sample_patient,
                      shape_reward, step, train_diagnoser, train_vae)
from symcheck.rewards import final_diagnosis


def main():
    kb = random_knowledge_base(8, 20, (3, 6), (0.3, 0.9), seed=11)
    dataset = generate_dataset(kb, 8000, 1000, 1000, seed=1)
    diagnoser = train_diagnoser(kb, dataset, DiagnoserTrainConfig(epochs=6, seed=0))
    vae = train_vae(kb, dataset, VaeTrainConfig(
        epochs=8, seed=0,
        model=VaeConfig(latent_dim=8, embed_dim=8, enc_hidden=(64,), dec_hidden=(64,)),
    ))
    config = RewardConfig(alpha=0.1)

    rng = np.random.default_rng(1)
    record = sample_patient(kb, rng)
    truth = kb.diseases[record.disease_index]
    print(f"patient has {truth!r}; positives "
          f"{sorted(kb.symptoms[s] for s in record.positive_symptoms)}; "
          f"self-report {kb.symptoms[record.self_report]!r}\n")

    state = reset(record, n_max=6, n_symptoms=kb.n_symptoms)
    # one symptom the patient has, one profile symptom they lack, one long shot
    profile = {s for s, _ in kb.profiles[record.disease_index]}
    hit = next(s for s in sorted(record.positive_symptoms)
               if state.obs_vec[s] == 0)
    miss = next(s for s in sorted(profile)
                if s not in record.positive_symptoms and state.obs_vec[s] == 0)
    long_shot = next(i for i in range(kb.n_symptoms)
                     if i not in profile and state.obs_vec[i] == 0)
    for sym in (hit, miss, long_shot):
        action = Action.inquire(sym)
        result = step(state, action, record)
        r = shape_reward(state, action, result.next_state, record,
                         diagnoser, vae, config)
        print(f"ask {kb.symptoms[sym]!r:>14}: answer {result.answer:<8} "
              f"reward {r:+.4f}")
        state = result.next_state

    action = Action.terminate()
    result = step(state, action, record)
    r_end = shape_reward(state, action, result.next_state, record,
                         diagnoser, vae, config)
    dist = final_diagnosis(result.next_state, diagnoser, vae)
    guess = kb.diseases[int(np.argmax(dist))]
    print(f"\nterminate: diagnosis {guess!r} "
          f"(p={dist.max():.2f}), terminal reward {r_end:+.0f}")


if __name__ == "__main__":
    main()
