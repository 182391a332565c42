"""Train an inquiry policy end to end and save the checkpoints.

The staged pipeline samples a dataset, pretrains the generative model and
the diagnoser, then runs PPO with the information-shaped rewards. The
actor reuses the pretrained encoder (kept frozen) and decoder, so the
policy starts from a reasonable belief state instead of from scratch.

The artifacts land in demos/_artifacts/run; the evaluation and service
demos pick them up from there.
"""

from pathlib import Path

from symcheck import (DiagnoserTrainConfig, TrainerConfig, VaeConfig,
                      VaeTrainConfig, random_knowledge_base, train)

ARTIFACTS = Path(__file__).resolve().parent / "_artifacts" / "run"


def main():
    kb = random_knowledge_base(10, 24, (3, 6), (0.3, 0.9), seed=5)
    config = TrainerConfig(
        variant="full", seed=0, n_max=6,
        total_iterations=40, transitions_per_iter=1024, batch_size=256,
        ppo_epochs=4, n_envs=128, actor_lr=3e-4, critic_lr=3e-4,
        n_train=12000, n_valid=1500, n_test=1500, data_seed=5,
        eval_records=400, eval_every=5,
        vae=VaeTrainConfig(
            epochs=8, seed=0,
            model=VaeConfig(latent_dim=8, embed_dim=8,
                            enc_hidden=(64,), dec_hidden=(64,)),
        ),
        diagnoser=DiagnoserTrainConfig(epochs=8, seed=0, hidden=(128,)),
    )
    result = train(config, kb, ARTIFACTS)
    kb.save(ARTIFACTS / "kb.json")

    print("saved:", ", ".join(sorted(p.name for p in ARTIFACTS.iterdir())))
    print("\niter  mean_reward  mean_len  top1")
    for entry in result.metrics[:: 5] + [result.metrics[-1]]:
        print(f"{entry['iter']:>4}  {entry['mean_reward']:>11.3f}  "
              f"{entry['mean_len']:>8.2f}  {entry['top1']:.3f}")


if __name__ == "__main__":
    main()
