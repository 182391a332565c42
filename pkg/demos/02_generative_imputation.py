"""Pretrain the partial-observation generative model and query it.

The model encodes each observed symptom into a Gaussian expert over the
latent space; the posterior is the renormalized product of the experts
with a standard-normal prior, so evidence can be added one symptom at a
time. Decoding the posterior mean yields conditional probabilities for
every unobserved symptom.
"""

import numpy as np

from symcheck import (VaeConfig, VaeTrainConfig, generate_dataset,
                      poe_combine, random_knowledge_base,
                      standard_normal_prior, train_vae)


def main():
    kb = random_knowledge_base(8, 20, (3, 6), (0.3, 0.9), seed=11)
    dataset = generate_dataset(kb, 8000, 1000, 1000, seed=1)
    config = VaeTrainConfig(
        epochs=8, seed=0,
        model=VaeConfig(latent_dim=8, embed_dim=8, enc_hidden=(64,), dec_hidden=(64,)),
    )
    vae = train_vae(kb, dataset, config)
    print(f"trained generative model: latent dim {vae.latent_dim}")

    # posteriors multiply: adding evidence can only sharpen the latent
    sym_a, p_a = kb.profiles[0][0]
    sym_b, _ = kb.profiles[0][1]
    post_one = vae.encode([(sym_a, 1)])
    post_two = vae.encode([(sym_a, 1), (sym_b, 1)])
    print(f"latent variance, one symptom observed:  {post_one.variance.mean():.3f}")
    print(f"latent variance, two symptoms observed: {post_two.variance.mean():.3f}")

    # the same posterior built by hand from the expert factors
    expert_a = vae.encode_expert(1.0, vae.embedding.weight[sym_a])
    expert_b = vae.encode_expert(1.0, vae.embedding.weight[sym_b])
    manual = poe_combine(standard_normal_prior(vae.latent_dim),
                         [expert_a, expert_b])
    assert np.allclose(manual.mean, post_two.mean, atol=1e-6)
    print("product-of-experts combination matches encode()")

    # conditional queries against the empirical co-occurrence rate
    obs = [(sym_a, 1)]
    p_model = vae.conditional_prob(obs, sym_b)
    with_a = [r for r in dataset.train if sym_a in r.positive_symptoms]
    p_data = np.mean([sym_b in r.positive_symptoms for r in with_a])
    name_a, name_b = kb.symptoms[sym_a], kb.symptoms[sym_b]
    print(f"\nP({name_b!r} | {name_a!r} present): model {p_model:.3f}, "
          f"data {p_data:.3f}")

    filled = vae.impute(obs)
    print(f"imputed vector keeps the observation exact: filled[{sym_a}] = "
          f"{filled[sym_a]:+.1f}; unobserved entries lie in (-1, 1), e.g. "
          f"filled[{sym_b}] = {filled[sym_b]:+.3f}")


if __name__ == "__main__":
    main()
