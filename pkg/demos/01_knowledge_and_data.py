"""Build a synthetic disease-symptom knowledge base and sample patients.

A knowledge base maps each disease to a profile of symptoms with
conditional probabilities. Patients are sampled by picking a disease
uniformly, then flipping each profile symptom independently; the
self-report is one of the patient's positive symptoms, so every record
resamples until the symptom set is non-empty.
"""

import collections
import tempfile
from pathlib import Path

import numpy as np

from symcheck import (generate_dataset, load_dataset_dir,
                      random_knowledge_base, sample_patient)


def main():
    kb = random_knowledge_base(
        n_diseases=8, n_symptoms=20, profile_size=(3, 6),
        prob_range=(0.3, 0.9), seed=11,
    )
    print(f"knowledge base: {kb.n_diseases} diseases, {kb.n_symptoms} symptoms")
    disease = kb.diseases[0]
    profile = kb.profiles[0]
    pretty = ", ".join(f"{kb.symptoms[s]}@{p:.2f}" for s, p in profile)
    print(f"profile of {disease!r}: {pretty}")

    rng = np.random.default_rng(0)
    records = [sample_patient(kb, rng) for _ in range(5000)]
    rec = records[0]
    print(f"\none patient: disease={kb.diseases[rec.disease_index]!r} "
          f"positives={sorted(rec.positive_symptoms)} "
          f"self_report={rec.self_report}")

    # empirical symptom frequencies track the profile probabilities
    by_disease = collections.defaultdict(list)
    for r in records:
        by_disease[r.disease_index].append(r)
    sym, p_true = profile[0]
    hits = sum(sym in r.positive_symptoms for r in by_disease[0])
    print(f"empirical P({kb.symptoms[sym]!r} | {disease!r}) = "
          f"{hits / len(by_disease[0]):.3f} (profile says {p_true:.2f})")

    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "data"
        dataset = generate_dataset(kb, 2000, 400, 400, seed=1, out_dir=out)
        print(f"\nwrote {sorted(p.name for p in out.iterdir())}")
        kb2, reloaded = load_dataset_dir(out)
        assert kb2.symptoms == kb.symptoms
        assert reloaded.train[0] == dataset.train[0]
        print(f"reload round trip ok: {len(reloaded.train)} train / "
              f"{len(reloaded.validation)} valid / {len(reloaded.test)} test")


if __name__ == "__main__":
    main()
