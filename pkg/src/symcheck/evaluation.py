"""Evaluation harness: greedy policy rollouts, reference baselines, ablations.

All baselines share the agent's diagnosis pathway so accuracy differences
isolate the inquiry policy itself.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .agent import Agent
from .diagnoser import Diagnoser, masked_states
from .errors import UsageError
from .knowledge import PatientRecord
from .rollouts import VARIANTS, final_diagnosis_batch, greedy_rollouts
from .training import TrainerConfig, train
from .vae import PartialVae, records_to_binary

TOP_KS = (1, 3, 5)


@dataclass
class EvalReport:
    """Accuracy at several cutoffs plus the average number of inquiries."""

    top_k: dict[int, float]
    mean_turns: float | None
    n_records: int

    @property
    def top1(self) -> float:
        return self.top_k[1]

    def to_dict(self) -> dict:
        return {
            "top_k": {str(k): v for k, v in self.top_k.items()},
            "mean_turns": self.mean_turns,
            "n_records": self.n_records,
        }


def top_k_accuracies(probs: np.ndarray, labels, ks=TOP_KS) -> dict[int, float]:
    """Fraction of rows whose true label ranks inside the top k."""
    labels = np.asarray(labels)
    if probs.ndim != 2 or len(labels) != len(probs):
        raise UsageError("probs must be [n, classes] with one label per row")
    true_p = probs[np.arange(len(labels)), labels]
    rank = (probs > true_p[:, None]).sum(axis=1)
    return {int(k): float((rank < k).mean()) for k in ks}


def evaluate(agent: Agent, diagnoser: Diagnoser, vae: PartialVae | None,
             records: list[PatientRecord], n_max: int | None = None,
             batch_size: int = 512) -> EvalReport:
    """Greedy-policy evaluation over a record list."""
    if not records:
        raise UsageError("no records to evaluate")
    agent.check_compatible(diagnoser, vae)
    n_max = agent.n_max if n_max is None else n_max
    finals, turns = greedy_rollouts(
        records, agent, diagnoser, vae, n_max, agent.variant, batch_size
    )
    probs = final_diagnosis_batch(finals, diagnoser, vae, agent.variant)
    labels = [r.disease_index for r in records]
    return EvalReport(
        top_k=top_k_accuracies(probs, labels),
        mean_turns=float(turns.mean()),
        n_records=len(records),
    )


def baseline_random(records: list[PatientRecord], diagnoser: Diagnoser,
                    vae: PartialVae | None, budget: int,
                    rng: np.random.Generator) -> EvalReport:
    """Uniformly random inquiries up to ``budget``, then the usual diagnosis.

    The self-report stays observed; inquiries are sampled without
    replacement from the remaining symptoms.
    """
    if not records:
        raise UsageError("no records to evaluate")
    n_symptoms = len(diagnoser.symptoms)
    budget = min(max(budget, 0), n_symptoms - 1)
    obs = np.zeros((len(records), n_symptoms), dtype=np.int8)
    for i, rec in enumerate(records):
        obs[i, rec.self_report] = 1
        pool = np.delete(np.arange(n_symptoms), rec.self_report)
        for s in rng.permutation(pool)[:budget]:
            obs[i, s] = 1 if int(s) in rec.positive_symptoms else -1
    variant = "full" if vae is not None else "no_vae"
    probs = final_diagnosis_batch(obs, diagnoser, vae, variant)
    labels = [r.disease_index for r in records]
    return EvalReport(
        top_k=top_k_accuracies(probs, labels),
        mean_turns=float(budget),
        n_records=len(records),
    )


def baseline_full_observation(records: list[PatientRecord],
                              diagnoser: Diagnoser) -> EvalReport:
    """Diagnoser accuracy with every symptom observed (inquiry-free ceiling)."""
    if not records:
        raise UsageError("no records to evaluate")
    n_symptoms = len(diagnoser.symptoms)
    x = records_to_binary(records, n_symptoms)
    states = masked_states(x, np.ones_like(x, dtype=bool))
    with torch.no_grad():
        probs = diagnoser.predict_batch(torch.as_tensor(states)).cpu().numpy()
    labels = [r.disease_index for r in records]
    return EvalReport(
        top_k=top_k_accuracies(probs, labels),
        mean_turns=None,
        n_records=len(records),
    )


def run_ablation(config: TrainerConfig, kb_path, out_dir,
                 dataset=None, diagnoser=None, vae=None,
                 eval_limit: int | None = None) -> dict[str, EvalReport]:
    """Train and evaluate every variant under a shared configuration.

    Later variants reuse the dataset and pretrained models from the first
    run, so the comparison isolates the policy-side differences. Writes
    ``ablation.json`` with the per-variant reports.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports: dict[str, EvalReport] = {}
    for variant in VARIANTS:
        cfg = dataclasses.replace(config, variant=variant)
        result = train(
            cfg, kb_path, out / variant, dataset=dataset,
            diagnoser=diagnoser, vae=None if variant == "no_vae" else vae,
        )
        test = result.dataset.test or result.dataset.validation
        if eval_limit:
            test = test[:eval_limit]
        reports[variant] = evaluate(result.agent, result.diagnoser, result.vae, test)
        dataset = result.dataset
        diagnoser = result.diagnoser
        if vae is None and result.vae is not None:
            vae = result.vae
    summary = {v: r.to_dict() for v, r in reports.items()}
    (out / "ablation.json").write_text(json.dumps(summary, indent=2))
    return reports
