"""Disease-symptom knowledge bases and synthetic patient generation.

A knowledge base lists diseases together with the marginal probability of
each associated symptom. Synthetic patients are drawn by picking a disease
uniformly and running an independent Bernoulli trial per profile symptom;
draws with no positive symptom are redrawn (the self-report requires at
least one).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError

MAX_RESAMPLE_ATTEMPTS = 1000


@dataclass
class KnowledgeBase:
    """Ordered disease/symptom catalogs plus per-disease symptom marginals.

    ``profiles[d]`` is a list of ``(symptom_index, probability)`` pairs with
    probabilities in (0, 1].
    """

    diseases: list[str]
    symptoms: list[str]
    profiles: list[list[tuple[int, float]]]

    @property
    def n_diseases(self) -> int:
        return len(self.diseases)

    @property
    def n_symptoms(self) -> int:
        return len(self.symptoms)

    def validate(self) -> "KnowledgeBase":
        if not self.diseases:
            raise ValidationError("knowledge base has no diseases")
        if not self.symptoms:
            raise ValidationError("knowledge base has no symptoms")
        if len(set(self.diseases)) != len(self.diseases):
            dup = _first_duplicate(self.diseases)
            raise ValidationError(f"duplicate disease id: {dup!r}")
        if len(set(self.symptoms)) != len(self.symptoms):
            dup = _first_duplicate(self.symptoms)
            raise ValidationError(f"duplicate symptom id: {dup!r}")
        if len(self.profiles) != len(self.diseases):
            raise ValidationError("profiles and diseases differ in length")
        for d, profile in enumerate(self.profiles):
            seen = set()
            for idx, prob in profile:
                if not 0 <= idx < self.n_symptoms:
                    raise ValidationError(
                        f"disease {self.diseases[d]!r}: symptom index {idx} out of range"
                    )
                if idx in seen:
                    raise ValidationError(
                        f"disease {self.diseases[d]!r}: duplicate symptom "
                        f"{self.symptoms[idx]!r}"
                    )
                seen.add(idx)
                if not 0.0 < prob <= 1.0:
                    raise ValidationError(
                        f"disease {self.diseases[d]!r}, symptom {self.symptoms[idx]!r}: "
                        f"probability {prob} outside (0, 1]"
                    )
        return self

    def symptom_index(self, symptom_id: str) -> int:
        try:
            return self.symptoms.index(symptom_id)
        except ValueError:
            raise ValidationError(f"unknown symptom id: {symptom_id!r}") from None

    def to_json_dict(self) -> dict:
        # the explicit symptom list pins index assignment across reloads
        return {
            "symptoms": list(self.symptoms),
            "diseases": [
                {
                    "id": d,
                    "symptoms": [
                        {"id": self.symptoms[i], "prob": p} for i, p in profile
                    ],
                }
                for d, profile in zip(self.diseases, self.profiles)
            ],
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2))


@dataclass
class PatientRecord:
    """One synthetic patient: true disease, positive symptoms, self report."""

    disease_index: int
    positive_symptoms: frozenset[int]
    self_report: int

    def __post_init__(self):
        if not self.positive_symptoms:
            raise ValidationError("patient record has no positive symptoms")
        if self.self_report not in self.positive_symptoms:
            raise ValidationError("self_report must be a positive symptom")


@dataclass
class DatasetSplit:
    """Train/validation/test record lists sampled from one knowledge base."""

    train: list[PatientRecord]
    validation: list[PatientRecord]
    test: list[PatientRecord]
    seed: int = 0
    extra: dict = field(default_factory=dict)


def _first_duplicate(items):
    seen = set()
    for x in items:
        if x in seen:
            return x
        seen.add(x)
    return None


def load_knowledge_base(path) -> KnowledgeBase:
    """Load and validate a knowledge base from its JSON file format.

    An optional top-level ``symptoms`` list pins the symptom index
    assignment (required for a faithful save/load round trip); without it,
    indices follow first appearance across the disease profiles. Disease
    indices follow file order either way.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed JSON: {exc}") from exc
    if not isinstance(raw, dict) or "diseases" not in raw:
        raise ValidationError(f"{path}: expected a top-level 'diseases' list")

    diseases: list[str] = []
    symptoms: list[str] = []
    sym_index: dict[str, int] = {}
    pinned = "symptoms" in raw
    if pinned:
        if not isinstance(raw["symptoms"], list):
            raise ValidationError(f"{path}: 'symptoms' must be a list of ids")
        for sid in raw["symptoms"]:
            sid = str(sid)
            if sid in sym_index:
                raise ValidationError(f"{path}: duplicate symptom id: {sid!r}")
            sym_index[sid] = len(symptoms)
            symptoms.append(sid)

    profiles: list[list[tuple[int, float]]] = []
    for entry in raw["diseases"]:
        if "id" not in entry:
            raise ValidationError(f"{path}: disease entry missing 'id'")
        diseases.append(str(entry["id"]))
        profile = []
        for s in entry.get("symptoms", []):
            if "id" not in s or "prob" not in s:
                raise ValidationError(
                    f"{path}: disease {entry['id']!r}: symptom entry needs 'id' and 'prob'"
                )
            sid = str(s["id"])
            if sid not in sym_index:
                if pinned:
                    raise ValidationError(
                        f"{path}: disease {entry['id']!r}: symptom {sid!r} "
                        "missing from the top-level 'symptoms' list"
                    )
                sym_index[sid] = len(symptoms)
                symptoms.append(sid)
            profile.append((sym_index[sid], float(s["prob"])))
        profiles.append(profile)

    return KnowledgeBase(diseases, symptoms, profiles).validate()


def sample_patient(kb: KnowledgeBase, rng: np.random.Generator) -> PatientRecord:
    """Draw one patient record.

    The disease is uniform over the catalog. Symptom draws are redrawn for
    the same disease until at least one comes up positive, so the disease
    marginal stays exactly uniform.
    """
    disease = int(rng.integers(kb.n_diseases))
    profile = kb.profiles[disease]
    if not profile:
        raise ValidationError(
            f"disease {kb.diseases[disease]!r} has an empty symptom profile"
        )
    probs = np.array([p for _, p in profile])
    indices = np.array([i for i, _ in profile])
    for _ in range(MAX_RESAMPLE_ATTEMPTS):
        hits = rng.random(len(probs)) < probs
        if hits.any():
            positives = frozenset(int(i) for i in indices[hits])
            self_report = int(rng.choice(np.sort(indices[hits])))
            return PatientRecord(disease, positives, self_report)
    raise ValidationError(
        f"disease {kb.diseases[disease]!r}: no positive draw in "
        f"{MAX_RESAMPLE_ATTEMPTS} attempts; check its marginals"
    )


def generate_dataset(
    kb: KnowledgeBase,
    n_train: int,
    n_valid: int,
    n_test: int,
    seed: int,
    out_dir=None,
) -> DatasetSplit:
    """Sample three independent record lists; optionally write them as JSONL.

    When ``out_dir`` is given, writes ``train.jsonl``, ``valid.jsonl``,
    ``test.jsonl`` and a copy of the knowledge base (``kb.json``) so the
    directory is self-contained for downstream training commands.
    """
    streams = np.random.SeedSequence(seed).spawn(3)
    lists = []
    for stream, count in zip(streams, (n_train, n_valid, n_test)):
        rng = np.random.Generator(np.random.PCG64(stream))
        lists.append([sample_patient(kb, rng) for _ in range(count)])
    split = DatasetSplit(*lists, seed=seed)

    if out_dir is not None:
        out_dir = Path(out_dir)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            kb.save(out_dir / "kb.json")
            for name, records in (
                ("train.jsonl", split.train),
                ("valid.jsonl", split.validation),
                ("test.jsonl", split.test),
            ):
                write_records(records, out_dir / name, kb)
        except OSError as exc:
            raise ValidationError(f"failed writing dataset under {out_dir}: {exc}") from exc
    return split


def record_to_json_dict(record: PatientRecord, kb: KnowledgeBase) -> dict:
    return {
        "disease": kb.diseases[record.disease_index],
        "positives": [kb.symptoms[i] for i in sorted(record.positive_symptoms)],
        "self_report": kb.symptoms[record.self_report],
    }


def record_from_json_dict(obj: dict, kb: KnowledgeBase) -> PatientRecord:
    try:
        disease = kb.diseases.index(obj["disease"])
    except ValueError:
        raise ValidationError(f"unknown disease id: {obj['disease']!r}") from None
    positives = frozenset(kb.symptom_index(s) for s in obj["positives"])
    return PatientRecord(disease, positives, kb.symptom_index(obj["self_report"]))


def write_records(records, path, kb: KnowledgeBase) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(record_to_json_dict(rec, kb)) + "\n")


def read_records(path, kb: KnowledgeBase) -> list[PatientRecord]:
    records = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{line_no}: malformed JSON: {exc}") from exc
            records.append(record_from_json_dict(obj, kb))
    return records


def load_dataset_dir(data_dir) -> tuple[KnowledgeBase, DatasetSplit]:
    """Read a directory produced by :func:`generate_dataset`."""
    data_dir = Path(data_dir)
    kb = load_knowledge_base(data_dir / "kb.json")
    split = DatasetSplit(
        train=read_records(data_dir / "train.jsonl", kb),
        validation=read_records(data_dir / "valid.jsonl", kb),
        test=read_records(data_dir / "test.jsonl", kb),
    )
    return kb, split


def random_knowledge_base(
    n_diseases: int,
    n_symptoms: int,
    profile_size: tuple[int, int],
    prob_range: tuple[float, float],
    seed: int,
) -> KnowledgeBase:
    """Generate a random knowledge base for synthetic benchmarks.

    Each disease gets a uniform number of profile symptoms in
    ``profile_size`` (inclusive), drawn without replacement, with marginals
    uniform over ``prob_range``.
    """
    rng = np.random.default_rng(seed)
    lo, hi = profile_size
    if not 1 <= lo <= hi <= n_symptoms:
        raise ValidationError(f"bad profile size range {profile_size}")
    diseases = [f"disease_{d:03d}" for d in range(n_diseases)]
    symptoms = [f"symptom_{s:03d}" for s in range(n_symptoms)]
    profiles = []
    for _ in range(n_diseases):
        k = int(rng.integers(lo, hi + 1))
        chosen = np.sort(rng.choice(n_symptoms, size=k, replace=False))
        probs = rng.uniform(prob_range[0], prob_range[1], size=k)
        profiles.append([(int(i), float(p)) for i, p in zip(chosen, probs)])
    return KnowledgeBase(diseases, symptoms, profiles).validate()
