"""Consultation service: session lifecycle, validation, persistence,
concurrency, and parity with the in-process policy helpers."""

import threading

import numpy as np
import pytest
from fastapi.testclient import TestClient

from symcheck.service import (ServiceModels, apply_answer, create_app,
                              initial_state, next_step)


@pytest.fixture(scope="module")
def model_dir(tmp_path_factory, tiny_agent, tiny_diagnoser, tiny_vae):
    out = tmp_path_factory.mktemp("svc-models")
    tiny_agent.save(out / "agent.pt")
    tiny_diagnoser.save(out / "diagnoser.pt")
    tiny_vae.save(out / "vae.pt")
    return out


@pytest.fixture()
def client(model_dir, tmp_path):
    app = create_app(model_dir, db_path=tmp_path / "sessions.db")
    with TestClient(app) as c:
        yield c


def start(client, kb, *present_indices):
    reports = [{"symptom": kb.symptoms[i], "present": True}
               for i in present_indices]
    r = client.post("/sessions", json={"reports": reports})
    assert r.status_code == 201, r.text
    return r.json()


def drive_to_completion(client, session, answers="yes"):
    """Answer every question (constant or callable policy) until done."""
    while not session["done"]:
        symptom = session["next"]["symptom"]
        answer = answers if isinstance(answers, str) else answers(symptom)
        r = client.post(f"/sessions/{session['id']}/answer",
                        json={"answer": answer})
        assert r.status_code == 200, r.text
        session = r.json()
    return session


class TestMetadata:
    def test_health(self, client, tiny_kb):
        r = client.get("/health")
        assert r.status_code == 200
        body = r.json()
        assert body["status"] == "ok"
        assert body["variant"] == "full"
        assert body["n_symptoms"] == tiny_kb.n_symptoms
        assert body["n_diseases"] == tiny_kb.n_diseases
        assert body["max_turns"] == 5
        assert body["fingerprints"]["agent"]
        assert body["fingerprints"]["vae"]
        assert body["catalog"] == "/catalog"

    def test_cross_origin_requests_are_allowed(self, client):
        r = client.get("/health", headers={"origin": "http://elsewhere:5173"})
        assert r.headers["access-control-allow-origin"] == "*"
        r = client.options(
            "/sessions",
            headers={
                "origin": "http://elsewhere:5173",
                "access-control-request-method": "POST",
                "access-control-request-headers": "content-type",
            },
        )
        assert r.status_code == 200
        assert "POST" in r.headers["access-control-allow-methods"]

    def test_catalog(self, client, tiny_kb):
        body = client.get("/catalog").json()
        assert body["symptoms"] == tiny_kb.symptoms
        assert body["diseases"] == tiny_kb.diseases
        assert body["max_turns"] == 5


class TestSessionLifecycle:
    def test_create_with_one_report(self, client, tiny_kb):
        body = start(client, tiny_kb, 2)
        assert body["turn"] == 0
        assert body["max_turns"] == 5
        assert body["reports"] == [{"symptom": tiny_kb.symptoms[2],
                                    "present": True}]
        assert body["history"] == []
        assert body["diagnosis"] is None
        assert body["next"] is not None
        assert body["next"]["symptom"] != tiny_kb.symptoms[2]

    def test_create_with_mixed_reports(self, client, tiny_kb):
        reports = [{"symptom": tiny_kb.symptoms[0], "present": True},
                   {"symptom": tiny_kb.symptoms[4], "present": False}]
        r = client.post("/sessions", json={"reports": reports})
        assert r.status_code == 201
        body = r.json()
        assert body["reports"] == reports
        # neither reported symptom can be asked again
        final = drive_to_completion(client, body, answers="no")
        asked = {entry["symptom"] for entry in final["history"]}
        assert tiny_kb.symptoms[0] not in asked
        assert tiny_kb.symptoms[4] not in asked

    def test_create_with_empty_reports(self, client):
        r = client.post("/sessions", json={"reports": []})
        assert r.status_code == 201
        assert r.json()["turn"] == 0

    def test_full_dialogue(self, client, tiny_kb):
        session = start(client, tiny_kb, 0)
        final = drive_to_completion(client, session, answers="no")
        assert final["done"]
        assert final["next"] is None
        assert len(final["history"]) == final["turn"]
        assert final["turn"] <= 5
        diagnosis = final["diagnosis"]
        assert len(diagnosis) == tiny_kb.n_diseases
        probs = [d["prob"] for d in diagnosis]
        assert probs == sorted(probs, reverse=True)
        assert sum(probs) == pytest.approx(1.0, abs=1e-5)
        assert diagnosis[0]["disease"] in tiny_kb.diseases

    def test_get_session_round_trip(self, client, tiny_kb):
        created = start(client, tiny_kb, 1)
        fetched = client.get(f"/sessions/{created['id']}").json()
        assert fetched == created

    def test_sessions_are_independent(self, client, tiny_kb):
        a = start(client, tiny_kb, 0)
        b = start(client, tiny_kb, 0)
        assert a["id"] != b["id"]
        client.post(f"/sessions/{a['id']}/answer", json={"answer": "yes"})
        again = client.get(f"/sessions/{b['id']}").json()
        assert again["turn"] == 0

    def test_list_sessions(self, client, tiny_kb):
        assert client.get("/sessions").json() == {"sessions": []}
        a = start(client, tiny_kb, 0)
        b = start(client, tiny_kb, 1)
        drive_to_completion(client, b, answers="no")
        listing = client.get("/sessions").json()["sessions"]
        assert [s["id"] for s in listing] == [a["id"], b["id"]]
        by_id = {s["id"]: s for s in listing}
        assert by_id[a["id"]]["done"] is False
        assert by_id[b["id"]]["done"] is True
        assert by_id[b["id"]]["turn"] <= by_id[b["id"]]["max_turns"]

    def test_delete_session(self, client, tiny_kb):
        session = start(client, tiny_kb, 0)
        r = client.delete(f"/sessions/{session['id']}")
        assert r.status_code == 204
        assert client.get(f"/sessions/{session['id']}").status_code == 404
        assert client.delete(f"/sessions/{session['id']}").status_code == 404


class TestValidation:
    def test_unknown_symptom_name(self, client):
        r = client.post("/sessions", json={
            "reports": [{"symptom": "no-such-symptom", "present": True}]})
        assert r.status_code == 400

    def test_duplicate_report(self, client, tiny_kb):
        name = tiny_kb.symptoms[0]
        r = client.post("/sessions", json={
            "reports": [{"symptom": name, "present": True},
                        {"symptom": name, "present": False}]})
        assert r.status_code == 400

    def test_missing_body_field(self, client):
        assert client.post("/sessions", json={}).status_code == 422

    def test_malformed_report_entry(self, client, tiny_kb):
        r = client.post("/sessions", json={
            "reports": [{"symptom": tiny_kb.symptoms[0]}]})
        assert r.status_code == 422

    def test_bad_answer_value(self, client, tiny_kb):
        session = start(client, tiny_kb, 0)
        r = client.post(f"/sessions/{session['id']}/answer",
                        json={"answer": "maybe"})
        assert r.status_code == 400

    def test_unknown_session(self, client):
        assert client.get("/sessions/nope").status_code == 404
        r = client.post("/sessions/nope/answer", json={"answer": "yes"})
        assert r.status_code == 404

    def test_answer_after_conclusion(self, client, tiny_kb):
        session = start(client, tiny_kb, 0)
        final = drive_to_completion(client, session)
        r = client.post(f"/sessions/{final['id']}/answer",
                        json={"answer": "yes"})
        assert r.status_code == 409

    def test_stale_turn_rejected(self, client, tiny_kb):
        session = start(client, tiny_kb, 0)
        sid = session["id"]
        ok = client.post(f"/sessions/{sid}/answer",
                         json={"answer": "yes", "turn": 0})
        assert ok.status_code == 200
        stale = client.post(f"/sessions/{sid}/answer",
                            json={"answer": "yes", "turn": 0})
        assert stale.status_code == 409
        current = client.post(f"/sessions/{sid}/answer",
                              json={"answer": "no", "turn": ok.json()["turn"]})
        assert current.status_code == 200


class TestPersistence:
    def test_sessions_survive_restart(self, model_dir, tmp_path, tiny_kb):
        db = tmp_path / "sessions.db"
        with TestClient(create_app(model_dir, db_path=db)) as first:
            session = start(first, tiny_kb, 0)
            sid = session["id"]
            mid = first.post(f"/sessions/{sid}/answer",
                             json={"answer": "yes"}).json()
        with TestClient(create_app(model_dir, db_path=db)) as second:
            resumed = second.get(f"/sessions/{sid}").json()
            assert resumed == mid
            final = drive_to_completion(second, resumed, answers="no")
            assert final["done"]


class TestPolicyParity:
    def test_http_matches_direct_helpers(self, client, model_dir, tiny_kb):
        """The HTTP surface reproduces the in-process helper sequence
        exactly: questions, turns, and diagnosis probabilities."""
        models = ServiceModels.load(model_dir)
        for self_report, answer in ((0, "yes"), (3, "no")):
            session = start(client, tiny_kb, self_report)
            state = initial_state(models, [(self_report, True)])
            pending, diagnosis = next_step(models, state)
            while not session["done"]:
                assert session["next"]["symptom"] == models.symptoms[pending]
                state = apply_answer(state, pending, answer == "yes")
                pending, diagnosis = next_step(models, state)
                session = client.post(
                    f"/sessions/{session['id']}/answer",
                    json={"answer": answer},
                ).json()
            assert pending is None
            assert session["turn"] == state.turn
            assert session["diagnosis"] == diagnosis


class TestConcurrency:
    def test_parallel_answers_stay_consistent(self, client, tiny_kb):
        """Hammering one session from multiple threads loses no answers and
        never corrupts state: each accepted answer advances exactly one
        turn."""
        session = start(client, tiny_kb, 0)
        sid = session["id"]
        statuses = []
        statuses_lock = threading.Lock()

        def worker():
            for _ in range(6):
                current = client.get(f"/sessions/{sid}").json()
                if current["done"]:
                    return
                r = client.post(
                    f"/sessions/{sid}/answer",
                    json={"answer": "no", "turn": current["turn"]},
                )
                with statuses_lock:
                    statuses.append(r.status_code)

        threads = [threading.Thread(target=worker) for _ in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert set(statuses) <= {200, 409}
        final = client.get(f"/sessions/{sid}").json()
        assert len(final["history"]) == final["turn"]
        accepted = statuses.count(200)
        assert accepted == final["turn"]
        if final["done"]:
            assert final["diagnosis"] is not None
