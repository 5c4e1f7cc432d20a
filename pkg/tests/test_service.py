"""Annotation service tests: session lifecycle, durability, equivalence."""

import numpy as np
import pytest
from fastapi.testclient import TestClient

from alogit.glm import mu
from alogit.learner import LearnerConfig, Pool, ReplayOracle, run
from alogit.selection import SelectionConfig
from alogit.service import create_app, rebuild_session, SessionStore
from alogit.stopping import StoppingConfig


def make_features(seed=0, n=200, p=3):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, p))


def make_labels(features, beta, seed=1):
    rng = np.random.default_rng(seed)
    return (rng.random(len(features)) < mu(features @ np.asarray(beta))).astype(int)


BASE_CONFIG = {"d": 0.5, "n0": 8, "seed": 5, "rho": 0.2}


@pytest.fixture()
def client(tmp_path):
    app = create_app(tmp_path / "store")
    with TestClient(app) as c:
        yield c


def create(client, features, config=None):
    response = client.post(
        "/sessions",
        json={"features": features.tolist(), "config": config or dict(BASE_CONFIG)},
    )
    assert response.status_code == 201, response.text
    return response.json()["session_id"]


class TestSessionCreation:
    def test_created_with_id(self, client):
        sid = create(client, make_features())
        assert isinstance(sid, str) and sid

    def test_distinct_ids(self, client):
        features = make_features()
        assert create(client, features) != create(client, features)

    def test_covariate_dim_mismatch_400(self, client):
        features = make_features(p=3)
        response = client.post(
            "/sessions",
            json={"features": features.tolist(),
                  "config": {**BASE_CONFIG, "covariate_dim": 5}},
        )
        assert response.status_code == 400
        assert response.json()["field"] == "covariate_dim"

    def test_invalid_config_400(self, client):
        response = client.post(
            "/sessions",
            json={"features": make_features().tolist(),
                  "config": {**BASE_CONFIG, "rho": 5.0}},
        )
        assert response.status_code == 400
        assert response.json()["code"] == "invalid_config"

    def test_unknown_config_field_400(self, client):
        response = client.post(
            "/sessions",
            json={"features": make_features().tolist(),
                  "config": {**BASE_CONFIG, "bogus_knob": 1}},
        )
        assert response.status_code == 400
        assert response.json()["field"] == "bogus_knob"

    def test_fresh_state(self, client):
        sid = create(client, make_features())
        state = client.get(f"/sessions/{sid}/state").json()
        assert state["n_labeled"] == 0
        assert not state["stopped"]
        assert state["beta_hat"] is None


class TestQueryAndLabel:
    def test_first_query_is_bootstrap(self, client):
        sid = create(client, make_features())
        body = client.get(f"/sessions/{sid}/query").json()
        assert body["bootstrap"] is True
        assert len(body["features"]) == 3

    def test_query_idempotent(self, client):
        sid = create(client, make_features())
        first = client.get(f"/sessions/{sid}/query").json()
        second = client.get(f"/sessions/{sid}/query").json()
        assert first == second

    def test_label_advances(self, client):
        sid = create(client, make_features())
        q = client.get(f"/sessions/{sid}/query").json()
        state = client.post(
            f"/sessions/{sid}/labels",
            json={"subject_id": q["subject_id"], "label": 1},
        ).json()
        assert state["n_labeled"] == 1
        assert state["pending_subject_id"] != q["subject_id"]

    def test_stale_subject_409(self, client):
        sid = create(client, make_features())
        q = client.get(f"/sessions/{sid}/query").json()
        wrong = (q["subject_id"] + 1) % 200
        response = client.post(
            f"/sessions/{sid}/labels", json={"subject_id": wrong, "label": 0}
        )
        assert response.status_code == 409
        assert response.json()["code"] == "stale_subject"

    def test_non_binary_label_422(self, client):
        sid = create(client, make_features())
        q = client.get(f"/sessions/{sid}/query").json()
        response = client.post(
            f"/sessions/{sid}/labels", json={"subject_id": q["subject_id"], "label": 2}
        )
        assert response.status_code == 422

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/nope/query").status_code == 404
        assert client.get("/sessions/nope/state").status_code == 404
        assert client.post("/sessions/nope/labels",
                           json={"subject_id": 0, "label": 1}).status_code == 404

    def test_healthz(self, client):
        body = client.get("/healthz").json()
        assert body["status"] == "ok"


def drive_to_completion(client, sid, labels, max_iter=500):
    """Label whatever the service asks for until it reports stopped."""
    for _ in range(max_iter):
        q = client.get(f"/sessions/{sid}/query").json()
        if q.get("stopped"):
            return q["state"]
        subject = q["subject_id"]
        response = client.post(
            f"/sessions/{sid}/labels",
            json={"subject_id": subject, "label": int(labels[subject])},
        )
        assert response.status_code == 200, response.text
    raise AssertionError("session did not stop")


class TestFullLoop:
    def test_runs_to_stopped_and_conflicts_after(self, client):
        features = make_features(seed=3, n=300)
        labels = make_labels(features, [1.5, -1.0, 0.0], seed=4)
        sid = create(client, features, {**BASE_CONFIG, "d": 0.9})
        state = drive_to_completion(client, sid, labels)
        assert state["stopped"] is True
        assert state["n_labeled"] >= 8
        # terminal: any further label attempt conflicts
        response = client.post(f"/sessions/{sid}/labels",
                               json={"subject_id": 0, "label": 1})
        assert response.status_code == 409
        # query keeps returning the stopped notice
        assert client.get(f"/sessions/{sid}/query").json()["stopped"] is True

    def test_history_tracks_threshold(self, client):
        features = make_features(seed=5, n=300)
        labels = make_labels(features, [1.0, 1.0, -1.0], seed=6)
        sid = create(client, features, {**BASE_CONFIG, "d": 0.9})
        state = drive_to_completion(client, sid, labels)
        hist = state["history"]
        assert len(hist) >= 1
        assert all(row["n"] >= 8 for row in hist)
        assert hist[-1]["nu"] is not None

    def test_max_steps_terminates(self, client):
        features = make_features(seed=7, n=120)
        labels = make_labels(features, [0.5, 0.5, 0.5], seed=8)
        sid = create(client, features,
                     {**BASE_CONFIG, "d": 1e-6, "max_steps": 30})
        state = drive_to_completion(client, sid, labels)
        assert state["n_labeled"] == 30


class TestDurability:
    def test_crash_recovery_resumes(self, tmp_path):
        store = tmp_path / "store"
        features = make_features(seed=9, n=250)
        labels = make_labels(features, [1.0, -0.5, 0.2], seed=10)

        with TestClient(create_app(store)) as client:
            sid = create(client, features)
            for _ in range(12):
                q = client.get(f"/sessions/{sid}/query").json()
                if q.get("stopped"):
                    break
                client.post(f"/sessions/{sid}/labels",
                            json={"subject_id": q["subject_id"],
                                  "label": int(labels[q["subject_id"]])})
            before = client.get(f"/sessions/{sid}/state").json()
            pending_before = client.get(f"/sessions/{sid}/query").json()

        # simulate a crash: new process, same store
        with TestClient(create_app(store)) as reborn:
            after = reborn.get(f"/sessions/{sid}/state").json()
            assert after == before
            assert reborn.get(f"/sessions/{sid}/query").json() == pending_before
            # the resumed session still accepts labels
            q = reborn.get(f"/sessions/{sid}/query").json()
            if not q.get("stopped"):
                response = reborn.post(
                    f"/sessions/{sid}/labels",
                    json={"subject_id": q["subject_id"],
                          "label": int(labels[q["subject_id"]])},
                )
                assert response.status_code == 200

    def test_event_log_replay_matches_live(self, tmp_path):
        store_dir = tmp_path / "store"
        features = make_features(seed=11, n=220)
        labels = make_labels(features, [0.8, -0.8, 0.1], seed=12)
        with TestClient(create_app(store_dir)) as client:
            sid = create(client, features)
            for _ in range(10):
                q = client.get(f"/sessions/{sid}/query").json()
                if q.get("stopped"):
                    break
                client.post(f"/sessions/{sid}/labels",
                            json={"subject_id": q["subject_id"],
                                  "label": int(labels[q["subject_id"]])})
            live = client.get(f"/sessions/{sid}/state").json()
        rebuilt = rebuild_session(sid, SessionStore(store_dir))
        assert rebuilt.state_view() == live

    def test_exactly_once_labeling_in_log(self, tmp_path):
        store_dir = tmp_path / "store"
        features = make_features(seed=13, n=220)
        labels = make_labels(features, [1.0, 0.0, 0.0], seed=14)
        with TestClient(create_app(store_dir)) as client:
            sid = create(client, features)
            for _ in range(15):
                q = client.get(f"/sessions/{sid}/query").json()
                if q.get("stopped"):
                    break
                client.post(f"/sessions/{sid}/labels",
                            json={"subject_id": q["subject_id"],
                                  "label": int(labels[q["subject_id"]])})
        events = SessionStore(store_dir).read(sid)
        labeled = [e["subject_id"] for e in events if e["type"] == "label"]
        assert len(labeled) == len(set(labeled))


class TestOfflineOnlineEquivalence:
    def test_replayed_labels_reproduce_offline_run(self, tmp_path):
        features = make_features(seed=15, n=400)
        labels = make_labels(features, [1.2, -0.9, 0.0], seed=16)
        config = LearnerConfig(
            selection=SelectionConfig(rho=0.2),
            stopping=StoppingConfig(d=0.8, n0=8),
            seed=21,
        )
        pool = Pool(features=features.copy(), labels=labels.copy())
        report = run(pool, config, ReplayOracle(labels))
        recorded = [(i, int(labels[i])) for i in pool.active_order]

        app = create_app(tmp_path / "store")
        with TestClient(app) as client:
            sid = create(client, features,
                         {"d": 0.8, "n0": 8, "seed": 21, "rho": 0.2})
            for subject, label in recorded:
                q = client.get(f"/sessions/{sid}/query").json()
                assert not q.get("stopped")
                assert q["subject_id"] == subject
                client.post(f"/sessions/{sid}/labels",
                            json={"subject_id": subject, "label": label})
            final = client.get(f"/sessions/{sid}/state").json()

        assert final["stopped"] is True
        assert final["n_labeled"] == report.N
        assert final["p0_hat"] == report.p0_hat
        np.testing.assert_allclose(final["beta_hat"], report.beta_hat, atol=1e-12)
