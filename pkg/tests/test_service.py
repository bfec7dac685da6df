import json
from datetime import date, datetime, timezone

import pytest
from fastapi.testclient import TestClient

from epistream.series import DiseaseContext
from epistream.service import create_app
from epistream.store import Store
from epistream.surveillance import Alert
from epistream.labeling import LabelTask
from epistream.ingest import Message


def message_lines(n, text="fever outbreak in Hamburg", start_id=0, ts="2011-05-23T10:00:00Z"):
    return "\n".join(
        json.dumps({"id": f"m{start_id + i:05d}", "ts": ts, "text": text})
        for i in range(n)
    )


def seed_alerts(store):
    alerts = []
    specs = [
        ("ehec", "DE", "2011-05-25", "ears_c1"),
        ("ehec", "DE", "2011-05-26", "farrington"),
        ("ehec", "FR", "2011-06-01", "ears_c1"),
        ("cholera", "KE", "2011-11-10", "ears_c1"),
        ("cholera", "KE", "2011-11-11", "ears_c2"),
    ]
    for disease, country, day, algo in specs:
        alerts.append(
            Alert(
                context=DiseaseContext(disease, country),
                date=date.fromisoformat(day),
                algorithm=algo,
                params="k=3",
                statistic=2.0,
                threshold=5.0,
                observed=9,
            )
        )
    store.append_alerts(alerts)


@pytest.fixture
def client(tmp_path):
    store = Store(tmp_path / "store")
    app = create_app(store)
    return TestClient(app), store


class TestHealth:
    def test_health(self, client):
        c, _ = client
        body = c.get("/health").json()
        assert body["status"] == "ok"
        assert body["messages"] == 0


class TestIngestEndpoint:
    def test_batch_accepted(self, client):
        c, _ = client
        r = c.post("/messages", content=message_lines(100))
        assert r.status_code == 200
        assert r.json()["accepted"] == 100

    def test_idempotent_resubmit(self, client):
        c, _ = client
        c.post("/messages", content=message_lines(100))
        body = c.post("/messages", content=message_lines(100)).json()
        assert body["accepted"] == 0
        assert body["duplicates"] == 100

    def test_mixed_batch_counts(self, client):
        c, _ = client
        lines = message_lines(3) + "\n{broken"
        body = c.post("/messages", content=lines).json()
        assert body == {"accepted": 3, "duplicates": 0, "malformed": 1}

    def test_empty_body_rejected(self, client):
        c, _ = client
        r = c.post("/messages", content="")
        assert r.status_code == 400
        assert r.json()["detail"]["code"] == "bad_body"

    def test_auth_required_when_token_set(self, tmp_path):
        store = Store(tmp_path / "s2")
        c = TestClient(create_app(store, token="sekrit"))
        assert c.post("/messages", content=message_lines(1)).status_code == 401
        ok = c.post(
            "/messages", content=message_lines(1), headers={"Authorization": "Bearer sekrit"}
        )
        assert ok.status_code == 200
        # reads stay open
        assert c.get("/alerts").status_code == 200


class TestAlertQuery:
    def test_country_filter_and_facets(self, client):
        c, store = client
        seed_alerts(store)
        body = c.get("/alerts", params={"country": "DE"}).json()
        assert {a["country"] for a in body["alerts"]} == {"DE"}
        assert body["total"] == 2
        # disease facet is computed within country=DE
        assert body["facets"]["disease"] == {"ehec": 2}
        # country facet ignores its own filter
        assert body["facets"]["country"] == {"DE": 2, "FR": 1, "KE": 2}

    def test_empty_store(self, client):
        c, _ = client
        body = c.get("/alerts").json()
        assert body["alerts"] == [] and body["total"] == 0
        assert body["facets"]["disease"] == {}

    def test_pagination_disjoint_complete(self, tmp_path):
        store = Store(tmp_path / "s3")
        alerts = [
            Alert(
                context=DiseaseContext("ehec", "DE"),
                date=date(2011, 5, 1) + i * date.resolution,
                algorithm="ears_c1",
                params="k=3",
                statistic=1.0,
                threshold=2.0,
                observed=3,
            )
            for i in range(25)
        ]
        store.append_alerts(alerts)
        c = TestClient(create_app(store))
        seen = []
        pages = None
        for page in (1, 2, 3):
            body = c.get("/alerts", params={"page": page, "page_size": 10}).json()
            pages = body["pages"]
            seen.extend(a["alert_id"] for a in body["alerts"])
        assert pages == 3
        assert len(seen) == 25
        assert len(set(seen)) == 25

    def test_bad_range(self, client):
        c, _ = client
        r = c.get("/alerts", params={"from": "2011-06-01", "to": "2011-05-01"})
        assert r.status_code == 400

    def test_text_query(self, client):
        c, store = client
        seed_alerts(store)
        body = c.get("/alerts", params={"q": "cholera"}).json()
        assert body["total"] == 2

    def test_detail_and_404(self, client):
        c, store = client
        seed_alerts(store)
        assert c.get("/alerts/0").json()["alert_id"] == 0
        assert c.get("/alerts/999").status_code == 404

    def test_query_is_pure_function_of_log(self, tmp_path):
        root = tmp_path / "s4"
        store = Store(root)
        seed_alerts(store)
        c1 = TestClient(create_app(store))
        r1 = c1.get("/alerts", params={"country": "KE"}).json()
        c2 = TestClient(create_app(Store(root)))
        r2 = c2.get("/alerts", params={"country": "KE"}).json()
        assert r1 == r2


class TestRankedTweets:
    def test_ranked_panel(self, client):
        c, store = client
        lines = [
            json.dumps({"id": "a1", "ts": "2011-05-24T10:00:00Z", "text": "EHEC cases in Hamburg http://t.co/x"}),
            json.dumps({"id": "a2", "ts": "2011-05-24T11:00:00Z", "text": "ehec worries me"}),
            json.dumps({"id": "a3", "ts": "2011-05-24T12:00:00Z", "text": "pizza party tonight"}),
        ]
        c.post("/messages", content="\n".join(lines))
        seed_alerts(store)
        body = c.get("/alerts/0/tweets", params={"n": 5}).json()
        ids = [t["message_id"] for t in body["tweets"]]
        assert "a1" in ids and "a2" in ids
        assert "a3" not in ids  # never passed the filter
        assert ids[0] == "a1"  # more features -> ranked first
        features = body["tweets"][0]["features"]
        assert features["mc"] and features["loc"] and features["url"]

    def test_context_param(self, client):
        c, store = client
        c.post("/messages", content=message_lines(2, text="cholera in Nairobi", ts="2011-11-09T10:00:00Z"))
        seed_alerts(store)
        cid = c.post(
            "/contexts",
            json={"start": "2011-11-01", "end": "2011-12-31", "conditions": ["cholera"], "locations": ["KE"]},
        ).json()["context_id"]
        body = c.get("/alerts/3/tweets", params={"context": cid}).json()
        assert body["context"] == cid
        assert len(body["tweets"]) == 2

    def test_unknown_context_404(self, client):
        c, store = client
        seed_alerts(store)
        assert c.get("/alerts/0/tweets", params={"context": "c9999"}).status_code == 404


class TestContexts:
    def test_round_trip(self, client):
        c, _ = client
        r = c.post(
            "/contexts",
            json={"start": "2011-05-01", "end": "2011-06-30", "conditions": ["ehec"], "locations": ["DE"]},
        )
        cid = r.json()["context_id"]
        listed = c.get("/contexts").json()["contexts"]
        assert any(x["context_id"] == cid for x in listed)

    def test_validation(self, client):
        c, _ = client
        r = c.post("/contexts", json={"start": "2011-06-01", "end": "2011-05-01", "conditions": ["x"]})
        assert r.status_code == 400
        r = c.post("/contexts", json={"start": "2011-05-01", "end": "2011-06-01", "conditions": []})
        assert r.status_code == 400


def enqueue_tasks(store, n=2):
    tasks = []
    for i in range(n):
        m = Message.from_fields(f"tm{i}", datetime(2011, 5, 1, tzinfo=timezone.utc), f"is this relevant {i}")
        tasks.append(LabelTask(task_id=f"t{i:03d}", message=m, required_judgments=3))
    store.enqueue_tasks(tasks)
    return tasks


class TestLabelQueue:
    def test_queue_listing(self, client):
        c, store = client
        enqueue_tasks(store)
        body = c.get("/labels/queue").json()
        assert body["open_total"] == 2
        assert body["tasks"][0]["task_id"] == "t000"
        assert "guideline" in body

    def test_third_judgment_resolves_and_logs_retrain(self, client):
        c, store = client
        enqueue_tasks(store)
        for w in ("w1", "w2"):
            body = c.post(f"/labels/t000/judgment", json={"worker_id": w, "label": "relevant"}).json()
            assert body["status"] == "open"
        body = c.post("/labels/t000/judgment", json={"worker_id": "w3", "label": "relevant"}).json()
        assert body["status"] == "resolved"
        assert body["resolved_label"] == "relevant"
        assert store.retrain_log  # retrain trigger logged

    def test_conflict_on_resolved(self, client):
        c, store = client
        enqueue_tasks(store)
        for w in ("w1", "w2", "w3"):
            c.post("/labels/t000/judgment", json={"worker_id": w, "label": "relevant"})
        r = c.post("/labels/t000/judgment", json={"worker_id": "w4", "label": "relevant"})
        assert r.status_code == 409

    def test_unknown_task_404(self, client):
        c, _ = client
        r = c.post("/labels/nope/judgment", json={"worker_id": "w1", "label": "relevant"})
        assert r.status_code == 404

    def test_bad_label_400(self, client):
        c, store = client
        enqueue_tasks(store)
        r = c.post("/labels/t000/judgment", json={"worker_id": "w1", "label": "maybe"})
        assert r.status_code == 400

    def test_resolved_counter_moves(self, client):
        c, store = client
        enqueue_tasks(store)
        before = c.get("/labels/queue").json()["resolved_total"]
        for w in ("w1", "w2", "w3"):
            c.post("/labels/t000/judgment", json={"worker_id": w, "label": "irrelevant"})
        after = c.get("/labels/queue").json()
        assert after["resolved_total"] == before + 1
        assert after["open_total"] == 1


class TestSeriesEndpoint:
    def test_series(self, client):
        c, _ = client
        c.post("/messages", content=message_lines(5, text="fever outbreak in Hamburg"))
        body = c.get("/series/fever/DE").json()
        assert body["counts"] == [5]
        assert body["start"] == "2011-05-23"

    def test_unknown_context_404(self, client):
        c, _ = client
        assert c.get("/series/dengue/BR").status_code == 404

    def test_explicit_range_zero_filled(self, client):
        c, _ = client
        c.post("/messages", content=message_lines(2, text="fever outbreak in Hamburg"))
        body = c.get("/series/fever/DE", params={"from": "2011-05-22", "to": "2011-05-25"}).json()
        assert body["counts"] == [0, 2, 0, 0]
