import json

import pytest

from epistream.cli import main
from epistream.store import Store


def run(argv):
    return main(argv)


@pytest.fixture
def sim_dir(tmp_path):
    out = tmp_path / "sim"
    assert run(["simulate", "--preset", "botulism_fr", "--seed", "3", "--out", str(out)]) == 0
    return out


class TestSimulate:
    def test_writes_three_files(self, sim_dir):
        assert (sim_dir / "messages.jsonl").exists()
        assert (sim_dir / "ground_truth.csv").exists()
        assert (sim_dir / "label_key.csv").exists()

    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run(["simulate", "--preset", "ecoli_de", "--seed", "7", "--out", str(a)])
        run(["simulate", "--preset", "ecoli_de", "--seed", "7", "--out", str(b)])
        for name in ("messages.jsonl", "ground_truth.csv", "label_key.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_unknown_preset_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run(["simulate", "--preset", "nope", "--out", str(tmp_path / "x")])
        assert exc.value.code == 2


class TestOfflinePipeline:
    def test_ingest_aggregate_surveil_evaluate(self, sim_dir, tmp_path, capsys):
        store = tmp_path / "store"
        assert run(["ingest", "--in", str(sim_dir / "messages.jsonl"), "--store", str(store)]) == 0
        series_file = tmp_path / "series.csv"
        assert run(
            [
                "aggregate",
                "--disease",
                "botulism",
                "--country",
                "FR",
                "--store",
                str(store),
                "--out",
                str(series_file),
            ]
        ) == 0
        assert series_file.read_text().startswith("date,count")

        alerts_file = tmp_path / "alerts.jsonl"
        assert run(
            [
                "surveil",
                "--algo",
                "farrington",
                "--w",
                "3",
                "--store",
                str(store),
                "--disease",
                "botulism",
                "--country",
                "FR",
                "--out",
                str(alerts_file),
            ]
        ) == 0
        assert alerts_file.exists()
        alerts = [json.loads(ln) for ln in alerts_file.read_text().splitlines()]
        assert alerts, "expected at least one alert on the injected outbreak"

        capsys.readouterr()
        assert run(
            [
                "evaluate",
                "--truth",
                str(sim_dir / "ground_truth.csv"),
                "--alerts",
                str(alerts_file),
                "--json",
            ]
        ) == 0
        rows = json.loads(capsys.readouterr().out)["rows"]
        assert rows[0]["recall"] == 1.0

    def test_surveil_without_history_exits_1(self, tmp_path, capsys):
        store = tmp_path / "store"
        lines = [
            json.dumps({"id": f"m{i}", "ts": f"2011-05-{10 + i:02d}T10:00:00Z", "text": "fever in Hamburg"})
            for i in range(5)
        ]
        infile = tmp_path / "short.jsonl"
        infile.write_text("\n".join(lines))
        run(["ingest", "--in", str(infile), "--store", str(store)])
        code = run(
            ["surveil", "--algo", "c3", "--store", str(store), "--disease", "fever", "--country", "DE"]
        )
        assert code == 1
        assert "13 days" in capsys.readouterr().err

    def test_surveil_from_csv_series(self, tmp_path):
        series_file = tmp_path / "s.csv"
        rows = ["date,count"] + [f"2011-05-{d:02d},2" for d in range(1, 29)]
        rows[15] = "2011-05-15,60"
        series_file.write_text("\n".join(rows) + "\n")
        out = tmp_path / "alerts.jsonl"
        code = run(
            [
                "surveil",
                "--algo",
                "c1",
                "--series",
                str(series_file),
                "--disease",
                "x",
                "--country",
                "Y",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        assert out.read_text().strip()


class TestClassifyAndDrift:
    def test_classify_without_labels_exits_1(self, sim_dir, tmp_path, capsys):
        store = tmp_path / "store"
        run(["ingest", "--in", str(sim_dir / "messages.jsonl"), "--store", str(store)])
        assert run(["classify", "--store", str(store)]) == 1
        assert "crowd/expert" in capsys.readouterr().err

    def test_drift_enqueues_and_audits(self, tmp_path):
        sim = tmp_path / "sim"
        run(["simulate", "--preset", "drift_royal_wedding", "--seed", "1", "--out", str(sim)])
        store_dir = tmp_path / "store"
        run(["ingest", "--in", str(sim / "messages.jsonl"), "--store", str(store_dir)])
        assert run(
            ["drift", "--store", str(store_dir), "--q", "0.05", "--alpha", "0.01", "--strategy", "novelty"]
        ) == 0
        store = Store(store_dir)
        audit = store.drift_audit()
        assert len(audit) == 1
        assert set(audit[0]) == {"week", "vc_accuracy", "p_value", "changed", "n_selected"}
        assert audit[0]["n_selected"] > 0
        assert len(store.tasks) == audit[0]["n_selected"]

    def test_classify_after_crowd_labels(self, tmp_path):
        sim = tmp_path / "sim"
        run(["simulate", "--preset", "drift_royal_wedding", "--seed", "2", "--out", str(sim)])
        store_dir = tmp_path / "store"
        run(["ingest", "--in", str(sim / "messages.jsonl"), "--store", str(store_dir)])
        run(["drift", "--store", str(store_dir), "--q", "0.10", "--strategy", "random"])
        store = Store(store_dir)
        key = {}
        for ln in (sim / "label_key.csv").read_text().splitlines()[1:]:
            mid, label = ln.split(",")
            key[mid] = label
        for task in list(store.tasks.values()):
            for w in ("w1", "w2", "w3"):
                store.add_judgment(task.task_id, w, key[task.message.id])
        del store
        assert run(["classify", "--store", str(store_dir)]) == 0
        store = Store(store_dir)
        assert store.current_model_version() is not None


class TestLdaAndRank:
    def test_lda_saves_topics(self, sim_dir, tmp_path, capsys):
        store_dir = tmp_path / "store"
        run(["ingest", "--in", str(sim_dir / "messages.jsonl"), "--store", str(store_dir)])
        capsys.readouterr()
        assert run(["lda", "--k", "4", "--iters", "30", "--store", str(store_dir), "--json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["n_topics"] == 4
        assert Store(store_dir).load_topics() is not None

    def test_rank_flow(self, sim_dir, tmp_path, capsys):
        store_dir = tmp_path / "store"
        run(["ingest", "--in", str(sim_dir / "messages.jsonl"), "--store", str(store_dir)])
        store = Store(store_dir)
        passed = [r for r in store.messages.values() if r["verdict"] == "pass"][:40]
        key = {}
        for ln in (sim_dir / "label_key.csv").read_text().splitlines()[1:]:
            mid, label = ln.split(",")
            key[mid] = label
        context_file = tmp_path / "ctx.json"
        context_file.write_text(
            json.dumps(
                {"start": "2011-01-01", "end": "2011-12-31", "conditions": ["botulism"], "locations": ["FR"]}
            )
        )
        judgments_file = tmp_path / "judgments.csv"
        rows = ["message_id,context_id,relevance"]
        # contextual relevance is the judge's call, independent of the
        # health-relevance key: mark roughly half useful for the analysis
        for i, rec in enumerate(passed):
            rel = 1 if (key[rec["id"]] == "relevant" and i % 3 != 0) else 0
            rows.append(f"{rec['id']},c0,{rel}")
        judgments_file.write_text("\n".join(rows) + "\n")
        del store
        capsys.readouterr()
        code = run(
            [
                "rank",
                "--context",
                str(context_file),
                "--judgments",
                str(judgments_file),
                "--store",
                str(store_dir),
                "--n",
                "10",
                "--json",
            ]
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert 0.0 <= payload["p_at_n"] <= 1.0
        assert (store_dir / "models" / "ranker.json").exists()


class TestUsage:
    def test_unknown_flag_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            run(["surveil", "--frobnicate"])
        assert exc.value.code == 2

    def test_missing_subcommand_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            run([])
        assert exc.value.code == 2
