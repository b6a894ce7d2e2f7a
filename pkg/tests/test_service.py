import threading

import numpy as np
import pytest
from fastapi.testclient import TestClient

from gazelex.corpus import document_to_dict
from gazelex.evalharness import split_random
from gazelex.model import ModelConfig, train
from gazelex.pipeline import CorpusAssets, alignment_for_corpus, build_training_windows, condition_corpus
from gazelex.service import ServiceConfig, SessionService, SessionStore, create_app
from gazelex.synthgen import DifficultyConfig, make_corpus

TINY_MODEL = ModelConfig(
    n_p=8, n_k=8, dim=16, n_txt=12, vocab_size=8192, encoder_layers=1,
    encoder_heads=2, knowledge_feat_dim=4, epochs=80, lr_encoder=1e-2, seed=0,
    threshold=0.35,  # oracle checkpoint favors recall; the tests assert supersets
)


@pytest.fixture(scope="module")
def oracle(tmp_path_factory):
    """Tiny noiseless corpus plus a checkpoint trained on it."""
    difficulty = DifficultyConfig(
        words_per_doc=60, tail_per_doc=8, tail_size=30, unknown_per_reader=12,
        noise_sigma_px=0.0, dwell_sigma=0.03, p_regression=0.0, jaccard_band=(0.05, 0.9),
    )
    corpus = make_corpus(3, 3, difficulty, seed=5)
    sessions = condition_corpus(corpus)
    assets = CorpusAssets(corpus.docs)
    align = alignment_for_corpus(corpus, seed=5, n_txt=TINY_MODEL.n_txt, n_gaze=TINY_MODEL.n_gaze)
    windows = build_training_windows(sessions, assets, align)
    params, _ = train(windows, TINY_MODEL)
    freq_path = tmp_path_factory.mktemp("oracle") / "freq.json"
    assets.freq_table.save(freq_path)
    return corpus, params, str(freq_path)


def make_client(tmp_path, oracle=None, auth=None):
    if oracle is not None:
        _, params, freq_path = oracle
        config = ServiceConfig(data_dir=str(tmp_path / "data"), auth_token=auth, freq_table=freq_path)
        service = SessionService(config, params=params, model_config=TINY_MODEL)
    else:
        config = ServiceConfig(data_dir=str(tmp_path / "data"), auth_token=auth)
        service = SessionService(config)
    app = create_app(config, service)
    return TestClient(app), service


def layout_payload(doc):
    return document_to_dict(doc)


def simple_layout():
    from conftest import make_doc

    return layout_payload(make_doc(["alpha", "beta", "gamma", "delta"]))


class TestSessionLifecycle:
    def test_create_returns_distinct_ids(self, tmp_path):
        client, _ = make_client(tmp_path)
        a = client.post("/sessions", json={"user_id": "u1", "layout": simple_layout()}).json()
        b = client.post("/sessions", json={"user_id": "u1", "layout": simple_layout()}).json()
        assert a["status"] == "open"
        assert a["session_id"] != b["session_id"]

    def test_malformed_layout_422(self, tmp_path):
        client, _ = make_client(tmp_path)
        bad = {"doc_id": "x", "full_text": "a b", "words": [
            {"index": 0, "text": "a", "x": 1, "y": 1, "w": 5, "h": 5},
            {"index": 0, "text": "b", "x": 9, "y": 1, "w": 5, "h": 5},
        ]}
        resp = client.post("/sessions", json={"user_id": "u1", "layout": bad})
        assert resp.status_code == 422

    def test_gaze_in_order_accepted(self, tmp_path):
        client, _ = make_client(tmp_path)
        sid = client.post("/sessions", json={"user_id": "u1", "layout": simple_layout()}).json()["session_id"]
        samples = [{"t": 10.0 * i, "x": 1.0, "y": 2.0} for i in range(1, 6)]
        resp = client.post(f"/sessions/{sid}/gaze", json={"samples": samples})
        assert resp.json()["accepted"] == 5

    def test_gaze_time_regression_rejected(self, tmp_path):
        client, _ = make_client(tmp_path)
        sid = client.post("/sessions", json={"user_id": "u1", "layout": simple_layout()}).json()["session_id"]
        client.post(f"/sessions/{sid}/gaze", json={"samples": [{"t": 100.0, "x": 0, "y": 0}]})
        resp = client.post(f"/sessions/{sid}/gaze", json={"samples": [{"t": 50.0, "x": 0, "y": 0}]})
        assert resp.json()["accepted"] == 0

    def test_unknown_session_404(self, tmp_path):
        client, _ = make_client(tmp_path)
        assert client.post("/sessions/nope/gaze", json={"samples": []}).status_code == 404

    def test_marks_recorded(self, tmp_path):
        client, _ = make_client(tmp_path)
        sid = client.post("/sessions", json={"user_id": "u1", "layout": simple_layout()}).json()["session_id"]
        resp = client.post(f"/sessions/{sid}/marks", json={"words": [1, 3]})
        assert resp.status_code == 200
        resp = client.post(f"/sessions/{sid}/marks", json={"words": [99]})
        assert resp.status_code == 422

    def test_predictions_before_close_409(self, tmp_path):
        client, _ = make_client(tmp_path)
        sid = client.post("/sessions", json={"user_id": "u1", "layout": simple_layout()}).json()["session_id"]
        assert client.get(f"/sessions/{sid}/predictions").status_code == 409

    def test_close_empty_trace_409(self, tmp_path, oracle):
        client, _ = make_client(tmp_path, oracle)
        sid = client.post("/sessions", json={"user_id": "u1", "layout": simple_layout()}).json()["session_id"]
        assert client.post(f"/sessions/{sid}/close").status_code == 409

    def test_close_without_checkpoint_503(self, tmp_path):
        client, _ = make_client(tmp_path)
        sid = client.post("/sessions", json={"user_id": "u1", "layout": simple_layout()}).json()["session_id"]
        client.post(f"/sessions/{sid}/gaze", json={"samples": [{"t": 1.0, "x": 0, "y": 0}, {"t": 2.0, "x": 0, "y": 0}]})
        assert client.post(f"/sessions/{sid}/close").status_code == 503

    def test_gaze_after_close_409(self, tmp_path, oracle):
        corpus = oracle[0]
        client, _ = make_client(tmp_path, oracle)
        synth = corpus.sessions[0]
        doc = corpus.docs[synth.doc_id]
        sid = client.post("/sessions", json={"user_id": "u9", "layout": layout_payload(doc)}).json()["session_id"]
        samples = [{"t": t, "x": x, "y": y} for t, (x, y) in zip(synth.raw_trace.times(), synth.raw_trace.xy())]
        client.post(f"/sessions/{sid}/gaze", json={"samples": samples})
        client.post(f"/sessions/{sid}/close")
        resp = client.post(f"/sessions/{sid}/gaze", json={"samples": [{"t": 1e9, "x": 0, "y": 0}]})
        assert resp.status_code == 409


class TestScoring:
    def stream_session(self, client, corpus, idx, user="u1"):
        synth = corpus.sessions[idx]
        doc = corpus.docs[synth.doc_id]
        sid = client.post("/sessions", json={"user_id": user, "layout": layout_payload(doc)}).json()["session_id"]
        samples = [{"t": t, "x": x, "y": y} for t, (x, y) in zip(synth.raw_trace.times(), synth.raw_trace.xy())]
        for lo in range(0, len(samples), 500):
            resp = client.post(f"/sessions/{sid}/gaze", json={"samples": samples[lo : lo + 500]})
            assert resp.json()["accepted"] == len(samples[lo : lo + 500])
        client.post(f"/sessions/{sid}/marks", json={"words": sorted(synth.marked_words)})
        return sid, synth

    def test_scored_predictions_cover_planted(self, tmp_path, oracle):
        corpus = oracle[0]
        client, _ = make_client(tmp_path, oracle)
        sid, synth = self.stream_session(client, corpus, 0)
        resp = client.post(f"/sessions/{sid}/close")
        assert resp.status_code == 200
        predicted = {p["word"] for p in resp.json()["predictions"]}
        missing = synth.marked_words - predicted
        # oracle-trained checkpoint on a noiseless corpus recovers the planted words
        assert not missing, f"missing planted words: {missing}"

    def test_rescore_idempotent(self, tmp_path, oracle):
        corpus = oracle[0]
        client, _ = make_client(tmp_path, oracle)
        sid, _ = self.stream_session(client, corpus, 1)
        first = client.post(f"/sessions/{sid}/close").json()["predictions"]
        second = client.post(f"/sessions/{sid}/close").json()["predictions"]
        assert first == second
        assert client.get(f"/sessions/{sid}/predictions").json()["predictions"] == first

    def test_vocab_accumulates_across_sessions(self, tmp_path, oracle):
        corpus = oracle[0]
        client, _ = make_client(tmp_path, oracle)
        assert client.get("/users/reader_x/vocab").json()["vocab"] == []  # no sessions yet
        # same reader reads the same doc twice
        sid1, synth = self.stream_session(client, corpus, 0, user="reader_x")
        client.post(f"/sessions/{sid1}/close")
        sid2, _ = self.stream_session(client, corpus, 0, user="reader_x")
        client.post(f"/sessions/{sid2}/close")
        vocab = client.get("/users/reader_x/vocab").json()["vocab"]
        assert vocab, "vocabulary should not be empty"
        top = vocab[0]
        assert top["times_flagged"] == 2
        assert all(v["times_flagged"] >= 1 for v in vocab)
        counts = [v["times_flagged"] for v in vocab]
        assert counts == sorted(counts, reverse=True)

    def test_concurrent_appends_to_different_sessions(self, tmp_path):
        client, _ = make_client(tmp_path)
        sids = [
            client.post("/sessions", json={"user_id": f"u{k}", "layout": simple_layout()}).json()["session_id"]
            for k in range(2)
        ]
        results = {}

        def feed(k):
            samples = [{"t": 10.0 * i, "x": float(k), "y": 0.0} for i in range(1, 101)]
            results[k] = client.post(f"/sessions/{sids[k]}/gaze", json={"samples": samples}).json()["accepted"]

        threads = [threading.Thread(target=feed, args=(k,)) for k in range(2)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert results == {0: 100, 1: 100}


class TestPersistence:
    def test_replay_reconstructs_sessions(self, tmp_path, oracle):
        corpus = oracle[0]
        client, service = make_client(tmp_path, oracle)
        scorer = TestScoring()
        sid, _ = scorer.stream_session(client, corpus, 2)
        preds = client.post(f"/sessions/{sid}/close").json()["predictions"]

        reloaded = SessionStore(service.config.data_dir)
        rec = reloaded.sessions[sid]
        original = service.store.sessions[sid]
        assert rec.status == "scored"
        assert rec.predictions == preds
        assert rec.samples == original.samples
        assert rec.marked_words == original.marked_words

    def test_compaction_preserves_state(self, tmp_path, oracle):
        corpus = oracle[0]
        client, service = make_client(tmp_path, oracle)
        scorer = TestScoring()
        sid, _ = scorer.stream_session(client, corpus, 0, user="compact_me")
        client.post(f"/sessions/{sid}/close")
        before = client.get("/users/compact_me/vocab").json()
        service.store.compact("compact_me")
        reloaded = SessionStore(service.config.data_dir)
        assert reloaded.sessions[sid].status == "scored"
        vocab_after = [
            e.to_dict() for (uid, _), e in sorted(reloaded.vocab.items()) if uid == "compact_me" and not e.dismissed
        ]
        vocab_after.sort(key=lambda e: (-e["times_flagged"], e["word"]))
        assert vocab_after == before["vocab"]


class TestAuth:
    def test_401_without_token(self, tmp_path):
        client, _ = make_client(tmp_path, auth="sekrit")
        resp = client.post("/sessions", json={"user_id": "u", "layout": simple_layout()})
        assert resp.status_code == 401
        ok = client.post(
            "/sessions",
            json={"user_id": "u", "layout": simple_layout()},
            headers={"Authorization": "Bearer sekrit"},
        )
        assert ok.status_code == 200


class TestConfig:
    def test_env_overrides(self, tmp_path):
        cfg_file = tmp_path / "svc.json"
        cfg_file.write_text('{"port": 1234, "data_dir": "/tmp/x"}')
        config = ServiceConfig.load(cfg_file, env={"GAZELEX_PORT": "4321", "GAZELEX_AUTH_TOKEN": "t"})
        assert config.port == 4321
        assert config.data_dir == "/tmp/x"
        assert config.auth_token == "t"
