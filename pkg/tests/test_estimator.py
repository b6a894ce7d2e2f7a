import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from conftest import random_window
from gazelex.alignment import window_to_dict
from gazelex.errors import ModelError
from gazelex.estimator import UnknownWordDetector, validate_windows


def easy_windows(rng, n=120):
    # rare-bucket tokens are the positives: linearly separable via knowledge
    from dataclasses import replace

    out = []
    for _ in range(n):
        win = random_window(rng, n_tokens=10, vocab_size=64)
        labels = (win.knowledge["tf"] <= 3).astype(np.int64)
        out.append(replace(win, token_labels=labels, is_negative=False))
    return out


TINY = dict(n_p=4, n_k=8, dim=16, n_txt=12, vocab_size=64, encoder_layers=1,
            encoder_heads=2, knowledge_feat_dim=4, epochs=6, lr_encoder=1e-2, seed=1)


class TestSklearnContract:
    def test_get_set_params_roundtrip(self):
        est = UnknownWordDetector(n_p=32, threshold=0.4)
        params = est.get_params()
        assert params["n_p"] == 32 and params["threshold"] == 0.4
        est2 = UnknownWordDetector().set_params(**params)
        assert est2.n_p == 32 and est2.threshold == 0.4

    def test_clone(self):
        est = UnknownWordDetector(**TINY)
        cloned = clone(est)
        assert cloned.get_params() == est.get_params()

    def test_not_fitted_error(self, rng):
        est = UnknownWordDetector(**TINY)
        with pytest.raises(NotFittedError):
            est.predict(easy_windows(rng, 2))

    def test_fit_returns_self(self, rng):
        windows = easy_windows(rng, 40)
        est = UnknownWordDetector(**TINY)
        assert est.fit(windows) is est
        assert hasattr(est, "params_")


class TestFitPredict:
    def test_learns_separable_task(self, rng):
        windows = easy_windows(rng, 160)
        est = UnknownWordDetector(**TINY).fit(windows[:120])
        score = est.score(windows[120:])
        assert score > 0.8, score

    def test_predict_returns_word_sets(self, rng):
        windows = easy_windows(rng, 40)
        est = UnknownWordDetector(**TINY).fit(windows)
        preds = est.predict(windows[:5])
        assert len(preds) == 5
        for pred, win in zip(preds, windows[:5]):
            assert pred <= set(win.word_indices.tolist())

    def test_predict_proba_lengths(self, rng):
        windows = easy_windows(rng, 30)
        est = UnknownWordDetector(**TINY).fit(windows)
        probs = est.predict_proba(windows[:4])
        for p, win in zip(probs, windows[:4]):
            assert len(p) == len(win)
            assert ((p > 0) & (p < 1)).all()

    def test_accepts_dict_records(self, rng):
        windows = easy_windows(rng, 30)
        dicts = [window_to_dict(w) for w in windows]
        est = UnknownWordDetector(**TINY).fit(dicts)
        assert len(est.predict(dicts[:3])) == 3

    def test_y_override(self, rng):
        windows = easy_windows(rng, 30)
        y = [np.zeros(len(w), dtype=np.int64) for w in windows]
        est = UnknownWordDetector(**TINY).fit(windows, y)
        report = est.evaluate([w for w in windows])
        assert report.recall >= 0.0  # just runs; labels came from y at fit time

    def test_evaluate_report_fields(self, rng):
        windows = easy_windows(rng, 60)
        est = UnknownWordDetector(**TINY).fit(windows)
        report = est.evaluate(windows)
        assert report.config_fingerprint == est.config_.fingerprint()
        assert 0 <= report.token_accuracy <= 100


class TestValidation:
    def test_rejects_non_list(self):
        with pytest.raises(ModelError):
            validate_windows("nope")

    def test_rejects_missing_knowledge(self, rng):
        win = random_window(rng, with_knowledge=False)
        with pytest.raises(ModelError):
            validate_windows([win], use_knowledge=True)
        assert validate_windows([win], use_knowledge=False)

    def test_rejects_gaze_length_mismatch(self, rng):
        win = random_window(rng, n_gaze=10)
        with pytest.raises(ModelError):
            validate_windows([win], n_gaze=20)
