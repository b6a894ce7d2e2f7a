import numpy as np
import pytest

from conftest import random_window
from gazelex.errors import ModelError, TrainingDiverged
from gazelex.model import (
    EmbeddingStore,
    ModelConfig,
    init_params,
    load_checkpoint,
    predict,
    predict_batch,
    save_checkpoint,
    train,
)

SMALL = ModelConfig(
    n_p=4, n_k=8, dim=16, n_txt=12, n_gaze=20, vocab_size=64,
    encoder_layers=1, encoder_heads=2, knowledge_feat_dim=4,
    epochs=5, batch_size=16, seed=3,
)


def separable_windows(rng, n=200, config=SMALL):
    """Labels follow the frequency bucket: rare tokens are the positives."""
    from dataclasses import replace

    windows = []
    for _ in range(n):
        win = random_window(rng, n_tokens=config.n_txt, n_gaze=config.n_gaze, vocab_size=config.vocab_size)
        tf = win.knowledge["tf"]
        labels = (tf <= 2).astype(np.int64)
        windows.append(replace(win, token_labels=labels, is_negative=False))
    return windows


class TestDefaults:
    def test_training_defaults(self):
        config = ModelConfig()
        assert config.epochs == 5
        assert config.lr_encoder == 8e-5
        assert config.lr_lstm == 0.1
        assert config.batch_size == 16
        assert config.threshold == 0.5


class TestTrain:
    def test_zero_lr_leaves_parameters_unchanged(self, rng):
        config = SMALL.with_overrides(lr_encoder=0.0, lr_lstm=0.0, epochs=1)
        windows = separable_windows(rng, n=40, config=config)
        params, _ = train(windows, config)
        fresh = init_params(config, np.random.default_rng(config.seed))
        for name in fresh:
            assert np.array_equal(params[name], fresh[name]), name

    def test_loss_decreases_on_separable_set(self, rng):
        config = SMALL.with_overrides(lr_encoder=3e-3)  # separable toy: larger steps converge in 5 epochs
        windows = separable_windows(rng, n=200, config=config)
        params, metrics = train(windows, config)
        losses = [m["train_loss"] for m in metrics]
        assert len(losses) == 5
        assert all(b < a for a, b in zip(losses, losses[1:])), losses

    def test_deterministic_given_seed(self, rng):
        windows = separable_windows(rng, n=48)
        config = SMALL.with_overrides(epochs=2)
        p1, m1 = train(windows, config)
        p2, m2 = train(windows, config)
        assert m1 == m2
        for name in p1:
            assert np.array_equal(p1[name], p2[name])

    def test_checkpoints_saved_per_epoch(self, rng, tmp_path):
        windows = separable_windows(rng, n=32)
        config = SMALL.with_overrides(epochs=3)
        train(windows, config, out_dir=str(tmp_path))
        files = sorted(p.name for p in tmp_path.glob("*.npz"))
        assert files == ["epoch_001.npz", "epoch_002.npz", "epoch_003.npz"]

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_aborts_with_last_good(self, rng):
        windows = separable_windows(rng, n=48)
        config = SMALL.with_overrides(lr_encoder=1e200, lr_lstm=1e200, epochs=2)
        with pytest.raises(TrainingDiverged) as err:
            train(windows, config)
        assert err.value.params is not None
        for t in err.value.params.values():
            assert np.isfinite(t).all()

    def test_empty_dataset_rejected(self):
        with pytest.raises(TrainingDiverged):
            train([], SMALL)


class TestCheckpointIO:
    def test_roundtrip(self, rng, tmp_path):
        params = init_params(SMALL, rng)
        path = tmp_path / "ckpt.npz"
        save_checkpoint(path, params, SMALL)
        loaded, config = load_checkpoint(path)
        assert config == SMALL
        for name in params:
            assert np.array_equal(loaded[name], params[name])

    def test_rejects_wrong_tensor_set(self, rng, tmp_path):
        params = init_params(SMALL, rng)
        del params["clf.w"]
        path = tmp_path / "bad.npz"
        save_checkpoint(path, params, SMALL)
        with pytest.raises(ModelError):
            load_checkpoint(path)

    def test_rejects_non_checkpoint(self, tmp_path):
        path = tmp_path / "junk.npz"
        np.savez(path, a=np.ones(3))
        with pytest.raises(ModelError):
            load_checkpoint(path)


class TestPredict:
    def test_threshold_boundaries(self, rng):
        config = SMALL
        params = init_params(config, rng)
        win = random_window(rng, n_tokens=6, n_gaze=config.n_gaze, vocab_size=config.vocab_size)
        params["clf.w"][:] = 0.0
        params["clf.b"][:] = -10.0  # a ~ 0
        assert predict(win, params, config) == set()
        low = config.with_overrides(threshold=1e-9)
        assert predict(win, params, low) == set(win.word_indices.tolist())

    def test_any_token_rule(self, rng):
        config = SMALL
        params = init_params(config, rng)
        win = random_window(rng, n_tokens=6, n_gaze=config.n_gaze, vocab_size=config.vocab_size)
        results = predict_batch([win], params, config)
        flagged, scores, probs = results[0]
        for word in set(win.word_indices.tolist()):
            token_probs = [probs[i] for i in range(6) if win.word_indices[i] == word]
            assert (word in flagged) == any(p >= config.threshold for p in token_probs)
            assert scores[word] == max(token_probs)

    def test_embedding_file_mode(self, rng, tmp_path):
        config = SMALL.with_overrides(encoder_kind="embedding_file")
        win = random_window(rng, n_tokens=6, n_gaze=config.n_gaze, vocab_size=config.vocab_size, doc_id="docA")
        store = EmbeddingStore({"docA": rng.normal(size=(30, config.dim))})
        params, _ = train([win] * 8, config.with_overrides(epochs=1), embedding_store=store)
        assert not any(name.startswith("ctx.") for name in params)
        predict(win, params, config, embedding_store=store)
        path = tmp_path / "emb.npz"
        store.save(path)
        back = EmbeddingStore.load(path, dim=config.dim)
        assert np.allclose(back.lookup("docA", (0, 6)), store.lookup("docA", (0, 6)))

    def test_embedding_file_missing_doc(self, rng):
        config = SMALL.with_overrides(encoder_kind="embedding_file")
        win = random_window(rng, n_tokens=6, vocab_size=config.vocab_size, doc_id="ghost")
        store = EmbeddingStore({"docA": np.zeros((10, config.dim))})
        with pytest.raises(ModelError):
            predict(win, init_params(config), config, embedding_store=store)
