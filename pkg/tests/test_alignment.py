import numpy as np
import pytest

from conftest import make_doc
from gazelex.alignment import (
    AlignmentConfig,
    ReadingSession,
    anticipate_word_times,
    build_dataset,
    chunk_gaze,
    extract_context,
    make_negatives,
    read_dataset,
    window_from_dict,
    window_to_dict,
    write_dataset,
)
from gazelex.corpus import tokenize
from gazelex.errors import AlignmentError
from gazelex.signal import GazeTrace


def uniform_trace(t0, t1, session="s", rate=20.0):
    step = 1000.0 / rate
    n = int(round((t1 - t0) / step)) + 1
    t = t0 + step * np.arange(n)
    xy = np.column_stack([100.0 + 0.1 * t, np.full(n, 200.0)])
    return GazeTrace.from_arrays(session, t, xy, rate_hz=rate)


def make_session(doc, marked, t0=0.0, t1=None, user="u0"):
    if t1 is None:
        t1 = 400.0 * len(doc)
    return ReadingSession(
        doc_id=doc.doc_id,
        trace=uniform_trace(t0, t1, session=f"{user}-{doc.doc_id}"),
        t_start=t0,
        t_end=t1,
        marked_words=frozenset(marked),
        user_id=user,
    )


class TestAnticipate:
    def test_single_word_midpoint(self):
        doc = make_doc(["a"])
        session = make_session(doc, set(), 0.0, 1000.0)
        assert anticipate_word_times(session, doc)[0] == 500.0

    def test_uniform_spacing(self):
        doc = make_doc(["a", "b", "c", "d"])
        session = make_session(doc, set(), 0.0, 4000.0)
        assert np.allclose(anticipate_word_times(session, doc), [500, 1500, 2500, 3500])

    def test_strictly_increasing_inside_span(self, rng):
        for _ in range(30):
            n = int(rng.integers(1, 300))
            t0 = float(rng.uniform(0, 5000))
            t1 = t0 + float(rng.uniform(1000, 60000))
            doc = make_doc([f"w{i}" for i in range(n)])
            session = make_session(doc, set(), t0, t1)
            times = anticipate_word_times(session, doc)
            assert (np.diff(times) > 0).all()
            assert times[0] > t0 and times[-1] < t1

    def test_shift_invariance(self):
        doc = make_doc(["a", "b", "c"])
        base = anticipate_word_times(make_session(doc, set(), 0.0, 3000.0), doc)
        shifted = anticipate_word_times(make_session(doc, set(), 700.0, 3700.0), doc)
        assert np.allclose(shifted, base + 700.0)

    def test_empty_document(self):
        doc = make_doc(["a"])
        session = make_session(doc, set())
        from gazelex.corpus import DocumentLayout

        with pytest.raises(AlignmentError):
            anticipate_word_times(session, DocumentLayout("d", (), ""))


class TestChunkGaze:
    def test_no_boundaries(self):
        trace = uniform_trace(0.0, 500.0)
        segs = chunk_gaze(trace, [])
        assert len(segs) == 1 and len(segs[0]) == len(trace)

    def test_half_open_split(self):
        trace = GazeTrace.from_arrays("s", np.arange(0, 1000, 50.0), np.zeros((20, 2)))
        segs = chunk_gaze(trace, [500.0])
        assert [len(s) for s in segs] == [10, 10]

    def test_partition_oracle(self, rng):
        for _ in range(20):
            trace = uniform_trace(0.0, 3000.0)
            k = int(rng.integers(0, 6))
            boundaries = sorted(float(rng.uniform(0, 3000)) for _ in range(k))
            segs = chunk_gaze(trace, boundaries)
            rebuilt = [s for seg in segs for s in seg]
            assert rebuilt == list(trace.samples)
            # brute-force membership check
            for j, seg in enumerate(segs):
                lo = boundaries[j - 1] if j > 0 else -np.inf
                hi = boundaries[j] if j < len(boundaries) else np.inf
                for s in seg:
                    assert lo <= s.t < hi

    def test_unsorted_rejected(self):
        with pytest.raises(AlignmentError):
            chunk_gaze(uniform_trace(0.0, 500.0), [300.0, 100.0])


class TestExtractContext:
    def test_full_window_has_n_gaze_samples(self, char_tokenizer):
        doc = make_doc(["a", "b", "c", "d", "e"])
        tdoc = tokenize(doc, char_tokenizer)
        session = make_session(doc, {2}, 0.0, 5000.0)
        win = extract_context(session, doc, tdoc, 2)
        assert win.gaze.shape == (20, 2)

    def test_marked_anchor_labeled(self, char_tokenizer):
        doc = make_doc(["a", "b", "c", "d", "e"])
        tdoc = tokenize(doc, char_tokenizer)  # single-token words
        session = make_session(doc, {2}, 0.0, 5000.0)
        win = extract_context(session, doc, tdoc, 2)
        for tid, widx, lab in zip(win.token_ids, win.word_indices, win.token_labels):
            assert lab == (1 if widx == 2 else 0)
        assert win.token_labels.sum() == 1

    def test_edge_padding_repeats_last_sample(self, char_tokenizer):
        doc = make_doc(["a"])
        tdoc = tokenize(doc, char_tokenizer)
        session = ReadingSession(
            doc_id=doc.doc_id,
            trace=uniform_trace(0.0, 1100.0),
            t_start=0.0,
            t_end=2000.0,
            marked_words=frozenset(),
        )
        # anchor time 1000 -> window [500, 1500], trace covers 500..1100 = 13 samples
        win = extract_context(session, doc, tdoc, 0)
        assert win.gaze.shape == (20, 2)
        assert np.allclose(win.gaze[12:], win.gaze[12])
        assert not np.allclose(win.gaze[11], win.gaze[12])

    def test_uncovered_window_raises(self, char_tokenizer):
        doc = make_doc(["a", "b", "c", "d"])
        tdoc = tokenize(doc, char_tokenizer)
        session = ReadingSession(
            doc_id=doc.doc_id,
            trace=uniform_trace(0.0, 800.0),
            t_start=0.0,
            t_end=40000.0,
            marked_words=frozenset(),
        )
        with pytest.raises(AlignmentError):
            extract_context(session, doc, tdoc, 3)  # window far past trace end

    def test_requires_resampled_trace(self, char_tokenizer):
        doc = make_doc(["a", "b"])
        tdoc = tokenize(doc, char_tokenizer)
        raw = GazeTrace.from_arrays("s", [0.0, 33.0, 61.0, 95.0, 1000.0], np.zeros((5, 2)))
        session = ReadingSession(doc.doc_id, raw, 0.0, 1000.0, frozenset())
        with pytest.raises(AlignmentError):
            extract_context(session, doc, tdoc, 0)

    def test_token_slice_truncated_to_n_txt(self, char_tokenizer):
        words = [f"w{i}" for i in range(40)]  # 2-3 tokens per word
        doc = make_doc(words)
        tdoc = tokenize(doc, char_tokenizer)
        session = make_session(doc, set(), 0.0, 2000.0)  # 50 ms per word: wide coverage
        config = AlignmentConfig(n_txt=8)
        win = extract_context(session, doc, tdoc, 20, config)
        assert len(win) <= 8
        assert 20 in win.word_indices.tolist()  # anchor retained


class TestNegatives:
    def make_setup(self, char_tokenizer):
        words = [f"w{i}" for i in range(30)]
        doc = make_doc(words)
        tdoc = tokenize(doc, char_tokenizer)
        session = make_session(doc, {3, 25}, 0.0, 12000.0)  # 400 ms per word
        config = AlignmentConfig()
        positives = [extract_context(session, doc, tdoc, w, config) for w in sorted(session.marked_words)]
        return doc, tdoc, session, config, positives

    def test_ratio_zero(self, char_tokenizer):
        doc, tdoc, session, config, positives = self.make_setup(char_tokenizer)
        assert make_negatives(positives, session, doc, tdoc, 0, config) == []

    def test_two_marked_words_far_apart(self, char_tokenizer):
        doc, tdoc, session, config, positives = self.make_setup(char_tokenizer)
        negatives = make_negatives(positives, session, doc, tdoc, 1, config)
        assert len(negatives) == 2
        for neg, pos in zip(negatives, positives):
            assert neg.is_negative
            assert not neg.token_labels.any()
            assert neg.token_slice != pos.token_slice
            assert np.allclose(neg.gaze, pos.gaze)

    def test_anchor_window_disjoint_from_gaze(self, char_tokenizer, rng):
        words = [f"w{i}" for i in range(60)]
        doc = make_doc(words)
        from gazelex.corpus import tokenize as tok

        tdoc = tok(doc, type(self).char_tok)
        for trial in range(10):
            marked = set(int(k) for k in rng.choice(60, size=6, replace=False))
            session = make_session(doc, marked, 0.0, 24000.0)
            config = AlignmentConfig(seed=trial)
            times = anticipate_word_times(session, doc)
            positives = [extract_context(session, doc, tdoc, w, config) for w in sorted(marked)]
            negatives = make_negatives(positives, session, doc, tdoc, 1, config)
            for neg in negatives:
                # the substituted word's 1 s window must not intersect any
                # interval whose gaze equals this negative's gaze segment
                partners = [p for p in positives if np.allclose(p.gaze, neg.gaze)]
                assert partners
                for p in partners:
                    assert abs(times[neg.anchor_word] - times[p.anchor_word]) > config.context_ms

    @pytest.fixture(autouse=True)
    def _stash_tokenizer(self, char_tokenizer):
        type(self).char_tok = char_tokenizer

    def test_no_eligible_content_warns(self, char_tokenizer, caplog):
        doc = make_doc(["a", "b", "c"])
        tdoc = tokenize(doc, char_tokenizer)
        session = make_session(doc, {1}, 0.0, 1200.0)
        positives = [extract_context(session, doc, tdoc, 1)]
        with caplog.at_level("WARNING"):
            negatives = make_negatives(positives, session, doc, tdoc, 1)
        assert negatives == []
        assert any("no eligible" in r.message for r in caplog.records)


class TestBuildDataset:
    def test_empty_sessions(self):
        assert build_dataset([], {}) == []

    def test_toy_session_counts(self, char_tokenizer):
        words = [f"w{i}" for i in range(30)]
        doc = make_doc(words)
        tdoc = tokenize(doc, char_tokenizer)
        session = make_session(doc, {3, 25}, 0.0, 12000.0)
        windows = build_dataset([session], {doc.doc_id: (doc, tdoc)}, AlignmentConfig(neg_ratio=1))
        positives = [w for w in windows if not w.is_negative and w.anchor_word in {3, 25}]
        negatives = [w for w in windows if w.is_negative]
        unmarked = [w for w in windows if not w.is_negative and w.anchor_word not in {3, 25}]
        assert len(positives) == 2
        assert len(negatives) == 2
        assert len(unmarked) == 4  # 2x the marked count

    def test_positive_negative_label_invariants(self, char_tokenizer):
        words = [f"w{i}" for i in range(40)]
        doc = make_doc(words)
        tdoc = tokenize(doc, char_tokenizer)
        session = make_session(doc, {5, 20, 35}, 0.0, 16000.0)
        windows = build_dataset([session], {doc.doc_id: (doc, tdoc)})
        for win in windows:
            if win.is_negative:
                assert not win.token_labels.any()
            elif win.anchor_word in session.marked_words:
                assert win.token_labels.any()

    def test_seeded_determinism_byte_identical(self, char_tokenizer, tmp_path):
        words = [f"w{i}" for i in range(30)]
        doc = make_doc(words)
        tdoc = tokenize(doc, char_tokenizer)
        session = make_session(doc, {4, 22}, 0.0, 12000.0)
        docs = {doc.doc_id: (doc, tdoc)}
        a = tmp_path / "a.jsonl"
        b = tmp_path / "b.jsonl"
        write_dataset(a, build_dataset([session], docs, AlignmentConfig(seed=7)))
        write_dataset(b, build_dataset([session], docs, AlignmentConfig(seed=7)))
        assert a.read_bytes() == b.read_bytes()

    def test_roundtrip(self, char_tokenizer, tmp_path):
        words = [f"w{i}" for i in range(30)]
        doc = make_doc(words)
        tdoc = tokenize(doc, char_tokenizer)
        session = make_session(doc, {4, 22}, 0.0, 12000.0)
        windows = build_dataset([session], {doc.doc_id: (doc, tdoc)})
        path = tmp_path / "d.jsonl"
        write_dataset(path, windows)
        back = read_dataset(path)
        assert len(back) == len(windows)
        for x, y in zip(windows, back):
            assert x.anchor_word == y.anchor_word
            assert np.array_equal(x.token_ids, y.token_ids)
            assert np.allclose(x.gaze, y.gaze)

    def test_window_dict_roundtrip(self, char_tokenizer):
        doc = make_doc(["a", "b", "c", "d", "e"])
        tdoc = tokenize(doc, char_tokenizer)
        session = make_session(doc, {2}, 0.0, 5000.0)
        win = extract_context(session, doc, tdoc, 2)
        back = window_from_dict(window_to_dict(win))
        assert back.token_slice == win.token_slice
        assert np.array_equal(back.token_labels, win.token_labels)
