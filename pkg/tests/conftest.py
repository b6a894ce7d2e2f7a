import numpy as np
import pytest

from gazelex.corpus import DocumentLayout, SubwordTokenizer, WordBox, tokenize


def make_doc(words, doc_id="doc", x0=100.0, dx=80.0, y=200.0):
    boxes = [
        WordBox(index=i, text=w, x=x0 + i * dx, y=y, w=9.0 * len(w), h=18.0, page=0)
        for i, w in enumerate(words)
    ]
    return DocumentLayout.from_words(doc_id, boxes)


@pytest.fixture(scope="session")
def default_tokenizer():
    return SubwordTokenizer.default()


@pytest.fixture()
def char_tokenizer():
    # minimal vocabulary: pad + bytes + ascii letters in both positions
    vocab = ["<pad>"] + [f"<0x{b:02X}>" for b in range(256)]
    for c in "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789.":
        vocab.append(c)
        vocab.append("##" + c)
    return SubwordTokenizer(vocab)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)


def random_window(
    rng,
    n_tokens=8,
    n_gaze=20,
    vocab_size=64,
    with_knowledge=True,
    label_rate=0.3,
    doc_id="doc",
    user_id="u0",
    is_negative=False,
):
    from gazelex.alignment import ContextWindow

    labels = (rng.random(n_tokens) < label_rate).astype(np.int64)
    if is_negative:
        labels[:] = 0
    knowledge = None
    if with_knowledge:
        knowledge = {
            "tf": rng.integers(0, 16, size=n_tokens),
            "pos": rng.integers(0, 17, size=n_tokens),
            "ner": rng.integers(0, 5, size=n_tokens),
        }
    word_indices = np.sort(rng.integers(0, max(2, n_tokens // 2), size=n_tokens))
    return ContextWindow(
        doc_id=doc_id,
        session_id=f"{user_id}-{doc_id}",
        user_id=user_id,
        anchor_word=int(word_indices[n_tokens // 2]),
        is_negative=is_negative,
        token_slice=(0, n_tokens),
        token_ids=rng.integers(1, vocab_size, size=n_tokens),
        word_indices=word_indices,
        token_labels=labels,
        positions=rng.uniform(0, 1280, size=(n_tokens, 2)),
        gaze=rng.uniform(0, 960, size=(n_gaze, 2)),
        knowledge=knowledge,
    )
