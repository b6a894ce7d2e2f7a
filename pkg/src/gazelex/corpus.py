"""Documents, their on-screen layout, and sub-word tokenization.

A document is a reading-ordered list of words with screen bounding boxes
(recorded or rendered by the reader frontend) plus the full text. Sub-word
tokenization keeps a token -> word map so that word-level labels and
knowledge features can be projected onto tokens.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from importlib import resources

from .errors import LayoutError

#: Marker prefixed to word-internal continuation pieces.
CONTINUATION = "##"
#: Token text used for padding model inputs; always id 0 in shipped vocabs.
PAD_TOKEN = "<pad>"

_BASE_CHARS = (
    "abcdefghijklmnopqrstuvwxyz"
    "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
    "0123456789"
    ".,;:'\"()-?!"
)


@dataclass(frozen=True)
class WordBox:
    """One word with its box center and size in screen pixels."""

    index: int
    text: str
    x: float
    y: float
    w: float
    h: float
    page: int = 0

    def __post_init__(self):
        if not self.text:
            raise LayoutError(f"word {self.index}: empty text")
        if not (self.w > 0 and self.h > 0):
            raise LayoutError(f"word {self.index}: box size must be positive")
        for name in ("x", "y", "w", "h"):
            v = getattr(self, name)
            if not math.isfinite(v) or (name in ("x", "y") and v < 0):
                raise LayoutError(f"word {self.index}: {name}={v} must be finite and non-negative")


@dataclass(frozen=True)
class DocumentLayout:
    """Words in reading order with contiguous 0-based indices."""

    doc_id: str
    words: tuple[WordBox, ...]
    full_text: str

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(self.words))
        cursor = 0
        for i, word in enumerate(self.words):
            if word.index != i:
                raise LayoutError(
                    f"word indices must be 0-based and contiguous; position {i} has index {word.index}"
                )
            found = self.full_text.find(word.text, cursor)
            if found < 0:
                raise LayoutError(f"word {i} ({word.text!r}) does not occur in full_text in order")
            cursor = found + len(word.text)

    def __len__(self):
        return len(self.words)

    @staticmethod
    def from_words(doc_id: str, words) -> "DocumentLayout":
        return DocumentLayout(doc_id, tuple(words), " ".join(w.text for w in words))


@dataclass(frozen=True)
class TokenizedDocument:
    """Sub-word tokens with the word each token belongs to.

    ``tokens`` holds (token_id, text, word_index) triples in document order.
    """

    doc_id: str
    tokens: tuple[tuple[int, str, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        last = -1
        for tid, text, widx in self.tokens:
            if widx < last:
                raise LayoutError("token word indices must be non-decreasing")
            last = widx

    def __len__(self):
        return len(self.tokens)

    def token_ids(self) -> list[int]:
        return [t[0] for t in self.tokens]

    def word_indices(self) -> list[int]:
        return [t[2] for t in self.tokens]


def load_document(path) -> DocumentLayout:
    """Load and validate a layout JSON file.

    Schema: ``{doc_id, full_text, words: [{index, text, x, y, w, h, page}]}``.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise LayoutError(f"{path}: cannot parse layout file: {exc}") from exc
    return document_from_dict(raw, origin=str(path))


def document_from_dict(raw: dict, origin: str = "<payload>") -> DocumentLayout:
    """Build a validated DocumentLayout from already-parsed JSON."""
    try:
        words = [
            WordBox(
                index=int(w["index"]),
                text=str(w["text"]),
                x=float(w["x"]),
                y=float(w["y"]),
                w=float(w["w"]),
                h=float(w["h"]),
                page=int(w.get("page", 0)),
            )
            for w in raw["words"]
        ]
        doc_id = str(raw.get("doc_id", ""))
        full_text = raw.get("full_text")
    except (KeyError, TypeError, ValueError) as exc:
        raise LayoutError(f"{origin}: malformed layout record: {exc}") from exc
    if full_text is None:
        full_text = " ".join(w.text for w in words)
    return DocumentLayout(doc_id, tuple(words), str(full_text))


def document_to_dict(doc: DocumentLayout) -> dict:
    return {
        "doc_id": doc.doc_id,
        "full_text": doc.full_text,
        "words": [
            {"index": w.index, "text": w.text, "x": w.x, "y": w.y, "w": w.w, "h": w.h, "page": w.page}
            for w in doc.words
        ],
    }


def save_document(path, doc: DocumentLayout) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(document_to_dict(doc), f, ensure_ascii=False)
        f.write("\n")


class SubwordTokenizer:
    """Greedy longest-match sub-word tokenizer with byte fallback.

    The vocabulary is a newline-delimited token file; token id = line number.
    Word-internal pieces carry the ``##`` continuation marker. Characters
    that no vocabulary entry covers fall back to ``<0xNN>`` byte tokens, so
    tokenization never fails on valid text.
    """

    def __init__(self, vocab: list[str]):
        if not vocab:
            raise LayoutError("tokenizer vocabulary is empty")
        self.vocab = list(vocab)
        self.ids = {tok: i for i, tok in enumerate(self.vocab)}
        if len(self.ids) != len(self.vocab):
            dupes = [t for t, c in Counter(self.vocab).items() if c > 1]
            raise LayoutError(f"duplicate vocabulary entries: {dupes[:5]}")
        self._max_len = max(len(t) for t in self.vocab)
        self._byte_ids = {}
        for b in range(256):
            tok = f"<0x{b:02X}>"
            if tok in self.ids:
                self._byte_ids[b] = self.ids[tok]

    def __len__(self):
        return len(self.vocab)

    @classmethod
    def from_file(cls, path) -> "SubwordTokenizer":
        with open(path, "r", encoding="utf-8") as f:
            vocab = [line.rstrip("\n") for line in f]
        while vocab and vocab[-1] == "":
            vocab.pop()
        return cls(vocab)

    @classmethod
    def default(cls) -> "SubwordTokenizer":
        """Tokenizer over the vocabulary file shipped with the package."""
        text = resources.files("gazelex.data").joinpath("vocab.txt").read_text("utf-8")
        vocab = text.splitlines()
        return cls(vocab)

    def encode_word(self, word: str) -> list[tuple[int, str]]:
        """Tokenize one word into (id, text) pieces."""
        pieces = []
        pos = 0
        while pos < len(word):
            prefix = CONTINUATION if pos > 0 else ""
            match = None
            limit = min(len(word) - pos, self._max_len)
            for length in range(limit, 0, -1):
                candidate = prefix + word[pos : pos + length]
                tid = self.ids.get(candidate)
                if tid is not None:
                    match = (tid, candidate, length)
                    break
            if match is None:
                for b in word[pos].encode("utf-8"):
                    tid = self._byte_ids.get(b)
                    if tid is None:
                        raise LayoutError(
                            f"no byte fallback token <0x{b:02X}> in vocabulary"
                        )
                    pieces.append((tid, f"<0x{b:02X}>"))
                pos += 1
            else:
                pieces.append((match[0], match[1]))
                pos += match[2]
        return pieces

    def decode_pieces(self, pieces: list[str]) -> str:
        """Inverse of :meth:`encode_word` for one word's pieces."""
        out = []
        byte_buf = bytearray()
        for piece in pieces:
            if piece.startswith("<0x") and piece.endswith(">") and len(piece) == 6:
                byte_buf.append(int(piece[3:5], 16))
                continue
            if byte_buf:
                out.append(byte_buf.decode("utf-8"))
                byte_buf = bytearray()
            out.append(piece[len(CONTINUATION):] if piece.startswith(CONTINUATION) else piece)
        if byte_buf:
            out.append(byte_buf.decode("utf-8"))
        return "".join(out)


def tokenize(doc: DocumentLayout, tokenizer: SubwordTokenizer) -> TokenizedDocument:
    """Tokenize every word of a document, keeping the token -> word map."""
    tokens = []
    for word in doc.words:
        for tid, text in tokenizer.encode_word(word.text):
            tokens.append((tid, text, word.index))
    return TokenizedDocument(doc.doc_id, tuple(tokens))


def word_token_spans(tdoc: TokenizedDocument) -> dict[int, tuple[int, int]]:
    """Half-open token index range per word; the ranges partition all tokens."""
    spans: dict[int, tuple[int, int]] = {}
    for i, (_, _, widx) in enumerate(tdoc.tokens):
        if widx in spans:
            start, _ = spans[widx]
            spans[widx] = (start, i + 1)
        else:
            spans[widx] = (i, i + 1)
    return spans


def train_vocab(word_counts: dict[str, int], size: int) -> list[str]:
    """Learn a sub-word vocabulary by iterative pair merging.

    Words are frequency-weighted; each round merges the most frequent
    adjacent symbol pair (ties broken lexicographically for determinism).
    The result starts with the pad token and the 256 byte-fallback tokens,
    then single characters, then merged symbols, capped at ``size`` entries.
    """
    vocab = [PAD_TOKEN] + [f"<0x{b:02X}>" for b in range(256)]
    seen_chars = set(_BASE_CHARS) | {c for w in word_counts for c in w}
    for c in sorted(seen_chars):
        vocab.append(c)
        vocab.append(CONTINUATION + c)

    # Symbol sequences per word: first char bare, the rest continuation-marked.
    seqs: dict[tuple[str, ...], int] = {}
    for word, count in word_counts.items():
        key = tuple([word[0]] + [CONTINUATION + c for c in word[1:]])
        seqs[key] = seqs.get(key, 0) + count

    def merge_symbols(a: str, b: str) -> str:
        return a + b[len(CONTINUATION):]

    existing = set(vocab)
    while len(vocab) < size:
        pair_counts: Counter = Counter()
        for seq, count in seqs.items():
            for a, b in zip(seq, seq[1:]):
                pair_counts[(a, b)] += count
        if not pair_counts:
            break
        best = max(pair_counts.items(), key=lambda kv: (kv[1], kv[0]))[0]
        merged = merge_symbols(*best)
        if merged not in existing:
            vocab.append(merged)
            existing.add(merged)
        new_seqs: dict[tuple[str, ...], int] = {}
        for seq, count in seqs.items():
            out = []
            i = 0
            while i < len(seq):
                if i + 1 < len(seq) and (seq[i], seq[i + 1]) == best:
                    out.append(merged)
                    i += 2
                else:
                    out.append(seq[i])
                    i += 1
            key = tuple(out)
            new_seqs[key] = new_seqs.get(key, 0) + count
        seqs = new_seqs
        if all(len(s) == 1 for s in seqs):
            break
    return vocab[:size]


def save_vocab(path, vocab: list[str]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for tok in vocab:
            f.write(tok + "\n")
