"""Word-level knowledge features broadcast to sub-word tokens.

Three features per word: a log2 term-frequency bucket, a part-of-speech tag
from the 17-tag universal set, and a named-entity tag. The default taggers
are deterministic (lexicon + suffix rules, gazetteer longest match) so the
package needs no model downloads; both are pluggable.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .corpus import DocumentLayout, TokenizedDocument
from .errors import GazeLexError

POS_TAGS = (
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM",
    "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X",
)
POS_INDEX = {t: i for i, t in enumerate(POS_TAGS)}

NER_TAGS = ("O", "PER", "LOC", "ORG", "MISC")
NER_INDEX = {t: i for i, t in enumerate(NER_TAGS)}

N_TF_BUCKETS = 16

# Suffix -> tag rules applied to words missing from the lexicon, longest
# suffix first. Checked after the capitalization (PROPN) and digit (NUM) rules.
_SUFFIX_RULES = (
    ("tion", "NOUN"), ("sion", "NOUN"), ("ment", "NOUN"), ("ness", "NOUN"),
    ("ism", "NOUN"), ("ity", "NOUN"), ("ance", "NOUN"), ("ence", "NOUN"),
    ("able", "ADJ"), ("ible", "ADJ"), ("ous", "ADJ"), ("ive", "ADJ"),
    ("ful", "ADJ"), ("ical", "ADJ"), ("al", "ADJ"), ("ic", "ADJ"),
    ("ize", "VERB"), ("ise", "VERB"), ("ate", "VERB"), ("ify", "VERB"),
    ("ing", "VERB"), ("ed", "VERB"),
    ("ly", "ADV"),
    ("er", "NOUN"), ("ist", "NOUN"),
)


@dataclass(frozen=True)
class FrequencyTable:
    """Case-folded corpus word counts."""

    counts: dict[str, int]
    total: int

    def __post_init__(self):
        if any(c < 1 for c in self.counts.values()):
            raise GazeLexError("frequency counts must be >= 1")
        if self.total != sum(self.counts.values()):
            raise GazeLexError("frequency total must equal the sum of counts")

    def count(self, word: str) -> int:
        return self.counts.get(word.casefold(), 0)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump({"counts": self.counts, "total": self.total}, f, ensure_ascii=False)

    @staticmethod
    def load(path) -> "FrequencyTable":
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
        return FrequencyTable({str(k): int(v) for k, v in raw["counts"].items()}, int(raw["total"]))


def build_frequency_table(corpus: list[DocumentLayout]) -> FrequencyTable:
    """Count whitespace-delimited words over all documents, case-folded."""
    if not corpus:
        raise GazeLexError("frequency table needs at least one document")
    counts: Counter = Counter()
    for doc in corpus:
        for word in doc.full_text.split():
            counts[word.casefold()] += 1
    return FrequencyTable(dict(counts), sum(counts.values()))


def tf_bucket(count: int) -> int:
    """log2 bucket of a corpus count: floor(log2(count + 1)), clamped to 15."""
    return min(N_TF_BUCKETS - 1, int(math.floor(math.log2(count + 1))))


class LexiconPosTagger:
    """Closed-class lexicon plus suffix rules; unknown shapes get X."""

    def __init__(self, lexicon: dict[str, str] | None = None):
        if lexicon is None:
            lexicon = load_default_pos_lexicon()
        bad = {t for t in lexicon.values() if t not in POS_INDEX}
        if bad:
            raise GazeLexError(f"lexicon uses unknown tags: {sorted(bad)}")
        self.lexicon = {w.casefold(): t for w, t in lexicon.items()}

    def __call__(self, words: list[str]) -> list[str]:
        return [self._tag(w) for w in words]

    def _tag(self, word: str) -> str:
        folded = word.casefold()
        if folded in self.lexicon:
            return self.lexicon[folded]
        stripped = word.strip(".,;:'\"()?!-")
        if stripped and stripped.casefold() in self.lexicon:
            return self.lexicon[stripped.casefold()]
        if not stripped:
            return "PUNCT"
        if stripped[0].isupper():
            return "PROPN"
        if stripped[0].isdigit():
            return "NUM"
        low = stripped.casefold()
        for suffix, tag in _SUFFIX_RULES:
            if len(low) > len(suffix) + 1 and low.endswith(suffix):
                return tag
        if low.isalpha():
            return "NOUN"
        return "X"


class GazetteerNerTagger:
    """Longest-match scan over a gazetteer of capitalized multiword entries."""

    def __init__(self, entries: list[tuple[str, str]] | None = None):
        if entries is None:
            entries = load_default_gazetteer()
        self.phrases: dict[tuple[str, ...], str] = {}
        for phrase, tag in entries:
            if tag not in NER_INDEX or tag == "O":
                raise GazeLexError(f"gazetteer entry {phrase!r} has invalid tag {tag!r}")
            self.phrases[tuple(phrase.split())] = tag
        self._max_words = max((len(k) for k in self.phrases), default=1)

    def __call__(self, words: list[str]) -> list[str]:
        stripped = [w.strip(".,;:'\"()?!") for w in words]
        tags = ["O"] * len(words)
        i = 0
        while i < len(words):
            matched = 0
            for length in range(min(self._max_words, len(words) - i), 0, -1):
                tag = self.phrases.get(tuple(stripped[i : i + length]))
                if tag is not None:
                    for j in range(i, i + length):
                        tags[j] = tag
                    matched = length
                    break
            i += matched if matched else 1
        return tags


@dataclass(frozen=True)
class KnowledgeFeatures:
    """Per-token feature ids; all tokens of one word share identical rows."""

    tf: np.ndarray
    pos: np.ndarray
    ner: np.ndarray

    def __post_init__(self):
        n = len(self.tf)
        if not (len(self.pos) == n and len(self.ner) == n):
            raise GazeLexError("feature arrays must have equal length")
        if n and not (
            self.tf.min() >= 0 and self.tf.max() < N_TF_BUCKETS
            and self.pos.min() >= 0 and self.pos.max() < len(POS_TAGS)
            and self.ner.min() >= 0 and self.ner.max() < len(NER_TAGS)
        ):
            raise GazeLexError("feature ids out of range")

    def __len__(self):
        return len(self.tf)


def featurize(
    tdoc: TokenizedDocument,
    doc: DocumentLayout,
    table: FrequencyTable,
    pos_tagger=None,
    ner_tagger=None,
) -> KnowledgeFeatures:
    """Compute word-level features and broadcast them to every token."""
    pos_tagger = pos_tagger or LexiconPosTagger()
    ner_tagger = ner_tagger or GazetteerNerTagger()
    words = [w.text for w in doc.words]
    pos_tags = pos_tagger(words)
    ner_tags = ner_tagger(words)
    if len(pos_tags) != len(words) or len(ner_tags) != len(words):
        raise GazeLexError("taggers must return one tag per word")
    word_tf = [tf_bucket(table.count(w)) for w in words]
    widx = tdoc.word_indices()
    return KnowledgeFeatures(
        tf=np.array([word_tf[i] for i in widx], dtype=np.int64),
        pos=np.array([POS_INDEX[pos_tags[i]] for i in widx], dtype=np.int64),
        ner=np.array([NER_INDEX[ner_tags[i]] for i in widx], dtype=np.int64),
    )


def load_default_pos_lexicon() -> dict[str, str]:
    text = resources.files("gazelex.data").joinpath("pos_lexicon.tsv").read_text("utf-8")
    return dict(_parse_tsv(text))


def load_default_gazetteer() -> list[tuple[str, str]]:
    text = resources.files("gazelex.data").joinpath("gazetteer.tsv").read_text("utf-8")
    return _parse_tsv(text)


def load_pos_lexicon(path) -> dict[str, str]:
    with open(path, "r", encoding="utf-8") as f:
        return dict(_parse_tsv(f.read()))


def load_gazetteer(path) -> list[tuple[str, str]]:
    with open(path, "r", encoding="utf-8") as f:
        return _parse_tsv(f.read())


def _parse_tsv(text: str) -> list[tuple[str, str]]:
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise GazeLexError(f"TSV line {lineno}: expected two tab-separated fields")
        rows.append((parts[0], parts[1]))
    return rows
