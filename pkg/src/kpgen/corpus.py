"""Dataset ingestion, tokenization, vocabulary and training tuples."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field

from .stemmer import stem_tokens

logger = logging.getLogger(__name__)

DIGIT_TOKEN = "<digit>"
PAD, UNK, BOS, EOS, SEP = "<pad>", "<unk>", "<bos>", "<eos>", ";"
RESERVED = (PAD, UNK, BOS, EOS, SEP)

# <digit> must survive re-tokenization so tokenize stays idempotent
_TOKEN_RE = re.compile(r"<digit>|\w+|[^\w\s]")
_DIGITS_RE = re.compile(r"[0-9]+\Z")


@dataclass(frozen=True)
class Document:
    id: str
    title: str
    abstract: str
    keyphrases: tuple = ()


@dataclass
class TokenizedDoc:
    doc_id: str
    tokens: list
    gold_phrases: list = field(default_factory=list)
    present_mask: list = field(default_factory=list)


def tokenize(text: str) -> list:
    """Lowercase word/punctuation tokens; digit-only tokens become <digit>."""
    out = []
    for tok in _TOKEN_RE.findall(text.lower()):
        out.append(DIGIT_TOKEN if _DIGITS_RE.match(tok) else tok)
    return out


def load_dataset(path) -> list:
    docs = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: malformed JSON on line {lineno}: {exc}") from exc
            if not isinstance(rec, dict):
                raise ValueError(f"{path}: line {lineno} is not an object")
            for key in ("id", "title", "abstract", "keyphrases"):
                if key not in rec:
                    raise ValueError(f"{path}: line {lineno} missing key {key!r}")
            doc_id = str(rec["id"])
            if doc_id in seen:
                raise ValueError(f"{path}: duplicate id {doc_id!r} on line {lineno}")
            seen.add(doc_id)
            kps = rec["keyphrases"]
            if not isinstance(kps, list) or not all(isinstance(k, str) for k in kps):
                raise ValueError(f"{path}: line {lineno}: keyphrases must be a list of strings")
            docs.append(
                Document(
                    id=doc_id,
                    title=str(rec["title"]),
                    abstract=str(rec["abstract"]),
                    keyphrases=tuple(kps),
                )
            )
    return docs


def contains_stemmed(source_stems, phrase_stems) -> bool:
    """Contiguous subsequence match over already-stemmed tokens."""
    n, m = len(source_stems), len(phrase_stems)
    if m == 0 or m > n:
        return False
    first = phrase_stems[0]
    for i in range(n - m + 1):
        if source_stems[i] == first and tuple(source_stems[i : i + m]) == tuple(phrase_stems):
            return True
    return False


def tokenize_document(doc: Document, max_src_len: int = 400) -> TokenizedDoc:
    """Tokenize title+abstract and the gold phrases; flag stemmed presence."""
    tokens = tokenize(doc.title) + tokenize(doc.abstract)
    if max_src_len and len(tokens) > max_src_len:
        tokens = tokens[:max_src_len]
    gold = []
    for kp in doc.keyphrases:
        kp_tokens = tokenize(kp)
        if kp_tokens:
            gold.append(kp_tokens)
        else:
            logger.warning("document %s: keyphrase %r tokenizes to nothing, dropped", doc.id, kp)
    src_stems = stem_tokens(tokens)
    present = [contains_stemmed(src_stems, stem_tokens(p)) for p in gold]
    return TokenizedDoc(doc_id=doc.id, tokens=tokens, gold_phrases=gold, present_mask=present)


class Vocabulary:
    """Frequency-ranked token index with fixed reserved entries."""

    def __init__(self, content_tokens):
        self._tokens = list(RESERVED) + list(content_tokens)
        self._index = {}
        for i, tok in enumerate(self._tokens):
            if tok in self._index:
                raise ValueError(f"duplicate vocabulary token {tok!r}")
            self._index[tok] = i

    def __len__(self):
        return len(self._tokens)

    def __contains__(self, token):
        return token in self._index

    @property
    def pad_id(self):
        return 0

    @property
    def unk_id(self):
        return 1

    @property
    def bos_id(self):
        return 2

    @property
    def eos_id(self):
        return 3

    @property
    def sep_id(self):
        return 4

    def index_of(self, token: str) -> int:
        return self._index.get(token, 1)

    def token_of(self, index: int) -> str:
        return self._tokens[index]

    def encode(self, tokens) -> list:
        return [self._index.get(t, 1) for t in tokens]

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self._tokens:
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh]
        while tokens and tokens[-1] == "":
            tokens.pop()
        if tuple(tokens[: len(RESERVED)]) != RESERVED:
            raise ValueError(f"{path}: reserved tokens missing or out of order")
        return cls(tokens[len(RESERVED) :])


def build_vocabulary(docs, max_size: int = 50000) -> Vocabulary:
    """Top-max_size tokens by corpus frequency, ties broken lexicographically.

    Counts both source tokens and gold-phrase tokens so generation targets
    are representable through the vocabulary path.
    """
    if not docs:
        raise ValueError("cannot build a vocabulary from zero documents")
    if max_size < 1:
        raise ValueError(f"max_size must be >= 1, got {max_size}")
    counts = {}
    for doc in docs:
        for tok in doc.tokens:
            counts[tok] = counts.get(tok, 0) + 1
        for phrase in doc.gold_phrases:
            for tok in phrase:
                counts[tok] = counts.get(tok, 0) + 1
    for tok in RESERVED:
        counts.pop(tok, None)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary([tok for tok, _ in ranked[:max_size]])


def gold_importance(tokens, gold_phrases, stem_match: bool = False) -> list:
    """beta* labels: 1 iff the token occurs in any gold phrase."""
    if stem_match:
        gold_tokens = {s for p in gold_phrases for s in stem_tokens(p)}
        return [1 if s in gold_tokens else 0 for s in stem_tokens(tokens)]
    gold_tokens = {t for p in gold_phrases for t in p}
    return [1 if t in gold_tokens else 0 for t in tokens]


@dataclass
class TrainingTuple:
    doc_id: str
    x: list              # source token ids (<unk> for OOV)
    x_ext: list          # source ids in the V + per-doc OOV space
    oov_tokens: list     # per-doc OOV surface forms, index j -> id len(V)+j
    r: list              # retrieved-keyphrase token ids
    beta_star: list
    y: list              # target ids incl <eos> (<unk> for OOV)
    y_ext: list          # target ids in the extended space; None if untrainable
    y_tokens: list


def encode_extended(tokens, vocab: Vocabulary):
    """Ids in the dynamic V + OOV space plus the per-document OOV list."""
    ext_ids = []
    oov_tokens = []
    oov_index = {}
    for tok in tokens:
        idx = vocab.index_of(tok)
        if idx != vocab.unk_id or tok == UNK:
            ext_ids.append(idx)
            continue
        if tok not in oov_index:
            oov_index[tok] = len(vocab) + len(oov_tokens)
            oov_tokens.append(tok)
        ext_ids.append(oov_index[tok])
    return ext_ids, oov_tokens


def split_tuples(doc: TokenizedDoc, r_tokens, vocab: Vocabulary, stem_match: bool = False) -> list:
    """One TrainingTuple per gold phrase; x, r and beta* shared."""
    if not doc.gold_phrases:
        raise ValueError(f"document {doc.doc_id} has no gold keyphrases")
    if not doc.tokens:
        raise ValueError(f"document {doc.doc_id} has no source tokens")
    x = vocab.encode(doc.tokens)
    x_ext, oov_tokens = encode_extended(doc.tokens, vocab)
    oov_index = {tok: len(vocab) + j for j, tok in enumerate(oov_tokens)}
    r = vocab.encode(r_tokens)
    beta_star = gold_importance(doc.tokens, doc.gold_phrases, stem_match=stem_match)
    tuples = []
    for phrase in doc.gold_phrases:
        y = [vocab.index_of(t) for t in phrase] + [vocab.eos_id]
        y_ext = []
        for t in phrase:
            idx = vocab.index_of(t)
            if idx != vocab.unk_id or t == UNK:
                y_ext.append(idx)
            elif t in oov_index:
                y_ext.append(oov_index[t])
            else:
                logger.warning(
                    "document %s: target token %r is outside the vocabulary and the "
                    "source text; position skipped in the generation loss",
                    doc.doc_id,
                    t,
                )
                y_ext.append(None)
        y_ext.append(vocab.eos_id)
        tuples.append(
            TrainingTuple(
                doc_id=doc.doc_id,
                x=x,
                x_ext=x_ext,
                oov_tokens=oov_tokens,
                r=r,
                beta_star=beta_star,
                y=y,
                y_ext=y_ext,
                y_tokens=list(phrase),
            )
        )
    return tuples


def dedup_corpus(docs, stopwords, threshold: float = 0.9) -> list:
    """Drop documents near-duplicating any earlier document.

    Similarity is Jaccard over non-stop-word title+abstract token sets,
    compared against every earlier document in input order, which makes the
    operation order-stable and idempotent.
    """
    from .retriever import jaccard

    stopwords = set(stopwords)
    kept = []
    seen_sets = []
    for doc in docs:
        tok_set = frozenset(t for t in tokenize(doc.title) + tokenize(doc.abstract) if t not in stopwords)
        if any(jaccard(tok_set, earlier) >= threshold for earlier in seen_sets):
            seen_sets.append(tok_set)
            continue
        seen_sets.append(tok_set)
        kept.append(doc)
    return kept
