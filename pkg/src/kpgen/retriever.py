"""Jaccard retrieval over non-stop-word token sets with an inverted index."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

from .corpus import SEP, TokenizedDoc
from .stemmer import phrase_key

INDEX_FORMAT = "kpgen-index"
INDEX_VERSION = 1


def load_stopwords(path=None) -> frozenset:
    """Stop-word set from a file, or the bundled snapshot when path is None."""
    if path is None:
        text = resources.files("kpgen.data").joinpath("stopwords.txt").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return frozenset(w.strip().lower() for w in text.split() if w.strip())


def jaccard(a, b) -> float:
    if not a and not b:
        return 0.0
    inter = len(a & b) if isinstance(a, (set, frozenset)) else len(set(a) & set(b))
    union = len(a | b) if isinstance(a, (set, frozenset)) else len(set(a) | set(b))
    return inter / union


@dataclass
class RetrievalIndex:
    doc_ids: list                # insertion order
    token_sets: dict             # doc_id -> frozenset of non-stop-word tokens
    postings: dict               # token -> doc ids sorted ascending
    stopwords: frozenset
    keyphrases: dict             # doc_id -> list of phrase token lists
    config_hash: str = ""

    def __len__(self):
        return len(self.doc_ids)


@dataclass
class Neighbor:
    doc_id: str
    score: float
    keyphrases: list


@dataclass
class RetrievalResult:
    neighbors: list
    k: int


def build_index(docs, stopwords, config_hash: str = "") -> RetrievalIndex:
    if not docs:
        raise ValueError("cannot build an index from zero documents")
    stopwords = frozenset(stopwords)
    doc_ids = []
    token_sets = {}
    postings = {}
    keyphrases = {}
    for doc in docs:
        if doc.doc_id in token_sets:
            raise ValueError(f"duplicate doc id {doc.doc_id!r} in index input")
        tok_set = frozenset(t for t in doc.tokens if t not in stopwords)
        doc_ids.append(doc.doc_id)
        token_sets[doc.doc_id] = tok_set
        keyphrases[doc.doc_id] = [list(p) for p in doc.gold_phrases]
        for tok in tok_set:
            postings.setdefault(tok, []).append(doc.doc_id)
    for tok in postings:
        postings[tok].sort()
    return RetrievalIndex(
        doc_ids=doc_ids,
        token_sets=token_sets,
        postings=postings,
        stopwords=stopwords,
        keyphrases=keyphrases,
        config_hash=config_hash,
    )


def retrieve(query: TokenizedDoc, index: RetrievalIndex, k: int = 3) -> RetrievalResult:
    """Top-k neighbors by Jaccard similarity of non-stop-word sets.

    The ranking covers every indexed document with a non-empty token set
    (zero-overlap documents included), sorted by score descending then doc id
    ascending, so the result matches a brute-force scan exactly. The query's
    own id is excluded when present in the index.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not index.doc_ids:
        return RetrievalResult(neighbors=[], k=k)
    q_set = frozenset(t for t in query.tokens if t not in index.stopwords)
    overlap = {}
    for tok in q_set:
        for doc_id in index.postings.get(tok, ()):
            overlap[doc_id] = overlap.get(doc_id, 0) + 1
    scored = []
    for doc_id in index.doc_ids:
        if doc_id == query.doc_id:
            continue
        d_set = index.token_sets[doc_id]
        if not d_set:
            continue
        inter = overlap.get(doc_id, 0)
        union = len(q_set) + len(d_set) - inter
        scored.append((-(inter / union) if union else 0.0, doc_id))
    scored.sort()
    neighbors = [
        Neighbor(doc_id=doc_id, score=-neg, keyphrases=index.keyphrases[doc_id])
        for neg, doc_id in scored[:k]
    ]
    return RetrievalResult(neighbors=neighbors, k=k)


def concat_retrieved(result: RetrievalResult) -> list:
    """All neighbor keyphrases flattened, ";" between consecutive phrases."""
    tokens = []
    for neighbor in result.neighbors:
        for phrase in neighbor.keyphrases:
            if tokens:
                tokens.append(SEP)
            tokens.extend(phrase)
    return tokens


def collect_retrieved_candidates(result: RetrievalResult):
    """(rk, rs): neighbor phrases scored by neighbor Jaccard, stem-deduped.

    Duplicates keep the maximum score; output sorted by score descending with
    a lexicographic tie-break on the phrase.
    """
    best = {}
    for neighbor in result.neighbors:
        for phrase in neighbor.keyphrases:
            key = phrase_key(phrase)
            if key not in best or neighbor.score > best[key][1]:
                best[key] = (list(phrase), neighbor.score)
    ranked = sorted(best.values(), key=lambda ps: (-ps[1], " ".join(ps[0])))
    rk = [phrase for phrase, _ in ranked]
    rs = [score for _, score in ranked]
    return rk, rs


def save_index(index: RetrievalIndex, path):
    payload = {
        "format": INDEX_FORMAT,
        "version": INDEX_VERSION,
        "config_hash": index.config_hash,
        "stopwords": sorted(index.stopwords),
        "docs": [
            {
                "id": doc_id,
                "tokens": sorted(index.token_sets[doc_id]),
                "keyphrases": index.keyphrases[doc_id],
            }
            for doc_id in index.doc_ids
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False, separators=(",", ":"), sort_keys=True)
        fh.write("\n")


def load_index(path) -> RetrievalIndex:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != INDEX_FORMAT:
        raise ValueError(f"{path}: not a retrieval index file")
    if payload.get("version") != INDEX_VERSION:
        raise ValueError(f"{path}: unsupported index version {payload.get('version')!r}")
    stopwords = frozenset(payload["stopwords"])
    doc_ids = []
    token_sets = {}
    postings = {}
    keyphrases = {}
    for rec in payload["docs"]:
        doc_id = rec["id"]
        doc_ids.append(doc_id)
        token_sets[doc_id] = frozenset(rec["tokens"])
        keyphrases[doc_id] = [list(p) for p in rec["keyphrases"]]
        for tok in token_sets[doc_id]:
            postings.setdefault(tok, []).append(doc_id)
    for tok in postings:
        postings[tok].sort()
    return RetrievalIndex(
        doc_ids=doc_ids,
        token_sets=token_sets,
        postings=postings,
        stopwords=stopwords,
        keyphrases=keyphrases,
        config_hash=payload.get("config_hash", ""),
    )
