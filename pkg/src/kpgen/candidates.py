"""Candidate collection: threshold-extracted runs plus source normalization.

A document's candidates come from three collectors (retrieved, extracted,
generated); this module turns extractor scores into phrase candidates and
assembles all three into one CandidateSet with present/absent flags.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .corpus import contains_stemmed
from .stemmer import phrase_key, stem_tokens

_PUNCT_RE = re.compile(r"\W+\Z")


def is_punctuation(token: str) -> bool:
    return bool(_PUNCT_RE.match(token))


def _dedup_ranked(phrases, scores):
    """Stemmed duplicates keep the max score; sort by (-score, phrase)."""
    best = {}
    for phrase, score in zip(phrases, scores):
        key = phrase_key(phrase)
        prior = best.get(key)
        if prior is None or score > prior[1] or (score == prior[1] and list(phrase) < prior[0]):
            best[key] = (list(phrase), score)
    ranked = sorted(best.values(), key=lambda ps: (-ps[1], " ".join(ps[0])))
    return [p for p, _ in ranked], [s for _, s in ranked]


def collect_extracted(tokens, beta, epsilon: float = 0.7, filter_punct: bool = True):
    """(ek, es): maximal runs of adjacent keywords with mean scores.

    Token i is a keyword iff beta[i] >= epsilon; punctuation tokens break
    runs when filter_punct is on (candidates like "control ;" are useless).
    """
    if len(tokens) != len(beta):
        raise ValueError(f"collect_extracted: {len(tokens)} tokens vs {len(beta)} scores")
    phrases = []
    scores = []
    run: list = []
    run_scores: list = []

    def close_run():
        if run:
            phrases.append(list(run))
            scores.append(sum(run_scores) / len(run_scores))
            run.clear()
            run_scores.clear()

    for token, score in zip(tokens, beta):
        keyword = score >= epsilon and not (filter_punct and is_punctuation(token))
        if keyword:
            run.append(token)
            run_scores.append(float(score))
        else:
            close_run()
    close_run()
    return _dedup_ranked(phrases, scores)


@dataclass
class CandidateSet:
    """Three parallel (phrase, score) lists with presence flags."""

    doc_id: str
    rk: list
    rs: list
    ek: list
    es: list
    gk: list
    gs: list
    rk_present: list
    ek_present: list
    gk_present: list

    @property
    def n_rk(self) -> int:
        return len(self.rk)

    @property
    def n_ek(self) -> int:
        return len(self.ek)

    @property
    def n_gk(self) -> int:
        return len(self.gk)


def _check_source(name, phrases, scores):
    if len(phrases) != len(scores):
        raise ValueError(f"assemble: {name} phrases and scores differ in length")
    seen = set()
    for phrase, score in zip(phrases, scores):
        if not phrase:
            raise ValueError(f"assemble: empty phrase in {name}")
        if not (score == score and abs(score) != float("inf")):
            raise ValueError(f"assemble: non-finite score in {name}")
        key = phrase_key(phrase)
        if key in seen:
            raise ValueError(f"assemble: stemmed duplicate {' '.join(phrase)!r} in {name}")
        seen.add(key)


def assemble(doc_id: str, source_tokens, retrieved, extracted, generated) -> CandidateSet:
    """Normalize the three (phrases, scores) pairs into one CandidateSet.

    Presence is contiguous stemmed containment of the phrase in the source.
    """
    source_stems = stem_tokens(source_tokens)
    out = {}
    for name, (phrases, scores) in (("rk", retrieved), ("ek", extracted), ("gk", generated)):
        _check_source(name, phrases, scores)
        ranked_p, ranked_s = _dedup_ranked(phrases, scores)
        out[name] = ranked_p
        out[name[0] + "s"] = ranked_s
        out[name + "_present"] = [
            contains_stemmed(source_stems, stem_tokens(p)) for p in ranked_p
        ]
    return CandidateSet(doc_id=doc_id, **out)


def candidate_record(cs: CandidateSet) -> dict:
    """JSON-serializable per-document record for the candidates artifact."""
    return {
        "id": cs.doc_id,
        "rk": [{"phrase": " ".join(p), "score": s} for p, s in zip(cs.rk, cs.rs)],
        "ek": [{"phrase": " ".join(p), "score": s} for p, s in zip(cs.ek, cs.es)],
        "gk": [{"phrase": " ".join(p), "score": s} for p, s in zip(cs.gk, cs.gs)],
    }


def parse_candidate_record(obj: dict):
    """(doc_id, (rk, rs), (ek, es), (gk, gs)) from a dumped record."""
    if not isinstance(obj, dict) or "id" not in obj:
        raise ValueError("candidate record missing 'id'")
    sources = []
    for name in ("rk", "ek", "gk"):
        entries = obj.get(name, [])
        phrases = []
        scores = []
        for entry in entries:
            if "phrase" not in entry or "score" not in entry:
                raise ValueError(f"candidate record {obj['id']!r}: malformed {name} entry")
            phrases.append(entry["phrase"].split())
            scores.append(float(entry["score"]))
        sources.append((phrases, scores))
    return obj["id"], sources[0], sources[1], sources[2]
