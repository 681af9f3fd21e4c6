"""Score adjustment and cross-source merging of keyphrase candidates.

Generated scores are trusted as the reference scale: retrieval and extraction
scores are rescaled so their per-document averages match the generated
average, every candidate is reweighted by the document-candidate relevance
scorer, and phrases are unified by stemmed form with per-source contributions
summed into the final ranking.
"""

from __future__ import annotations

from dataclasses import dataclass

from .candidates import CandidateSet
from .stemmer import phrase_key

PROFILES = ("kp20k", "other", "semeval")


@dataclass
class MergedCandidate:
    phrase: list          # surface tokens of the strongest source
    final: float
    r_adj: float
    e_adj: float
    g_adj: float
    present: bool


@dataclass
class RankedPrediction:
    doc_id: str
    items: list

    def phrases(self) -> list:
        return [item.phrase for item in self.items]


def _mean(values):
    return sum(values) / len(values)


def merge(cand_set: CandidateSet, doc_tokens, scorer) -> RankedPrediction:
    """Algorithm-1 merge; scorer is a callable (doc_tokens, phrase) -> prob.

    With an empty generated list there is no reference average, so the
    rescaling factor degrades to 1 and only the scorer reweights.
    """
    if not (cand_set.rk or cand_set.ek or cand_set.gk):
        raise ValueError(f"document {cand_set.doc_id}: no candidates to merge")
    u_gs = _mean(cand_set.gs) if cand_set.gk else None

    def factor(scores):
        if u_gs is None or not scores:
            return 1.0
        return u_gs / _mean(scores)

    adjustments = (
        ("g_adj", cand_set.gk, cand_set.gs, cand_set.gk_present, 1.0),
        ("r_adj", cand_set.rk, cand_set.rs, cand_set.rk_present, factor(cand_set.rs)),
        ("e_adj", cand_set.ek, cand_set.es, cand_set.ek_present, factor(cand_set.es)),
    )
    merged: dict = {}
    for attr, phrases, scores, present, fac in adjustments:
        for phrase, score, flag in zip(phrases, scores, present):
            adjusted = score * fac * scorer(doc_tokens, phrase)
            key = phrase_key(phrase)
            entry = merged.get(key)
            if entry is None:
                entry = {"r_adj": 0.0, "e_adj": 0.0, "g_adj": 0.0,
                         "present": flag, "surfaces": []}
                merged[key] = entry
            entry[attr] = adjusted
            entry["surfaces"].append((adjusted, list(phrase)))

    items = []
    for entry in merged.values():
        final = entry["r_adj"] + entry["e_adj"] + entry["g_adj"]
        # deterministic surface: strongest contribution, then lexicographic
        surface = min(entry["surfaces"], key=lambda sv: (-sv[0], sv[1]))[1]
        items.append(MergedCandidate(
            phrase=surface, final=final, r_adj=entry["r_adj"],
            e_adj=entry["e_adj"], g_adj=entry["g_adj"], present=entry["present"],
        ))
    items.sort(key=lambda it: (-it.final, " ".join(it.phrase)))
    return RankedPrediction(doc_id=cand_set.doc_id, items=items)


def select_final(items, profile: str) -> list:
    """Dataset-profile filtering of a ranked candidate list.

    kp20k keeps every single-word prediction; the other profiles keep only
    the highest-ranked one. Multi-word predictions always pass; order is
    preserved.
    """
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}, expected one of {PROFILES}")
    if profile == "kp20k":
        return list(items)
    out = []
    single_seen = False
    for item in items:
        phrase = item.phrase if isinstance(item, MergedCandidate) else item
        if len(phrase) == 1:
            if single_seen:
                continue
            single_seen = True
        out.append(item)
    return out


def prediction_record(pred: RankedPrediction) -> dict:
    return {
        "id": pred.doc_id,
        "predictions": [
            {
                "phrase": " ".join(item.phrase),
                "score": item.final,
                "sources": {"r": item.r_adj, "e": item.e_adj, "g": item.g_adj},
                "present": item.present,
            }
            for item in pred.items
        ],
    }


def parse_prediction_record(obj: dict):
    """(doc_id, [phrase token lists]) in rank order, for evaluation."""
    if not isinstance(obj, dict) or "id" not in obj or "predictions" not in obj:
        raise ValueError("prediction record missing 'id' or 'predictions'")
    phrases = []
    for entry in obj["predictions"]:
        if "phrase" not in entry:
            raise ValueError(f"prediction record {obj['id']!r}: entry missing 'phrase'")
        phrases.append(entry["phrase"].split())
    return obj["id"], phrases
