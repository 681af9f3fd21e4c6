"""Keyphrase evaluation: stemmed matching, F1@k, R@k, MAP@k, present/absent.

All macro averages are computed over documents; documents whose gold list is
empty for a given view (e.g. no absent gold keyphrases) are skipped in that
view's average. The precision denominator is min(k, |preds|) by default,
with the plain-k convention behind a flag.
"""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import contains_stemmed
from .stemmer import phrase_key, stem_tokens

DENOMINATORS = ("min", "k")


def _key(phrase, stem: bool = True) -> str:
    if stem:
        return phrase_key(phrase)
    return " ".join(phrase)


def match(pred, gold, stem_gold: bool = True) -> bool:
    """True iff the stemmed token sequences coincide.

    stem_gold=False serves corpora whose gold phrases ship pre-stemmed.
    """
    return _key(pred) == _key(gold, stem=stem_gold)


def dedup_predictions(preds) -> list:
    """Keep the first occurrence of each stemmed form, order preserved."""
    seen = set()
    out = []
    for phrase in preds:
        key = _key(phrase)
        if key not in seen:
            seen.add(key)
            out.append(list(phrase))
    return out


def dedup_gold(gold, stem_gold: bool = True) -> list:
    seen = set()
    out = []
    for phrase in gold:
        key = _key(phrase, stem=stem_gold)
        if key not in seen:
            seen.add(key)
            out.append(list(phrase))
    return out


def _correct_flags(preds, gold, k: int, stem_gold: bool) -> list:
    gold_keys = {_key(g, stem=stem_gold) for g in gold}
    return [_key(p) in gold_keys for p in preds[:k]]


def precision_recall_f1(preds, gold, k: int, stem_gold: bool = True,
                        precision_denominator: str = "min"):
    """(P, R, F1) at cutoff k; empty preds score zero."""
    if precision_denominator not in DENOMINATORS:
        raise ValueError(f"precision_denominator must be one of {DENOMINATORS}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not gold:
        raise ValueError("gold list must be non-empty (skip such documents upstream)")
    if not preds:
        return 0.0, 0.0, 0.0
    correct = sum(_correct_flags(preds, gold, k, stem_gold))
    denom = min(k, len(preds)) if precision_denominator == "min" else k
    p = correct / denom
    r = correct / len(gold)
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


def f1_at_k(preds, gold, k: int, stem_gold: bool = True,
            precision_denominator: str = "min") -> float:
    return precision_recall_f1(preds, gold, k, stem_gold, precision_denominator)[2]


def recall_at_k(preds, gold, k: int, stem_gold: bool = True) -> float:
    return precision_recall_f1(preds, gold, k, stem_gold)[1]


def map_at_k(preds, gold, k: int = 10, stem_gold: bool = True) -> float:
    """Average precision over the top-k ranks, normalized by min(|gold|, k)."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not gold:
        raise ValueError("gold list must be non-empty (skip such documents upstream)")
    if not preds:
        return 0.0
    flags = _correct_flags(preds, gold, k, stem_gold)
    correct = 0
    ap = 0.0
    for i, hit in enumerate(flags, start=1):
        if hit:
            correct += 1
            ap += correct / i
    return ap / min(len(gold), k)


def split_present_absent(preds, gold, source_tokens, stem_gold: bool = True):
    """((present preds, present gold), (absent preds, absent gold))."""
    source_stems = stem_tokens(source_tokens)

    def is_present(phrase, stem: bool) -> bool:
        needle = stem_tokens(phrase) if stem else tuple(phrase)
        return contains_stemmed(source_stems, needle)

    pres_p = [p for p in preds if is_present(p, True)]
    abs_p = [p for p in preds if not is_present(p, True)]
    pres_g = [g for g in gold if is_present(g, stem_gold)]
    abs_g = [g for g in gold if not is_present(g, stem_gold)]
    return (pres_p, pres_g), (abs_p, abs_g)


@dataclass
class DocRecord:
    doc_id: str
    preds: list           # ranked phrase token lists
    gold: list            # gold phrase token lists
    source_tokens: list


def evaluate_documents(records, profile: str = "kp20k",
                       precision_denominator: str = "min") -> dict:
    """Macro-averaged report over DocRecords; returns a JSON-ready dict.

    The semeval profile treats gold phrases as pre-stemmed. Documents with
    empty gold are skipped entirely; present/absent sub-averages skip
    documents with no gold on that side.
    """
    from .merger import PROFILES

    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}, expected one of {PROFILES}")
    stem_gold = profile != "semeval"
    totals = {"f1_at_5": [], "f1_at_10": [], "map_at_10": []}
    present_f1 = []
    absent_r = []
    doc_rows = []
    skipped = 0
    for rec in records:
        gold = dedup_gold(rec.gold, stem_gold=stem_gold)
        if not gold:
            skipped += 1
            continue
        preds = dedup_predictions(rec.preds)
        row = {
            "id": rec.doc_id,
            "f1_at_5": f1_at_k(preds, gold, 5, stem_gold, precision_denominator),
            "f1_at_10": f1_at_k(preds, gold, 10, stem_gold, precision_denominator),
            "map_at_10": map_at_k(preds, gold, 10, stem_gold),
            "present_f1_at_5": None,
            "absent_recall_at_10": None,
        }
        (pres_p, pres_g), (abs_p, abs_g) = split_present_absent(
            preds, gold, rec.source_tokens, stem_gold=stem_gold)
        if pres_g:
            row["present_f1_at_5"] = f1_at_k(pres_p, pres_g, 5, stem_gold,
                                             precision_denominator)
            present_f1.append(row["present_f1_at_5"])
        if abs_g:
            row["absent_recall_at_10"] = recall_at_k(abs_p, abs_g, 10, stem_gold)
            absent_r.append(row["absent_recall_at_10"])
        for name in totals:
            totals[name].append(row[name])
        doc_rows.append(row)

    def macro(values):
        return sum(values) / len(values) if values else None

    return {
        "profile": profile,
        "precision_denominator": precision_denominator,
        "n_documents": len(doc_rows),
        "n_skipped_empty_gold": skipped,
        "total": {
            "f1_at_5": macro(totals["f1_at_5"]),
            "f1_at_10": macro(totals["f1_at_10"]),
            "map_at_10": macro(totals["map_at_10"]),
            "n_docs": len(doc_rows),
        },
        "present": {"f1_at_5": macro(present_f1), "n_docs": len(present_f1)},
        "absent": {"recall_at_10": macro(absent_r), "n_docs": len(absent_r)},
        "documents": doc_rows,
    }
