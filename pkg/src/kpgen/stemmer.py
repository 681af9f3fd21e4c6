"""Porter stemmer used for phrase matching and deduplication.

Implements the 1980 algorithm rules. Words of length <= 2 are returned
unchanged (every reference implementation applies this guard). Matching
within a step picks the longest suffix in the step's rule list; if that
rule's condition fails, no rule of the step applies.
"""

from __future__ import annotations

from functools import lru_cache

_VOWELS = frozenset("aeiou")


def _is_consonant(word: str, i: int) -> bool:
    ch = word[i]
    if ch in _VOWELS:
        return False
    if ch == "y":
        # y is a vowel when preceded by a consonant; a leading y is a consonant
        return i == 0 or not _is_consonant(word, i - 1)
    return True


def _measure(stem: str) -> int:
    """Number of VC blocks in [C](VC)^m[V]."""
    m = 0
    i = 0
    n = len(stem)
    while i < n and _is_consonant(stem, i):
        i += 1
    while i < n:
        while i < n and not _is_consonant(stem, i):
            i += 1
        if i >= n:
            break
        m += 1
        while i < n and _is_consonant(stem, i):
            i += 1
    return m


def _contains_vowel(stem: str) -> bool:
    return any(not _is_consonant(stem, i) for i in range(len(stem)))


def _ends_double_consonant(word: str) -> bool:
    return (
        len(word) >= 2
        and word[-1] == word[-2]
        and _is_consonant(word, len(word) - 1)
    )


def _ends_cvc(stem: str) -> bool:
    """*o condition: ends consonant-vowel-consonant, final not w, x or y."""
    if len(stem) < 3:
        return False
    n = len(stem)
    return (
        _is_consonant(stem, n - 3)
        and not _is_consonant(stem, n - 2)
        and _is_consonant(stem, n - 1)
        and stem[-1] not in "wxy"
    )


def _longest_rule(word, rules):
    """First (suffix, repl, cond) whose suffix matches; rules are longest-first."""
    for suffix, repl, cond in rules:
        if word.endswith(suffix):
            return suffix, repl, cond
    return None


def _apply_step(word: str, rules) -> str:
    hit = _longest_rule(word, rules)
    if hit is None:
        return word
    suffix, repl, cond = hit
    stem = word[: len(word) - len(suffix)]
    if cond is not None and not cond(stem):
        return word
    return stem + repl


_m_gt_0 = lambda s: _measure(s) > 0
_m_gt_1 = lambda s: _measure(s) > 1

_STEP2 = [
    ("ational", "ate", _m_gt_0),
    ("ization", "ize", _m_gt_0),
    ("iveness", "ive", _m_gt_0),
    ("fulness", "ful", _m_gt_0),
    ("ousness", "ous", _m_gt_0),
    ("tional", "tion", _m_gt_0),
    ("biliti", "ble", _m_gt_0),
    ("ation", "ate", _m_gt_0),
    ("alism", "al", _m_gt_0),
    ("aliti", "al", _m_gt_0),
    ("iviti", "ive", _m_gt_0),
    ("ousli", "ous", _m_gt_0),
    ("entli", "ent", _m_gt_0),
    ("enci", "ence", _m_gt_0),
    ("anci", "ance", _m_gt_0),
    ("izer", "ize", _m_gt_0),
    ("abli", "able", _m_gt_0),
    ("alli", "al", _m_gt_0),
    ("ator", "ate", _m_gt_0),
    ("eli", "e", _m_gt_0),
]

_STEP3 = [
    ("icate", "ic", _m_gt_0),
    ("ative", "", _m_gt_0),
    ("alize", "al", _m_gt_0),
    ("iciti", "ic", _m_gt_0),
    ("ical", "ic", _m_gt_0),
    ("ness", "", _m_gt_0),
    ("ful", "", _m_gt_0),
]

_STEP4 = [
    ("ement", "", _m_gt_1),
    ("ance", "", _m_gt_1),
    ("ence", "", _m_gt_1),
    ("able", "", _m_gt_1),
    ("ible", "", _m_gt_1),
    ("ment", "", _m_gt_1),
    ("ant", "", _m_gt_1),
    ("ent", "", _m_gt_1),
    ("ion", "", lambda s: _m_gt_1(s) and s[-1:] in ("s", "t")),
    ("ism", "", _m_gt_1),
    ("ate", "", _m_gt_1),
    ("iti", "", _m_gt_1),
    ("ous", "", _m_gt_1),
    ("ive", "", _m_gt_1),
    ("ize", "", _m_gt_1),
    ("al", "", _m_gt_1),
    ("er", "", _m_gt_1),
    ("ic", "", _m_gt_1),
    ("ou", "", _m_gt_1),
]


def _step1(word: str) -> str:
    # 1a: plurals
    if word.endswith("sses"):
        word = word[:-2]
    elif word.endswith("ies"):
        word = word[:-2]
    elif word.endswith("ss"):
        pass
    elif word.endswith("s"):
        word = word[:-1]

    # 1b: -eed / -ed / -ing
    cleanup = False
    if word.endswith("eed"):
        if _measure(word[:-3]) > 0:
            word = word[:-1]
    elif word.endswith("ed") and _contains_vowel(word[:-2]):
        word = word[:-2]
        cleanup = True
    elif word.endswith("ing") and _contains_vowel(word[:-3]):
        word = word[:-3]
        cleanup = True

    if cleanup:
        if word.endswith(("at", "bl", "iz")):
            word += "e"
        elif _ends_double_consonant(word) and word[-1] not in "lsz":
            word = word[:-1]
        elif _measure(word) == 1 and _ends_cvc(word):
            word += "e"

    # 1c: terminal y
    if word.endswith("y") and _contains_vowel(word[:-1]):
        word = word[:-1] + "i"
    return word


def _step5(word: str) -> str:
    # 5a: terminal e
    if word.endswith("e"):
        stem = word[:-1]
        m = _measure(stem)
        if m > 1 or (m == 1 and not _ends_cvc(stem)):
            word = stem
    # 5b: -ll with m > 1
    if word.endswith("ll") and _measure(word) > 1:
        word = word[:-1]
    return word


@lru_cache(maxsize=65536)
def stem(word: str) -> str:
    """Stem a single lowercase token. Non-alphabetic tokens pass through."""
    if len(word) <= 2 or not word.isascii() or not word.isalpha():
        return word
    word = _step1(word)
    word = _apply_step(word, _STEP2)
    word = _apply_step(word, _STEP3)
    word = _apply_step(word, _STEP4)
    word = _step5(word)
    return word


def stem_tokens(tokens) -> tuple:
    return tuple(stem(t) for t in tokens)


def phrase_key(tokens) -> str:
    """Canonical form used for phrase identity across the pipeline."""
    return " ".join(stem_tokens(tokens))
