"""Seeded synthetic corpus: five topics, short abstracts, known keyphrases.

Each document carries five gold keyphrases: four phrases taken verbatim from
its topic's phrase pool (present in the text) and the topic theme. Training
titles contain the theme; validation/test documents never mention the theme
tokens, so for them the theme is an absent keyphrase reachable through
retrieval from same-topic training neighbors.
"""

from __future__ import annotations

import json

import numpy as np

from .corpus import Document

TOPICS = [
    {
        "slug": "spect",
        "theme": "spectral clustering",
        "pool": ["normalized graph laplacian embedding transform",
                 "eigenvalue gap based rank selection",
                 "local scaling affinity matrix construction",
                 "random walk transition probability smoothing",
                 "nearest neighbor graph sparsification rule",
                 "quantile based kernel bandwidth calibration",
                 "degree corrected partition refinement step",
                 "block structure recovery error bounds"],
        "fillers": ["nodes", "edges", "communities", "networks"],
    },
    {
        "slug": "market",
        "theme": "market forecasting",
        "pool": ["order flow imbalance signal construction",
                 "volatility regime switching state models",
                 "liquidity adjusted excess return series",
                 "seasonal trend decomposition residual filters",
                 "risk premium decay rate estimates",
                 "momentum factor exposure drift tracking",
                 "bid ask spread reversion rules",
                 "earnings surprise response curve fitting"],
        "fillers": ["prices", "assets", "traders", "portfolios"],
    },
    {
        "slug": "protein",
        "theme": "protein folding",
        "pool": ["residue contact map prediction accuracy",
                 "backbone torsion angle sampling moves",
                 "hydrophobic core packing density scores",
                 "side chain rotamer library search",
                 "disulfide bond placement distance constraints",
                 "template free tertiary structure assembly",
                 "energy landscape funnel shape analysis",
                 "solvent accessibility profile estimation window"],
        "fillers": ["molecules", "sequences", "chains", "conformers"],
    },
    {
        "slug": "speech",
        "theme": "speech recognition",
        "pool": ["acoustic feature frame stacking window",
                 "phoneme duration modeling output layers",
                 "noise robust channel masking filters",
                 "language model fusion weight tuning",
                 "beam pruning threshold decay schedules",
                 "speaker adaptation transform matrix updates",
                 "subword unit inventory size design",
                 "alignment lattice rescoring second pass"],
        "fillers": ["audio", "frames", "utterances", "voices"],
    },
    {
        "slug": "crop",
        "theme": "crop irrigation",
        "pool": ["soil moisture sensor placement depth",
                 "canopy temperature based stress index",
                 "drip emitter spacing layout design",
                 "weekly evapotranspiration demand profile updates",
                 "root zone water depletion thresholds",
                 "rainfall capture storage tank sizing",
                 "salinity buildup mitigation leaching plans",
                 "growth stage based water allocation"],
        "fillers": ["fields", "plants", "seasons", "harvests"],
    },
]

_TITLE_SUFFIXES = ["analysis", "methods", "advances", "models"]
_HELDOUT_TITLES = ["notes on {f0} {f1} experiments", "a report on {f0} {f1} data"]

TRAIN_PER_TOPIC = 10
VALID_PER_TOPIC = 2
TEST_PER_TOPIC = 2


def _make_doc(topic: dict, idx: int, split: str, rng) -> Document:
    pool = topic["pool"]
    chosen = [pool[i] for i in rng.choice(len(pool), size=4, replace=False)]
    fillers = [topic["fillers"][i] for i in rng.permutation(len(topic["fillers"]))]
    if split == "train":
        suffix = _TITLE_SUFFIXES[int(rng.integers(0, len(_TITLE_SUFFIXES)))]
        title = f"{topic['theme']} {suffix}"
    else:
        template = _HELDOUT_TITLES[int(rng.integers(0, len(_HELDOUT_TITLES)))]
        title = template.format(f0=fillers[0], f1=fillers[1])
    abstract = (
        f"we study {chosen[0]} and {chosen[1]} for {fillers[0]} {fillers[1]} tasks . "
        f"our method uses {chosen[2]} with {fillers[2]} {fillers[3]} data . "
        f"results show {chosen[3]} improves {fillers[0]} quality ."
    )
    return Document(
        id=f"{topic['slug']}-{split}-{idx:02d}",
        title=title,
        abstract=abstract,
        keyphrases=tuple([topic["theme"]] + chosen),
    )


def generate_toy_corpus(seed: int = 1):
    """(train, valid, test) Document lists: 50/10/10 over five topics."""
    rng = np.random.default_rng(seed)
    train, valid, test = [], [], []
    for topic in TOPICS:
        for i in range(TRAIN_PER_TOPIC):
            train.append(_make_doc(topic, i, "train", rng))
        for i in range(VALID_PER_TOPIC):
            valid.append(_make_doc(topic, i, "valid", rng))
        for i in range(TEST_PER_TOPIC):
            test.append(_make_doc(topic, i, "test", rng))
    return train, valid, test


def dump_dataset(docs, path):
    lines = []
    for doc in docs:
        lines.append(json.dumps({
            "id": doc.id,
            "title": doc.title,
            "abstract": doc.abstract,
            "keyphrases": list(doc.keyphrases),
        }, sort_keys=True))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


TOY_CONFIG_KEYS = {
    "mode": "KG-KE-KR-M",
    "seed": 1,
    "embedding_dim": 32,
    "hidden_dim": 64,
    "dropout": 0.0,
    "batch_size": 10,
    "lr": 0.004,
    "epochs": 300,
    "patience": 300,
    "stop_loss_ratio": 0.1,
    "beam_depth": 5,
    "beam_size": 50,
    "scorer_embedding_dim": 16,
    "scorer_hidden_dim": 16,
    "scorer_ff_dim": 8,
    "scorer_lr": 0.005,
    "scorer_epochs": 10,
    "scorer_patience": 10,
}


def toy_config_text(out_dir: str) -> str:
    """Config file contents sized for fast desk-scale runs on the toy corpus."""
    lines = [
        f"train_path = {out_dir}/toy_train.jsonl",
        f"valid_path = {out_dir}/toy_valid.jsonl",
        f"test_path = {out_dir}/toy_test.jsonl",
        f"output_dir = {out_dir}/run",
    ]
    for key, value in TOY_CONFIG_KEYS.items():
        rendered = str(value).lower() if isinstance(value, bool) else value
        lines.append(f"{key} = {rendered}")
    return "\n".join(lines) + "\n"
