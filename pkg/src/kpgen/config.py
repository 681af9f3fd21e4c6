"""Flat, typed pipeline configuration with file/flag overrides and hashing.

The config hash covers only keys that change computation results: paths,
output locations, thread counts and force flags stay out so moving files
around never invalidates artifacts. The merge variant shares its hash with
the plain joint mode, letting one trained network serve both.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass

from .merger import PROFILES
from .model import PIPELINE_MODES, ModelConfig, network_mode
from .scorer import ScorerConfig

NON_SEMANTIC_KEYS = frozenset({
    "train_path", "valid_path", "test_path", "stopwords_path", "output_dir",
    "threads", "force",
})


@dataclass
class PipelineConfig:
    # data / artifacts
    train_path: str = ""
    valid_path: str = ""
    test_path: str = ""
    stopwords_path: str = ""          # empty -> bundled list
    output_dir: str = "out"
    # run controls
    mode: str = "KG-KE-KR-M"
    seed: int = 1
    profile: str = "kp20k"
    threads: int = 1
    force: bool = False
    # corpus
    vocab_size: int = 50000
    max_src_len: int = 400
    label_stemming: bool = False
    dedup_train: bool = False
    dedup_threshold: float = 0.9
    # retrieval
    retrieval_k: int = 3
    # network / training
    embedding_dim: int = 100
    hidden_dim: int = 300
    pos_loss_weight: float = 9.0
    dropout: float = 0.1
    batch_size: int = 64
    lr: float = 0.001
    epochs: int = 100
    patience: int = 4
    grad_clip: float = 1.0
    stop_loss_ratio: float = 0.0
    # decoding
    beam_depth: int = 6
    beam_size: int = 200
    beam_length_norm: bool = True
    # extraction candidates
    extract_epsilon: float = 0.7
    extract_filter_punct: bool = True
    # scorer
    scorer_embedding_dim: int = 100
    scorer_hidden_dim: int = 300
    scorer_ff_dim: int = 100
    scorer_lr: float = 0.001
    scorer_batch_size: int = 64
    scorer_epochs: int = 30
    scorer_patience: int = 4
    scorer_neg_ratio: int = 2
    # evaluation
    eval_precision_denominator: str = "min"

    def __post_init__(self):
        if self.mode not in PIPELINE_MODES:
            raise ValueError(f"mode must be one of {PIPELINE_MODES}, got {self.mode!r}")
        if self.profile not in PROFILES:
            raise ValueError(f"profile must be one of {PROFILES}, got {self.profile!r}")
        if self.eval_precision_denominator not in ("min", "k"):
            raise ValueError("eval_precision_denominator must be 'min' or 'k'")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")
        if not 0.0 < self.extract_epsilon <= 1.0:
            raise ValueError("extract_epsilon must be in (0, 1]")
        if not 0.0 < self.dedup_threshold <= 1.0:
            raise ValueError("dedup_threshold must be in (0, 1]")
        if self.retrieval_k < 1:
            raise ValueError(f"retrieval_k must be >= 1, got {self.retrieval_k}")
        # delegate network/scorer validation
        self.model_config()
        self.scorer_config()

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            embedding_dim=self.embedding_dim,
            hidden_dim=self.hidden_dim,
            vocab_size=self.vocab_size,
            pos_loss_weight=self.pos_loss_weight,
            dropout=self.dropout,
            batch_size=self.batch_size,
            lr=self.lr,
            beam_depth=self.beam_depth,
            beam_size=self.beam_size,
            mode=network_mode(self.mode),
            epochs=self.epochs,
            patience=self.patience,
            grad_clip=self.grad_clip,
            beam_length_norm=self.beam_length_norm,
            stop_loss_ratio=self.stop_loss_ratio,
        )

    def scorer_config(self) -> ScorerConfig:
        return ScorerConfig(
            embedding_dim=self.scorer_embedding_dim,
            hidden_dim=self.scorer_hidden_dim,
            ff_dim=self.scorer_ff_dim,
            lr=self.scorer_lr,
            batch_size=self.scorer_batch_size,
            epochs=self.scorer_epochs,
            patience=self.scorer_patience,
            neg_ratio=self.scorer_neg_ratio,
        )

    def semantic_items(self) -> list:
        items = []
        for f in dataclasses.fields(self):
            if f.name in NON_SEMANTIC_KEYS:
                continue
            value = getattr(self, f.name)
            if f.name == "mode":
                value = network_mode(value)
            items.append((f.name, _render(value)))
        return sorted(items)

    def config_hash(self) -> str:
        payload = "\n".join(f"{k}={v}" for k, v in self.semantic_items())
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    def effective_text(self) -> str:
        lines = [f"{f.name} = {_render(getattr(self, f.name))}"
                 for f in sorted(dataclasses.fields(self), key=lambda f: f.name)]
        lines.append(f"# config_hash = {self.config_hash()}")
        return "\n".join(lines) + "\n"


def _render(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(PipelineConfig)}


def _parse_value(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    if kind == "bool":
        lowered = raw.lower()
        if lowered not in ("true", "false"):
            raise ValueError(f"config key {key!r}: expected true/false, got {raw!r}")
        return lowered == "true"
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw


def parse_config_file(path) -> dict:
    """key = value lines; # comments and blank lines ignored; unknown keys fail."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
            key, _, raw = stripped.partition("=")
            key = key.strip()
            if key not in _FIELD_TYPES:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            if key in values:
                raise ValueError(f"{path}:{lineno}: duplicate config key {key!r}")
            values[key] = _parse_value(key, raw)
    return values


def load_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """Config file values overridden by CLI flags, then validated."""
    values = parse_config_file(path) if path else {}
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELD_TYPES:
            raise ValueError(f"unknown config key {key!r}")
        values[key] = value
    return PipelineConfig(**values)
