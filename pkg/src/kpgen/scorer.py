"""Document-candidate relevance scorer used by the merging stage.

A small soft-alignment classifier: BiGRU encodings on both sides, decomposable
attention (attend, compare, aggregate), one hidden layer, sigmoid logit. It
shares the corpus Vocabulary but trains its own embeddings.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import GRUCell, Tape, Tensor
from .stemmer import phrase_key

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


@dataclass
class ScorerConfig:
    embedding_dim: int = 100
    hidden_dim: int = 300
    ff_dim: int = 100
    lr: float = 0.001
    batch_size: int = 64
    epochs: int = 30
    patience: int = 4
    grad_clip: float = 1.0
    neg_ratio: int = 2

    def __post_init__(self):
        for name in ("embedding_dim", "hidden_dim", "ff_dim", "batch_size",
                     "epochs", "neg_ratio"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.hidden_dim % 2:
            raise ValueError(f"hidden_dim must be even, got {self.hidden_dim}")


@dataclass
class ScorerExample:
    doc_tokens: list
    cand_tokens: list
    label: int


class ScorerModel:
    def __init__(self, config: ScorerConfig, n_vocab: int, rng):
        if n_vocab < 6:
            raise ValueError(f"vocabulary too small: {n_vocab}")
        self.config = config
        self.n_vocab = n_vocab
        self.params: dict = {}
        d_e, d, f = config.embedding_dim, config.hidden_dim, config.ff_dim
        half = d // 2
        self.embedding = ad.init_uniform(rng, (n_vocab, d_e))
        self.params["emb.E"] = self.embedding
        self.enc_d_fwd = GRUCell(d_e, half, rng, "enc_d_fwd", self.params)
        self.enc_d_bwd = GRUCell(d_e, half, rng, "enc_d_bwd", self.params)
        self.enc_c_fwd = GRUCell(d_e, half, rng, "enc_c_fwd", self.params)
        self.enc_c_bwd = GRUCell(d_e, half, rng, "enc_c_bwd", self.params)
        self._register(rng, "att.W_f", (d, f))
        self._register(rng, "att.b_f", (1, f))
        self._register(rng, "cmp.W_g", (2 * d, f))
        self._register(rng, "cmp.b_g", (1, f))
        self._register(rng, "agg.W_h", (2 * f, f))
        self._register(rng, "agg.b_h", (1, f))
        self._register(rng, "out.w", (f, 1))
        self._register(rng, "out.b", (1, 1))

    def _register(self, rng, name, shape):
        self.params[name] = ad.init_uniform(rng, shape)

    def _encode(self, ids, fwd_cell, bwd_cell) -> Tensor:
        embs = ad.embed(self.embedding, ids)
        n = len(ids)
        half = self.config.hidden_dim // 2
        h = ad.zeros((1, half))
        fwd = []
        for i in range(n):
            h = fwd_cell(ad.rows(embs, i, i + 1), h)
            fwd.append(h)
        h = ad.zeros((1, half))
        bwd = [None] * n
        for i in range(n - 1, -1, -1):
            h = bwd_cell(ad.rows(embs, i, i + 1), h)
            bwd[i] = h
        rows = [ad.concat([fwd[i], bwd[i]], axis=1) for i in range(n)]
        return rows[0] if n == 1 else ad.concat(rows, axis=0)

    def _ff(self, x, w_name, b_name):
        return ad.relu(ad.add(ad.matmul(x, self.params[w_name]), self.params[b_name]))

    def forward(self, doc_ids, cand_ids) -> Tensor:
        """Relevance probability (1, 1) tensor; participates in active tapes."""
        if not len(doc_ids):
            raise ValueError("scorer: empty document")
        if not len(cand_ids):
            raise ValueError("scorer: empty candidate")
        a = self._encode(doc_ids, self.enc_d_fwd, self.enc_d_bwd)    # (La, d)
        b = self._encode(cand_ids, self.enc_c_fwd, self.enc_c_bwd)   # (Lb, d)
        f_a = self._ff(a, "att.W_f", "att.b_f")
        f_b = self._ff(b, "att.W_f", "att.b_f")
        sim = ad.matmul(f_a, ad.transpose(f_b))                      # (La, Lb)
        b_soft = ad.matmul(ad.softmax(sim), b)                       # (La, d)
        a_soft = ad.matmul(ad.softmax(ad.transpose(sim)), a)         # (Lb, d)
        v_a = self._ff(ad.concat([a, b_soft], axis=1), "cmp.W_g", "cmp.b_g")
        v_b = self._ff(ad.concat([b, a_soft], axis=1), "cmp.W_g", "cmp.b_g")
        pooled = ad.concat([
            ad.tmean(v_a, axis=0, keepdims=True),
            ad.tmean(v_b, axis=0, keepdims=True),
        ], axis=1)
        hidden = self._ff(pooled, "agg.W_h", "agg.b_h")
        logit = ad.add(ad.matmul(hidden, self.params["out.w"]), self.params["out.b"])
        return ad.sigmoid(logit)

    def score(self, doc_tokens, cand_tokens, vocab) -> float:
        return self.forward(vocab.encode(doc_tokens), vocab.encode(cand_tokens)).item()

    def scoring_fn(self, vocab):
        """Callable (doc_tokens, phrase_tokens) -> probability, for merging."""
        return lambda doc_tokens, phrase_tokens: self.score(doc_tokens, phrase_tokens, vocab)

    # -- training -------------------------------------------------------------

    @staticmethod
    def _bce(prob: Tensor, label: int) -> Tensor:
        p = ad.clip(prob, PROB_FLOOR, 1.0 - PROB_FLOOR)
        if label == 1:
            return ad.neg(ad.log(p))
        return ad.neg(ad.log(ad.rsub(1.0, p)))

    def accuracy(self, examples, vocab) -> float:
        if not examples:
            return float("nan")
        correct = 0
        for ex in examples:
            p = self.score(ex.doc_tokens, ex.cand_tokens, vocab)
            correct += int((p > 0.5) == bool(ex.label))
        return correct / len(examples)

    def snapshot(self) -> dict:
        return {name: p.data.copy() for name, p in self.params.items()}

    def restore(self, snapshot: dict):
        for name, data in snapshot.items():
            self.params[name].data = data.copy()

    def train(self, examples, valid_examples, vocab, rng) -> list:
        if not examples:
            raise ValueError("train_scorer: empty training set")
        labels = {ex.label for ex in examples}
        if labels != {0, 1}:
            raise ValueError(f"train_scorer: need both labels, got {sorted(labels)}")
        cfg = self.config
        opt = ad.AdamState(lr=cfg.lr)
        log = []
        best_acc = -1.0
        best_snapshot = self.snapshot()
        bad_evals = 0
        updates = 0
        encoded = [
            (vocab.encode(ex.doc_tokens), vocab.encode(ex.cand_tokens), ex.label)
            for ex in examples
        ]
        for epoch in range(cfg.epochs):
            order = rng.permutation(len(encoded))
            epoch_loss = 0.0
            for start in range(0, len(order), cfg.batch_size):
                chunk = order[start:start + cfg.batch_size]
                with Tape() as tape:
                    total = None
                    for idx in chunk:
                        doc_ids, cand_ids, label = encoded[idx]
                        term = self._bce(self.forward(doc_ids, cand_ids), label)
                        total = term if total is None else ad.add(total, term)
                    mean_loss = ad.div(total, float(len(chunk)))
                    value = mean_loss.item()
                    if not math.isfinite(value):
                        raise RuntimeError("scorer training diverged: non-finite loss")
                    tape.backward(mean_loss)
                epoch_loss += value * len(chunk)
                grads = {}
                for name, p in self.params.items():
                    if p.grad is not None:
                        grads[name] = p.grad
                        p.grad = None
                ad.clip_global_norm(grads, cfg.grad_clip)
                ad.adam_step(self.params, grads, opt)
                updates += 1
            acc = self.accuracy(valid_examples, vocab)
            log.append({
                "step": updates,
                "train_loss": epoch_loss / len(encoded),
                "valid_acc": acc,
            })
            if acc > best_acc + 1e-12:
                best_acc = acc
                best_snapshot = self.snapshot()
                bad_evals = 0
            else:
                bad_evals += 1
            if bad_evals >= cfg.patience:
                break
            if acc == 1.0:
                break
        self.restore(best_snapshot)
        return log

    # -- persistence ------------------------------------------------------------

    def save(self, path, config_hash: str = ""):
        cfg = self.config
        meta = {
            "config_hash": config_hash,
            "kind": "scorer",
            "embedding_dim": cfg.embedding_dim,
            "hidden_dim": cfg.hidden_dim,
            "ff_dim": cfg.ff_dim,
            "n_vocab": self.n_vocab,
        }
        ad.save_checkpoint(path, self.params, meta)

    @classmethod
    def load(cls, path):
        tensors, meta = ad.load_checkpoint(path)
        if meta.get("kind") != "scorer":
            raise ValueError(f"{path}: not a scorer checkpoint")
        config = ScorerConfig(
            embedding_dim=int(meta["embedding_dim"]),
            hidden_dim=int(meta["hidden_dim"]),
            ff_dim=int(meta["ff_dim"]),
        )
        model = cls(config, int(meta["n_vocab"]), np.random.default_rng(0))
        if set(tensors) != set(model.params):
            missing = set(model.params) ^ set(tensors)
            raise ValueError(f"{path}: parameter names mismatch: {sorted(missing)}")
        for name, data in tensors.items():
            if model.params[name].data.shape != data.shape:
                raise ValueError(f"{path}: shape mismatch for {name}")
            model.params[name].data = data
        return model, meta


# -- example construction -------------------------------------------------------


def sample_negatives(doc, retrieved_phrases, n_neg: int, rng) -> list:
    """Negative candidates: random 1-3 token document spans and retrieved
    phrases, half and half, never stem-equal to a gold keyphrase."""
    if n_neg < 1:
        raise ValueError("n_neg must be >= 1")
    gold_keys = {phrase_key(p) for p in doc.gold_phrases}
    taken = set()
    out = []
    attempts = 0
    max_attempts = 50 * n_neg
    n_tokens = len(doc.tokens)
    while len(out) < n_neg and attempts < max_attempts:
        attempts += 1
        use_retrieved = retrieved_phrases and rng.integers(0, 2) == 1
        if use_retrieved:
            phrase = list(retrieved_phrases[int(rng.integers(0, len(retrieved_phrases)))])
        else:
            if n_tokens == 0:
                break
            start = int(rng.integers(0, n_tokens))
            length = min(int(rng.integers(1, 4)), n_tokens - start)
            phrase = list(doc.tokens[start:start + length])
        key = phrase_key(phrase)
        if key in gold_keys or key in taken:
            continue
        taken.add(key)
        out.append(phrase)
    if len(out) < n_neg:
        logger.warning("document %s: only %d/%d distinct negatives available",
                       doc.doc_id, len(out), n_neg)
    return out


def build_examples(docs, retrieved_by_id: dict, neg_ratio: int, rng) -> list:
    """Positive gold pairs plus neg_ratio sampled negatives per positive."""
    examples = []
    for doc in docs:
        gold = [list(p) for p in doc.gold_phrases]
        if not gold:
            continue
        retrieved = retrieved_by_id.get(doc.doc_id, [])
        for phrase in gold:
            examples.append(ScorerExample(list(doc.tokens), phrase, 1))
        for phrase in sample_negatives(doc, retrieved, neg_ratio * len(gold), rng):
            examples.append(ScorerExample(list(doc.tokens), phrase, 0))
    return examples
