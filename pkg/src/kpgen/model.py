"""Joint extractive/generative keyphrase network with retrieval guidance.

Three network modes:
  KG-KE     extractor only guides copying is absent; no retrieval encoder,
            the external context vector is zero.
  KG-KR     retrieval encoder but no extractor; copy weights are the raw
            internal attention and the loss is generation-only.
  KG-KE-KR  both paths; copy attention rescaled by extractor scores.

The pipeline-level mode KG-KE-KR-M reuses a KG-KE-KR network and adds
candidate merging at prediction time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import GRUCell, Tape, Tensor
from .stemmer import phrase_key

MODES = ("KG-KE", "KG-KR", "KG-KE-KR")
PIPELINE_MODES = MODES + ("KG-KE-KR-M",)

PROB_FLOOR = 1e-12


def network_mode(mode: str) -> str:
    return "KG-KE-KR" if mode == "KG-KE-KR-M" else mode


@dataclass
class ModelConfig:
    embedding_dim: int = 100
    hidden_dim: int = 300
    vocab_size: int = 50000
    pos_loss_weight: float = 9.0
    dropout: float = 0.1
    batch_size: int = 64
    lr: float = 0.001
    beam_depth: int = 6
    beam_size: int = 200
    mode: str = "KG-KE-KR"
    epochs: int = 100
    patience: int = 4
    grad_clip: float = 1.0
    beam_length_norm: bool = True
    stop_loss_ratio: float = 0.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in ("embedding_dim", "hidden_dim", "vocab_size", "batch_size",
                     "beam_depth", "beam_size", "epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.hidden_dim % 2:
            raise ValueError(f"hidden_dim must be even, got {self.hidden_dim}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0,1), got {self.dropout}")

    @property
    def uses_retrieval(self) -> bool:
        return self.mode != "KG-KE"

    @property
    def uses_extractor(self) -> bool:
        return self.mode != "KG-KR"


@dataclass
class EncodedSource:
    bank: Tensor      # (L_x, d)
    doc_vec: Tensor   # (1, d)
    h0: Tensor        # (1, d)


@dataclass
class DocExamples:
    """All training tuples of one document; x, r and beta* are shared."""

    doc_id: str
    x: list
    x_ext: list
    oov_tokens: list
    r: list
    beta_star: list
    targets: list = field(default_factory=list)  # (y, y_ext) pairs


def group_tuples(tuples) -> list:
    groups = {}
    order = []
    for t in tuples:
        g = groups.get(t.doc_id)
        if g is None:
            g = DocExamples(
                doc_id=t.doc_id, x=t.x, x_ext=t.x_ext, oov_tokens=t.oov_tokens,
                r=t.r, beta_star=t.beta_star,
            )
            groups[t.doc_id] = g
            order.append(g)
        elif g.x != t.x:
            raise ValueError(f"tuples of document {t.doc_id} disagree on x")
        g.targets.append((t.y, t.y_ext))
    return order


class KGModel:
    def __init__(self, config: ModelConfig, n_vocab: int, rng):
        if n_vocab < 6:
            raise ValueError(f"vocabulary too small: {n_vocab}")
        self.config = config
        self.n_vocab = n_vocab
        self.params: dict = {}
        d_e, d = config.embedding_dim, config.hidden_dim
        half = d // 2

        self.embedding = ad.init_uniform(rng, (n_vocab, d_e))
        self.params["embed.E"] = self.embedding
        self.enc_x_fwd = GRUCell(d_e, half, rng, "enc_x_fwd", self.params)
        self.enc_x_bwd = GRUCell(d_e, half, rng, "enc_x_bwd", self.params)
        if config.uses_retrieval:
            self.enc_r_fwd = GRUCell(d_e, half, rng, "enc_r_fwd", self.params)
            self.enc_r_bwd = GRUCell(d_e, half, rng, "enc_r_bwd", self.params)
            self._register(rng, "att_ex.W", (d, d))
        if config.uses_extractor:
            self._register(rng, "ext.W_c", (d, 1))
            self._register(rng, "ext.W_s", (d, d))
            self._register(rng, "ext.W_n", (d, d))
            self._register(rng, "ext.b", (1, 1))
        self._register(rng, "doc.W_d", (d, d))
        self._register(rng, "doc.b_d", (1, d))
        self.decoder = GRUCell(d_e + d, d, rng, "dec", self.params)
        self._register(rng, "att_in.W", (d, d))
        self._register(rng, "out.W_1", (3 * d, d))
        self._register(rng, "out.w_g", (d, 1))
        self._register(rng, "out.b_g", (1, 1))
        self._register(rng, "out.W_2", (d, n_vocab))
        self._register(rng, "out.b_v", (1, n_vocab))

    def _register(self, rng, name, shape):
        self.params[name] = ad.init_uniform(rng, shape)

    # -- encoders -----------------------------------------------------------

    def _bigru(self, token_ids, fwd_cell, bwd_cell, drop_rng=None):
        embs = ad.embed(self.embedding, token_ids)
        if drop_rng is not None:
            embs = ad.dropout(embs, self.config.dropout, drop_rng)
        n = len(token_ids)
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
        bank = rows[0] if n == 1 else ad.concat(rows, axis=0)
        edges = ad.concat([fwd[-1], bwd[0]], axis=1)
        return bank, edges

    def encode_source(self, x_ids, drop_rng=None) -> EncodedSource:
        if not len(x_ids):
            raise ValueError("encode_source: empty token sequence")
        bank, edges = self._bigru(x_ids, self.enc_x_fwd, self.enc_x_bwd, drop_rng)
        doc_vec = ad.tanh(ad.add(ad.matmul(edges, self.params["doc.W_d"]), self.params["doc.b_d"]))
        return EncodedSource(bank=bank, doc_vec=doc_vec, h0=edges)

    def encode_retrieved(self, r_ids, drop_rng=None):
        """External memory bank, or None when r is empty (KG-KE or no hits)."""
        if not self.config.uses_retrieval or not len(r_ids):
            return None
        bank, _ = self._bigru(r_ids, self.enc_r_fwd, self.enc_r_bwd, drop_rng)
        return bank

    # -- extractor ----------------------------------------------------------

    def extract_scores(self, enc: EncodedSource) -> Tensor:
        """Keyword probabilities (1, L_x), left-to-right novelty recurrence."""
        if not self.config.uses_extractor:
            raise RuntimeError("extractor disabled in mode " + self.config.mode)
        w_c, w_s = self.params["ext.W_c"], self.params["ext.W_s"]
        w_n, bias = self.params["ext.W_n"], self.params["ext.b"]
        doc_t = ad.transpose(enc.doc_vec)                       # (d, 1)
        n = enc.bank.shape[0]
        summary = ad.zeros((1, self.config.hidden_dim))
        betas = []
        for j in range(n):
            u_j = ad.rows(enc.bank, j, j + 1)
            content = ad.matmul(u_j, w_c)
            salience = ad.matmul(ad.matmul(u_j, w_s), doc_t)
            novelty = ad.matmul(ad.matmul(u_j, w_n), ad.transpose(ad.tanh(summary)))
            beta_j = ad.sigmoid(ad.add(ad.add(content, ad.sub(salience, novelty)), bias))
            betas.append(beta_j)
            summary = ad.add(summary, ad.mul(u_j, beta_j))
        return betas[0] if n == 1 else ad.concat(betas, axis=1)

    # -- decoder ------------------------------------------------------------

    @staticmethod
    def attend(h_t: Tensor, memory: Tensor, weights: Tensor):
        """Bilinear attention: context (1, d) and weights (1, rows)."""
        if memory.shape[0] < 1:
            raise ValueError("attend: empty memory bank")
        scores = ad.matmul(ad.matmul(h_t, weights), ad.transpose(memory))
        alpha = ad.softmax(scores)
        return ad.matmul(alpha, memory), alpha

    @staticmethod
    def rescale_copy(alpha_in: Tensor, beta: Tensor | None) -> Tensor:
        """Importance-rescaled copy weights; identity when beta is None."""
        if beta is None:
            return alpha_in
        weighted = ad.mul(alpha_in, beta)
        denom = ad.tsum(weighted, axis=1, keepdims=True)
        return ad.div(weighted, denom)

    def decode_step(self, prev_emb: Tensor, h_prev: Tensor, htilde_prev: Tensor,
                    enc: EncodedSource, ret_bank, beta, x_ext_ids, ext_size: int,
                    drop_rng=None):
        """One teacher-forcing/beam step; returns (P over V+OOV, h_t, htilde)."""
        h_t = self.decoder(ad.concat([prev_emb, htilde_prev], axis=1), h_prev)
        c_in, alpha_in = self.attend(h_t, enc.bank, self.params["att_in.W"])
        if ret_bank is not None:
            c_ex, _ = self.attend(h_t, ret_bank, self.params["att_ex.W"])
        else:
            c_ex = ad.zeros((1, self.config.hidden_dim))
        htilde = ad.tanh(ad.matmul(ad.concat([c_in, c_ex, h_t], axis=1), self.params["out.W_1"]))
        if drop_rng is not None:
            htilde = ad.dropout(htilde, self.config.dropout, drop_rng)
        gate = ad.sigmoid(ad.add(ad.matmul(htilde, self.params["out.w_g"]), self.params["out.b_g"]))
        p_vocab = ad.softmax(ad.add(ad.matmul(htilde, self.params["out.W_2"]), self.params["out.b_v"]))
        alpha_c = self.rescale_copy(alpha_in, beta)
        copy_dist = ad.scatter_sum(alpha_c, x_ext_ids, ext_size)
        if ext_size > self.n_vocab:
            pad = ad.zeros((1, ext_size - self.n_vocab))
            p_vocab_ext = ad.concat([p_vocab, pad], axis=1)
        else:
            p_vocab_ext = p_vocab
        dist = ad.add(ad.mul(p_vocab_ext, ad.rsub(1.0, gate)), ad.mul(copy_dist, gate))
        return {
            "dist": dist, "h": h_t, "htilde": htilde, "gate": gate,
            "alpha_in": alpha_in, "alpha_c": alpha_c,
        }

    # -- losses -------------------------------------------------------------

    def extraction_loss(self, beta: Tensor, beta_star) -> Tensor:
        star = Tensor(np.asarray(beta_star, dtype=float).reshape(1, -1))
        one_minus_star = Tensor(1.0 - star.data)
        w = self.config.pos_loss_weight
        pos = ad.mul(ad.mul(star, ad.log(ad.clip(beta, PROB_FLOOR, 1.0 - PROB_FLOOR))), w)
        neg_beta = ad.clip(ad.rsub(1.0, beta), PROB_FLOOR, 1.0 - PROB_FLOOR)
        neg = ad.mul(one_minus_star, ad.log(neg_beta))
        return ad.neg(ad.tmean(ad.add(pos, neg)))

    @staticmethod
    def generation_loss(dists, y_ext) -> Tensor:
        if len(dists) != len(y_ext):
            raise ValueError("generation_loss: one distribution per target position required")
        total = None
        for dist, target in zip(dists, y_ext):
            if target is None:
                continue
            p = ad.clip(ad.pick(dist, 0, int(target)), PROB_FLOOR, 1.0)
            term = ad.neg(ad.log(p))
            total = term if total is None else ad.add(total, term)
        if total is None:
            return Tensor(np.asarray(0.0))
        return total

    # -- forward over one document's tuples ----------------------------------

    def _bos_embedding(self, drop_rng=None):
        emb = ad.embed(self.embedding, [2])
        if drop_rng is not None:
            emb = ad.dropout(emb, self.config.dropout, drop_rng)
        return emb

    def doc_losses(self, group: DocExamples, drop_rng=None):
        """(L_e or None, [L_g per tuple]) on the active tape."""
        enc = self.encode_source(group.x, drop_rng)
        ret_bank = self.encode_retrieved(group.r, drop_rng)
        beta = self.extract_scores(enc) if self.config.uses_extractor else None
        l_e = self.extraction_loss(beta, group.beta_star) if beta is not None else None
        ext_size = self.n_vocab + len(group.oov_tokens)
        x_ext = np.asarray(group.x_ext, dtype=np.int64)
        l_gs = []
        for y, y_ext in group.targets:
            h = enc.h0
            htilde = ad.zeros((1, self.config.hidden_dim))
            prev = self._bos_embedding(drop_rng)
            dists = []
            for t in range(len(y)):
                step = self.decode_step(prev, h, htilde, enc, ret_bank, beta,
                                        x_ext, ext_size, drop_rng)
                dists.append(step["dist"])
                h, htilde = step["h"], step["htilde"]
                if t + 1 < len(y):
                    prev = ad.embed(self.embedding, [y[t]])
                    if drop_rng is not None:
                        prev = ad.dropout(prev, self.config.dropout, drop_rng)
            l_gs.append(self.generation_loss(dists, y_ext))
        return l_e, l_gs

    # -- training -----------------------------------------------------------

    def trainable(self) -> dict:
        return self.params

    def snapshot(self) -> dict:
        return {name: p.data.copy() for name, p in self.params.items()}

    def restore(self, snapshot: dict):
        for name, data in snapshot.items():
            self.params[name].data = data.copy()

    def valid_perplexity(self, valid_groups) -> float:
        total_nll = 0.0
        total_len = 0
        for group in valid_groups:
            _, l_gs = self.doc_losses(group)
            for (y, y_ext), l_g in zip(group.targets, l_gs):
                total_nll += l_g.item()
                total_len += sum(1 for t in y_ext if t is not None)
        if total_len == 0:
            return float("inf")
        return math.exp(min(total_nll / total_len, 700.0))

    def train(self, tuples, valid_tuples, rng) -> list:
        """Joint training with Adam; returns the per-epoch log and keeps the
        best-validation parameters loaded."""
        if not tuples:
            raise ValueError("train: empty training set")
        if not valid_tuples:
            raise ValueError("train: empty validation set")
        cfg = self.config
        groups = group_tuples(tuples)
        valid_groups = group_tuples(valid_tuples)
        opt = ad.AdamState(lr=cfg.lr)
        log = []
        best_ppl = float("inf")
        best_snapshot = self.snapshot()
        bad_evals = 0
        first_epoch_loss = None
        updates = 0
        for epoch in range(cfg.epochs):
            order = rng.permutation(len(groups))
            epoch_loss = epoch_le = epoch_lg = 0.0
            n_tuples = 0
            batch: list = []
            batch_count = 0

            def flush(batch, batch_count):
                nonlocal updates, epoch_loss, epoch_le, epoch_lg, n_tuples
                for group in batch:
                    with Tape() as tape:
                        l_e, l_gs = self.doc_losses(group, drop_rng=rng)
                        total = None
                        for l_g in l_gs:
                            term = ad.add(l_e, l_g) if l_e is not None else l_g
                            total = term if total is None else ad.add(total, term)
                        value = total.item()
                        if not math.isfinite(value):
                            raise RuntimeError(
                                f"training diverged: non-finite loss on document {group.doc_id}"
                            )
                        epoch_loss += value
                        if l_e is not None:
                            epoch_le += l_e.item() * len(l_gs)
                        epoch_lg += sum(l.item() for l in l_gs)
                        n_tuples += len(l_gs)
                        tape.backward(total)
                grads = {}
                for name, p in self.params.items():
                    if p.grad is not None:
                        grads[name] = p.grad / batch_count
                        p.grad = None
                ad.clip_global_norm(grads, cfg.grad_clip)
                ad.adam_step(self.params, grads, opt)
                updates += 1

            for idx in order:
                group = groups[idx]
                batch.append(group)
                batch_count += len(group.targets)
                if batch_count >= cfg.batch_size:
                    flush(batch, batch_count)
                    batch, batch_count = [], 0
            if batch:
                flush(batch, batch_count)

            ppl = self.valid_perplexity(valid_groups)
            entry = {
                "step": updates,
                "train_loss": epoch_loss / n_tuples,
                "L_e": epoch_le / n_tuples,
                "L_g": epoch_lg / n_tuples,
                "valid_ppl": ppl,
            }
            log.append(entry)
            if ppl < best_ppl - 1e-12:
                best_ppl = ppl
                best_snapshot = self.snapshot()
                bad_evals = 0
            else:
                bad_evals += 1
            if first_epoch_loss is None:
                first_epoch_loss = entry["train_loss"]
            if cfg.stop_loss_ratio > 0 and entry["train_loss"] <= cfg.stop_loss_ratio * first_epoch_loss:
                best_snapshot = self.snapshot()
                break
            if bad_evals >= cfg.patience:
                break
        self.restore(best_snapshot)
        return log

    # -- beam search ----------------------------------------------------------

    def beam_search(self, x_ids, x_ext_ids, oov_tokens, r_ids, vocab,
                    depth: int | None = None, size: int | None = None):
        """Completed hypotheses as (phrase tokens, gs) sorted by score.

        gs is exp(mean step log-probability) by default (raw sum behind the
        beam_length_norm flag); <pad>/<unk>/<bos>/";" never expand; a phrase
        completes only via <eos> and is capped at `depth` tokens.
        """
        cfg = self.config
        depth = cfg.beam_depth if depth is None else depth
        size = cfg.beam_size if size is None else size
        enc = self.encode_source(x_ids)
        ret_bank = self.encode_retrieved(r_ids)
        beta = self.extract_scores(enc) if cfg.uses_extractor else None
        ext_size = self.n_vocab + len(oov_tokens)
        x_ext = np.asarray(x_ext_ids, dtype=np.int64)
        eos = vocab.eos_id
        banned = {vocab.pad_id, vocab.unk_id, vocab.bos_id, vocab.sep_id, eos}
        allowed = [i for i in range(ext_size) if i not in banned]

        beams = [(0.0, (), enc.h0, ad.zeros((1, cfg.hidden_dim)), 2)]
        finished = {}

        def surface(token_id):
            if token_id < self.n_vocab:
                return vocab.token_of(token_id)
            return oov_tokens[token_id - self.n_vocab]

        def finish(logp, tokens):
            steps = len(tokens) + 1
            score = logp / steps if cfg.beam_length_norm else logp
            gs = math.exp(score)
            words = tuple(surface(t) for t in tokens)
            key = phrase_key(words)
            prior = finished.get(key)
            cand = (gs, words)
            if prior is None or cand[0] > prior[0] or (cand[0] == prior[0] and cand[1] < prior[1]):
                finished[key] = cand

        for t in range(depth + 1):
            expansions = []
            for logp, tokens, h, htilde, prev_id in beams:
                emb_id = prev_id if prev_id < self.n_vocab else vocab.unk_id
                step = self.decode_step(ad.embed(self.embedding, [emb_id]), h, htilde,
                                        enc, ret_bank, beta, x_ext, ext_size)
                logdist = np.log(np.maximum(step["dist"].data[0], 1e-300))
                if tokens:
                    finish(logp + float(logdist[eos]), tokens)
                if len(tokens) < depth:
                    for tid in allowed:
                        expansions.append(
                            (logp + float(logdist[tid]), tokens + (tid,), step["h"], step["htilde"], tid)
                        )
            if not expansions:
                break
            expansions.sort(key=lambda b: (-b[0], b[1]))
            beams = expansions[:size]

        ranked = sorted(finished.values(), key=lambda sw: (-sw[0], sw[1]))
        return [(list(words), gs) for gs, words in ranked]

    # -- persistence ----------------------------------------------------------

    def save(self, path, config_hash: str = ""):
        cfg = self.config
        meta = {
            "config_hash": config_hash,
            "kind": "kgmodel",
            "mode": cfg.mode,
            "embedding_dim": cfg.embedding_dim,
            "hidden_dim": cfg.hidden_dim,
            "vocab_size": cfg.vocab_size,
            "n_vocab": self.n_vocab,
            "pos_loss_weight": cfg.pos_loss_weight,
            "dropout": cfg.dropout,
            "batch_size": cfg.batch_size,
            "lr": cfg.lr,
            "beam_depth": cfg.beam_depth,
            "beam_size": cfg.beam_size,
            "beam_length_norm": cfg.beam_length_norm,
        }
        ad.save_checkpoint(path, self.params, meta)

    @classmethod
    def load(cls, path):
        tensors, meta = ad.load_checkpoint(path)
        if meta.get("kind") != "kgmodel":
            raise ValueError(f"{path}: not a model checkpoint")
        config = ModelConfig(
            embedding_dim=int(meta["embedding_dim"]),
            hidden_dim=int(meta["hidden_dim"]),
            vocab_size=int(meta["vocab_size"]),
            pos_loss_weight=float(meta["pos_loss_weight"]),
            dropout=float(meta["dropout"]),
            batch_size=int(meta["batch_size"]),
            lr=float(meta["lr"]),
            beam_depth=int(meta["beam_depth"]),
            beam_size=int(meta["beam_size"]),
            mode=meta["mode"],
            beam_length_norm=bool(meta["beam_length_norm"]),
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
