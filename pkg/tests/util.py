"""Shared test helpers: the finite-difference gradient oracle."""

import numpy as np


def finite_diff(f, tensor, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar f() w.r.t. tensor.data."""
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f()
        flat[i] = orig - eps
        lo = f()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * eps)
    return grad


def assert_grad_close(analytic, numeric, rel: float = 1e-4, atol: float = 1e-8):
    analytic = np.zeros_like(numeric) if analytic is None else analytic
    denom = np.maximum(np.abs(analytic), np.abs(numeric))
    err = np.abs(analytic - numeric)
    bad = err > (rel * denom + atol)
    assert not bad.any(), (
        f"gradient mismatch: max abs err {err.max():.3e}, "
        f"worst rel {np.nanmax(err / np.maximum(denom, 1e-300)):.3e}"
    )


def enumerate_beam_oracle(model, x_ids, x_ext_ids, oov_tokens, r_ids, vocab, depth: int):
    """Exhaustive phrase enumeration scored like beam_search, for equality checks.

    Walks every token sequence up to `depth` by depth-first recursion instead
    of pruned breadth-first expansion, then applies the same completion score,
    stemmed dedup and ordering rules.
    """
    import math

    from kpgen import autodiff as ad
    from kpgen.stemmer import phrase_key

    cfg = model.config
    enc = model.encode_source(x_ids)
    ret_bank = model.encode_retrieved(r_ids)
    beta = model.extract_scores(enc) if cfg.uses_extractor else None
    ext_size = model.n_vocab + len(oov_tokens)
    x_ext = np.asarray(x_ext_ids, dtype=np.int64)
    eos = vocab.eos_id
    banned = {vocab.pad_id, vocab.unk_id, vocab.bos_id, vocab.sep_id, eos}
    allowed = [i for i in range(ext_size) if i not in banned]
    finished = {}

    def surface(tid):
        if tid < model.n_vocab:
            return vocab.token_of(tid)
        return oov_tokens[tid - model.n_vocab]

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

    def walk(logp, tokens, h, htilde, prev_id):
        emb_id = prev_id if prev_id < model.n_vocab else vocab.unk_id
        step = model.decode_step(ad.embed(model.embedding, [emb_id]), h, htilde,
                                 enc, ret_bank, beta, x_ext, ext_size)
        logdist = np.log(np.maximum(step["dist"].data[0], 1e-300))
        if tokens:
            finish(logp + float(logdist[eos]), tokens)
        if len(tokens) < depth:
            for tid in allowed:
                walk(logp + float(logdist[tid]), tokens + (tid,),
                     step["h"], step["htilde"], tid)

    walk(0.0, (), enc.h0, ad.zeros((1, cfg.hidden_dim)), vocab.bos_id)
    ranked = sorted(finished.values(), key=lambda sw: (-sw[0], sw[1]))
    return [(list(words), gs) for gs, words in ranked]
