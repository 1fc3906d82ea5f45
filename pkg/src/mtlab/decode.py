"""Decoding: greedy, alignment-length synchronous beam search, batched
first-in-first-out multi-speaker decoding, and LM fusion with
internal-LM estimation.

All decoder-side tensor ops go through batch-size-invariant kernels, so
batching hypotheses across speakers is bitwise equivalent to decoding
each speaker on its own.
"""

from dataclasses import dataclass, field

import numpy as np

from .labels import deserialize_tsot


@dataclass
class DecodeConfig:
    beam: int = 16
    beta: float = 0.0              # external LM weight
    gamma: float = 0.0             # internal-LM subtraction weight
    max_symbols_per_frame: int = 5
    mode: str = "beam"             # greedy | beam
    u_max: int | None = None       # cap on emitted tokens (default: T)

    def __post_init__(self):
        if self.beam < 1:
            raise ValueError("beam must be >= 1")
        if self.beta < 0 or self.gamma < 0:
            raise ValueError("beta/gamma must be >= 0")
        if self.mode not in ("greedy", "beam"):
            raise ValueError(f"unknown decode mode {self.mode!r}")


@dataclass
class Hypothesis:
    tokens: list                  # prompt first for AFT, then body
    score: float                  # fused
    score_transducer: float
    score_lm: float = 0.0
    score_ilm: float = 0.0
    alignment_length: int = 0

    def body(self, vocab):
        return [t for t in self.tokens if t not in vocab.control_ids()]


@dataclass
class DecodeStats:
    decoder_batch_widths: list = field(default_factory=list)


def ilme_fused_score(logp_transducer, logp_lm, logp_ilm, beta, gamma):
    """Shallow-fusion score of one emission."""
    return logp_transducer + beta * logp_lm - gamma * logp_ilm


def encode_once(model, feats):
    """Shared encoder pass; every speaker's decode reuses the result."""
    enc, _ = model.encode(feats)
    return enc


def _emission_mask(vocab):
    """Ids that may never appear in a hypothesis body (prompt tokens;
    <sc> stays legal in the tsot regime where it is part of the label
    stream)."""
    if vocab.regime == "aft":
        return set(vocab.prompt_ids)
    return set()


def greedy_decode(model, enc, prompt=None, config=None):
    """Frame-synchronous argmax decoding from precomputed encoder states."""
    config = config or DecodeConfig(mode="greedy", beam=1)
    vocab = model.vocab
    masked = _emission_mask(vocab)
    state = model.pred_step([vocab.blank_id], model.pred_start_state())
    tokens = []
    if prompt is not None:
        state = model.pred_step([prompt], state)
        tokens.append(prompt)
    score = 0.0
    n_align = 0
    for t in range(enc.shape[0]):
        for _ in range(config.max_symbols_per_frame):
            logp = model.joint_step(enc[t:t + 1], state)[0]
            for k in masked:
                logp = logp.copy()
                logp[k] = -np.inf
            k = int(np.argmax(logp))
            score += logp[k]
            n_align += 1
            if k == vocab.blank_id:
                break
            tokens.append(k)
            state = model.pred_step([k], state)
        else:
            # symbol cap hit; force the time advance with a blank
            score += model.joint_step(enc[t:t + 1], state)[0][vocab.blank_id]
            n_align += 1
    return Hypothesis(tokens=tokens, score=score, score_transducer=score,
                      alignment_length=n_align)


@dataclass
class _BeamHyp:
    tokens: tuple
    logp_tr: float
    logp_lm: float
    logp_ilm: float
    state: np.ndarray

    def fused(self, beta, gamma):
        return self.logp_tr + beta * self.logp_lm - gamma * self.logp_ilm


def _merge(pool, hyp):
    """Log-sum-exp merge of duplicate label sequences.  The LM/ILM
    components and the prediction state are functions of the token
    sequence alone, so only the transducer path mass combines."""
    old = pool.get(hyp.tokens)
    if old is None:
        pool[hyp.tokens] = hyp
    else:
        old.logp_tr = np.logaddexp(old.logp_tr, hyp.logp_tr)
        if old.state is None and hyp.state is not None:
            old.state = hyp.state


def _alsd_lanes(model, lanes, config, lm=None, stats=None):
    """Alignment-length synchronous beam search over several decode
    lanes at once (one lane per speaker slot).

    Each lane is (enc_states, prompt_or_None).  Decoder and joint calls
    for all lanes' hypotheses run in shared batched calls.  Returns the
    n-best list per lane.
    """
    vocab = model.vocab
    beta, gamma = config.beta, config.gamma
    use_lm = lm is not None and beta > 0.0
    use_ilm = gamma > 0.0
    masked = _emission_mask(vocab)
    lexical = [k for k in range(vocab.size)
               if k != vocab.blank_id and k not in masked]

    beams = []
    finals = []
    t_maxes = []
    u_maxes = []
    for enc, prompt in lanes:
        state = model.pred_step([vocab.blank_id], model.pred_start_state())
        if prompt is not None:
            state = model.pred_step([prompt], state)
        beams.append([_BeamHyp(tokens=(), logp_tr=0.0, logp_lm=0.0,
                               logp_ilm=0.0, state=state)])
        finals.append({})
        t_maxes.append(enc.shape[0])
        u_maxes.append(config.u_max if config.u_max is not None else enc.shape[0])

    n_steps = max(t + u for t, u in zip(t_maxes, u_maxes))
    for n in range(n_steps):
        active = []   # (lane, hyp, t)
        for li, beam in enumerate(beams):
            for h in beam:
                t = n - len(h.tokens)
                if 0 <= t < t_maxes[li]:
                    active.append((li, h, t))
        if not active:
            break
        enc_rows = np.stack([lanes[li][0][t] for li, _, t in active])
        pred_states = np.concatenate([h.state for _, h, _ in active])
        if stats is not None:
            stats.decoder_batch_widths.append(len(active))
        logp = model.joint_step(enc_rows, pred_states)
        ilm = model.ilm_step(pred_states) if use_ilm else None

        pools = [dict() for _ in lanes]
        for i, (li, h, t) in enumerate(active):
            # blank: advance time, keep label sequence
            bh = _BeamHyp(tokens=h.tokens,
                          logp_tr=h.logp_tr + logp[i, vocab.blank_id],
                          logp_lm=h.logp_lm, logp_ilm=h.logp_ilm,
                          state=h.state)
            if t == t_maxes[li] - 1:
                _merge(finals[li], bh)
            else:
                _merge(pools[li], bh)
            if len(h.tokens) >= u_maxes[li]:
                continue
            lm_scores = None
            if use_lm:
                hist = None
                for tok in reversed(h.tokens):
                    if 1 <= tok < vocab.base_size:
                        hist = tok
                        break
                lm_scores = lm.score_all(hist)
            for k in lexical:
                lm_k = 0.0
                if use_lm and 1 <= k < vocab.base_size:
                    lm_k = lm_scores[k]
                ilm_k = ilm[i, k] if (use_ilm and 1 <= k < vocab.base_size) else 0.0
                # state is filled lazily, only for extensions that
                # survive the beam cut
                nh = _BeamHyp(tokens=h.tokens + (k,),
                              logp_tr=h.logp_tr + logp[i, k],
                              logp_lm=h.logp_lm + lm_k,
                              logp_ilm=h.logp_ilm + ilm_k,
                              state=None)
                _merge(pools[li], nh)

        # advance prediction states for surviving label extensions
        for li in range(len(lanes)):
            ranked = sorted(pools[li].values(),
                            key=lambda h: h.fused(beta, gamma), reverse=True)
            beams[li] = ranked[:config.beam]
        need = [(li, h) for li in range(len(lanes)) for h in beams[li]
                if h.state is None]
        if need:
            # parent lookup: drop the last token to find the source hyp
            parents = []
            last = []
            for li, h in need:
                parent_tokens = h.tokens[:-1]
                src = next(x for x in active
                           if x[0] == li and x[1].tokens == parent_tokens)
                parents.append(src[1].state)
                last.append(h.tokens[-1])
            states = model.pred_step(last, np.concatenate(parents))
            if stats is not None:
                stats.decoder_batch_widths.append(len(need))
            for (li, h), row in zip(need, range(states.shape[0])):
                h.state = states[row:row + 1]

    results = []
    for li, (enc, prompt) in enumerate(lanes):
        pool = finals[li]
        if not pool:  # degenerate: nothing reached the last frame
            pool = {h.tokens: h for h in beams[li]}
        ranked = sorted(pool.values(),
                        key=lambda h: h.fused(beta, gamma), reverse=True)
        out = []
        for h in ranked[:config.beam]:
            tokens = ([prompt] if prompt is not None else []) + list(h.tokens)
            out.append(Hypothesis(
                tokens=tokens,
                score=h.fused(beta, gamma),
                score_transducer=h.logp_tr,
                score_lm=h.logp_lm,
                score_ilm=h.logp_ilm,
                alignment_length=t_maxes[li] + len(h.tokens)))
        results.append(out)
    return results


def alsd_beam(model, enc, prompt=None, config=None, lm=None, stats=None):
    """n-best ALSD beam search for a single speaker slot."""
    config = config or DecodeConfig()
    return _alsd_lanes(model, [(enc, prompt)], config, lm=lm, stats=stats)[0]


def batched_multispeaker_decode(model, feats, config=None, lm=None,
                                n_speakers=2, stats=None):
    """First-in-first-out decoding of all speakers from one encoder pass,
    with decoder steps batched across all speakers' beams."""
    config = config or DecodeConfig()
    if model.vocab.regime != "aft":
        raise ValueError("multi-speaker prompt decoding needs an aft model")
    enc = encode_once(model, feats)
    prompts = [model.vocab.prompt_id(m + 1) for m in range(n_speakers)]
    if config.mode == "greedy":
        return [greedy_decode(model, enc, prompt=p, config=config)
                for p in prompts]
    lanes = [(enc, p) for p in prompts]
    results = _alsd_lanes(model, lanes, config, lm=lm, stats=stats)
    return [r[0] for r in results]


def decode_sample_slots(model, feats, system, config=None, lm=None,
                        n_slots=1):
    """Decode one sample into per-speaker-slot token lists (control
    tokens stripped), as consumed by cpWER."""
    config = config or DecodeConfig(mode="greedy")
    vocab = model.vocab
    if system == "aft":
        hyps = batched_multispeaker_decode(model, feats, config=config,
                                           lm=lm, n_speakers=n_slots)
        return [h.body(vocab) for h in hyps], hyps
    enc = encode_once(model, feats)
    if config.mode == "greedy":
        hyp = greedy_decode(model, enc, config=config)
    else:
        hyp = alsd_beam(model, enc, config=config, lm=lm)[0]
    if system == "tsot":
        ch1, ch2 = deserialize_tsot(hyp.tokens, vocab)
        slots = [ch1, ch2][:max(n_slots, 1)]
        if len(slots) < n_slots:
            slots += [[]] * (n_slots - len(slots))
        return slots, [hyp]
    return [hyp.body(vocab)], [hyp]
