"""Synthetic symbolic-speech corpus with oracle alignments.

Each base token k has a frozen pattern vector e_k; an utterance is
leading silence followed by each token's pattern repeated for a random
number of frames, plus Gaussian noise.  Mixtures add a delayed second
speaker, so token onsets are known exactly by construction and every
sample is a bitwise-deterministic function of (seed, index).
"""

import hashlib
import json
from dataclasses import dataclass, asdict, field

import numpy as np

from .labels import (Vocabulary, TimedTranscript, AftLabels, TsotLabel,
                     make_aft_labels, serialize_tsot)


@dataclass(frozen=True)
class SynthSpec:
    vocab_size: int = 20          # K, blank included
    feat_dim: int = 16
    dur_min: int = 2              # frames per token
    dur_max: int = 4
    silence_frames: int = 5
    noise_sigma: float = 0.05
    pattern_seed: int = 1234
    min_tokens: int = 3
    max_tokens: int = 8
    offset_frames: int = 5        # minimum second-speaker delay
    two_speaker_fraction: float = 0.5
    bigram_concentration: float = 0.3  # Dirichlet prior of the token chain
    min_delay_fraction: float = 0.0    # of the first utterance's length

    def __post_init__(self):
        if self.dur_min < 1:
            raise ValueError("dur_min must be >= 1")
        if self.dur_max < self.dur_min:
            raise ValueError("dur_max < dur_min")
        if not 0.0 <= self.two_speaker_fraction <= 1.0:
            raise ValueError("two_speaker_fraction outside [0, 1]")

    def patterns(self):
        """Frozen token->pattern table, unit-norm rows; blank row is 0."""
        rng = np.random.default_rng(self.pattern_seed)
        e = rng.normal(size=(self.vocab_size, self.feat_dim))
        e /= np.linalg.norm(e, axis=1, keepdims=True)
        e[0] = 0.0
        return e

    def token_chain(self):
        """Frozen Markov chain over lexical tokens: (initial, transition)
        rows drawn from a symmetric Dirichlet.  Low concentration makes
        sequences predictable, so an external LM carries information."""
        rng = np.random.default_rng((self.pattern_seed, 1))
        n = self.vocab_size - 1
        a = np.full(n, self.bigram_concentration)
        return rng.dirichlet(a), rng.dirichlet(a, size=n)

    def fingerprint(self):
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class AugmentConfig:
    enabled: bool = True
    gain_lo: float = 0.8
    gain_hi: float = 1.25
    n_time_masks: int = 2
    time_mask_width: int = 3
    n_feat_masks: int = 1
    feat_mask_width: int = 2


@dataclass
class MixtureSample:
    sample_id: str
    mixture: np.ndarray                  # T' x F
    clean: list                          # per speaker, padded to T' x F
    transcripts: list                    # per speaker TimedTranscript,
                                         # onsets on the mixture timeline
    delay_frames: int | None = None      # None for single-talker

    @property
    def n_speakers(self):
        return len(self.transcripts)

    def aft_labels(self, vocab: Vocabulary) -> AftLabels:
        return make_aft_labels(self.transcripts, vocab)

    def tsot_label(self, vocab: Vocabulary) -> TsotLabel:
        if self.n_speakers == 1:
            return TsotLabel(stream=list(self.transcripts[0].tokens),
                             n_switches=0)
        return serialize_tsot(self.transcripts[0], self.transcripts[1], vocab)


def synth_utterance(tokens, spec, rng, speaker=1):
    """Render a token sequence to features; onsets recorded exactly."""
    tokens = list(tokens)
    if not 1 <= len(tokens) <= spec.max_tokens:
        raise ValueError("token count out of range")
    if any(t < 1 or t >= spec.vocab_size for t in tokens):
        raise ValueError("token outside base vocabulary")
    e = spec.patterns()
    durations = rng.integers(spec.dur_min, spec.dur_max + 1, size=len(tokens))
    T = spec.silence_frames + int(durations.sum())
    feats = np.zeros((T, spec.feat_dim))
    onsets = []
    pos = spec.silence_frames
    for tok, d in zip(tokens, durations):
        onsets.append(pos)
        feats[pos:pos + d] = e[tok]
        pos += int(d)
    if spec.noise_sigma > 0:
        feats += spec.noise_sigma * rng.normal(size=feats.shape)
    return feats, TimedTranscript(speaker=speaker, tokens=tokens, onsets=onsets)


def mix(u1, u2, delay_frames, spec, sample_id=""):
    """Overlay the second utterance at `delay_frames`; both clean tracks
    are zero-padded to the mixture timeline."""
    (f1, t1), (f2, t2) = u1, u2
    if delay_frames < spec.offset_frames:
        raise ValueError(
            f"delay {delay_frames} below offset {spec.offset_frames}")
    T = max(f1.shape[0], delay_frames + f2.shape[0])
    c1 = np.zeros((T, spec.feat_dim))
    c1[:f1.shape[0]] = f1
    c2 = np.zeros((T, spec.feat_dim))
    c2[delay_frames:delay_frames + f2.shape[0]] = f2
    t2s = t2.shifted(delay_frames)
    if not t1.onsets[0] < t2s.onsets[0]:
        raise ValueError("speaker order violated by delay")
    return MixtureSample(sample_id=sample_id, mixture=c1 + c2, clean=[c1, c2],
                         transcripts=[t1, t2s], delay_frames=delay_frames)


def single_sample(u1, sample_id=""):
    f1, t1 = u1
    return MixtureSample(sample_id=sample_id, mixture=f1, clean=[f1],
                         transcripts=[t1], delay_frames=None)


def _random_tokens(spec, rng):
    n = int(rng.integers(spec.min_tokens, spec.max_tokens + 1))
    init, trans = spec.token_chain()
    tokens = [1 + int(rng.choice(init.size, p=init))]
    for _ in range(n - 1):
        tokens.append(1 + int(rng.choice(init.size, p=trans[tokens[-1] - 1])))
    return tokens


def lm_corpus(spec, seed, n):
    """Lexical token sequences from the sample stream, for LM training."""
    out = []
    for i in range(n):
        for t in sample_at(spec, seed, i).transcripts:
            out.append(list(t.tokens))
    return out


def sample_at(spec, seed, index, two_speaker=None):
    """The `index`-th sample of the stream for `seed`; pure function of
    its arguments (parallel generation safe)."""
    rng = np.random.default_rng((seed, index))
    if two_speaker is None:
        two_speaker = rng.random() < spec.two_speaker_fraction
    else:
        rng.random()  # keep the draw sequence identical either way
    sid = f"{seed}-{index}"
    u1 = synth_utterance(_random_tokens(spec, rng), spec, rng, speaker=1)
    if not two_speaker:
        return single_sample(u1, sample_id=sid)
    u2 = synth_utterance(_random_tokens(spec, rng), spec, rng, speaker=2)
    t1 = u1[0].shape[0]
    lo = max(spec.offset_frames, int(spec.min_delay_fraction * t1))
    delay = int(rng.integers(lo, max(lo, t1) + 1))
    return mix(u1, u2, delay, spec, sample_id=sid)


def batch_stream(spec, seed, start=0):
    """Infinite deterministic sample stream."""
    index = start
    while True:
        yield sample_at(spec, seed, index)
        index += 1


def make_eval_set(spec, seed, n, condition):
    """Fixed list of samples for one condition ('1spk' or '2spk')."""
    if condition not in ("1spk", "2spk"):
        raise ValueError(f"unknown condition {condition!r}")
    two = condition == "2spk"
    return [sample_at(spec, seed, i, two_speaker=two) for i in range(n)]


def augment(features, rng, cfg):
    """Random global gain then SpecAugment-style zero masks."""
    if not cfg.enabled:
        return features
    out = features * rng.uniform(cfg.gain_lo, cfg.gain_hi)
    T, F = out.shape
    for _ in range(cfg.n_time_masks):
        w = int(rng.integers(0, cfg.time_mask_width + 1))
        if w and T > w:
            t0 = int(rng.integers(0, T - w + 1))
            out[t0:t0 + w] = 0.0
    for _ in range(cfg.n_feat_masks):
        w = int(rng.integers(0, cfg.feat_mask_width + 1))
        if w and F > w:
            f0 = int(rng.integers(0, F - w + 1))
            out[:, f0:f0 + w] = 0.0
    return out


def export_jsonl(path, spec, seed, n):
    """Metadata-only dataset export; features regenerate from spec+seed."""
    fp = spec.fingerprint()
    with open(path, "w") as f:
        for i in range(n):
            s = sample_at(spec, seed, i)
            rec = {
                "id": s.sample_id,
                "speakers": [
                    {"tokens": t.tokens, "onsets": t.onsets,
                     "delay": s.delay_frames if t.speaker == 2 else 0}
                    for t in s.transcripts
                ],
                "fingerprint": fp,
            }
            f.write(json.dumps(rec) + "\n")


def import_jsonl(path, spec):
    """Load records and regenerate each sample; fingerprints must match."""
    fp = spec.fingerprint()
    out = []
    with open(path) as f:
        for line in f:
            rec = json.loads(line)
            if rec["fingerprint"] != fp:
                raise ValueError(
                    f"dataset fingerprint {rec['fingerprint']} does not "
                    f"match spec {fp}")
            seed_s, _, idx_s = rec["id"].rpartition("-")
            sample = sample_at(spec, int(seed_s), int(idx_s))
            if [t.tokens for t in sample.transcripts] != \
                    [s["tokens"] for s in rec["speakers"]]:
                raise ValueError(f"sample {rec['id']} failed to regenerate")
            out.append(sample)
    return out
