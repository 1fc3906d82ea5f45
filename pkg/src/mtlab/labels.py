"""Vocabulary regimes and label construction.

Three output-layer regimes share one base token inventory:
  single  : K tokens (blank at id 0)
  tsot    : K+1, speaker-change token <sc> appended
  aft     : K+2, prompt tokens <spk1>, <spk2> appended
"""

from dataclasses import dataclass, field


BLANK_ID = 0
SC = "<sc>"
SPK1 = "<spk1>"
SPK2 = "<spk2>"
REGIMES = ("single", "tsot", "aft")


@dataclass(frozen=True)
class Vocabulary:
    base_size: int            # K, blank included
    regime: str = "single"

    def __post_init__(self):
        if self.base_size < 2:
            raise ValueError("need blank plus at least one real token")
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")

    @property
    def size(self):
        return self.base_size + {"single": 0, "tsot": 1, "aft": 2}[self.regime]

    @property
    def blank_id(self):
        return BLANK_ID

    @property
    def sc_id(self):
        if self.regime != "tsot":
            raise ValueError(f"<sc> undefined in regime {self.regime!r}")
        return self.base_size

    def prompt_id(self, speaker):
        """Prompt token for 1-based speaker appearance index."""
        if self.regime != "aft":
            raise ValueError(f"prompt tokens undefined in regime {self.regime!r}")
        if speaker not in (1, 2):
            raise ValueError("only two speakers supported")
        return self.base_size + speaker - 1

    @property
    def prompt_ids(self):
        return (self.prompt_id(1), self.prompt_id(2))

    def control_ids(self):
        """Non-lexical ids (blank plus regime-reserved tokens)."""
        ids = {BLANK_ID}
        if self.regime == "tsot":
            ids.add(self.sc_id)
        elif self.regime == "aft":
            ids.update(self.prompt_ids)
        return ids

    def token_name(self, tid):
        if tid == BLANK_ID:
            return "<blank>"
        if tid < self.base_size:
            return f"t{tid:03d}"
        if self.regime == "tsot":
            return SC
        return SPK1 if tid == self.base_size else SPK2

    def save(self, path):
        """One token per line (line number = id); reserved ids declared
        in '#' header lines."""
        with open(path, "w") as f:
            f.write(f"# regime {self.regime}\n")
            f.write(f"# reserved blank={BLANK_ID}")
            if self.regime == "tsot":
                f.write(f" sc={self.sc_id}")
            elif self.regime == "aft":
                f.write(f" spk1={self.prompt_id(1)} spk2={self.prompt_id(2)}")
            f.write("\n")
            for tid in range(self.size):
                f.write(self.token_name(tid) + "\n")

    @classmethod
    def load(cls, path):
        regime = None
        tokens = []
        with open(path) as f:
            for line in f:
                line = line.rstrip("\n")
                if line.startswith("# regime "):
                    regime = line.split()[-1]
                elif line.startswith("#"):
                    continue
                elif line:
                    tokens.append(line)
        if regime is None:
            raise ValueError(f"{path}: missing regime header")
        base = len(tokens) - {"single": 0, "tsot": 1, "aft": 2}[regime]
        vocab = cls(base_size=base, regime=regime)
        for tid, name in enumerate(tokens):
            if vocab.token_name(tid) != name:
                raise ValueError(f"{path}: token {tid} is {name!r}, "
                                 f"expected {vocab.token_name(tid)!r}")
        return vocab


@dataclass
class TimedTranscript:
    """Token sequence with exact frame-level onsets."""
    speaker: int
    tokens: list[int]
    onsets: list[int]  # frame index of each token's first frame

    def __post_init__(self):
        if len(self.tokens) < 1:
            raise ValueError("empty transcript")
        if len(self.tokens) != len(self.onsets):
            raise ValueError("tokens/onsets length mismatch")
        if any(b < a for a, b in zip(self.onsets, self.onsets[1:])):
            raise ValueError("onsets must be non-decreasing")

    def shifted(self, delay):
        return TimedTranscript(self.speaker, list(self.tokens),
                               [o + delay for o in self.onsets])


@dataclass
class AftLabels:
    """Per-speaker prompt-prefixed target sequences."""
    per_speaker: list[list[int]] = field(default_factory=list)


@dataclass
class TsotLabel:
    stream: list[int]
    n_switches: int  # number of <sc> occurrences


class AmbiguousSpeakerOrderError(ValueError):
    """Two speakers start at the same frame; appearance order undefined."""


def make_aft_labels(transcripts, vocab):
    """Prompt-prefixed labels, prompts assigned by order of first onset.

    `transcripts` must already be sorted by first onset (the mixer's
    enforced delay guarantees strict order).
    """
    if vocab.regime != "aft":
        raise ValueError("AFT labels need the aft vocabulary regime")
    if len(transcripts) == 2 and transcripts[0].onsets[0] == transcripts[1].onsets[0]:
        raise AmbiguousSpeakerOrderError("equal first onsets")
    if any(a.onsets[0] > b.onsets[0] for a, b in zip(transcripts, transcripts[1:])):
        raise ValueError("transcripts not sorted by first onset")
    return AftLabels(
        per_speaker=[[vocab.prompt_id(m + 1)] + list(t.tokens)
                     for m, t in enumerate(transcripts)]
    )


def serialize_tsot(t1, t2, vocab):
    """Merge two timed transcripts into one stream sorted by onset, with
    <sc> at every change of source speaker.

    Onset ties are broken by (speaker index, original position), so the
    result is deterministic.
    """
    if vocab.regime != "tsot":
        raise ValueError("tSOT serialization needs the tsot vocabulary regime")
    entries = [(t.onsets[i], m, i, t.tokens[i])
               for m, t in enumerate((t1, t2))
               for i in range(len(t.tokens))]
    entries.sort()
    stream = []
    n_switches = 0
    cur = None
    for _, m, _, tok in entries:
        if cur is not None and m != cur:
            stream.append(vocab.sc_id)
            n_switches += 1
        stream.append(tok)
        cur = m
    return TsotLabel(stream=stream, n_switches=n_switches)


def deserialize_tsot(stream, vocab):
    """Split a serialized stream back into two channels.

    Total function over arbitrary model output: <sc> toggles the active
    channel (starting on channel 1) and is dropped; malformed streams
    (leading/double <sc>) just toggle over empty segments.
    """
    channels = ([], [])
    active = 0
    for tok in stream:
        if tok == vocab.sc_id:
            active = 1 - active
        else:
            channels[active].append(tok)
    return channels
