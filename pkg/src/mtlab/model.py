"""The transducer model: GRU encoder (causal or bidirectional), token
embedding + GRU prediction network, and additive tanh joint network.

Training-side passes use BLAS matmuls; decode-side step functions route
through det_matmul so batched multi-speaker decoding is bitwise equal
to per-speaker decoding.
"""

import numpy as np

from .labels import Vocabulary, REGIMES
from .numerics import (ParamSet, Linear, Embedding, GRUCell, log_softmax,
                       det_matmul, save_checkpoint, load_checkpoint)
from .transducer import joint_lattice, joint_lattice_backward

ENCODER_MODES = ("causal", "bidirectional")


class TransducerModel:
    def __init__(self, vocab, feat_dim, enc_hidden=48, pred_hidden=48,
                 embed_dim=16, joint_dim=48, encoder_mode="bidirectional",
                 init_seed=0):
        if encoder_mode not in ENCODER_MODES:
            raise ValueError(f"unknown encoder mode {encoder_mode!r}")
        self.vocab = vocab
        self.feat_dim = feat_dim
        self.enc_hidden = enc_hidden
        self.pred_hidden = pred_hidden
        self.embed_dim = embed_dim
        self.joint_dim = joint_dim
        self.encoder_mode = encoder_mode
        self.init_seed = init_seed
        self.enc_forward_count = 0

        rng = np.random.default_rng(init_seed)
        p = ParamSet()
        self.enc_f = GRUCell(p, "enc_f", feat_dim, enc_hidden, rng)
        if encoder_mode == "bidirectional":
            self.enc_b = GRUCell(p, "enc_b", feat_dim, enc_hidden, rng)
            enc_out = 2 * enc_hidden
        else:
            self.enc_b = None
            enc_out = enc_hidden
        self.embed = Embedding(p, "embed", vocab.size, embed_dim, rng)
        self.pred = GRUCell(p, "pred", embed_dim, pred_hidden, rng)
        self.lin_enc = Linear(p, "joint.enc", enc_out, joint_dim, rng)
        self.lin_pred = Linear(p, "joint.pred", pred_hidden, joint_dim, rng)
        self.lin_out = Linear(p, "joint.out", joint_dim, vocab.size, rng)
        self.params = p

    # ---- training-side passes -------------------------------------------

    def encode(self, feats):
        """Full encoder pass over T x F features; counts invocations."""
        self.enc_forward_count += 1
        sf, cf = self.enc_f.run(feats)
        if self.enc_b is None:
            return sf, (cf, None)
        sb, cb = self.enc_b.run(feats[::-1])
        return np.concatenate([sf, sb[::-1]], axis=1), (cf, cb)

    def encode_backward(self, d_enc, cache):
        cf, cb = cache
        H = self.enc_hidden
        dx = self.enc_f.backward_run(d_enc[:, :H], cf)
        if cb is not None:
            dx = dx + self.enc_b.backward_run(d_enc[::-1, H:], cb)[::-1]
        return dx

    def predict(self, labels):
        """Prediction-network states for contexts 0..U; row u is the
        state after consuming the first u labels (row 0: begin context,
        realized as the blank token)."""
        ids = np.concatenate([[self.vocab.blank_id], labels]).astype(np.intp)
        emb = self.embed.forward(ids)
        states, caches = self.pred.run(emb)
        return states, (ids, caches)

    def predict_backward(self, d_pred, cache):
        ids, caches = cache
        demb = self.pred.backward_run(d_pred, caches)
        self.embed.backward(ids, demb)

    def lattice(self, enc_states, pred_states):
        """Logit lattice over all (t, u) cells plus backward cache."""
        return joint_lattice(enc_states, pred_states,
                             self.lin_enc, self.lin_pred, self.lin_out)

    def lattice_backward(self, dlogits, cache):
        return joint_lattice_backward(dlogits, cache,
                                      self.lin_enc, self.lin_pred, self.lin_out)

    def posterior_lattice(self, feats, labels):
        """Forward-only log-prob lattice for (features, labels)."""
        enc, _ = self.encode(feats)
        pred, _ = self.predict(labels)
        logits, _ = self.lattice(enc, pred)
        return log_softmax(logits)

    # ---- decode-side steps (batch-size invariant) -----------------------

    def pred_start_state(self):
        return np.zeros((1, self.pred_hidden))

    def pred_step(self, tokens, states):
        """Advance prediction states for a batch of hypotheses."""
        emb = self.embed.forward(np.asarray(tokens, dtype=np.intp))
        h, _ = self.pred.step(emb, states, det=True)
        return h

    def joint_step(self, enc_rows, pred_states):
        """Log-prob distributions for a batch of (enc frame, pred state)."""
        le = self.lin_enc.forward(enc_rows, det=True)
        lp = self.lin_pred.forward(pred_states, det=True)
        act = np.tanh(le + lp)
        logits = det_matmul(act, self.lin_out.W.value) + self.lin_out.b.value
        return log_softmax(logits)

    def ilm_step(self, pred_states):
        """Internal-LM distribution: joint with the encoder contribution
        zeroed (only the encoder-side bias remains), renormalized over
        non-blank tokens."""
        lp = self.lin_pred.forward(pred_states, det=True)
        act = np.tanh(self.lin_enc.b.value[None, :] + lp)
        logits = det_matmul(act, self.lin_out.W.value) + self.lin_out.b.value
        logits = np.delete(logits, self.vocab.blank_id, axis=1)
        nb = log_softmax(logits)
        # re-insert a -inf column so ids keep their positions
        out = np.full((nb.shape[0], self.vocab.size), -np.inf)
        keep = [k for k in range(self.vocab.size) if k != self.vocab.blank_id]
        out[:, keep] = nb
        return out

    # ---- persistence -----------------------------------------------------

    def hyperparams(self):
        return {
            "regime": self.vocab.regime,
            "base_vocab": str(self.vocab.base_size),
            "feat_dim": str(self.feat_dim),
            "enc_hidden": str(self.enc_hidden),
            "pred_hidden": str(self.pred_hidden),
            "embed_dim": str(self.embed_dim),
            "joint_dim": str(self.joint_dim),
            "encoder_mode": self.encoder_mode,
        }

    def save(self, path, extra_header=None, extra_arrays=None):
        header = self.hyperparams()
        if extra_header:
            header.update(extra_header)
        arrays = dict(self.params.state_arrays())
        if extra_arrays:
            arrays.update(extra_arrays)
        save_checkpoint(path, header, arrays)

    @classmethod
    def load(cls, path):
        header, arrays = load_checkpoint(path)
        if header["regime"] not in REGIMES:
            raise ValueError(f"bad checkpoint regime {header['regime']!r}")
        vocab = Vocabulary(base_size=int(header["base_vocab"]),
                           regime=header["regime"])
        model = cls(vocab,
                    feat_dim=int(header["feat_dim"]),
                    enc_hidden=int(header["enc_hidden"]),
                    pred_hidden=int(header["pred_hidden"]),
                    embed_dim=int(header["embed_dim"]),
                    joint_dim=int(header["joint_dim"]),
                    encoder_mode=header["encoder_mode"])
        model.params.load_state_arrays(arrays)
        return model, header, arrays
