"""Transducer lattice operations: joint scoring, RNNT loss, KD loss.

The forward-backward recursion dispatches to the compiled kernel when
available, otherwise to the numpy fallback.  Set MTLAB_PURE_PYTHON=1 to
force the fallback.
"""

import os
import struct

import numpy as np

from . import _dp_np

if os.environ.get("MTLAB_PURE_PYTHON"):
    _kernel = _dp_np
    HAVE_COMPILED_KERNEL = False
else:
    try:
        from . import _dp as _kernel
        HAVE_COMPILED_KERNEL = True
    except ImportError:
        _kernel = _dp_np
        HAVE_COMPILED_KERNEL = False


class ImpossibleAlignmentError(ValueError):
    """Raised when labels cannot be aligned (U > 0 with T = 0)."""


def _check_labels(logp, labels, blank):
    T, U1, K = logp.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1 or U1 != labels.shape[0] + 1:
        raise ValueError(f"lattice has {U1} label rows but {labels.shape[0]} labels")
    if T == 0:
        if labels.shape[0] > 0:
            raise ImpossibleAlignmentError("labels present but no frames")
        raise ValueError("empty lattice")
    if np.any(labels == blank):
        raise ValueError("blank id may not appear in the label sequence")
    if np.any((labels < 0) | (labels >= K)):
        raise ValueError("label id outside vocabulary")
    return labels


def rnnt_forward_backward(logp, labels, blank=0):
    """(log_like, alpha, beta) for a log-prob lattice; test/debug hook."""
    labels = _check_labels(logp, labels, blank)
    return _kernel.forward_backward(np.ascontiguousarray(logp, dtype=np.float64),
                                    labels, blank)


def rnnt_loss(logp, labels, blank=0):
    """RNNT loss and its gradient w.r.t. the pre-softmax logits.

    `logp` is the T x (U+1) x K log-probability lattice (cell
    distributions already log-softmaxed); the returned gradient applies
    to the logits that produced it.
    """
    labels = _check_labels(logp, labels, blank)
    logp = np.ascontiguousarray(logp, dtype=np.float64)
    loss, g_logp = _kernel.loss_and_grad_logp(logp, labels, blank)
    # chain rule through log-softmax: dL/dz = G - p * sum_k(G)
    grad_logits = g_logp - np.exp(logp) * g_logp.sum(axis=-1, keepdims=True)
    return loss, grad_logits


def kd_loss(teacher_logp, student_logp):
    """Cross-entropy between two posterior lattices, summed over every
    cell and class.  The teacher is a constant; the gradient applies to
    the student's logits (per cell: student_prob - teacher_prob).
    """
    if teacher_logp.shape != student_logp.shape:
        raise ValueError(
            f"teacher/student lattice shape mismatch: "
            f"{teacher_logp.shape} vs {student_logp.shape}"
        )
    q = np.exp(teacher_logp)
    loss = -float(np.sum(q * student_logp))
    grad_student_logits = np.exp(student_logp) - q
    return loss, grad_student_logits


def joint_lattice(enc_states, pred_states, lin_enc, lin_pred, lin_out):
    """Score every (t, u) cell: W_out tanh(lin_enc(h_t) + lin_pred(g_u)).

    Returns (logits: T x (U+1) x K, cache for the backward pass).
    """
    le = lin_enc.forward(enc_states)        # T x J
    lp = lin_pred.forward(pred_states)      # (U+1) x J
    act = np.tanh(le[:, None, :] + lp[None, :, :])
    logits = act @ lin_out.W.value + lin_out.b.value
    return logits, (enc_states, pred_states, le, lp, act)


def joint_lattice_backward(dlogits, cache, lin_enc, lin_pred, lin_out):
    """Accumulate joint-network grads; returns (d_enc_states, d_pred_states)."""
    enc_states, pred_states, le, lp, act = cache
    T, U1, _ = dlogits.shape
    lin_out.W.grad += np.einsum("tuj,tuk->jk", act, dlogits)
    lin_out.b.grad += dlogits.sum(axis=(0, 1))
    dact = dlogits @ lin_out.W.value.T
    dpre = dact * (1.0 - act * act)
    d_le = dpre.sum(axis=1)
    d_lp = dpre.sum(axis=0)
    d_enc = lin_enc.backward(enc_states, d_le)
    d_pred = lin_pred.backward(pred_states, d_lp)
    return d_enc, d_pred


def save_lattice(path, logp):
    """Binary lattice dump: 'MTLAT1' + (T, U, K) as int64 + f64 rows."""
    logp = np.ascontiguousarray(logp, dtype="<f8")
    T, U1, K = logp.shape
    with open(path, "wb") as f:
        f.write(b"MTLAT1")
        f.write(struct.pack("<qqq", T, U1 - 1, K))
        f.write(logp.tobytes())


def load_lattice(path):
    with open(path, "rb") as f:
        if f.read(6) != b"MTLAT1":
            raise ValueError(f"{path}: not a lattice dump")
        T, U, K = struct.unpack("<qqq", f.read(24))
        buf = f.read(T * (U + 1) * K * 8)
        return np.frombuffer(buf, dtype="<f8").reshape(T, U + 1, K).copy()
