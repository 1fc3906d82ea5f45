"""Dense layers with hand-derived backward passes.

Everything operates on 2D f64 arrays (rows = batch/time). Backward
methods take the upstream gradient, accumulate into Parameter.grad and
return the gradient w.r.t. their input.
"""

import numpy as np


def det_matmul(a, w):
    """Matrix product whose per-row bit pattern is independent of the
    number of rows in `a`.

    BLAS gemm changes its reduction blocking with the batch size, so
    ``(A @ W)[i]`` is not bitwise stable under batching.  Decoding paths
    that must be batch-invariant (batched multi-speaker beam search vs.
    per-speaker decoding) route their products through here: the
    reduction runs along a fixed axis with numpy's pairwise summation,
    whose order depends only on the inner dimension.
    """
    return (a[:, :, None] * w[None, :, :]).sum(axis=1)


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def log_softmax(z, axis=-1):
    """Numerically stabilized log-softmax along `axis`."""
    z = np.asarray(z, dtype=np.float64)
    m = np.max(z, axis=axis, keepdims=True)
    s = z - m
    lse = np.log(np.sum(np.exp(s), axis=axis, keepdims=True))
    return s - lse


def log_softmax_backward(logp, dout, axis=-1):
    """Gradient of log_softmax: dz = dout - softmax * sum(dout)."""
    return dout - np.exp(logp) * np.sum(dout, axis=axis, keepdims=True)


class Linear:
    """y = x W + b."""

    def __init__(self, params, name, d_in, d_out, rng):
        s = 1.0 / np.sqrt(d_in)
        self.W = params.add(f"{name}.W", rng.uniform(-s, s, (d_in, d_out)))
        self.b = params.add(f"{name}.b", rng.uniform(-s, s, d_out))

    def forward(self, x, det=False):
        if x.shape[-1] != self.W.value.shape[0]:
            raise ValueError(
                f"linear input dim {x.shape[-1]} != {self.W.value.shape[0]}"
            )
        mm = det_matmul if det else np.matmul
        return mm(x, self.W.value) + self.b.value

    def backward(self, x, dy):
        self.W.grad += x.T @ dy
        self.b.grad += dy.sum(axis=0)
        return dy @ self.W.value.T


class Embedding:
    """Token id -> row of a learned table."""

    def __init__(self, params, name, n_tokens, dim, rng):
        s = 1.0 / np.sqrt(dim)
        self.table = params.add(f"{name}.E", rng.uniform(-s, s, (n_tokens, dim)))

    def forward(self, ids):
        return self.table.value[np.asarray(ids, dtype=np.intp)]

    def backward(self, ids, dy):
        np.add.at(self.table.grad, np.asarray(ids, dtype=np.intp), dy)


def _orthogonal(rng, n):
    """Random orthogonal matrix (QR with sign correction)."""
    q, r = np.linalg.qr(rng.normal(size=(n, n)))
    return q * np.sign(np.diag(r))


class GRUCell:
    """Gated recurrent cell.

    r = sigma(x Wr + h Ur + br + cr)
    z = sigma(x Wz + h Uz + bz + cz)
    n = tanh(x Wn + bn + r * (h Un + cn))
    h' = (1 - z) * n + z * h

    Gate weights are packed [r | z | n] along the output axis.
    """

    def __init__(self, params, name, d_in, d_h, rng):
        s = 1.0 / np.sqrt(d_h)
        self.d_in = d_in
        self.d_h = d_h
        self.Wx = params.add(f"{name}.Wx", rng.uniform(-s, s, (d_in, 3 * d_h)))
        # orthogonal recurrent blocks (one per gate): keeps state norms
        # stable over long sequences and cuts seed-to-seed variance
        wh = np.concatenate([_orthogonal(rng, d_h) for _ in range(3)], axis=1)
        self.Wh = params.add(f"{name}.Wh", wh)
        self.bx = params.add(f"{name}.bx", rng.uniform(-s, s, 3 * d_h))
        self.bh = params.add(f"{name}.bh", rng.uniform(-s, s, 3 * d_h))

    def step(self, x, h, det=False):
        """One step on a batch of rows. Returns (h_next, cache)."""
        H = self.d_h
        mm = det_matmul if det else np.matmul
        gi = mm(x, self.Wx.value) + self.bx.value
        gh = mm(h, self.Wh.value) + self.bh.value
        r = sigmoid(gi[:, :H] + gh[:, :H])
        z = sigmoid(gi[:, H:2 * H] + gh[:, H:2 * H])
        hn = gh[:, 2 * H:]
        n = np.tanh(gi[:, 2 * H:] + r * hn)
        if not np.all(np.isfinite(n)):
            raise FloatingPointError("NaN/inf in recurrent cell activations")
        h_next = (1.0 - z) * n + z * h
        return h_next, (x, h, r, z, n, hn)

    def backward_step(self, dh_next, cache):
        """Backward through one step; returns (dx, dh_prev)."""
        H = self.d_h
        x, h, r, z, n, hn = cache
        dz = dh_next * (h - n)
        dn = dh_next * (1.0 - z)
        dh = dh_next * z
        dn_pre = dn * (1.0 - n * n)
        dhn = dn_pre * r
        dr = dn_pre * hn
        dr_pre = dr * r * (1.0 - r)
        dz_pre = dz * z * (1.0 - z)
        dgi = np.concatenate([dr_pre, dz_pre, dn_pre], axis=1)
        dgh = np.concatenate([dr_pre, dz_pre, dhn], axis=1)
        self.Wx.grad += x.T @ dgi
        self.Wh.grad += h.T @ dgh
        self.bx.grad += dgi.sum(axis=0)
        self.bh.grad += dgh.sum(axis=0)
        dx = dgi @ self.Wx.value.T
        dh += dgh @ self.Wh.value.T
        return dx, dh

    def run(self, xs, h0=None):
        """Run the cell over a T x d_in sequence (batch of one).

        Returns (states: T x d_h, caches) where states[t] is the hidden
        state after consuming xs[t].
        """
        T = xs.shape[0]
        h = np.zeros((1, self.d_h)) if h0 is None else h0
        states = np.empty((T, self.d_h))
        caches = []
        for t in range(T):
            h, cache = self.step(xs[t:t + 1], h)
            states[t] = h[0]
            caches.append(cache)
        return states, caches

    def backward_run(self, dstates, caches):
        """Backward over a run(); dstates is T x d_h. Returns dxs."""
        T = dstates.shape[0]
        dxs = np.empty((T, self.d_in))
        dh = np.zeros((1, self.d_h))
        for t in range(T - 1, -1, -1):
            dh = dh + dstates[t:t + 1]
            dx, dh = self.backward_step(dh, caches[t])
            dxs[t] = dx[0]
        return dxs
