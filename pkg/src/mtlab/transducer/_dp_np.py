"""Pure-numpy transducer lattice forward-backward.

Fallback for the compiled kernel in ``_dp.pyx``; the recursion is
vectorized along anti-diagonals (cells with equal t+u), which only
depend on the previous diagonal.
"""

import numpy as np

NEG = -1.0e30  # log-domain minus-infinity sentinel


def forward_backward(logp, labels, blank=0):
    """Log-domain alpha/beta over a T x (U+1) x K log-prob lattice.

    Returns (log_like, alpha, beta) with alpha[0,0] = 0 and
    beta[T-1,U] = logp[T-1,U,blank]; log_like = beta[0,0].
    """
    T, U1, _ = logp.shape
    U = U1 - 1
    lp_blank = logp[:, :, blank]
    if U > 0:
        lp_label = logp[:, np.arange(U), labels]  # (T, U)
    else:
        lp_label = np.zeros((T, 0))

    alpha = np.full((T, U1), NEG)
    alpha[0, 0] = 0.0
    for d in range(1, T + U):
        lo = max(0, d - U)
        hi = min(T - 1, d)
        ts = np.arange(lo, hi + 1)
        us = d - ts
        fb = np.full(ts.shape, NEG)
        m = ts > 0
        fb[m] = alpha[ts[m] - 1, us[m]] + lp_blank[ts[m] - 1, us[m]]
        fl = np.full(ts.shape, NEG)
        m = us > 0
        fl[m] = alpha[ts[m], us[m] - 1] + lp_label[ts[m], us[m] - 1]
        alpha[ts, us] = np.logaddexp(fb, fl)

    beta = np.full((T, U1), NEG)
    beta[T - 1, U] = lp_blank[T - 1, U]
    for d in range(T + U - 2, -1, -1):
        lo = max(0, d - U)
        hi = min(T - 1, d)
        ts = np.arange(lo, hi + 1)
        us = d - ts
        fb = np.full(ts.shape, NEG)
        m = ts < T - 1
        fb[m] = lp_blank[ts[m], us[m]] + beta[ts[m] + 1, us[m]]
        fl = np.full(ts.shape, NEG)
        m = us < U
        fl[m] = lp_label[ts[m], us[m]] + beta[ts[m], us[m] + 1]
        beta[ts, us] = np.logaddexp(fb, fl)

    return beta[0, 0], alpha, beta


def loss_and_grad_logp(logp, labels, blank=0):
    """Negative log-likelihood and its gradient w.r.t. the log-probs."""
    T, U1, K = logp.shape
    U = U1 - 1
    ll, alpha, beta = forward_backward(logp, labels, blank)

    G = np.zeros_like(logp)
    lp_blank = logp[:, :, blank]
    gb = np.zeros((T, U1))
    if T > 1:
        gb[:T - 1, :] = np.exp(alpha[:T - 1, :] + lp_blank[:T - 1, :]
                               + beta[1:, :] - ll)
    gb[T - 1, U] = np.exp(alpha[T - 1, U] + lp_blank[T - 1, U] - ll)
    G[:, :, blank] = -gb
    for u in range(U):
        gl = np.exp(alpha[:, u] + logp[:, u, labels[u]] + beta[:, u + 1] - ll)
        G[:, u, labels[u]] -= gl
    return -ll, G
