"""Exhaustive path-enumeration oracle for the transducer loss.

Deliberately independent of the forward-backward code: every monotone
lattice path is walked move by move and the path scores are combined
with log-sum-exp.  Only usable at tiny sizes.
"""

from itertools import combinations
from math import comb, exp, log

MAX_T = 6
MAX_U = 4


def path_count(T, U):
    """Number of monotone paths from (0,0) to the final blank at (T-1,U)."""
    return comb(T - 1 + U, U)


def rnnt_loss_bruteforce(logp, labels, blank=0):
    """-log sum over all alignment paths; |Delta| <= 1e-10 vs rnnt_loss."""
    T, U1, _ = logp.shape
    U = U1 - 1
    if len(labels) != U:
        raise ValueError("label count does not match lattice rows")
    if T > MAX_T or U > MAX_U:
        raise ValueError(f"brute force limited to T<={MAX_T}, U<={MAX_U}")

    # a path is an interleaving of (T-1) time advances and U emissions,
    # followed by the final blank at (T-1, U)
    n_moves = T - 1 + U
    scores = []
    for label_positions in combinations(range(n_moves), U):
        t, u = 0, 0
        s = 0.0
        label_set = set(label_positions)
        for move in range(n_moves):
            if move in label_set:
                s += logp[t, u, labels[u]]
                u += 1
            else:
                s += logp[t, u, blank]
                t += 1
        s += logp[T - 1, U, blank]
        scores.append(s)

    m = max(scores)
    return -(m + log(sum(exp(s - m) for s in scores)))
