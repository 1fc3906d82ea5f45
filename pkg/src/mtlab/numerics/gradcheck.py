"""Central finite-difference validation of analytic gradients."""

import numpy as np


def grad_check(params, loss_fn, eps=1e-5, tol=1e-4, atol=1e-8,
               max_entries=None, rng=None):
    """Compare analytic grads against central differences.

    `loss_fn()` must be deterministic, return a scalar, and leave the
    analytic gradients of one evaluation in ``p.grad``.  If
    `max_entries` is set, only a random subset of each parameter's
    entries is probed (the analytic side is always full).

    Returns a report dict: per-parameter max relative error plus a
    global pass flag.
    """
    params.zero_grad()
    loss_fn()
    analytic = {p.name: p.grad.copy() for p in params}

    report = {"per_param": {}, "tol": tol, "eps": eps}
    worst = 0.0
    for p in params:
        flat = p.value.reshape(-1)
        n = flat.size
        if max_entries is not None and n > max_entries:
            if rng is None:
                rng = np.random.default_rng(0)
            idx = rng.choice(n, size=max_entries, replace=False)
        else:
            idx = np.arange(n)
        a_flat = analytic[p.name].reshape(-1)
        max_rel = 0.0
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            lp = loss_fn()
            flat[i] = orig - eps
            lm = loss_fn()
            flat[i] = orig
            fd = (lp - lm) / (2.0 * eps)
            a = a_flat[i]
            diff = abs(a - fd)
            # below atol the FD estimate is dominated by cancellation noise
            rel = 0.0 if diff <= atol else diff / max(abs(a), abs(fd))
            max_rel = max(max_rel, rel)
        report["per_param"][p.name] = max_rel
        worst = max(worst, max_rel)
    report["max_rel_err"] = worst
    report["passed"] = worst <= tol
    return report
