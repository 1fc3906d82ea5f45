"""AdamW with a linear-warmup / inverse-sqrt-decay schedule."""

import logging

import numpy as np

log = logging.getLogger(__name__)


def warmup_invsqrt_lr(step, peak_lr, warmup_steps):
    """peak * min(step/warmup, sqrt(warmup/step)); step counts from 1."""
    if step < 1:
        raise ValueError("schedule step counts from 1")
    return peak_lr * min(step / warmup_steps, np.sqrt(warmup_steps / step))


class AdamW:
    def __init__(self, params, peak_lr, warmup_steps, betas=(0.9, 0.98),
                 eps=1e-9, weight_decay=0.01):
        self.params = params
        self.peak_lr = peak_lr
        self.warmup_steps = warmup_steps
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.skipped_steps = 0
        self.m = {p.name: np.zeros_like(p.value) for p in params}
        self.v = {p.name: np.zeros_like(p.value) for p in params}

    def current_lr(self):
        return warmup_invsqrt_lr(max(self.step_count, 1), self.peak_lr,
                                 self.warmup_steps)

    def step(self):
        """Apply one update from the accumulated grads.

        Non-finite gradients skip the whole update (the step counter
        still advances so the schedule stays aligned with the data
        stream).
        """
        self.step_count += 1
        if not all(np.all(np.isfinite(p.grad)) for p in self.params):
            self.skipped_steps += 1
            log.warning("non-finite gradient at step %d; update skipped",
                        self.step_count)
            return None
        lr = warmup_invsqrt_lr(self.step_count, self.peak_lr, self.warmup_steps)
        t = self.step_count
        bc1 = 1.0 - self.b1 ** t
        bc2 = 1.0 - self.b2 ** t
        for p in self.params:
            m = self.m[p.name]
            v = self.v[p.name]
            m *= self.b1
            m += (1.0 - self.b1) * p.grad
            v *= self.b2
            v += (1.0 - self.b2) * p.grad * p.grad
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.value -= lr * (update + self.weight_decay * p.value)
        return lr

    def state_arrays(self):
        out = {}
        for p in self.params:
            out[f"opt.m.{p.name}"] = self.m[p.name]
            out[f"opt.v.{p.name}"] = self.v[p.name]
        return out

    def load_state_arrays(self, arrays):
        for p in self.params:
            self.m[p.name][...] = arrays[f"opt.m.{p.name}"]
            self.v[p.name][...] = arrays[f"opt.v.{p.name}"]
