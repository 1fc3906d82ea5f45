"""Self-contained verification suites: lattice-oracle equivalence,
finite-difference gradient checks, cpWER permutation oracle, and the
tSOT round-trip identity.  Shared by the CLI commands and the test
suite."""

import time
from itertools import permutations

import numpy as np

from .evaluation import edit_distance, cpwer_single
from .labels import Vocabulary, TimedTranscript, serialize_tsot, deserialize_tsot
from .model import TransducerModel
from .numerics import grad_check, log_softmax
from .simdata import SynthSpec, sample_at
from .train import (loss_single, loss_tsot, loss_aft,
                    compute_teacher_lattices)
from .transducer import rnnt_loss, rnnt_loss_bruteforce, path_count


def lattice_oracle_check(n=500, seed=0, max_t=4, max_u=3, max_k=5, tol=1e-10):
    """Forward-backward loss vs. exhaustive path enumeration."""
    rng = np.random.default_rng(seed)
    t0 = time.time()
    worst = 0.0
    for _ in range(n):
        T = int(rng.integers(1, max_t + 1))
        U = int(rng.integers(0, max_u + 1))
        K = int(rng.integers(2, max_k + 1))
        logp = log_softmax(rng.normal(size=(T, U + 1, K)))
        labels = rng.integers(1, K, size=U).astype(np.int64)
        loss, _ = rnnt_loss(logp, labels)
        ref = rnnt_loss_bruteforce(logp, labels)
        worst = max(worst, abs(loss - ref))
    return {"name": "lattice-oracle", "n": n, "max_abs_diff": worst,
            "elapsed_s": time.time() - t0, "passed": worst <= tol}


def path_count_check(max_t=5, max_u=4):
    """Brute-force path enumeration count vs. the closed form."""
    from itertools import combinations
    ok = True
    for T in range(1, max_t + 1):
        for U in range(0, max_u + 1):
            n_paths = sum(1 for _ in combinations(range(T - 1 + U), U))
            ok = ok and n_paths == path_count(T, U)
    return {"name": "path-count", "passed": ok}


def _tiny_sample(two_speaker, seed=0):
    spec = SynthSpec(vocab_size=5, feat_dim=3, min_tokens=1, max_tokens=2,
                     silence_frames=1, offset_frames=1, dur_min=1, dur_max=2,
                     noise_sigma=0.05)
    return spec, sample_at(spec, seed, 1 if two_speaker else 3,
                           two_speaker=two_speaker)


def _tiny_model(regime, encoder_mode="bidirectional", seed=0):
    vocab = Vocabulary(5, regime)
    return TransducerModel(vocab, feat_dim=3, enc_hidden=4, pred_hidden=4,
                           embed_dim=3, joint_dim=4,
                           encoder_mode=encoder_mode, init_seed=seed)


def full_loss_gradcheck(eps=1e-5, tol=1e-4, max_entries=8, seed=0):
    """FD check of all four training losses on tiny models."""
    rng = np.random.default_rng(seed)
    results = []
    _, s1 = _tiny_sample(two_speaker=False)
    _, s2 = _tiny_sample(two_speaker=True)

    cases = []
    m = _tiny_model("single")
    cases.append(("single", m, lambda m=m: loss_single(m, s1).combined))
    m = _tiny_model("tsot")
    cases.append(("tsot", m, lambda m=m: loss_tsot(m, s2).combined))
    m = _tiny_model("aft")
    cases.append(("aft", m, lambda m=m: loss_aft(m, s2).combined))
    m = _tiny_model("aft", seed=1)
    teach = compute_teacher_lattices(m, s2)
    cases.append(("aft+kd", m,
                  lambda m=m: loss_aft(m, s2, kd_lambda=0.001,
                                       teacher_lattices=teach).combined))
    m = _tiny_model("aft", encoder_mode="causal", seed=2)
    cases.append(("aft-causal", m, lambda m=m: loss_aft(m, s2).combined))

    t0 = time.time()
    for name, model, fn in cases:
        rep = grad_check(model.params, fn, eps=eps, tol=tol,
                         max_entries=max_entries, rng=rng)
        results.append({"name": f"gradcheck-{name}",
                        "max_rel_err": rep["max_rel_err"],
                        "passed": rep["passed"]})
    results.append({"name": "gradcheck-elapsed",
                    "elapsed_s": time.time() - t0,
                    "passed": True})
    return results


def cpwer_oracle_check(n=500, seed=0):
    """cpWER vs. independent brute force over both 2-speaker assignments."""
    rng = np.random.default_rng(seed)
    ok = True
    for _ in range(n):
        refs = [rng.integers(1, 6, size=rng.integers(0, 6)).tolist()
                for _ in range(2)]
        hyps = [rng.integers(1, 6, size=rng.integers(0, 6)).tolist()
                for _ in range(2)]
        got = cpwer_single(refs, hyps)
        want = min(
            sum(edit_distance(r, hyps[p])[0] for r, p in zip(refs, perm))
            for perm in permutations(range(2)))
        ok = ok and got.n_errors == want
    return {"name": "cpwer-oracle", "n": n, "passed": ok}


def tsot_roundtrip_check(n=1000, seed=0):
    """deserialize(serialize(t1, t2)) recovers both token sequences."""
    rng = np.random.default_rng(seed)
    vocab = Vocabulary(8, "tsot")
    ok = True
    for _ in range(n):
        ts = []
        for spk in (1, 2):
            L = int(rng.integers(1, 7))
            tokens = rng.integers(1, 8, size=L).tolist()
            onsets = np.sort(rng.choice(200, size=L, replace=False)).tolist()
            if spk == 2:
                # channel 1 of a tSOT stream is the first speaker to talk
                shift = max(0, ts[0].onsets[0] + 1 - onsets[0])
                onsets = [o + shift for o in onsets]
            ts.append(TimedTranscript(speaker=spk, tokens=tokens, onsets=onsets))
        ser = serialize_tsot(ts[0], ts[1], vocab)
        c1, c2 = deserialize_tsot(ser.stream, vocab)
        ok = ok and c1 == ts[0].tokens and c2 == ts[1].tokens
        ok = ok and len(ser.stream) == len(c1) + len(c2) + ser.n_switches
    return {"name": "tsot-roundtrip", "n": n, "passed": ok}


def run_oracle_checks():
    """Everything but the (slow) full-loss gradchecks."""
    results = [
        lattice_oracle_check(),
        path_count_check(),
        cpwer_oracle_check(),
        tsot_roundtrip_check(),
    ]
    return results


def format_results(results):
    lines = []
    for r in results:
        status = "PASS" if r["passed"] else "FAIL"
        extras = {k: v for k, v in r.items() if k not in ("name", "passed")}
        detail = " ".join(f"{k}={v:.3g}" if isinstance(v, float) else f"{k}={v}"
                          for k, v in extras.items())
        lines.append(f"[{status}] {r['name']} {detail}".rstrip())
    return "\n".join(lines)
