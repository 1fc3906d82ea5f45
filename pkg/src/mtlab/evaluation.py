"""Token error scoring: Levenshtein with breakdown, cpWER, report tables."""

import json
from dataclasses import dataclass, field
from itertools import permutations

MAX_SPEAKERS = 4


def edit_distance(ref, hyp):
    """Unit-cost Levenshtein distance with an error breakdown.

    Returns (distance, n_sub, n_ins, n_del).  The breakdown comes from
    one optimal backtrace; ties prefer substitution, then deletion,
    then insertion.
    """
    n, m = len(ref), len(hyp)
    # D[i][j]: distance between ref[:i] and hyp[:j]
    D = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        D[i][0] = i
    for j in range(1, m + 1):
        D[0][j] = j
    for i in range(1, n + 1):
        ri = ref[i - 1]
        for j in range(1, m + 1):
            sub = D[i - 1][j - 1] + (ri != hyp[j - 1])
            dele = D[i - 1][j] + 1
            ins = D[i][j - 1] + 1
            D[i][j] = min(sub, dele, ins)

    n_sub = n_ins = n_del = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and D[i][j] == D[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            if ref[i - 1] != hyp[j - 1]:
                n_sub += 1
            i -= 1
            j -= 1
        elif i > 0 and D[i][j] == D[i - 1][j] + 1:
            n_del += 1
            i -= 1
        else:
            n_ins += 1
            j -= 1
    return D[n][m], n_sub, n_ins, n_del


@dataclass
class EvalResult:
    cpwer: float
    n_errors: int
    n_ref_tokens: int
    n_sub: int
    n_ins: int
    n_del: int
    permutation: tuple
    per_sample: list = field(default_factory=list)


def cpwer_single(refs, hyps):
    """Minimum-permutation concatenated WER for one sample.

    `refs` and `hyps` are per-speaker-slot token lists; slots are padded
    with empty sequences so both sides have equal length.
    """
    M = max(len(refs), len(hyps))
    if M > MAX_SPEAKERS:
        raise ValueError(f"more than {MAX_SPEAKERS} speakers unsupported")
    refs = list(refs) + [[]] * (M - len(refs))
    hyps = list(hyps) + [[]] * (M - len(hyps))
    best = None
    for perm in permutations(range(M)):
        tot = [0, 0, 0, 0]
        for r, p in zip(refs, perm):
            d = edit_distance(r, hyps[p])
            for k in range(4):
                tot[k] += d[k]
        if best is None or tot[0] < best[0][0]:
            best = (tot, perm)
    (dist, sub, ins, dele), perm = best
    n_ref = sum(len(r) for r in refs)
    return EvalResult(
        cpwer=dist / n_ref if n_ref else (0.0 if dist == 0 else float("inf")),
        n_errors=dist, n_ref_tokens=n_ref,
        n_sub=sub, n_ins=ins, n_del=dele, permutation=perm)


def cpwer(ref_sets, hyp_sets):
    """Corpus-level cpWER: per-sample minimum-permutation error counts,
    pooled over samples."""
    if len(ref_sets) != len(hyp_sets):
        raise ValueError("ref/hyp sample count mismatch")
    tot_err = tot_ref = tot_sub = tot_ins = tot_del = 0
    per_sample = []
    for refs, hyps in zip(ref_sets, hyp_sets):
        r = cpwer_single(refs, hyps)
        per_sample.append(r)
        tot_err += r.n_errors
        tot_ref += r.n_ref_tokens
        tot_sub += r.n_sub
        tot_ins += r.n_ins
        tot_del += r.n_del
    return EvalResult(
        cpwer=tot_err / tot_ref if tot_ref else 0.0,
        n_errors=tot_err, n_ref_tokens=tot_ref,
        n_sub=tot_sub, n_ins=tot_ins, n_del=tot_del,
        permutation=(), per_sample=per_sample)


def format_report(rows, conditions=("1spk", "2spk"), title="cpWER [%]",
                  footer=None):
    """Aligned text table + JSON for system x condition cpWER cells.

    `rows` is a list of (system_name, {condition: EvalResult | None});
    missing cells render as an em-free dash and are nonfatal.
    """
    name_w = max([len("System")] + [len(r[0]) for r in rows])
    lines = [title]
    header = "System".ljust(name_w) + "".join(f"  {c:>8}" for c in conditions)
    lines.append(header)
    lines.append("-" * len(header))
    payload = []
    for name, cells in rows:
        line = name.ljust(name_w)
        rec = {"system": name}
        for c in conditions:
            res = cells.get(c)
            if res is None:
                line += f"  {'-':>8}"
                rec[c] = None
            else:
                line += f"  {100.0 * res.cpwer:8.2f}"
                rec[c] = {
                    "cpwer": res.cpwer, "errors": res.n_errors,
                    "ref_tokens": res.n_ref_tokens,
                    "sub": res.n_sub, "ins": res.n_ins, "del": res.n_del,
                }
        lines.append(line)
        payload.append(rec)
    if footer:
        lines.append(footer)
    return "\n".join(lines), json.dumps(payload, indent=2)
