"""Command-line entry point for reproducible experiments.

Commands: gen-data, train, decode, eval, gradcheck, oracle-check,
sweep-beam.  Everything beyond paths and seeds lives in JSON config
files; every run writes a manifest to the output directory.
"""

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .checks import (run_oracle_checks, full_loss_gradcheck, format_results)
from .decode import DecodeConfig, decode_sample_slots
from .evaluation import cpwer, format_report
from .lm import BigramLM
from .model import TransducerModel
from .simdata import export_jsonl, make_eval_set
from .train import (TrainConfig, train, EVAL_SEED_1SPK, EVAL_SEED_2SPK)


@dataclasses.dataclass
class DecodeRunConfig:
    beam: int = 16
    beta: float = 0.0
    gamma: float = 0.0
    mode: str = "beam"
    max_symbols_per_frame: int = 5
    condition: str = "2spk"
    n_samples: int = 50

    @classmethod
    def from_json_file(cls, path):
        with open(path) as f:
            d = json.load(f)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown config key(s): {', '.join(unknown)}")
        return cls(**d)

    def decode_config(self):
        return DecodeConfig(beam=self.beam, beta=self.beta, gamma=self.gamma,
                            mode=self.mode,
                            max_symbols_per_frame=self.max_symbols_per_frame)


def _write_manifest(out_dir, command, args, config_paths):
    os.makedirs(out_dir, exist_ok=True)
    hashes = {}
    for p in config_paths:
        if p and os.path.exists(p):
            with open(p, "rb") as f:
                hashes[os.path.basename(p)] = hashlib.sha256(f.read()).hexdigest()
    manifest = {
        "command": command,
        "seed": getattr(args, "seed", None),
        "config_hashes": hashes,
        "code_version": __version__,
        "timestamp": time.time(),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2)


def _load_train_config(args):
    cfg = TrainConfig.from_json_file(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _eval_samples(cfg, condition, n):
    spec = cfg.synth_spec()
    seed = EVAL_SEED_1SPK if condition == "1spk" else EVAL_SEED_2SPK
    return make_eval_set(spec, seed, n, condition)


def cmd_gen_data(args):
    cfg = _load_train_config(args)
    _write_manifest(args.out, "gen-data", args, [args.config])
    spec = cfg.synth_spec()
    export_jsonl(os.path.join(args.out, "dataset.jsonl"), spec, cfg.seed,
                 args.n)
    cfg.vocab().save(os.path.join(args.out, "vocab.txt"))
    print(f"wrote {args.n} samples to {args.out}/dataset.jsonl")
    return 0


def cmd_train(args):
    cfg = _load_train_config(args)
    _write_manifest(args.out, "train", args, [args.config])
    _, metrics = train(cfg, args.out, resume=args.resume)
    last = metrics[-1]
    print(f"trained {cfg.system}/{cfg.encoder_mode}: "
          f"dev 1spk {last['cpwer_dev_1spk']:.3f} "
          f"2spk {last['cpwer_dev_2spk']:.3f}")
    return 0


def _decode_to_jsonl(model, system, samples, dcfg, lm, out_path):
    run_cfg = dcfg.decode_config()
    with open(out_path, "w") as f:
        for s in samples:
            slots, hyps = decode_sample_slots(
                model, s.mixture, system, config=run_cfg, lm=lm,
                n_slots=s.n_speakers)
            for slot, tokens in enumerate(slots):
                hyp = hyps[slot] if slot < len(hyps) else hyps[0]
                f.write(json.dumps({
                    "id": s.sample_id, "slot": slot, "tokens": tokens,
                    "score_transducer": hyp.score_transducer,
                    "score_lm": hyp.score_lm,
                    "score_ilm": hyp.score_ilm,
                    "score": hyp.score,
                    "beam": dcfg.beam, "beta": dcfg.beta, "gamma": dcfg.gamma,
                }) + "\n")


def cmd_decode(args):
    cfg = _load_train_config(args)
    dcfg = (DecodeRunConfig.from_json_file(args.decode_config)
            if args.decode_config else DecodeRunConfig())
    _write_manifest(args.out, "decode", args, [args.config, args.decode_config])
    model, header, _ = TransducerModel.load(args.model)
    system = header.get("system", cfg.system)
    lm = BigramLM.load(args.lm) if args.lm else None
    samples = _eval_samples(cfg, dcfg.condition, dcfg.n_samples)
    out_path = os.path.join(args.out, f"decode_{dcfg.condition}.jsonl")
    _decode_to_jsonl(model, system, samples, dcfg, lm, out_path)
    print(f"wrote {out_path}")
    return 0


def cmd_eval(args):
    cfg = _load_train_config(args)
    _write_manifest(args.out, "eval", args, [args.config])
    spec = cfg.synth_spec()
    from .simdata import sample_at

    by_id = {}
    with open(args.decodes) as f:
        for line in f:
            rec = json.loads(line)
            by_id.setdefault(rec["id"], {})[rec["slot"]] = rec["tokens"]
    refs, hyps = [], []
    for sid, slots in by_id.items():
        seed_s, _, idx_s = sid.rpartition("-")
        sample = sample_at(spec, int(seed_s), int(idx_s))
        refs.append([t.tokens for t in sample.transcripts])
        hyps.append([slots.get(i, []) for i in range(sample.n_speakers)])
    result = cpwer(refs, hyps)
    text, payload = format_report(
        [(os.path.basename(args.decodes), {"all": result})],
        conditions=("all",))
    with open(os.path.join(args.out, "eval.json"), "w") as f:
        f.write(payload)
    with open(os.path.join(args.out, "eval.txt"), "w") as f:
        f.write(text + "\n")
    print(text)
    return 0


def cmd_gradcheck(args):
    _write_manifest(args.out, "gradcheck", args, [])
    results = full_loss_gradcheck()
    text = format_results(results)
    print(text)
    with open(os.path.join(args.out, "gradcheck.txt"), "w") as f:
        f.write(text + "\n")
    return 0 if all(r["passed"] for r in results) else 2


def cmd_oracle_check(args):
    _write_manifest(args.out, "oracle-check", args, [])
    results = run_oracle_checks() + full_loss_gradcheck()
    text = format_results(results)
    print(text)
    with open(os.path.join(args.out, "oracle_check.txt"), "w") as f:
        f.write(text + "\n")
    return 0 if all(r["passed"] for r in results) else 2


BEAM_GRID = (1, 2, 4, 8, 16)


def cmd_sweep_beam(args):
    cfg = _load_train_config(args)
    _write_manifest(args.out, "sweep-beam", args, [args.config])
    model, header, _ = TransducerModel.load(args.model)
    system = header.get("system", cfg.system)
    rows = []
    for condition in ("1spk", "2spk"):
        samples = _eval_samples(cfg, condition, args.n)
        refs = [[t.tokens for t in s.transcripts] for s in samples]
        for beam in BEAM_GRID:
            dc = DecodeConfig(beam=beam, mode="beam")
            hyps = [decode_sample_slots(model, s.mixture, system, config=dc,
                                        n_slots=s.n_speakers)[0]
                    for s in samples]
            rows.append((f"beam={beam}", condition, cpwer(refs, hyps)))
    cells = {}
    for name, condition, res in rows:
        cells.setdefault(name, {})[condition] = res
    text, payload = format_report(list(cells.items()))
    with open(os.path.join(args.out, "beam_sweep.json"), "w") as f:
        f.write(payload)
    with open(os.path.join(args.out, "beam_sweep.txt"), "w") as f:
        f.write(text + "\n")
    print(text)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="mtlab",
                                description="multi-talker transducer lab")
    p.add_argument("--workers", type=int,
                   default=int(os.environ.get("MTLAB_WORKERS", "1")),
                   help="reserved; deterministic single-worker for now")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True,
                            help="training config JSON")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", required=True, help="output directory")

    sp = sub.add_parser("gen-data", help="export a dataset JSONL")
    common(sp)
    sp.add_argument("--n", type=int, default=200)
    sp.set_defaults(fn=cmd_gen_data)

    sp = sub.add_parser("train", help="train one system")
    common(sp)
    sp.add_argument("--resume", action="store_true")
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("decode", help="decode an eval set")
    common(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--decode-config", default=None)
    sp.add_argument("--lm", default=None)
    sp.set_defaults(fn=cmd_decode)

    sp = sub.add_parser("eval", help="score a decode JSONL with cpWER")
    common(sp)
    sp.add_argument("--decodes", required=True)
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("gradcheck", help="finite-difference suite")
    common(sp, config=False)
    sp.set_defaults(fn=cmd_gradcheck)

    sp = sub.add_parser("oracle-check",
                        help="lattice brute-force and FD suites")
    common(sp, config=False)
    sp.set_defaults(fn=cmd_oracle_check)

    sp = sub.add_parser("sweep-beam", help="decode+eval across beam sizes")
    common(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--n", type=int, default=30)
    sp.set_defaults(fn=cmd_sweep_beam)

    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 1 if e.code not in (0, None) else 0
    try:
        return args.fn(args)
    except (ValueError, KeyError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # runtime failure
        print(f"runtime error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
