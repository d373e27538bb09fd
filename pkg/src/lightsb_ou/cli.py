"""Command-line interface.

Every command writes its outputs into ``--out DIR`` together with a single
``manifest.json`` describing the run.  Randomness comes from ``--seed``
through named streams (``data``, ``train``, ``sample``, ``eval``), so a
command re-run with the same inputs and seed rewrites byte-identical CSVs.

Configuration precedence for ``train`` and ``sweep``: built-in defaults,
then the checkpoint being resumed, then ``--config``, then explicit flags.
"""
from dataclasses import dataclass, field, asdict, replace
import argparse
import datetime
import hashlib
import json
import logging
import os
import sys

import numpy as np

from . import __version__, _kernels
from . import benchmark as bench
from .bridge import sample_pairs, sample_trajectories, write_trajectories_csv
from .datagen import (
    VARIANTS, DataError, DatasetProvider, GaussianMixtureSpec, MixtureProvider, NormalProvider,
    load_csv, make_25gauss, sample_mixture, sample_standard_normal, write_csv,
)
from .metrics import (
    DEFAULT_CONFIDENCE, DEFAULT_PROJECTIONS, evaluate, format_summary, write_report_csv,
)
from .potential import load_checkpoint, save_checkpoint
from .seeding import stream
from .trainer import (
    TrainConfig, TrainingDiverged, grid_sweep, load_config, train,
)

MANIFEST = "manifest.json"


class CommandError(Exception):
    """A user-facing failure; printed without a traceback."""


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    argv: list
    seed: int
    config: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    checkpoint: str | None = None
    status: str = "ok"
    started: str = field(default_factory=_now)
    finished: str | None = None
    version: str = __version__
    backend: str = _kernels.BACKEND

    def add_input(self, name, path):
        if path is not None:
            self.inputs[name] = {"path": os.fspath(path), "sha256": sha256(path)}

    def add_output(self, name, path):
        self.outputs[name] = {"path": os.fspath(path), "sha256": sha256(path)}

    def write(self, out_dir):
        self.finished = _now()
        path = os.path.join(out_dir, MANIFEST)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=1, sort_keys=True)
            fh.write("\n")
        return path


def _out_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _load_points(path, has_header):
    try:
        return load_csv(path, has_header=has_header).points
    except FileNotFoundError:
        raise CommandError(f"no such file: {path}") from None


# flag name -> TrainConfig field
TRAIN_FLAGS = {"batch_size": "batch_size", "eps": "eps", "lr": "lr", "K": "K", "b": "b",
               "m": "m_scale", "n_steps": "n_steps", "T": "T", "optimizer": "optimizer",
               "checkpoint_every": "checkpoint_every"}


def resolve_train_config(args, base=None):
    cfg = base or TrainConfig()
    if args.config:
        try:
            cfg = load_config(args.config, base=cfg)
        except FileNotFoundError:
            raise CommandError(f"no such config file: {args.config}") from None
    over = {TRAIN_FLAGS[k]: getattr(args, k) for k in TRAIN_FLAGS if getattr(args, k) is not None}
    if args.seed is not None:
        over["seed"] = args.seed
    return replace(cfg, **over)


def _add_train_flags(p):
    p.add_argument("--config", help="YAML file with training fields")
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--K", type=int)
    p.add_argument("--b", type=float, help="OU mean-reversion rate")
    p.add_argument("--m", type=float, help="OU level, applied to every coordinate")
    p.add_argument("--n-steps", dest="n_steps", type=int)
    p.add_argument("--T", type=float)
    p.add_argument("--optimizer", choices=("adam", "sgd"))
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)


# --- commands ---------------------------------------------------------------

def cmd_gen_data(args, man):
    out = _out_dir(args.out)
    spec = make_25gauss(args.variant, seed=bench.data_seed(args.seed, args.variant))
    target = sample_mixture(spec, args.n, stream(args.seed, "data", "target"))
    source = sample_standard_normal(spec.d, args.n, stream(args.seed, "data", "source"))
    paths = {"target": os.path.join(out, "target.csv"),
             "source": os.path.join(out, "source.csv"),
             "spec": os.path.join(out, "spec.json")}
    header = [f"x_{j + 1}" for j in range(spec.d)]
    write_csv(paths["target"], target, header)
    write_csv(paths["source"], source, header)
    spec.save(paths["spec"])
    man.config = {"variant": args.variant, "n": args.n}
    for k, p in paths.items():
        man.add_output(k, p)
    print(f"wrote {args.n} target and source points ({args.variant}) to {out}")


def _write_loss(path, start, trace):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,loss\n")
        for i, v in enumerate(trace):
            fh.write(f"{start + i + 1},{v!r}\n")


def cmd_train(args, man):
    out = _out_dir(args.out)
    init = opt_state = None
    start = 0
    base = None
    if args.resume:
        try:
            init, _, meta = load_checkpoint(args.resume)
        except FileNotFoundError:
            raise CommandError(f"no such checkpoint: {args.resume}") from None
        start = int(meta.get("steps", 0))
        opt_state = meta.get("optimizer")
        if meta.get("config"):
            base = TrainConfig(**meta["config"])
        man.add_input("resume", args.resume)
    cfg = resolve_train_config(args, base)
    Y = _load_points(args.target, args.header)
    cfg = replace(cfg, d=Y.shape[1])
    if args.source:
        X = _load_points(args.source, args.header)
        if X.shape[1] != Y.shape[1]:
            raise CommandError("source and target dimensions differ")
        source = DatasetProvider(X)
    else:
        source = NormalProvider(Y.shape[1])
    remaining = cfg.n_steps - start
    if remaining < 1:
        raise CommandError(f"checkpoint already has {start} steps (n_steps={cfg.n_steps})")
    run_cfg = replace(cfg, n_steps=remaining)
    ckpt = os.path.join(out, "checkpoint.json")
    ou = cfg.ou_params()

    def on_ckpt(step, model, state):
        save_checkpoint(ckpt, model, ou, {"steps": step, "seed": cfg.seed, "optimizer": state,
                                          "config": cfg.to_dict()})

    man.add_input("target", args.target)
    man.add_input("source", args.source)
    man.config, man.seed = cfg.to_dict(), cfg.seed
    try:
        rep = train(run_cfg, source, DatasetProvider(Y), init=init, optimizer_state=opt_state,
                    start_step=start, on_checkpoint=on_ckpt)
    except TrainingDiverged as exc:
        step, model, state = exc.last_good
        on_ckpt(step, model, state)
        man.checkpoint = ckpt
        man.add_output("checkpoint", ckpt)
        raise CommandError(f"{exc}; last finite state (step {step}) saved to {ckpt}") from None
    meta = rep.meta()
    meta["config"] = cfg.to_dict()
    save_checkpoint(ckpt, rep.final_model, ou, meta)
    loss_path = os.path.join(out, "loss.csv")
    _write_loss(loss_path, start, rep.loss_trace)
    man.checkpoint = ckpt
    man.add_output("checkpoint", ckpt)
    man.add_output("loss", loss_path)
    print(f"trained steps {start + 1}..{cfg.n_steps}, final loss {rep.loss_trace[-1]:.6g}")


def _model_and_source(args, man):
    try:
        model, ou, _ = load_checkpoint(args.checkpoint)
    except FileNotFoundError:
        raise CommandError(f"no such checkpoint: {args.checkpoint}") from None
    man.add_input("checkpoint", args.checkpoint)
    if args.source:
        X = _load_points(args.source, args.header)
        man.add_input("source", args.source)
    else:
        X = stream(args.seed, "sample", "source").standard_normal((args.n, model.d))
    if X.shape[1] != model.d:
        raise CommandError(f"source has dimension {X.shape[1]}, model has {model.d}")
    return model, ou, X


def cmd_sample(args, man):
    out = _out_dir(args.out)
    model, ou, X = _model_and_source(args, man)
    _, Y = sample_pairs(model, ou, X, stream(args.seed, "sample"))
    if not np.all(np.isfinite(Y)):
        raise CommandError("non-finite samples")
    path = os.path.join(out, "samples.csv")
    d = model.d
    write_csv(path, np.hstack([X, Y]), [f"x_{j + 1}" for j in range(d)]
              + [f"y_{j + 1}" for j in range(d)])
    man.config = {"n": int(X.shape[0])}
    man.add_output("samples", path)
    print(f"wrote {X.shape[0]} coupled pairs to {path}")


def cmd_trajectory(args, man):
    out = _out_dir(args.out)
    model, ou, X = _model_and_source(args, man)
    times, paths = sample_trajectories(model, ou, X, args.knots, stream(args.seed, "sample"))
    if not np.all(np.isfinite(paths)):
        raise CommandError("non-finite trajectories")
    path = os.path.join(out, "trajectories.csv")
    write_trajectories_csv(path, times, paths)
    man.config = {"n": int(X.shape[0]), "knots": args.knots}
    man.add_output("trajectories", path)
    print(f"wrote {X.shape[0]} trajectories with {args.knots} knots to {path}")


def _subsample(P, n, rng):
    if P.shape[0] == n:
        return P
    return P[np.sort(rng.choice(P.shape[0], n, replace=False))]


def cmd_eval(args, man):
    out = _out_dir(args.out)
    A = _load_points(args.samples, args.header)
    B = _load_points(args.reference, args.header)
    if args.columns:
        if max(args.columns) >= A.shape[1]:
            raise CommandError(f"--columns exceeds the {A.shape[1]} sample columns")
        A = A[:, args.columns]
    if A.shape[1] != B.shape[1]:
        raise CommandError("sample and reference dimensions differ")
    # sliced W1 pairs sorted samples, so both clouds are cut to the smaller size
    n = min(A.shape[0], B.shape[0])
    g = stream(args.seed, "eval")
    A, B = _subsample(A, n, g), _subsample(B, n, g)
    modes = None
    if args.spec:
        modes = GaussianMixtureSpec.load(args.spec).modes()
        man.add_input("spec", args.spec)
    rep = evaluate(lambda k, r: A, lambda k, r: B, modes=modes, n=n, n_repeats=1, rng=g,
                   n_proj=args.n_proj, gamma=args.gamma, confidence=args.confidence)
    path = os.path.join(out, "report.csv")
    write_report_csv(path, rep)
    man.add_input("samples", args.samples)
    man.add_input("reference", args.reference)
    man.config = rep.config
    man.add_output("report", path)
    print(format_summary(rep))


def _benchmark_config(args):
    tcfg = resolve_train_config(args)
    cfg = bench.BenchmarkConfig(train=tcfg)
    over = {}
    if args.variants:
        over["variants"] = tuple(args.variants)
    if args.b_values is not None:
        over["b_values"] = tuple(args.b_values)
    if args.m_scales is not None:
        over["m_scales"] = tuple(args.m_scales)
    if args.eval_n is not None:
        over["eval_n"] = over["select_n"] = args.eval_n
    if args.repeats is not None:
        over["n_repeats"] = args.repeats
    return replace(cfg, **over)


def cmd_benchmark(args, man):
    out = _out_dir(args.out)
    cfg = _benchmark_config(args)
    man.config, man.seed = cfg.to_dict(), cfg.train.seed
    results = bench.run_benchmark(cfg)
    if not bench.is_finite(results):
        raise CommandError("benchmark produced non-finite metrics")
    paths = {"table": os.path.join(out, "table.csv"), "sweep": os.path.join(out, "sweep.csv"),
             "summary": os.path.join(out, "summary.txt")}
    bench.write_table(paths["table"], results)
    bench.write_sweep(paths["sweep"], results)
    text = bench.format_table(results)
    with open(paths["summary"], "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    for k, p in paths.items():
        man.add_output(k, p)
    print(text)


def cmd_sweep(args, man):
    out = _out_dir(args.out)
    cfg = resolve_train_config(args)
    if args.target:
        Y = _load_points(args.target, args.header)
        target, modes = DatasetProvider(Y), None
        man.add_input("target", args.target)
        if args.spec:
            modes = GaussianMixtureSpec.load(args.spec).modes()
            man.add_input("spec", args.spec)
    else:
        spec = make_25gauss(args.variant, seed=bench.data_seed(cfg.seed, args.variant))
        target = MixtureProvider(spec)
        modes = spec.modes()
    cfg = replace(cfg, d=target.d)
    rows = grid_sweep(cfg, args.b_values or [-0.1, 0.0, 0.1], args.m_scales or [-0.25, 0.0, 0.25],
                      NormalProvider(cfg.d), target, eval_n=args.eval_n, modes=modes,
                      seed_mode=args.seed_mode)
    path = os.path.join(out, "sweep.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("b,m_scale,seed,sliced_w1,covered_modes,error\n")
        for r in rows:
            rep = r["report"]
            sw = repr(rep.sliced_w1[0]) if rep else ""
            cov = repr(rep.covered_modes[0]) if rep and modes is not None else ""
            fh.write(f"{r['b']!r},{r['m_scale']!r},{r['seed']},{sw},{cov},{r['error'] or ''}\n")
    man.config, man.seed = cfg.to_dict(), cfg.seed
    man.add_output("sweep", path)
    for r in rows:
        print(f"b={r['b']:+.3f} m={r['m_scale']:+.3f}  {r['value']:.6g}")


# --- parser -----------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="lightsb-ou", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed_default=0):
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=seed_default)
        sp.add_argument("--header", action="store_true",
                        help="input CSVs start with a header row")

    g = sub.add_parser("gen-data", help="sample a 25-Gaussian target and a normal source")
    common(g)
    g.add_argument("--variant", choices=VARIANTS, default="standard")
    g.add_argument("--n", type=int, default=10000)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="fit the mixture potential")
    common(t, seed_default=None)
    t.add_argument("--target", required=True)
    t.add_argument("--source", help="source CSV (default: standard normal)")
    t.add_argument("--resume", help="checkpoint to continue from")
    _add_train_flags(t)
    t.set_defaults(func=cmd_train)

    for name, func, helptext in (("sample", cmd_sample, "draw coupled pairs"),
                                 ("trajectory", cmd_trajectory, "draw bridge trajectories")):
        s = sub.add_parser(name, help=helptext)
        common(s)
        s.add_argument("--checkpoint", required=True)
        s.add_argument("--source", help="source CSV (default: --n standard normal points)")
        s.add_argument("--n", type=int, default=10000)
        if name == "trajectory":
            s.add_argument("--knots", type=int, default=11)
        s.set_defaults(func=func)

    e = sub.add_parser("eval", help="compare two point clouds")
    common(e)
    e.add_argument("--samples", required=True)
    e.add_argument("--reference", required=True)
    e.add_argument("--spec", help="mixture spec JSON, enables mode coverage")
    e.add_argument("--columns", type=lambda s: [int(c) for c in s.split(",")],
                   help="0-based sample columns to keep (e.g. the y block of samples.csv)")
    e.add_argument("--n-proj", dest="n_proj", type=int, default=DEFAULT_PROJECTIONS)
    e.add_argument("--gamma", type=float, help="MMD bandwidth (default: median heuristic)")
    e.add_argument("--confidence", type=float, default=DEFAULT_CONFIDENCE)
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("benchmark", help="three-variant LightSB vs LightSB-OU table")
    common(b, seed_default=None)
    _add_train_flags(b)
    b.add_argument("--variants", nargs="+", choices=VARIANTS)
    b.add_argument("--b-values", dest="b_values", type=_floats)
    b.add_argument("--m-scales", dest="m_scales", type=_floats)
    b.add_argument("--eval-n", dest="eval_n", type=int)
    b.add_argument("--repeats", type=int)
    b.set_defaults(func=cmd_benchmark)

    w = sub.add_parser("sweep", help="grid over (b, m)")
    common(w, seed_default=None)
    _add_train_flags(w)
    w.add_argument("--variant", choices=VARIANTS, default="standard")
    w.add_argument("--target", help="target CSV instead of a generated variant")
    w.add_argument("--spec", help="mixture spec JSON for mode coverage with --target")
    w.add_argument("--b-values", dest="b_values", type=_floats)
    w.add_argument("--m-scales", dest="m_scales", type=_floats)
    w.add_argument("--eval-n", dest="eval_n", type=int, default=10000)
    w.add_argument("--seed-mode", dest="seed_mode", choices=("shared", "per-cell"),
                   default="shared")
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    man = RunManifest(command=args.command, argv=argv, seed=args.seed)
    code = 0
    try:
        args.func(args, man)
    except (CommandError, DataError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        man.status = f"error: {exc}"
        code = 1
    finally:
        if os.path.isdir(args.out):
            man.write(args.out)
    return code


if __name__ == "__main__":
    sys.exit(main())
