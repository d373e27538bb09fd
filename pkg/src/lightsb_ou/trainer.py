"""Minibatch training of the mixture potential, plus an OU-parameter grid sweep."""
from dataclasses import dataclass, field, asdict, replace
import logging
import math
import time

import numpy as np
import yaml

from . import metrics as _metrics
from .ou import OUParams
from .potential import NonFiniteLossError, PotentialModel, init_model, loss_and_grad
from .seeding import derive_seed, stream

log = logging.getLogger(__name__)

# keys accepted in a config file; "m" is the scalar level m_scale
CONFIG_KEYS = {"batch_size", "eps", "lr", "K", "diagonal", "b", "m", "n_steps", "seed",
               "T", "d", "optimizer", "beta1", "beta2", "delta", "checkpoint_every"}


@dataclass
class TrainConfig:
    n_steps: int = 10000
    batch_size: int = 128
    lr: float = 2e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    delta: float = 1e-8
    seed: int = 0
    checkpoint_every: int = 1000
    K: int = 30
    eps: float = 0.1
    b: float = 0.0
    m_scale: float = 0.0
    T: float = 1.0
    d: int = 2

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.K < 1 or self.d < 1:
            raise ValueError("K and d must be positive")

    def ou_params(self):
        return OUParams.isotropic(self.d, self.b, self.m_scale, self.eps, self.T)

    def to_dict(self):
        return asdict(self)


def config_from_mapping(doc, base=None):
    """Build a TrainConfig from config-file field names, on top of ``base``."""
    unknown = set(doc) - CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if doc.get("diagonal", True) is not True:
        raise ValueError("only diagonal component covariances are supported")
    kw = {k: v for k, v in doc.items() if k not in ("diagonal", "m")}
    if "m" in doc:
        kw["m_scale"] = float(doc["m"])
    for key in ("eps", "lr", "b", "T", "beta1", "beta2", "delta"):
        if key in kw:
            kw[key] = float(kw[key])
    return replace(base or TrainConfig(), **kw)


def load_config(path, base=None):
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh) or {}
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: config must be a mapping")
    return config_from_mapping(doc, base)


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, delta=1e-8, state=None):
        self.lr, self.beta1, self.beta2, self.delta = lr, beta1, beta2, delta
        self.t = 0
        self.m = None
        self.v = None
        if state:
            self.t = int(state["t"])
            self.m = np.asarray(state["m"], dtype=np.float64)
            self.v = np.asarray(state["v"], dtype=np.float64)

    def step(self, theta, grad):
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return theta - self.lr * m_hat / (np.sqrt(v_hat) + self.delta)

    def state(self):
        return {"kind": "adam", "t": self.t,
                "m": None if self.m is None else self.m.tolist(),
                "v": None if self.v is None else self.v.tolist()}


class SGD:
    def __init__(self, lr, state=None):
        self.lr = lr
        self.t = int(state["t"]) if state else 0

    def step(self, theta, grad):
        self.t += 1
        return theta - self.lr * grad

    def state(self):
        return {"kind": "sgd", "t": self.t}


def make_optimizer(cfg, state=None):
    if cfg.optimizer == "adam":
        if state and state.get("m") is None:
            state = None
        return Adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.delta, state=state)
    return SGD(cfg.lr, state=state)


@dataclass
class TrainReport:
    loss_trace: np.ndarray
    wall_time: float
    final_model: PotentialModel
    config: TrainConfig
    optimizer_state: dict = field(default_factory=dict, repr=False)
    start_step: int = 0

    def meta(self):
        return {"steps": self.start_step + len(self.loss_trace), "seed": self.config.seed,
                "final_loss": float(self.loss_trace[-1]), "optimizer": self.optimizer_state,
                "config": self.config.to_dict()}


class TrainingDiverged(FloatingPointError):
    """Loss or parameters became non-finite; carries the last finite checkpoint."""

    def __init__(self, step, last_good, loss_trace):
        self.step = step
        self.last_good = last_good
        self.loss_trace = loss_trace
        super().__init__(f"training diverged at step {step}")


def train(cfg, source, target, init=None, optimizer_state=None, start_step=0,
          on_checkpoint=None):
    """Run ``cfg.n_steps`` minibatch updates on the empirical dual objective.

    ``source``/``target`` are providers ``f(n, rng) -> (n, d)``.  Batches for
    step ``i`` come from a generator keyed on ``(seed, i)``, so a run resumed
    from a checkpoint at step ``s`` (``init``, ``optimizer_state``,
    ``start_step=s``) continues the trace of the uninterrupted run exactly.
    """
    ou = cfg.ou_params()
    if init is None:
        model = init_model(cfg.K, cfg.d, cfg.eps,
                           target(max(cfg.batch_size, 2), stream(cfg.seed, "init")),
                           stream(cfg.seed, "init-means"))
    else:
        model = init.copy()
        if (model.K, model.d) != (cfg.K, cfg.d):
            raise ValueError("initial model K/d disagree with config")
    opt = make_optimizer(cfg, optimizer_state)
    theta = model.to_vector()
    trace = np.empty(cfg.n_steps)
    last_good = (start_step, model.copy(), opt.state())
    t0 = time.perf_counter()
    for i in range(cfg.n_steps):
        step = start_step + i
        rng = stream(cfg.seed, "train", step)
        Z = source(cfg.batch_size, rng)
        Y = target(cfg.batch_size, rng)
        try:
            loss, grad = loss_and_grad(model, ou, Z, Y)
        except NonFiniteLossError:
            raise TrainingDiverged(step, last_good, trace[:i].copy()) from None
        trace[i] = loss
        new_theta = opt.step(theta, grad.to_vector())
        if not np.all(np.isfinite(new_theta)):
            raise TrainingDiverged(step, last_good, trace[:i + 1].copy())
        theta = new_theta
        model = model.with_vector(theta)
        done = step + 1
        if cfg.checkpoint_every and done % cfg.checkpoint_every == 0:
            last_good = (done, model.copy(), opt.state())
            if on_checkpoint is not None:
                on_checkpoint(done, model, opt.state())
    wall = time.perf_counter() - t0
    log.debug("trained %d steps in %.2fs, final loss %.6g", cfg.n_steps, wall, trace[-1])
    return TrainReport(loss_trace=trace, wall_time=wall, final_model=model, config=cfg,
                       optimizer_state=opt.state(), start_step=start_step)


# --- grid sweep -------------------------------------------------------------

SEED_MODES = ("shared", "per-cell")


def cell_config(base, b, m_scale, seed_mode="shared"):
    """Config of one sweep cell.

    ``shared`` keeps the base seed, so every cell sees the same initialization
    and minibatch stream (common random numbers) and cells differ only in
    ``(b, m_scale)``.  ``per-cell`` derives a fresh seed from the cell's values.
    Either way the seed does not depend on the cell's position in the grid.
    """
    if seed_mode not in SEED_MODES:
        raise ValueError(f"seed_mode must be one of {SEED_MODES}")
    seed = base.seed
    if seed_mode == "per-cell":
        seed = derive_seed(base.seed, "cell", repr(float(b)), repr(float(m_scale)))
    return replace(base, b=float(b), m_scale=float(m_scale), seed=seed)


def evaluate_model(model, ou, source, target, modes=None, n=10000, n_repeats=5, rng=0,
                   gamma=None, metrics=_metrics.METRIC_NAMES):
    from .bridge import sample_pairs

    def generate(k, g):
        X = source(k, g)
        return sample_pairs(model, ou, X, g)[1]

    return _metrics.evaluate(generate, target, modes=modes, n=n, n_repeats=n_repeats,
                             rng=rng, gamma=gamma, metrics=metrics)


def _metric_value(report, metric):
    if metric == "covered_modes":
        return -report.covered_modes[0]
    return getattr(report, metric)[0]


def grid_sweep(base, b_values, m_scales, source, target, metric="sliced_w1", eval_n=10000,
               n_repeats=1, modes=None, gamma=None, seed_mode="shared", eval_stream="eval"):
    """Train and score one model per ``(b, m_scale)`` cell.

    Returns rows ``{"b", "m_scale", "seed", "value", "report", "train", "error"}``
    sorted by ``value`` (lower is better; coverage is negated).  A failing cell
    becomes a row with ``value = inf`` and the error message.  Every cell is
    scored on the same draws, taken from the named stream ``eval_stream``.
    """
    if not len(b_values) or not len(m_scales):
        raise ValueError("empty grid")
    wanted = ("sliced_w1", "covered_modes") if metric == "sliced_w1" else (metric,)
    rows = []
    for b in b_values:
        for m in m_scales:
            cfg = cell_config(base, b, m, seed_mode)
            row = {"b": float(b), "m_scale": float(m), "seed": cfg.seed,
                   "value": math.inf, "report": None, "train": None, "error": None}
            try:
                rep = train(cfg, source, target)
                ev = evaluate_model(rep.final_model, cfg.ou_params(), source, target,
                                    modes=modes, n=eval_n, n_repeats=n_repeats,
                                    rng=stream(base.seed, eval_stream), gamma=gamma,
                                    metrics=wanted)
                row.update(value=_metric_value(ev, metric), report=ev, train=rep)
            except (FloatingPointError, ValueError, np.linalg.LinAlgError) as exc:
                row["error"] = f"{type(exc).__name__}: {exc}"
                log.warning("sweep cell b=%s m=%s failed: %s", b, m, row["error"])
            rows.append(row)
    rows.sort(key=lambda r: (r["value"], r["b"], r["m_scale"]))
    return rows
