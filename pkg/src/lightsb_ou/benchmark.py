"""The three-variant 25-Gaussian comparison of the Brownian and OU references.

For each variant the plain method is the ``b = 0, m = 0`` cell.  The OU
method is the best cell with ``b != 0`` of a small ``(b, m_scale)`` sweep,
selected on one evaluation stream and reported on another so that the
reported numbers are not biased by the selection.
"""
from dataclasses import dataclass, field, asdict, replace
import csv
import logging
import math

from .datagen import VARIANTS, MixtureProvider, NormalProvider, make_25gauss
from .metrics import METRIC_NAMES, DEFAULT_REPEATS
from .seeding import derive_seed, stream
from .trainer import TrainConfig, cell_config, evaluate_model, grid_sweep, train

log = logging.getLogger(__name__)

METHODS = ("LightSB", "LightSB-OU")


@dataclass
class BenchmarkConfig:
    variants: tuple = VARIANTS
    b_values: tuple = (-0.1, 0.0, 0.1)
    m_scales: tuple = (-0.25, 0.0, 0.25)
    eval_n: int = 10000
    n_repeats: int = DEFAULT_REPEATS
    select_n: int = 10000
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        bad = set(self.variants) - set(VARIANTS)
        if bad:
            raise ValueError(f"unknown variants {sorted(bad)}")
        if not any(b != 0.0 for b in self.b_values):
            raise ValueError("b_values needs at least one nonzero entry")

    def to_dict(self):
        return asdict(self)


@dataclass
class VariantResult:
    variant: str
    sweep: list
    reports: dict          # method -> MetricsReport
    cells: dict            # method -> (b, m_scale)
    models: dict           # method -> (TrainConfig, PotentialModel)


def data_seed(seed, variant):
    return derive_seed(seed, "data", variant)


def run_variant(cfg, variant):
    base = cfg.train
    spec = make_25gauss(variant, seed=data_seed(base.seed, variant))
    source = NormalProvider(spec.d)
    target = MixtureProvider(spec)
    base = replace(base, d=spec.d)
    rows = grid_sweep(base, cfg.b_values, cfg.m_scales, source, target, eval_n=cfg.select_n,
                      n_repeats=1, modes=spec.modes(), eval_stream="select")
    ou_rows = [r for r in rows if r["b"] != 0.0 and r["error"] is None]
    if not ou_rows:
        raise RuntimeError(f"{variant}: every OU cell failed")
    best = ou_rows[0]
    plain = next((r for r in rows if r["b"] == 0.0 and r["m_scale"] == 0.0
                  and r["error"] is None), None)
    models = {}
    if plain is None:
        cfg0 = cell_config(base, 0.0, 0.0)
        models["LightSB"] = (cfg0, train(cfg0, source, target).final_model)
    else:
        models["LightSB"] = (cell_config(base, 0.0, 0.0), plain["train"].final_model)
    models["LightSB-OU"] = (cell_config(base, best["b"], best["m_scale"]),
                            best["train"].final_model)
    reports, cells = {}, {}
    for method, (c, model) in models.items():
        reports[method] = evaluate_model(model, c.ou_params(), source, target,
                                         modes=spec.modes(), n=cfg.eval_n,
                                         n_repeats=cfg.n_repeats, rng=stream(base.seed, "eval"))
        cells[method] = (c.b, c.m_scale)
    log.info("%s: OU cell b=%s m=%s", variant, best["b"], best["m_scale"])
    return VariantResult(variant, rows, reports, cells, models)


def run_benchmark(cfg):
    return [run_variant(cfg, v) for v in cfg.variants]


def write_table(path, results):
    """Long-format report: variant, method, b, m_scale, metric, mean, std."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "method", "b", "m_scale", "metric", "mean", "std"])
        for res in results:
            for method in METHODS:
                b, m = res.cells[method]
                for name, mean, std in res.reports[method].rows():
                    w.writerow([res.variant, method, repr(b), repr(m), name, repr(mean), repr(std)])


def write_sweep(path, results):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "b", "m_scale", "seed", "sliced_w1", "covered_modes", "error"])
        for res in results:
            for r in res.sweep:
                rep = r["report"]
                sw = repr(rep.sliced_w1[0]) if rep else ""
                cov = repr(rep.covered_modes[0]) if rep else ""
                w.writerow([res.variant, repr(r["b"]), repr(r["m_scale"]), r["seed"], sw, cov,
                            r["error"] or ""])


def format_table(results):
    """Text layout with one block per metric, variants as columns."""
    width = 24
    head = f"{'metric':<14} {'method':<11}" + "".join(f"{r.variant:>{width}}" for r in results)
    lines = [head]
    for name in METRIC_NAMES:
        for method in METHODS:
            cells = []
            for r in results:
                mean, std = getattr(r.reports[method], name)
                cells.append(f"{mean:.4g} +- {std:.2g}".rjust(width))
            lines.append(f"{name:<14} {method:<11}" + "".join(cells))
    return "\n".join(lines)


def is_finite(results):
    return all(math.isfinite(v) for r in results for rep in r.reports.values()
               for row in rep.rows() for v in row[1:])
