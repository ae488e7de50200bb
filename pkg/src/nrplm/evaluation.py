"""Perplexity measurement and the hyper-parameter sweep runner."""

from __future__ import annotations

import configparser
import csv
import itertools
import logging
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .corpus import NGramBatch, make_batches
from .errors import NumericError, ParameterError

log = logging.getLogger(__name__)


@dataclass
class EvalReport:
    mean_batch_ppl: float
    corpus_ppl: float
    token_count: int
    param_count: int
    config: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"mean_batch_ppl": self.mean_batch_ppl, "corpus_ppl": self.corpus_ppl,
                "token_count": self.token_count, "param_count": self.param_count,
                **{f"config.{k}": v for k, v in self.config.items()}}


def perplexity(model, batches: Sequence[NGramBatch] | np.ndarray, batch_size: int = 128,
               config: dict | None = None) -> EvalReport:
    """Both perplexity measures, dropout off.

    ``corpus_ppl`` is exp of the mean NLL over all windows; ``mean_batch_ppl``
    averages exp(mean batch NLL) over batches, which is what the early
    stopping rule and the result tables use.
    """
    if isinstance(batches, np.ndarray):
        batches = make_batches(batches, batch_size, shuffle=False)
    total, count, batch_ppls = 0.0, 0, []
    for b in batches:
        nll = model.nll(b.contexts, b.targets)
        total += float(nll.sum())
        count += len(nll)
        batch_ppls.append(math.exp(float(nll.mean())))
    if count == 0:
        raise ParameterError("perplexity of an empty batch set")
    return EvalReport(mean_batch_ppl=float(np.mean(batch_ppls)), corpus_ppl=math.exp(total / count),
                      token_count=count, param_count=model.param_count(), config=dict(config or {}))


# --------------------------------------------------------------------- sweeps

AXES = ("model", "k", "s", "mode", "m", "h", "dropout")
NRP_ONLY = ("k", "s", "mode")
RESULT_COLUMNS = ("model", "k", "s", "mode", "m", "h", "dropout", "param_count", "ppl_mean",
                  "ppl_sd", "epoch_mean", "epoch_sd", "seed", "status", "grid")
RUN_COLUMNS = ("grid", "cell", "model", "k", "s", "mode", "m", "h", "dropout", "seed",
               "test_ppl", "test_corpus_ppl", "best_val_ppl", "best_epoch", "epochs", "status")
CURVE_COLUMNS = ("x", "group", "ppl_mean", "ppl_sd")
_SWEEP_KEYS = ("repetitions", "base_seed", "pool", "curve_x", "curve_group")


@dataclass
class SweepSpec:
    base: Any  # ExperimentConfig
    name: str = "sweep"
    axes: dict[str, tuple] = field(default_factory=dict)
    repetitions: int = 3
    base_seed: int = 0
    pool: tuple[str, ...] = ()
    curve_x: str | None = None
    curve_group: str | None = None

    def __post_init__(self):
        for ax in list(self.axes) + list(self.pool):
            if ax not in AXES:
                raise ParameterError(f"unknown sweep axis {ax!r}")
        for name in (self.curve_x, self.curve_group):
            if name is not None and name not in AXES:
                raise ParameterError(f"unknown curve axis {name!r}")
        if self.repetitions < 1:
            raise ParameterError("repetitions must be >= 1")
        for ax in AXES:
            vals = tuple(self.axes.get(ax, (getattr(self.base, ax),)))
            if not vals:
                raise ParameterError(f"empty value list for axis {ax!r}")
            self.axes[ax] = vals

    def _combos(self, names):
        seen, out = set(), []
        for values in itertools.product(*(self.axes[a] for a in names)):
            combo = dict(zip(names, values))
            if combo.get("model") == "baseline":
                for ax in NRP_ONLY:
                    if ax in combo:
                        combo[ax] = None
            key = tuple(combo.items())
            if key not in seen:
                seen.add(key)
                out.append(combo)
        return out

    def cells(self) -> list[dict]:
        """Distinct result rows; baseline cells ignore k, s and mode."""
        return self._combos([a for a in AXES if a not in self.pool])

    def runs(self, cell: dict) -> list:
        """Configurations trained for one cell: pooled values x repetitions."""
        pooled = [a for a in AXES if a in self.pool]
        out = []
        for extra in (self._combos(pooled) if pooled else [{}]):
            values = {**cell, **extra}
            if values["model"] == "baseline":
                values = {k: v for k, v in values.items() if v is not None}
            for rep in range(self.repetitions):
                out.append(self.base.replace(**values, seed=self.base_seed + rep))
        unique = []
        for cfg in out:
            if cfg not in unique:
                unique.append(cfg)
        return unique


@dataclass
class RunRecord:
    test_ppl: float
    test_corpus_ppl: float
    best_val_ppl: float
    best_epoch: int
    epochs: int
    status: str = "ok"
    error: str = ""


def execute_run(cfg, data, runner: Callable | None = None) -> RunRecord:
    if runner is None:
        from .experiment import run_experiment as runner
    try:
        res = runner(cfg, data)
    except NumericError as exc:
        log.error("run aborted (%s): %s", cfg, exc)
        nan = float("nan")
        return RunRecord(nan, nan, nan, 0, 0, "failed", str(exc))
    return RunRecord(res.test.mean_batch_ppl, res.test.corpus_ppl, res.train.state.best_val_ppl,
                     res.train.state.best_epoch, res.train.state.epoch)


def _execute_task(args):
    cfg, data, runner = args
    return execute_run(cfg, data, runner)


def _mean_sd(xs: list[float]) -> tuple[float, float]:
    if not xs:
        return float("nan"), float("nan")
    return statistics.fmean(xs), (statistics.stdev(xs) if len(xs) > 1 else 0.0)


def _cell_param_count(cell: dict, base, vocab_size: int) -> int:
    from .energy import param_count
    m = cell.get("m", base.m)
    h = cell.get("h", base.h)
    if cell.get("model", base.model) == "baseline":
        return param_count(vocab_size, m, base.n, h)
    return param_count(cell.get("k") or base.k, m, base.n, h)


def _fmt_axis(cell: dict, runs: list, ax: str, pooled: bool):
    if ax in cell:
        return "" if cell[ax] is None else cell[ax]
    vals = []
    for cfg in runs:
        v = getattr(cfg, ax)
        if v not in vals:
            vals.append(v)
    if cell.get("model") == "baseline" and ax in NRP_ONLY:
        return ""
    return ";".join(str(v) for v in vals)


@dataclass
class SweepResult:
    rows: list[dict]
    runs: list[dict]
    curves: dict[str, list[dict]]

    @property
    def failed(self) -> bool:
        return any(r["status"] != "ok" for r in self.rows)


def run_sweep(specs: SweepSpec | Sequence[SweepSpec], data, out_dir: str | Path | None = None,
              jobs: int = 1, runner: Callable | None = None) -> SweepResult:
    """Train every run of every cell, aggregate per cell, and optionally write files.

    Failing runs (non-finite loss) are recorded and mark their cell as failed;
    the sweep carries on.
    """
    specs = [specs] if isinstance(specs, SweepSpec) else list(specs)
    if not specs:
        raise ParameterError("empty sweep")
    plan = []  # (spec, cell_index, cell, cfg)
    for spec in specs:
        for ci, cell in enumerate(spec.cells()):
            for cfg in spec.runs(cell):
                plan.append((spec, ci, cell, cfg))
    log.info("sweep: %d runs over %d cells", len(plan), sum(len(s.cells()) for s in specs))

    tasks = [(cfg, data, runner) for _, _, _, cfg in plan]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_execute_task, tasks))
    else:
        records = [_execute_task(t) for t in tasks]

    rows, run_rows, curves = [], [], {}
    vocab_size = len(data.vocab) if hasattr(data, "vocab") else 0
    for spec in specs:
        entries = [(ci, cell, cfg, rec) for (sp, ci, cell, cfg), rec in zip(plan, records) if sp is spec]
        for ci, cell in enumerate(spec.cells()):
            mine = [(cfg, rec) for c, _, cfg, rec in entries if c == ci]
            cfgs = [c for c, _ in mine]
            ok = [r for _, r in mine if r.status == "ok"]
            ppl_mean, ppl_sd = _mean_sd([r.test_ppl for r in ok])
            ep_mean, ep_sd = _mean_sd([float(r.best_epoch) for r in ok])
            row = {ax: _fmt_axis(cell, cfgs, ax, ax in spec.pool) for ax in AXES}
            row.update(param_count=_cell_param_count(cell, spec.base, vocab_size),
                       ppl_mean=ppl_mean, ppl_sd=ppl_sd, epoch_mean=ep_mean, epoch_sd=ep_sd,
                       seed=spec.base_seed, status="ok" if len(ok) == len(mine) else "failed",
                       grid=spec.name)
            rows.append(row)
            for cfg, rec in mine:
                nrp = cfg.model == "nrp"
                run_rows.append({
                    "grid": spec.name, "cell": ci, "model": cfg.model,
                    "k": cfg.k if nrp else "", "s": cfg.s if nrp else "",
                    "mode": cfg.mode if nrp else "", "m": cfg.m, "h": cfg.h,
                    "dropout": cfg.dropout, "seed": cfg.seed, "test_ppl": rec.test_ppl,
                    "test_corpus_ppl": rec.test_corpus_ppl, "best_val_ppl": rec.best_val_ppl,
                    "best_epoch": rec.best_epoch, "epochs": rec.epochs, "status": rec.status})
        if spec.curve_x:
            curves[spec.name] = _curve(spec, [(cfg, rec) for _, _, cfg, rec in entries])

    result = SweepResult(rows, run_rows, curves)
    if out_dir is not None:
        write_sweep(result, out_dir)
    return result


def _curve(spec: SweepSpec, runs) -> list[dict]:
    groups: dict[tuple, list[float]] = {}
    for cfg, rec in runs:
        if rec.status != "ok":
            continue
        x = getattr(cfg, spec.curve_x)
        g = getattr(cfg, spec.curve_group) if spec.curve_group else "all"
        if cfg.model == "baseline" and spec.curve_x in NRP_ONLY:
            x = "baseline"
        groups.setdefault((x, g), []).append(rec.test_ppl)
    out = []
    for (x, g), vals in groups.items():
        mean, sd = _mean_sd(vals)
        out.append({"x": x, "group": g, "ppl_mean": mean, "ppl_sd": sd})
    return out


def _write_csv(path: Path, columns: Iterable[str], rows: Iterable[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)


def write_sweep(result: SweepResult, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "results.csv", RESULT_COLUMNS, result.rows)
    _write_csv(out / "runs.csv", RUN_COLUMNS, result.runs)
    for name, rows in result.curves.items():
        _write_csv(out / f"curves_{name}.csv", CURVE_COLUMNS, rows)


def _split_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def load_sweep(path: str | Path, overrides: dict | None = None) -> list[SweepSpec]:
    """Parse a sweep file.

    INI layout: ``[DEFAULT]`` holds the shared experiment settings, every
    other section is one grid whose axis keys take comma-separated lists.
    ``overrides`` (usually CLI flags) are applied to every grid.
    """
    from .config import ConfigError, ExperimentConfig, coerce

    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.read_string(Path(path).read_text())
    overrides = dict(overrides or {})
    sections = parser.sections() or ["sweep"]
    specs = []
    for name in sections:
        items = dict(parser[name]) if name in parser else dict(parser.defaults())
        items.update(overrides)
        sweep_kw: dict[str, Any] = {}
        axes: dict[str, tuple] = {}
        scalars: dict[str, str] = {}
        base_probe = ExperimentConfig()
        for key, raw in items.items():
            if key in _SWEEP_KEYS:
                sweep_kw[key] = raw
            elif key in AXES and isinstance(raw, str) and "," in raw:
                kind = type(getattr(base_probe, key))
                axes[key] = tuple(coerce(key, v, kind) for v in _split_list(raw))
            else:
                scalars[key] = raw
        try:
            base = ExperimentConfig.from_mapping(scalars)
        except ConfigError as exc:
            raise ConfigError(exc.field, f"in sweep section [{name}]: {exc}") from None
        specs.append(SweepSpec(
            base=base, name=name, axes=axes,
            repetitions=int(sweep_kw.get("repetitions", 3)),
            base_seed=int(sweep_kw.get("base_seed", 0)),
            pool=tuple(_split_list(str(sweep_kw.get("pool", "")))),
            curve_x=sweep_kw.get("curve_x") or None,
            curve_group=sweep_kw.get("curve_group") or None))
    return specs
