"""Check registry and suite runner.

Checks are independent jobs; with ``jobs > 1`` they run in worker
processes, but results are always collected in suite order, and every
random draw is keyed by (seed, check name, ...), so the report does not
depend on scheduling.
"""

from __future__ import annotations

import inspect
import logging
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

from . import checks
from .checks import CheckResult
from .config import RunConfig
from .io import write_csv, write_json
from .quadrature import NonConvergenceError
from .tree import build_tree, complete_through_layer

log = logging.getLogger(__name__)

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NONCONVERGENCE = 0, 1, 2, 3
TREE_LAYERS = (0, 1, 2, 3)
#: config fields that steer execution only and are left out of the report
EXECUTION_FIELDS = ("output_dir", "jobs", "plots")


@dataclass(frozen=True)
class Registered:
    name: str
    kind: str
    fn: Callable[..., CheckResult]
    defaults: Callable[[RunConfig], dict]
    hidden: frozenset = frozenset()  # parameters filled from the config objects, not overridable
    extra: frozenset = frozenset()  # override names handled by ``defaults``

    @property
    def params(self) -> set[str]:
        sig = inspect.signature(self.fn).parameters
        return (set(sig) - set(self.hidden)) | set(self.extra)

    def run(self, cfg: RunConfig, overrides: dict) -> CheckResult:
        kw = self.defaults(cfg, **{k: overrides[k] for k in self.extra if k in overrides})
        kw.update({k: v for k, v in overrides.items() if k not in self.extra})
        return self.fn(**kw)


def _tree_defaults(cfg: RunConfig, layers: Sequence[int] = TREE_LAYERS) -> dict:
    layers = [int(n) for n in layers]
    # identities are combinatorial: complete the tree through the deepest requested layer
    tree = build_tree(complete_through_layer(cfg.sequence(), max(layers)))
    return {"tree": tree, "layers": layers}


def _covering(cfg, layers=TREE_LAYERS):
    kw = _tree_defaults(cfg, layers)
    return {"tree": kw["tree"], "n": kw["layers"]}


def _series(cfg, layers=TREE_LAYERS):
    return _tree_defaults(cfg, layers)


REGISTRY: dict[str, Registered] = {}


def register(name, kind, fn, defaults, hidden=(), extra=()):
    REGISTRY[name] = Registered(name, kind, fn, defaults, frozenset(hidden), frozenset(extra))


register("check_covering_sum", "exact", checks.check_covering_sum, _covering, ("tree", "n"), ("layers",))
register("check_layer_mass", "exact", checks.check_layer_mass, _covering, ("tree", "n"), ("layers",))
register("check_fourier_oracle", "exact", checks.check_fourier_oracle,
         lambda c: {"dims": sorted({1, 2, c.d}), "seed": c.seed})
register("check_expectation_identity", "exact", checks.check_expectation_identity,
         lambda c: {"d": c.d, "seed": c.seed})
register("check_ep_bound", "bound", checks.check_ep_bound,
         lambda c: {"p": c.p, "d": c.d, "seed": c.seed, "spec": c.quadrature_spec()}, ("spec",))
register("check_np_scaling", "slope", checks.check_np_scaling,
         lambda c: {"p": c.p, "d": c.d, "seed": c.seed, "spec": c.quadrature_spec()}, ("spec",))
register("check_ooo_scaling", "slope", checks.check_ooo_scaling,
         lambda c: {"p": c.p, "d": c.d, "spec": c.quadrature_spec()}, ("spec",))
register("check_ras_increment", "slope", checks.check_ras_increment,
         lambda c: {"seq": c.sequence(), "seed": c.seed, "spec": c.quadrature_spec()}, ("seq", "spec"))
register("check_pre_selection", "statistical", checks.check_pre_selection,
         lambda c: {"d": c.d, "p": c.p, "p1": c.p1, "seed": c.seed, "spec": c.quadrature_spec()}, ("spec",))
register("check_series_bound", "bound", checks.check_series_bound, _series, ("tree",), ("layers",))
register("check_mz", "statistical", checks.check_mz, lambda c: {"p": c.p, "seed": c.seed})
register("check_pplus", "bound", checks.check_pplus, lambda c: {"p": c.p, "p1": c.p1, "d": c.d})


@dataclass
class Outcome:
    result: CheckResult
    seconds: float
    nonconvergence: bool = False


def run_check(name: str, cfg: RunConfig, overrides: Optional[dict] = None) -> Outcome:
    """Run one registered check; a crash becomes an 'error' result instead of propagating."""
    reg = REGISTRY[name]
    t0 = time.perf_counter()
    try:
        res = reg.run(cfg, overrides or {})
        return Outcome(res, time.perf_counter() - t0)
    except Exception as e:  # captured per check; the suite continues
        log.warning("%s crashed: %s", name, e)
        res = CheckResult(name, reg.kind, {}, {}, "error",
                          {"error": type(e).__name__, "message": str(e),
                           "traceback": traceback.format_exc(limit=4).splitlines()[-3:]})
        return Outcome(res, time.perf_counter() - t0, isinstance(e, NonConvergenceError))


def _run_entry(args):
    name, cfg, overrides = args
    return run_check(name, cfg, overrides)


@dataclass
class SuiteReport:
    config: RunConfig
    outcomes: list[Outcome] = field(default_factory=list)

    @property
    def results(self) -> list[CheckResult]:
        return [o.result for o in self.outcomes]

    @property
    def exit_code(self) -> int:
        if any(o.nonconvergence for o in self.outcomes):
            return EXIT_NONCONVERGENCE
        if any(r.status in ("fail", "error") for r in self.results):
            return EXIT_FAIL
        return EXIT_PASS

    def counts(self) -> dict:
        out = {s: 0 for s in checks.STATUSES}
        for r in self.results:
            out[r.status] += 1
        return out

    def to_json(self) -> dict:
        cfg = self.config.to_json()
        for k in EXECUTION_FIELDS:
            cfg.pop(k, None)
        return {
            "checks": [r.to_json() | {"tables": sorted(r.tables)} for r in self.results],
            "config": cfg,
            "seed": self.config.seed,
            "summary": self.counts(),
            "exit_code": self.exit_code,
            "timings": "timings.json",
        }

    def timings(self) -> dict:
        return {o.result.name: round(o.seconds, 3) for o in self.outcomes}


def run_suite(cfg: RunConfig, jobs: Optional[int] = None) -> SuiteReport:
    entries = cfg.suite_entries()
    jobs = cfg.jobs if jobs is None else jobs
    args = [(name, cfg, kw) for name, kw in entries]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(args))) as pool:
            outcomes = list(pool.map(_run_entry, args))  # map preserves suite order
    else:
        outcomes = [_run_entry(a) for a in args]
    return SuiteReport(cfg, outcomes)


def write_report(report: SuiteReport, out_dir, fmt: str = "csv", plots: bool = True,
                 plot_formats: Sequence[str] = ("svg",)) -> list[Path]:
    """report.json, per-check tables (CSV or JSON), timings.json and scaling plots."""
    out = Path(out_dir)
    written = [write_json(out / "report.json", report.to_json())]
    for r in report.results:
        for table, rows in r.tables.items():
            path = out / "tables" / f"{r.name}__{table}.{fmt}"
            written.append(write_csv(path, rows) if fmt == "csv" else write_json(path, rows))
    written.append(write_json(out / "timings.json", report.timings()))
    if plots:
        written += render_report_plots(report.to_json(), out / "plots", plot_formats)
    return written


def render_report_plots(doc: dict, out_dir, formats: Sequence[str] = ("svg",)) -> list[Path]:
    from .plotting import render_plots

    paths = []
    for c in doc["checks"]:
        paths += render_plots(c["name"], c.get("plots") or [], out_dir, formats)
    return paths
