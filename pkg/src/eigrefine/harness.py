"""Experiment drivers that emit plot-ready data files.

Every data file starts with ``@`` header lines that record the full
experiment specification, followed by whitespace-separated numbers written
with 17 significant digits.  Re-running an experiment with the same
arguments reproduces the numeric part bit for bit (timing columns aside).

Environment variables:

``EIGREFINE_WORKERS``
    number of sweep points evaluated concurrently (default 1).
``EIGREFINE_THREADS``
    BLAS thread cap applied while timing (default: leave unchanged).
"""

import dataclasses
import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from contextlib import nullcontext
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cluster import detect_clusters, rediag_cluster
from .errors import (ExperimentError, InitializationError, MatrixMarketError,
                     StabilizationError)
from .genmat import FamilySpec, cluster_condition, generate, make_initial
from .ingest import (LapackAdapter, get_adapter, initial_decomposition, nnz,
                     read_mtx)
from .numcore import metrics
from .refine import (RefineConfig, biorthogonalize_exact, refine_loop,
                     right_step, w_step)

__all__ = ["ExperimentSpec", "DataTable", "EXPERIMENTS", "run_simple",
           "run_complex", "run_preprocess", "run_cluster", "run_cluster_cond",
           "run_alpha_sweep", "run_delta_sweep", "run_suitesparse",
           "run_timing", "run_refine", "run_experiment", "initial_triple",
           "ALPHA_GRID", "DELTA_GRID", "RHO_GRID", "TIMING_NS"]

EXPERIMENTS = ("simple", "complex", "preprocess", "cluster", "cluster-cond",
               "alpha-sweep", "delta-sweep", "suitesparse", "timing", "refine")

DEFAULT_SEEDS = (1, 2, 3)
ALPHA_GRID = (1e-2, 3e-2, 5e-2, 1e-1, 2e-1)
DELTA_GRID = (3e-8, 1e-7, 2e-7, 5e-7, 1e-6, 3e-6)
RHO_GRID = (5e-4, 1e-3, 2e-3, 5e-3, 1e-2)
TIMING_NS = (400, 800, 1600, 2400, 3200)
BENCH_DELTA = 1e-5
DEFAULT_ADAPTER = "lapack32"
MODE_NAMES = {"direct": "direct-solve", "fixed": "fixed-inverse",
              "updated": "updated-inverse", "w": "w-method"}

WORKERS_ENV = "EIGREFINE_WORKERS"
THREADS_ENV = "EIGREFINE_THREADS"


def _kv(obj, prefix):
    if obj is None:
        return [f"{prefix}=None"]
    return [f"{prefix}.{f.name}={getattr(obj, f.name)!r}"
            for f in dataclasses.fields(obj)]


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    family: Optional[FamilySpec] = None
    configs: tuple = ()
    iters: int = 5
    seeds: tuple = DEFAULT_SEEDS
    adapter: str = DEFAULT_ADAPTER
    grid: tuple = ()
    paths: tuple = ()
    repeats: int = 1
    out_path: Optional[str] = None

    def __post_init__(self):
        if self.name not in EXPERIMENTS:
            raise ExperimentError(f"unknown experiment {self.name!r}")
        needs_family = self.name not in ("suitesparse",)
        if needs_family and self.family is None:
            raise ExperimentError(f"{self.name} needs a family")
        if self.name == "suitesparse" and self.family is not None:
            raise ExperimentError("suitesparse reads matrices, not a family")
        if self.iters < 0 or self.repeats < 1:
            raise ExperimentError("iters must be >= 0 and repeats >= 1")
        if not self.seeds:
            raise ExperimentError("at least one seed is required")

    def header_lines(self):
        lines = [f"experiment={self.name}", f"iters={self.iters}",
                 f"seeds={','.join(str(s) for s in self.seeds)}",
                 f"adapter={self.adapter}"]
        if self.grid:
            lines.append("grid=" + ",".join(repr(g) for g in self.grid))
        if self.paths:
            lines += [f"path[{i}]={os.path.basename(p)}"
                      for i, p in enumerate(self.paths)]
        if self.name == "timing":
            lines.append(f"repeats={self.repeats}")
        if self.family is not None:
            lines += _kv(self.family, "family")
        for label, cfg in self.configs:
            lines += _kv(cfg, f"config[{label}]")
        return lines


@dataclass
class DataTable:
    spec: ExperimentSpec
    columns: tuple
    rows: list
    notes: list = field(default_factory=list)
    wall_columns: tuple = ()

    def column(self, name):
        return np.array([r[self.columns.index(name)] for r in self.rows],
                        dtype=float)

    def to_text(self):
        out = ["@ " + h for h in self.spec.header_lines()]
        out += ["@ " + n for n in self.notes]
        out.append("@ columns: " + " ".join(self.columns))
        for r in self.rows:
            out.append(" ".join("%.16e" % float(v) for v in r))
        return "\n".join(out) + "\n"

    def write(self, path=None):
        path = path or self.spec.out_path
        if path is None:
            raise ExperimentError("no output path given")
        d = os.path.dirname(os.path.abspath(path))
        os.makedirs(d, exist_ok=True)
        with open(path, "w") as fh:
            fh.write(self.to_text())
        return path


# --------------------------------------------------------------------------
# helpers


def _workers():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _pmap(fn, items):
    items = list(items)
    w = min(_workers(), len(items)) if items else 1
    if w <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=w) as ex:
        return list(ex.map(fn, items))


def _thread_limit():
    val = os.environ.get(THREADS_ENV)
    if not val:
        return nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=int(val))


def initial_triple(gt, adapter=DEFAULT_ADAPTER, regime="left-right"):
    """Starting triple for a generated family."""
    if adapter == "ground-truth":
        return make_initial(gt, regime)
    return initial_decomposition(gt.A, adapter, regime)


def _padded(result, iters, key="rel_residual"):
    vals = [getattr(r.metrics, key) for r in result.reports]
    if len(vals) < iters + 1:
        fill = math.inf if result.status == "nonfinite" else vals[-1]
        vals += [fill] * (iters + 1 - len(vals))
    return vals


def _median(vals):
    return float(np.median(np.asarray(vals, dtype=float)))


def _family(kind, n=None, seed=None, **kw):
    defaults = {"simple-real": 200, "simple-complex": 120, "clustered": 160}
    return FamilySpec(kind=kind, n=n or defaults[kind],
                      seed=DEFAULT_SEEDS[0] if seed is None else seed, **kw)


# --------------------------------------------------------------------------
# simple-spectrum experiments


def run_simple(n=200, alpha=0.05, iters=5, seed=1, adapter=DEFAULT_ADAPTER):
    """W-method versus the fixed-inverse and direct-solve right-only variants."""
    fam = _family("simple-real", n, seed, alpha=alpha)
    cfgs = (("W", RefineConfig("left-right", max_iters=iters)),
            ("fixed", RefineConfig("right-only", "fixed-inverse", max_iters=iters)),
            ("direct", RefineConfig("right-only", "direct-solve", max_iters=iters)))
    spec = ExperimentSpec("simple", fam, cfgs, iters, (seed,), adapter)
    gt = generate(fam)
    T0 = initial_triple(gt, adapter)
    cols = [_padded(refine_loop(gt.A, T0, c), iters) for _, c in cfgs]
    rows = [(k,) + tuple(c[k] for c in cols) for k in range(iters + 1)]
    return DataTable(spec, ("iteration", "W-method", "fixed-inverse",
                            "direct-solve"), rows)


def run_complex(n=120, alpha=0.05, iters=5, seed=1, adapter=DEFAULT_ADAPTER):
    """W-method history on the unit-circle spectrum.

    The exact biorthogonalization is applied before iteration 0 is
    recorded, so the first row already shows the rescaled ``W``.
    """
    fam = _family("simple-complex", n, seed, alpha=alpha)
    cfg = RefineConfig("left-right", max_iters=iters, biortho_preprocess="none")
    spec = ExperimentSpec("complex", fam, (("W", cfg),), iters, (seed,), adapter)
    gt = generate(fam)
    T0 = biorthogonalize_exact(initial_triple(gt, adapter))
    res = refine_loop(gt.A, T0, cfg)
    cols = [_padded(res, iters, k) for k in
            ("rel_residual", "biorth_error", "eig_consistency")]
    rows = [(k,) + tuple(c[k] for c in cols) for k in range(iters + 1)]
    return DataTable(spec, ("iteration", "rel_residual", "biorth_error",
                            "eig_consistency"), rows,
                     [f"status={res.status}"])


def run_preprocess(n=200, alpha=0.05, iters=5, seed=1, adapter=DEFAULT_ADAPTER):
    """W-method with and without the exact biorthogonalization up front."""
    fam = _family("simple-real", n, seed, alpha=alpha)
    cfgs = (("without", RefineConfig("left-right", max_iters=iters,
                                     biortho_preprocess="none")),
            ("with", RefineConfig("left-right", max_iters=iters,
                                  biortho_preprocess="exact")))
    spec = ExperimentSpec("preprocess", fam, cfgs, iters, (seed,), adapter)
    gt = generate(fam)
    T0 = initial_triple(gt, adapter)
    cols = [_padded(refine_loop(gt.A, T0, c), iters) for _, c in cfgs]
    rows = [(k,) + tuple(c[k] for c in cols) for k in range(iters + 1)]
    return DataTable(spec, ("iteration", "without", "with"), rows)


def _alpha_point(args):
    alpha, seed, n, iters, adapter = args
    fam = _family("simple-real", n, seed, alpha=alpha)
    gt = generate(fam)
    T0 = initial_triple(gt, adapter)
    r0 = metrics(gt.A, T0.V, None, T0.d).rel_residual
    w = _padded(refine_loop(gt.A, T0, RefineConfig("left-right",
                                                   max_iters=iters)), iters)
    dr = _padded(refine_loop(gt.A, T0, RefineConfig("right-only",
                                                    max_iters=iters)), iters)
    return r0, w[-1], dr[-1]


def run_alpha_sweep(alphas=ALPHA_GRID, n=200, iters=5, seeds=DEFAULT_SEEDS,
                    adapter=DEFAULT_ADAPTER):
    """Initial and final residuals over the nonnormality grid (seed medians)."""
    cfgs = (("W", RefineConfig("left-right", max_iters=iters)),
            ("direct", RefineConfig("right-only", max_iters=iters)))
    fam = _family("simple-real", n, seeds[0])
    spec = ExperimentSpec("alpha-sweep", fam, cfgs, iters, tuple(seeds),
                          adapter, tuple(alphas))
    jobs = [(a, s, n, iters, adapter) for a in alphas for s in seeds]
    out = _pmap(_alpha_point, jobs)
    rows = []
    for i, a in enumerate(alphas):
        pts = out[i * len(seeds):(i + 1) * len(seeds)]
        rows.append((a,) + tuple(_median([p[j] for p in pts]) for j in range(3)))
    return DataTable(spec, ("alpha", "initial", "W-method", "direct-solve"),
                     rows, ["values are medians over seeds"])


# --------------------------------------------------------------------------
# clustered experiments


def cluster_configs(iters, delta=1e-6):
    naive = RefineConfig("left-right", max_iters=iters, cluster_delta=delta,
                         cluster_handling="naive", rebiorthogonalize=True)
    aware = RefineConfig("left-right", max_iters=iters, cluster_delta=delta,
                         cluster_handling="aware", rebiorthogonalize=True)
    return naive, aware


def _cluster_histories(fam, iters, delta, adapter):
    gt = generate(fam)
    T0 = initial_triple(gt, adapter)
    naive, aware = cluster_configs(iters, delta)
    rn = refine_loop(gt.A, T0, naive)
    ra = refine_loop(gt.A, T0, aware)
    return _padded(rn, iters), _padded(ra, iters), rn.status, ra.status


def run_cluster(n=160, iters=8, delta=1e-6, seed=1, adapter=DEFAULT_ADAPTER,
                **family):
    """Naive componentwise update versus the cluster-aware update."""
    fam = _family("clustered", n, seed, **family)
    naive, aware = cluster_configs(iters, delta)
    spec = ExperimentSpec("cluster", fam, (("naive", naive), ("aware", aware)),
                          iters, (seed,), adapter)
    hn, ha, sn, sa = _cluster_histories(fam, iters, delta, adapter)
    rows = [(k, hn[k], ha[k]) for k in range(iters + 1)]
    return DataTable(spec, ("iteration", "naive", "cluster-aware"), rows,
                     [f"status[naive]={sn}", f"status[aware]={sa}"])


def _cluster_point(args):
    fam, iters, delta, adapter = args
    hn, ha, _, _ = _cluster_histories(fam, iters, delta, adapter)
    return hn[-1], ha[-1]


def run_cluster_cond(rhos=RHO_GRID, n=160, iters=4, delta=1e-6,
                     seeds=DEFAULT_SEEDS, adapter=DEFAULT_ADAPTER, **family):
    """Residual after ``iters`` steps against the cluster-basis conditioning."""
    base = _family("clustered", n, seeds[0], **family)
    naive, aware = cluster_configs(iters, delta)
    spec = ExperimentSpec("cluster-cond", base,
                          (("naive", naive), ("aware", aware)), iters,
                          tuple(seeds), adapter, tuple(rhos))
    jobs = [(base.replace(rho=r, seed=s), iters, delta, adapter)
            for r in rhos for s in seeds]
    out = _pmap(_cluster_point, jobs)
    rows = []
    for i, r in enumerate(rhos):
        pts = out[i * len(seeds):(i + 1) * len(seeds)]
        kappa = cluster_condition(base.k, r)
        rows.append((r, kappa, _median([p[0] for p in pts]),
                     _median([p[1] for p in pts])))
    return DataTable(spec, ("rho", "kappa_F(B)", "naive", "cluster-aware"),
                     rows, ["residuals are medians over seeds"])


def run_delta_sweep(deltas=DELTA_GRID, n=160, iters=4, seeds=DEFAULT_SEEDS,
                    adapter=DEFAULT_ADAPTER, **family):
    """Residual after ``iters`` steps as the cluster threshold varies."""
    base = _family("clustered", n, seeds[0], **family)
    naive, aware = cluster_configs(iters)
    spec = ExperimentSpec("delta-sweep", base,
                          (("naive", naive), ("aware", aware)), iters,
                          tuple(seeds), adapter, tuple(deltas))
    jobs = [(base.replace(seed=s), iters, d, adapter)
            for d in deltas for s in seeds]
    out = _pmap(_cluster_point, jobs)
    rows = []
    for i, d in enumerate(deltas):
        pts = out[i * len(seeds):(i + 1) * len(seeds)]
        rows.append((d, _median([p[0] for p in pts]),
                     _median([p[1] for p in pts])))
    return DataTable(spec, ("delta", "naive", "cluster-aware"), rows,
                     ["residuals are medians over seeds",
                      "config[aware].cluster_delta is replaced by each grid value"])


# --------------------------------------------------------------------------
# application matrices


def _steps_to(result, target):
    for rep in result.reports[1:]:
        if rep.rel_residual < target:
            return rep.iteration
    return -1


def _bench_left_right(A, T, cfg):
    T = biorthogonalize_exact(T)
    part = detect_clusters(T.d, BENCH_DELTA)
    flagged = bool(part.non_singletons)
    for J in part.non_singletons:
        T = rediag_cluster(A, T, J)
    return refine_loop(A, T, cfg), flagged


def _bench_one(path, max_iters, sp_adapter, dp_adapter, mode):
    A = read_mtx(path)
    n = A.shape[0]
    T_dp = initial_decomposition(A, dp_adapter, "right-only")
    r_dp = metrics(A, T_dp.V, None, T_dp.d).rel_residual
    stop = float(np.nextafter(r_dp, 0))
    try:
        T_sp = initial_decomposition(A, sp_adapter, "left-right")
    except InitializationError:
        return (n, nnz(A), 0, math.nan, math.nan, math.nan, r_dp, -1, -1)
    r_sp = metrics(A, T_sp.V, None, T_sp.d).rel_residual
    cfg_r = RefineConfig("right-only", mode, max_iters=max_iters,
                         stop_rel_residual=stop)
    cfg_w = RefineConfig("left-right", max_iters=max_iters,
                         stop_rel_residual=stop, biortho_preprocess="none")
    res_r = refine_loop(A, T_sp.right_only(), cfg_r)
    try:
        res_w, flagged = _bench_left_right(A, T_sp, cfg_w)
        w_final = res_w.reports[-1].rel_residual
        w_steps = _steps_to(res_w, r_dp)
        if res_w.status == "nonfinite":
            w_final, w_steps = math.inf, -1
    except (np.linalg.LinAlgError, ArithmeticError, StabilizationError):
        flagged, w_final, w_steps = bool(detect_clusters(
            T_sp.d, BENCH_DELTA).non_singletons), math.inf, -1
    r_final = res_r.reports[-1].rel_residual
    r_steps = _steps_to(res_r, r_dp)
    if res_r.status == "nonfinite":
        r_final, r_steps = math.inf, -1
    return (n, nnz(A), int(flagged), r_sp, r_final, w_final, r_dp,
            r_steps, w_steps)


def run_suitesparse(paths=(), max_iters=10, adapter="lapack32-complex",
                    mode="direct-solve"):
    """Steps to reach the dense binary64 residual on Matrix Market inputs.

    ``-1`` in a steps column means the target was not reached.
    """
    sp = get_adapter(adapter)
    if sp.precision == "binary32":
        dp = LapackAdapter("binary64", getattr(sp, "complexify", False))
    else:
        dp = LapackAdapter("binary64", True)
    cfg_r = RefineConfig("right-only", mode, max_iters=max_iters)
    cfg_w = RefineConfig("left-right", max_iters=max_iters)
    spec = ExperimentSpec("suitesparse", None, (("right", cfg_r), ("W", cfg_w)),
                          max_iters, (0,), sp.name, paths=tuple(paths))
    rows, notes = [], [f"bench_delta={BENCH_DELTA!r}",
                       f"baseline_adapter={dp.name}"]
    for i, p in enumerate(paths):
        if not os.path.exists(p):
            warnings.warn(f"skipping missing matrix file {p}")
            notes.append(f"missing[{i}]={os.path.basename(p)}")
            continue
        try:
            vals = _bench_one(p, max_iters, sp, dp, mode)
        except MatrixMarketError as exc:
            warnings.warn(f"skipping unreadable matrix file {p}: {exc}")
            notes.append(f"unreadable[{i}]={os.path.basename(p)}")
            continue
        rows.append((i,) + vals)
    cols = ("index", "n", "nnz", "cluster_flag", "sp_initial", "right_final",
            "w_final", "dp_baseline", "right_steps", "w_steps")
    return DataTable(spec, cols, rows, notes)


# --------------------------------------------------------------------------
# timing


def _timed(fn, repeats):
    best, out = math.inf, None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _sp_ir_right(A, sp, steps=2):
    def run():
        T = initial_decomposition(A, sp, "right-only")
        cfg = RefineConfig("right-only", "direct-solve")
        for _ in range(steps):
            T, _, _ = right_step(A, T, cfg)
        return T
    return run


def _sp_ir_left(A, sp, steps=2):
    def run():
        T = biorthogonalize_exact(initial_decomposition(A, sp, "left-right"))
        cfg = RefineConfig("left-right")
        for _ in range(steps):
            T, _ = w_step(A, T, cfg)
        return T
    return run


def run_timing(ns=TIMING_NS, repeats=3, alpha=0.05, seed=1,
               adapter=DEFAULT_ADAPTER):
    """DP eigensolve, SP eigensolve and SP plus two refinement steps.

    Requires LAPACK adapters; times are the minimum over ``repeats`` runs.
    """
    if adapter == "ground-truth":
        raise ExperimentError("timing needs a real eigensolver adapter")
    sp = get_adapter(adapter)
    if not isinstance(sp, LapackAdapter) or sp.precision != "binary32":
        raise ExperimentError("timing needs a binary32 LAPACK adapter")
    dp = LapackAdapter("binary64", sp.complexify)
    fam = _family("simple-real", ns[0] if ns else 400, seed, alpha=alpha)
    spec = ExperimentSpec("timing", fam, (), 2, (seed,), sp.name, tuple(ns),
                          repeats=repeats)
    rows = []
    with _thread_limit():
        for n in ns:
            gt = generate(fam.replace(n=n))
            A = gt.A

            def one(ad, regime):
                return lambda: initial_decomposition(A, ad, regime)
            t_dp_r, T_dp_r = _timed(one(dp, "right-only"), repeats)
            t_sp_r, _ = _timed(one(sp, "right-only"), repeats)
            t_ir_r, T_ir_r = _timed(_sp_ir_right(A, sp), repeats)
            t_dp_l, T_dp_l = _timed(one(dp, "left-right"), repeats)
            t_sp_l, _ = _timed(one(sp, "left-right"), repeats)
            t_ir_l, T_ir_l = _timed(_sp_ir_left(A, sp), repeats)
            res = [metrics(A, T.V, None, T.d).rel_residual
                   for T in (T_dp_r, T_ir_r, T_dp_l, T_ir_l)]
            rows.append((n, t_dp_r, t_sp_r, t_ir_r, t_dp_l, t_sp_l, t_ir_l,
                         *res))
    cols = ("n", "dp_right", "sp_right", "spir_right", "dp_lr", "sp_lr",
            "spir_lr", "res_dp_right", "res_spir_right", "res_dp_lr",
            "res_spir_lr")
    return DataTable(spec, cols, rows,
                     [f"threads={os.environ.get(THREADS_ENV, 'default')}"],
                     wall_columns=cols[1:7])


# --------------------------------------------------------------------------
# single method run


def run_refine(kind="simple-real", n=None, alpha=0.05, iters=5, seed=1,
               mode="w-method", adapter=DEFAULT_ADAPTER, delta=1e-6):
    """Metric history of one method on one generated family."""
    fam = _family(kind, n, seed, alpha=alpha)
    regime = "left-right" if mode == "w-method" else "right-only"
    cfg = RefineConfig(regime, mode, max_iters=iters, cluster_delta=delta)
    spec = ExperimentSpec("refine", fam, ((mode, cfg),), iters, (seed,), adapter)
    gt = generate(fam)
    res = refine_loop(gt.A, initial_triple(gt, adapter, regime), cfg)
    keys = ("rel_residual", "biorth_error", "eig_consistency")
    cols = [_padded(res, iters, k) for k in keys]
    rows = [(k,) + tuple(c[k] for c in cols) for k in range(iters + 1)]
    return DataTable(spec, ("iteration",) + keys, rows,
                     [f"status={res.status}"])


def run_experiment(name, **kw):
    runners = {"simple": run_simple, "complex": run_complex,
               "preprocess": run_preprocess, "cluster": run_cluster,
               "cluster-cond": run_cluster_cond,
               "alpha-sweep": run_alpha_sweep, "delta-sweep": run_delta_sweep,
               "suitesparse": run_suitesparse, "timing": run_timing,
               "refine": run_refine}
    if name not in runners:
        raise ExperimentError(f"unknown experiment {name!r}")
    return runners[name](**kw)
