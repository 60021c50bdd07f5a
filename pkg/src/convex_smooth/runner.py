"""Run a named pipeline from a JSON run document and assemble its report.

A run document looks like::

    {"dim": 1,
     "function": {"op": "poly", "terms": [[1, 4]], "of": {"op": "var", "index": 0}},
     "domain": {"kind": "all_of_Rd"},
     "pipeline": "glue",
     "epsilon": 0.1,
     "grid": {"box": [[-4, 4]], "resolution": 10001},
     "options": {"m_max": 5},
     "seed": 0}

Fine and patch pipelines take ``"efun"`` (a tolerance expression) instead of
``"epsilon"``; a numeric ``"epsilon"`` is accepted as a constant tolerance.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import ConvexFn, Domain, build_exhaustion, sample_grid
from .dsl import parse_domain, parse_function, parse_tolerance
from .errors import ConvexSmoothError, SpecParse
from .pipelines import (Body, certify_body, fine_c0, fine_c0_1d, fine_c1, glue_global,
                        global_underapprox, parabola_epigraph, patch_sublevel, smooth_body_outer)
from .structure import classify_fine_approximability, classify_strong_approximability
from .verify import Certificate, Report, check_convex_triples, estimate_lipschitz

PIPELINES = ("underapprox", "glue", "fine_c0", "fine_c1", "fine_1d", "classify", "patch", "body")
THREADS_ENV = "CONVEX_SMOOTH_THREADS"


@dataclass
class RunSpec:
    dim: int
    pipeline: str
    function: Optional[ConvexFn]
    domain: Domain
    epsilon: Optional[float]
    efun: Optional[ConvexFn]
    box: np.ndarray
    resolution: tuple
    options: dict = field(default_factory=dict)
    seed: int = 0
    out: Optional[str] = None
    grid_scale: float = 1.0


@dataclass
class RunResult:
    report: Report
    points: np.ndarray
    columns: dict

    @property
    def passed(self):
        return self.report.passed


def threads_from_env(env=None):
    """Thread cap from ``CONVEX_SMOOTH_THREADS`` (default 1)."""
    raw = (env if env is not None else os.environ).get(THREADS_ENV)
    if raw is None or raw == "":
        return 1
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 1:
        raise SpecParse(f"must be a positive integer, got {raw!r}", f"$env.{THREADS_ENV}")
    return n


def _scaled(res, k):
    return max(2, int(round((res - 1) * k)) + 1)


def parse_run_spec(doc, grid_scale=1.0, seed=None):
    """Validate a run document and compile its expressions."""
    if not isinstance(doc, dict):
        raise SpecParse("run document must be an object", "$")
    dim = doc.get("dim")
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
        raise SpecParse("'dim' must be a positive integer", "$.dim")
    pipeline = doc.get("pipeline")
    if pipeline not in PIPELINES:
        raise SpecParse(f"'pipeline' must be one of {', '.join(PIPELINES)}", "$.pipeline")
    domain = parse_domain(doc.get("domain"), dim, "$.domain")
    fn = None
    if "function" in doc:
        fn = parse_function(doc["function"], dim, "$.function", domain=domain, name="f")
    elif pipeline != "body":
        raise SpecParse("missing key 'function'", "$")
    if not (isinstance(grid_scale, (int, float)) and grid_scale > 0):
        raise SpecParse("grid scale must be positive", "$grid_scale")

    grid = doc.get("grid", {})
    if not isinstance(grid, dict):
        raise SpecParse("'grid' must be an object", "$.grid")
    box = np.asarray(grid.get("box", [[-2.0, 2.0]] * dim), dtype=float)
    if box.shape != (dim, 2) or not np.all(np.isfinite(box)) or np.any(box[:, 0] >= box[:, 1]):
        raise SpecParse(f"'box' must be {dim} finite [lo, hi] pairs with lo < hi", "$.grid.box")
    res = grid.get("resolution", 2001 if dim == 1 else 101)
    res = [res] * dim if isinstance(res, int) else res
    if (not isinstance(res, list) or len(res) != dim
            or not all(isinstance(r, int) and not isinstance(r, bool) and r >= 2 for r in res)):
        raise SpecParse("'resolution' must be an integer >= 2 or one per axis", "$.grid.resolution")
    res = tuple(_scaled(r, grid_scale) for r in res)

    eps, efun = None, None
    if "epsilon" in doc:
        eps = doc["epsilon"]
        if not (isinstance(eps, (int, float)) and not isinstance(eps, bool) and np.isfinite(eps) and eps > 0):
            raise SpecParse("'epsilon' must be a positive number", "$.epsilon")
        eps = float(eps)
    if "efun" in doc:
        efun = parse_tolerance(doc["efun"], dim, "$.efun")
    if pipeline in ("underapprox", "glue", "body") and eps is None:
        raise SpecParse(f"pipeline {pipeline!r} needs 'epsilon'", "$")
    if pipeline in ("fine_c0", "fine_c1", "fine_1d", "patch"):
        if efun is None and eps is None:
            raise SpecParse(f"pipeline {pipeline!r} needs 'efun' or 'epsilon'", "$")
        efun = efun or parse_tolerance(eps, dim, "$.epsilon")
    if efun is not None:
        probe = sample_grid(Domain.whole(dim), box, min(res[0], 201) if dim == 1 else 21).points
        vals = efun.values(probe)
        if not np.all(np.isfinite(vals) & (vals > 0)):
            raise SpecParse("tolerance must be strictly positive on the grid box", "$.efun")

    options = doc.get("options", {})
    if not isinstance(options, dict):
        raise SpecParse("'options' must be an object", "$.options")
    s = doc.get("seed", 0) if seed is None else seed
    if not isinstance(s, int) or isinstance(s, bool) or s < 0:
        raise SpecParse("'seed' must be a nonnegative integer", "$.seed")
    out = doc.get("out")
    return RunSpec(dim, pipeline, fn, domain, eps, efun, box, res, options, s, out, float(grid_scale))


def _opt(spec, key, default, kind=int):
    val = spec.options.get(key, default)
    if val is default:
        return val
    if kind is int and not (isinstance(val, int) and not isinstance(val, bool)):
        raise SpecParse(f"'{key}' must be an integer", f"$.options.{key}")
    if kind is float and not (isinstance(val, (int, float)) and not isinstance(val, bool)):
        raise SpecParse(f"'{key}' must be a number", f"$.options.{key}")
    return kind(val) if kind in (int, float) else val


def _convexity(g, X, seed):
    return check_convex_triples(g, X, triples=2000, seed=seed)


def _run_glue(spec, X):
    f = spec.function
    m_max = _opt(spec, "m_max", 5)
    if spec.pipeline == "underapprox":
        g = global_underapprox(f, spec.domain, spec.epsilon, m_max=m_max)
        band = spec.epsilon
    else:
        g = glue_global(f, build_exhaustion(spec.domain, m_max), spec.epsilon)
        band = 2.0 * spec.epsilon
    last = g.exhaustion.sets[-1]
    inside = last.contains(X)
    Y = X[inside]
    fv, gv = f.values(Y), g.values(Y)
    report = Report()
    report.add("g <= f on B_N", 0.0, float(np.max(gv - fv)), "sandwich")
    report.add("f - g <= band on B_N", band, float(np.max(fv - gv)), "sandwich")
    worst = 0.0
    for n, B in enumerate(g.exhaustion.sets, start=1):
        Z = Y[B.contains(Y)]
        if Z.shape[0]:
            worst = max(worst, float(np.max(np.abs(g.stage_values(Z, n) - gv[B.contains(Y)]))))
    report.add("stage stability g = g_n on B_n", 0.0, worst, "stability")
    report.sup_error = float(np.max(np.abs(fv - gv)))
    report.extra = {"schedule": g.schedule.describe(), "points_in_cover": int(Y.shape[0]),
                    "band": band}
    return g, report


def _run_fine(spec, X):
    f, efun = spec.function, spec.efun
    window = spec.options.get("window", spec.box.tolist())
    stages = _opt(spec, "stages", None)
    per_axis = _opt(spec, "construction_grid", None)
    strict = bool(spec.options.get("_strict", False))
    kw = dict(U=spec.domain, window=window, seed=spec.seed, strict=strict)
    if spec.pipeline == "fine_1d":
        if spec.dim != 1:
            raise SpecParse("fine_1d needs dim 1", "$.dim")
        g = fine_c0_1d(f, efun, grid=per_axis or 10001, **kw)
    else:
        run = fine_c1 if spec.pipeline == "fine_c1" else fine_c0
        g = run(f, efun, grid=per_axis, stages=stages, **kw)
    report = Report()
    for c in g.certificates:
        report.certificates.append(c)
    fv, gv, ev = f.values(X), g.values(X), efun.values(X)
    report.add("sample grid |g - f| <= efun", 0.0, float(np.max(np.abs(gv - fv) - ev)), "pointwise")
    report.sup_error = float(np.max(np.abs(fv - gv)))
    if spec.pipeline == "fine_c1":
        dG = np.linalg.norm(g.gradients(X) - f.gradients(X), axis=1)
        report.grad_sup_error = float(np.max(dG))
        report.add("sample grid |Dg - Df| <= efun", 0.0, float(np.max(dG - ev)), "pointwise_gradient")
    extra = {}
    if hasattr(g, "schedule"):
        extra["schedule"] = g.schedule.describe()
        extra["attempts"] = getattr(g, "attempts", [])
    if hasattr(g, "parts"):
        extra["split"] = {"x1": g.x1, "x2": g.x2, "eps_prime": g.eps_prime, "reflect": g.reflect,
                          "schedules": [p.schedule.describe() for p in g.parts if hasattr(p, "schedule")]}
    report.extra = extra
    return g, report


def _run_patch(spec, X):
    f, efun = spec.function, spec.efun
    if "level" not in spec.options:
        raise SpecParse("patch needs options.level", "$.options")
    level = _opt(spec, "level", None, float)
    strict = bool(spec.options.get("_strict", False))
    F = patch_sublevel(f, level, efun, seed=spec.seed, strict=strict)
    report = Report()
    report.certificates.extend(F.certificates)
    fv, gv = f.values(X), F.values(X)
    report.sup_error = float(np.max(np.abs(fv - gv)))
    if f.smoothness != "nonsmooth":
        report.grad_sup_error = float(np.max(np.linalg.norm(F.gradients(X) - f.gradients(X), axis=1)))
    report.extra = {"level": level, "inner_schedule": F.inner.schedule.describe()}
    return F, report


def _body_from(spec):
    desc = spec.options.get("body")
    loc = "$.options.body"
    if not isinstance(desc, dict):
        raise SpecParse("body needs options.body", "$.options")
    kind = desc.get("kind")
    try:
        if kind == "polytope":
            return Body.polytope(desc.get("vertices"))
        if kind == "point":
            return Body.point(desc.get("at"))
        if kind == "parabola":
            return parabola_epigraph()
    except (ConvexSmoothError, ValueError, TypeError) as exc:
        raise SpecParse(str(exc), loc) from None
    raise SpecParse(f"unknown body kind {kind!r}", f"{loc}.kind")


def _run_body(spec, X):
    C = _body_from(spec)
    if C.dim != spec.dim:
        raise SpecParse(f"body dimension {C.dim} differs from dim {spec.dim}", "$.options.body")
    D = smooth_body_outer(C, spec.epsilon)
    per = _scaled(_opt(spec, "exclusion_grid", 200), spec.grid_scale)
    certs = certify_body(D, grid_per_axis=per, box=spec.box, seed=spec.seed)
    report = Report()
    report.certificates.extend(certs)
    dist = D.distance_fn
    dv, gv = dist.values(X), D.fn.values(X)
    lo, hi = dv - 2.0 * spec.epsilon / 3.0, dv - spec.epsilon / 3.0
    report.add("dist - 2eps/3 <= g", 0.0, float(np.max(lo - gv)), "band")
    report.add("g <= dist - eps/3", 0.0, float(np.max(gv - hi)), "band")
    report.sup_error = float(np.max(np.abs(dv - gv)))
    report.lipschitz_estimate = estimate_lipschitz(D.fn, X, seed=spec.seed)
    report.extra = {"body": C.kind, "epsilon": spec.epsilon}
    return dist, D.fn, report


def _run_classify(spec, X):
    f = spec.function
    budget = _opt(spec, "budget", 64)
    strong = classify_strong_approximability(f, budget, spec.seed)
    fine = classify_fine_approximability(f, budget, spec.seed)
    report = Report()
    tags = [strong.tag, fine.tag]
    report.verdict = {"strong": strong.to_dict(), "fine": fine.to_dict(), "tags": tags}
    report.convexity_violations = _convexity(f, X, spec.seed)
    return report


def run_spec(spec, strict=False):
    """Execute ``spec``; returns a :class:`RunResult` with sampled columns.

    Python warnings raised while the pipeline runs are recorded under
    ``extra["warnings"]``; with ``strict`` each one becomes a failed
    certificate.
    """
    grid = sample_grid(spec.domain, spec.box, spec.resolution)
    X = grid.points
    spec.options = dict(spec.options, _strict=strict)
    threads = threads_from_env()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        with np.errstate(all="warn"):
            f, g = spec.function, None
            if spec.pipeline in ("underapprox", "glue"):
                g, report = _run_glue(spec, X)
            elif spec.pipeline in ("fine_c0", "fine_c1", "fine_1d"):
                g, report = _run_fine(spec, X)
            elif spec.pipeline == "patch":
                g, report = _run_patch(spec, X)
            elif spec.pipeline == "body":
                f, g, report = _run_body(spec, X)
            else:
                report = _run_classify(spec, X)
            if g is not None:
                report.convexity_violations = _convexity(g, X, spec.seed)
            columns = _columns(f, g, X)
    messages = sorted({f"{w.category.__name__}: {w.message}" for w in caught})
    report.grid = grid.describe()
    report.seed = spec.seed
    report.extra = dict(report.extra, pipeline=spec.pipeline, threads=threads, warnings=messages)
    if strict:
        for m in messages:
            report.certificates.append(Certificate(f"warning: {m}", 0.0, 1.0, "warning"))
    return RunResult(report, X, columns)


def _columns(f, g, X):
    d = X.shape[1]
    cols = {f"x{k + 1}": X[:, k] for k in range(d)}
    cols["f"] = f.values(X)
    cols["g"] = g.values(X) if g is not None else np.full(X.shape[0], np.nan)
    Df = f.gradients(X)
    for k in range(d):
        cols[f"df{k + 1}"] = Df[:, k]
    if g is not None:
        Dg = g.gradients(X)
        for k in range(d):
            cols[f"dg{k + 1}"] = Dg[:, k]
    return cols
