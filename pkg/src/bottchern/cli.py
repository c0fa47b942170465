"""Command-line front end: scenario files in, JSON reports out.

Usage::

    python -m bottchern validate --scenario scenarios/koszul.json
    python -m bottchern run --scenario scenarios/koszul.json --out report.json
    python -m bottchern report-diff a.json b.json

Exit codes: 0 all checks pass, 1 some check fails, 2 usage or parse error,
3 internal error.
"""

from __future__ import annotations

import argparse
import ast
import hashlib
import json
import sys
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable

from . import __version__
from .cohesive import CohesiveModule, Superconnection, chern_superconnection, is_flat, linear_transgression, operator_square
from .families import (
    CheckResult,
    CohesiveFamily,
    GaugeFamily,
    MetricFamily,
    chern_suite,
    chern_weil_check,
    exact_gamma,
    metric_transgression_suite,
    moduli_delta_check,
    operator_oracle,
    path_independence_witness,
    worst_term,
)
from .forms import Form
from .gbundle import EndForm, GradedBundle, HermitianMetric, MetricError
from .jetalg import Jet, JetRing, Param, Scalar

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 3


class ScenarioError(ValueError):
    """Parse or invariant errors; ``errors`` lists every problem with a location."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


# --------------------------------------------------------------------------
# coefficient expressions


def parse_expr(text: str, ring: JetRing) -> Jet:
    """Evaluate a coefficient expression over ``z_i``, ``zb_i``, parameters and rationals.

    Allowed: ``+ - *``, ``/`` between numeric literals, ``**`` with an integer
    exponent, parentheses and ``i`` for the imaginary unit.
    """
    try:
        tree = ast.parse(str(text), mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse {text!r}: {exc.msg}") from None
    return _eval(tree.body, ring, text)


def _eval(node, ring: JetRing, text: str):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        v = Fraction(node.value) if ring.exact else node.value
        return Jet.const(ring, v)
    if isinstance(node, ast.Name):
        if node.id == "i":
            return Jet.const(ring, Scalar(0, 1, ring.exact))
        try:
            return Jet.var(ring, node.id)
        except KeyError:
            raise ValueError(f"unknown name {node.id!r} in {text!r}") from None
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _eval(node.operand, ring, text)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp):
        if isinstance(node.op, ast.Pow):
            k = node.right
            if not (isinstance(k, ast.Constant) and isinstance(k.value, int) and k.value >= 0):
                raise ValueError(f"exponents must be non-negative integer literals in {text!r}")
            return _eval(node.left, ring, text) ** k.value
        if isinstance(node.op, ast.Div):
            num, den = _literal(node.left), _literal(node.right)
            if num is None or den is None:
                raise ValueError(f"division is only allowed between literals in {text!r}")
            v = Fraction(num) / Fraction(den) if ring.exact else num / den
            return Jet.const(ring, v)
        a, b = _eval(node.left, ring, text), _eval(node.right, ring, text)
        if isinstance(node.op, ast.Add):
            return a + b
        if isinstance(node.op, ast.Sub):
            return a - b
        if isinstance(node.op, ast.Mult):
            return a * b
    raise ValueError(f"unsupported syntax in {text!r}")


def _literal(node):
    if isinstance(node, ast.Constant) and isinstance(node.value, int):
        return node.value
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
        v = _literal(node.operand)
        return None if v is None else -v
    return None


# --------------------------------------------------------------------------
# scenarios


@dataclass
class Scenario:
    """A fully resolved scenario; ``raw`` is the canonical JSON document."""

    raw: dict
    ring: JetRing
    module: CohesiveModule
    metric: HermitianMetric | None = None
    metric_params: tuple = ()
    gauge: GaugeFamily | None = None
    cone: Any = None
    tasks: list = field(default_factory=list)

    @property
    def name(self) -> str:
        return self.raw.get("name", "")

    def canonical(self) -> str:
        return canonical_json(self.raw)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _ring_from(doc: dict, mode: str | None, order: int | None) -> JetRing:
    chart = doc.get("chart", {})
    n = int(chart.get("n", 1))
    D = int(order if order is not None else chart.get("order", 4))
    exact = (mode or chart.get("mode", "exact")) == "exact"
    params = tuple(Param(p["name"], int(p.get("laurent_floor", 0)), bool(p.get("jet", False))) for p in doc.get("params", []))
    return JetRing(n, params, D, exact)


def _bundle_from(spec: dict, where: str) -> GradedBundle:
    try:
        return GradedBundle({int(d): int(r) for d, r in spec.items()})
    except (TypeError, ValueError) as exc:
        raise ScenarioError([f"{where}: {exc}"]) from None


def _terms_endform(bundle: GradedBundle, ring: JetRing, terms: list, where: str, errors: list) -> EndForm:
    """Assemble ``[{"block": [a, b], "form": [...], "matrix": [[...]]}, ...]``."""
    total = EndForm.zero(bundle, ring)
    for k, term in enumerate(terms):
        loc = f"{where}[{k}]"
        try:
            a, b = term["block"]
            gens = term.get("form", [])
            w = Form.gen(ring, *gens) if gens else Form.const(ring, 1)
            mat = [[w * Form.scalar(parse_expr(x, ring)) for x in row] for row in term["matrix"]]
            total = total + EndForm.from_blocks(bundle, ring, {(int(a), int(b)): mat})
        except (KeyError, ValueError, TypeError) as exc:
            errors.append(f"{loc}: {exc}")
    return total


def _metric_from(bundle: GradedBundle, ring: JetRing, spec: dict, where: str, errors: list):
    try:
        blocks = {int(d): [[parse_expr(x, ring) for x in row] for row in mat] for d, mat in spec.items()}
        return HermitianMetric(bundle, ring, blocks)
    except (MetricError, ValueError) as exc:
        errors.append(f"{where}: {exc}")
        return None


def _flatness_errors(tail: EndForm, where: str) -> list[str]:
    ok, defect = is_flat(Superconnection("delbar", tail))
    if ok:
        return []
    out = []
    degs = tail.bundle.degrees
    for (i, j), t in sorted(defect.entries.items()):
        f = Form(tail.ring, t, defect.valid_order)
        out.append(f"{where}: flatness defect at block ({degs[i]},{degs[j]}) entry ({i},{j}), {worst_term(f)}")
    return out


def _pattern_errors(tail: EndForm, where: str) -> list[str]:
    bad = Superconnection("delbar", tail).pattern_violations()
    degs = tail.bundle.degrees
    return [f"{where}: term at block ({degs[i]},{degs[j]}) entry ({i},{j}) is outside A^(0,k)(End^(1-k))" for i, j, _ in bad[:5]]


def validate_scenario(path_or_doc, mode: str | None = None, order: int | None = None) -> Scenario:
    """Parse and check a scenario; raises ``ScenarioError`` listing every violation."""
    if isinstance(path_or_doc, (str, Path)):
        try:
            doc = json.loads(Path(path_or_doc).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ScenarioError([f"{path_or_doc}: file not found"]) from None
        except json.JSONDecodeError as exc:
            raise ScenarioError([f"{path_or_doc}: JSON error at line {exc.lineno}: {exc.msg}"]) from None
    else:
        doc = path_or_doc
    errors: list[str] = []
    try:
        ring = _ring_from(doc, mode, order)
    except (TypeError, ValueError, KeyError) as exc:
        raise ScenarioError([f"chart/params: {exc}"]) from None
    bundle = _bundle_from(doc.get("bundle", {}), "bundle")
    tail = _terms_endform(bundle, ring, doc.get("tail", []), "tail", errors)
    if not errors:
        errors += _pattern_errors(tail, "tail")
        errors += _flatness_errors(tail, "tail")
    module = CohesiveModule.from_tail(tail, check=False)
    metric = None
    if "metric" in doc:
        metric = _metric_from(bundle, ring, doc["metric"], "metric", errors)
    metric_params = tuple(doc.get("metric_params", []))
    for p in metric_params:
        if p not in ring.param_index:
            errors.append(f"metric_params: unknown parameter {p!r}")
    gauge = None
    if "gauge" in doc:
        g = doc["gauge"]
        f = EndForm.identity(bundle, ring) + _terms_endform(bundle, ring, g.get("terms", []), "gauge.terms", errors)
        try:
            gauge = GaugeFamily(f, g["param"])
        except (ValueError, KeyError) as exc:
            errors.append(f"gauge: {exc}")
    cone = None
    if "cone" in doc:
        cone = _cone_from(doc["cone"], module, metric, ring, errors)
    tasks = doc.get("tasks", [])
    names = set()
    for k, t in enumerate(tasks):
        name = t.get("name") if isinstance(t, dict) else None
        if name not in TASKS:
            errors.append(f"tasks[{k}]: unknown task {name!r}")
            continue
        names.add(name)
        need = TASKS[name].needs
        if "metric" in need and "metric" not in doc:
            errors.append(f"tasks[{k}] {name}: needs a metric")
        if "params1" in need and len(metric_params) < 1:
            errors.append(f"tasks[{k}] {name}: needs metric_params")
        if "params2" in need and len(metric_params) != 2:
            errors.append(f"tasks[{k}] {name}: needs exactly two metric_params")
        if "gauge" in need and gauge is None:
            errors.append(f"tasks[{k}] {name}: needs a gauge family")
        if "cone" in need and cone is None:
            errors.append(f"tasks[{k}] {name}: needs a cone section")
    if errors:
        raise ScenarioError(errors)
    return Scenario(doc, ring, module, metric, metric_params, gauge, cone, list(tasks))


@dataclass
class ConeData:
    phi: Any
    hE: HermitianMetric
    hF: HermitianMetric


def _cone_from(spec: dict, E: CohesiveModule, hE, ring: JetRing, errors: list):
    from .conecalc import Morphism, closedness_defect

    if spec.get("target", "self") == "self":
        F, hF = E, hE
    else:
        t = spec["target"]
        bF = _bundle_from(t.get("bundle", {}), "cone.target.bundle")
        tailF = _terms_endform(bF, ring, t.get("tail", []), "cone.target.tail", errors)
        errors += _flatness_errors(tailF, "cone.target.tail")
        F = CohesiveModule.from_tail(tailF, check=False)
        hF = _metric_from(bF, ring, t["metric"], "cone.target.metric", errors) if "metric" in t else None
    if hE is None or hF is None:
        errors.append("cone: both modules need metrics")
        return None
    raw = _rect_terms(F, E, ring, spec.get("phi", []), errors)
    if errors:
        return None
    phi = Morphism(E, F, raw, check=False)
    d = closedness_defect(phi)
    if d:
        i, j = sorted(d)[0]
        errors.append(f"cone.phi: closedness defect at entry ({i},{j})")
        return None
    return ConeData(phi, hE, hF)


def _rect_terms(F: CohesiveModule, E: CohesiveModule, ring: JetRing, terms: list, errors: list) -> dict:
    """``phi`` terms: ``{"block": [target degree, source degree], "form": [...], "matrix": ...}``."""
    out: dict = {}
    bk = ring.backend
    for k, term in enumerate(terms):
        loc = f"cone.phi[{k}]"
        try:
            a, b = (int(x) for x in term["block"])
            ia, ib = F.bundle.indices(a), E.bundle.indices(b)
            gens = term.get("form", [])
            w = Form.gen(ring, *gens) if gens else Form.const(ring, 1)
            mat = term["matrix"]
            if len(mat) != len(ia) or any(len(row) != len(ib) for row in mat):
                raise ValueError(f"block ({a},{b}) has the wrong shape")
            for x, i in enumerate(ia):
                for y, j in enumerate(ib):
                    f = w * Form.scalar(parse_expr(mat[x][y], ring))
                    cur = out.setdefault((i, j), {})
                    for m, p in f.terms.items():
                        cur[m] = bk.add(ring, cur[m], p) if m in cur else p
        except (KeyError, ValueError, TypeError) as exc:
            errors.append(f"{loc}: {exc}")
    return out


# --------------------------------------------------------------------------
# tasks


@dataclass
class Task:
    fn: Callable
    needs: tuple = ()


def _f(opts, default=(0, 0, 1)):
    return [Fraction(str(c)) for c in opts.get("f", default)]


def _points(sc: Scenario, opts):
    pts = opts.get("points")
    if pts is None:
        return None
    return [{k: Fraction(str(v)) for k, v in p.items()} for p in pts]


def t_flatness(sc: Scenario, opts):
    ok, d = is_flat(sc.module.E2)
    return [CheckResult("flatness", ok, d.max_abs(), d.valid_order, "", "" if ok else worst_term(d))]


def t_chern(sc: Scenario, opts):
    return chern_suite(sc.module, sc.metric)


def t_chern_weil(sc: Scenario, opts):
    out = []
    for f in opts.get("fs", [opts.get("f", [0, 0, 1])]):
        r = chern_weil_check(sc.module, sc.metric, [Fraction(str(c)) for c in f])
        r.name = f"chern_weil_closed f={list(map(str, f))}"
        out.append(r)
    return out


def t_linear(sc: Scenario, opts):
    pot, diff, ok = linear_transgression(sc.module, sc.metric, _f(opts))
    from .forms import exterior_derivative

    d = diff - exterior_derivative(pot, "dX")
    d = d.truncate(d.valid_order)
    return [CheckResult("linear_transgression", ok, d.max_abs(), d.valid_order, "", "" if ok else worst_term(d))]


def _metric_family(sc: Scenario):
    return MetricFamily(sc.module, sc.metric, sc.metric_params)


def t_bott_chern(sc: Scenario, opts):
    return metric_transgression_suite(_metric_family(sc), _f(opts), _points(sc, opts), opts.get("order"))


def t_path(sc: Scenario, opts):
    nodes = int(opts.get("nodes", 12))
    tol = float(opts.get("tol", 1e-10))
    X, Y, loop, ok = path_independence_witness(_metric_family(sc), _f(opts), nodes=nodes, tol=tol)
    d = loop - (X.d("delbar") - Y.d("del"))
    return [CheckResult("path_independence", ok, d.max_abs(), d.valid_order, f"quadrature nodes {nodes}, tol {tol}")]


def t_gauge(sc: Scenario, opts):
    from .gbundle import dcomm, endform_inverse
    from .jetalg import NonInvertibleError

    g = sc.gauge
    _, res = exact_gamma(sc.module, g)
    try:
        fi = endform_inverse(g.f)
    except NonInvertibleError:
        return res
    cf = CohesiveFamily(fi * (dcomm(g.f, "delbar") + sc.module.tail * g.f), [g.param])
    pts = [Fraction(str(p)) for p in opts.get("points", [0, "1/2"])]
    return res + moduli_delta_check(cf, sc.metric, _f(opts), gauge=g, points=pts)


def t_cone(sc: Scenario, opts):
    from .conecalc import cone_additivity, cone_family_gamma, cone_flatness_block, regularized_cone_transgression

    c = sc.cone
    f = _f(opts)
    off, rest = cone_flatness_block(c.phi)
    out = [CheckResult("cone_flatness", not off and not rest, float(len(off) + len(rest)), c.phi.valid_order)]
    cone_family_gamma(c.phi)
    out.append(CheckResult("cone_gamma_commutator", True, 0.0, c.phi.valid_order, "identically in t"))
    tr = regularized_cone_transgression(c.phi, c.hE, c.hF, f)
    d = (tr.lhs - tr.rhs)
    d = d.truncate(d.valid_order)
    out.append(CheckResult("cone_transgression", tr.ok, d.max_abs(), d.valid_order, "f(C1) - f(C0) = 2 ddbar P", "" if tr.ok else worst_term(d)))
    ad = cone_additivity(c.phi, c.hE, c.hF, f)
    a = ad.defect.truncate(ad.defect.valid_order)
    out.append(CheckResult("cone_additivity", a.is_zero(), a.max_abs(), a.valid_order))
    ch = ad.chain_defect.truncate(ad.chain_defect.valid_order)
    out.append(CheckResult("cone_bott_chern_chain", ch.is_zero(), ch.max_abs(), ch.valid_order))
    return out


def t_rescale(sc: Scenario, opts):
    from .conecalc import rescale

    rescale(sc.module)
    return [CheckResult("degree_commutator", True, 0.0, sc.module.tail.valid_order, "identically in t")]


def t_acyclic(sc: Scenario, opts):
    from .conecalc import acyclic_integral

    res = acyclic_integral(sc.module, sc.metric, float(opts.get("T_max", 64)), float(opts.get("tol", 1e-12)))
    rtol = float(opts.get("residual_tol", 1e-6))
    r = res.residual.max_abs()
    return [
        CheckResult("heat_decay_fit", res.decay_rate > 0 and res.fit_residual < 0.2, res.fit_residual, 0, f"c={res.decay_rate:.6g}"),
        CheckResult("acyclic_residual", r < rtol, r, res.residual.valid_order, f"T={res.T:g}"),
    ]


def t_oracle(sc: Scenario, opts):
    out = []
    tol = 0.0 if sc.ring.exact else float(opts.get("tol", 1e-12))
    r = operator_oracle(sc.module.E2, operator_square(sc.module.E2), tol=tol)
    r.name = "oracle_flatness"
    out.append(r)
    if sc.metric is not None and not sc.metric_params:
        D = chern_superconnection(sc.module, sc.metric)
        r = operator_oracle(D, operator_square(D), tol=tol)
        r.name = "oracle_curvature"
        out.append(r)
    return out


TASKS: dict[str, Task] = {
    "flatness": Task(t_flatness),
    "chern-curvature": Task(t_chern, ("metric",)),
    "chern-weil-closedness": Task(t_chern_weil, ("metric",)),
    "linear-transgression": Task(t_linear, ("metric",)),
    "bott-chern": Task(t_bott_chern, ("metric", "params1")),
    "path-independence": Task(t_path, ("metric", "params2")),
    "gauge-moduli": Task(t_gauge, ("metric", "gauge")),
    "cone": Task(t_cone, ("cone",)),
    "rescale": Task(t_rescale),
    "acyclic-integral": Task(t_acyclic, ("metric",)),
    "oracle": Task(t_oracle),
}


# --------------------------------------------------------------------------
# running and reporting


def _run_task(sc: Scenario, spec: dict) -> tuple[dict, float]:
    name = spec["name"]
    opts = {k: v for k, v in spec.items() if k != "name"}
    t0 = time.perf_counter()
    try:
        results = TASKS[name].fn(sc, opts)
        checks = [_check_dict(r) for r in results]
        status = "pass" if all(r.ok for r in results) else "fail"
        entry = {"name": name, "status": status, "checks": checks}
        bad = [c for c in checks if not c["ok"]]
        if bad:
            worst = max(bad, key=lambda c: c["defect"])
            entry["defect_summary"] = {"check": worst["name"], "defect": worst["defect"], "where": worst["where"]}
    except Exception as exc:  # one task failing must not abort its siblings
        entry = {"name": name, "status": "error", "error": f"{type(exc).__name__}: {exc}"}
    return entry, time.perf_counter() - t0


def _check_dict(r: CheckResult) -> dict:
    d = r.as_dict()
    d["defect"] = float(f"{d['defect']:.6g}")
    return d


def run(sc: Scenario, task_filter: list[str] | None = None, jobs: int = 1) -> dict:
    """Execute the scenario's tasks; returns the report document."""
    specs = [t for t in sc.tasks if not task_filter or t["name"] in task_filter]
    if jobs > 1 and len(specs) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(lambda s: _run_task(sc, s), specs))
    else:
        done = [_run_task(sc, s) for s in specs]
    body = {
        "scenario": sc.name,
        "scenario_hash": sc.digest(),
        "version": __version__,
        "mode": "exact" if sc.ring.exact else "numeric",
        "jet_order": sc.ring.order,
        "tasks": [e for e, _ in done],
    }
    body["passed"] = all(e["status"] == "pass" for e in body["tasks"])
    return {"report": body, "timings": {e["name"] + f"#{k}": round(dt, 4) for k, (e, dt) in enumerate(done)}}


def report_body(report: dict) -> str:
    """The deterministic part of a report as canonical JSON."""
    return canonical_json(report["report"])


def report_diff(a: dict, b: dict) -> list[str]:
    """Differences between the deterministic parts of two reports."""
    ra, rb = a["report"], b["report"]
    out = []
    for key in sorted(set(ra) | set(rb)):
        if key == "tasks":
            continue
        if ra.get(key) != rb.get(key):
            out.append(f"{key}: {ra.get(key)!r} != {rb.get(key)!r}")
    ta, tb = ra.get("tasks", []), rb.get("tasks", [])
    if len(ta) != len(tb):
        out.append(f"task count: {len(ta)} != {len(tb)}")
    for x, y in zip(ta, tb):
        if canonical_json(x) != canonical_json(y):
            out.append(f"task {x.get('name')}: {x.get('status')} != {y.get('status')}" if x.get("status") != y.get("status") else f"task {x.get('name')}: details differ")
    return out


# --------------------------------------------------------------------------
# entry point


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bottchern", description="Check characteristic-form identities for cohesive modules.")
    sub = p.add_subparsers(dest="verb", required=True)
    for verb in ("validate", "run"):
        s = sub.add_parser(verb)
        s.add_argument("--scenario", required=True)
        s.add_argument("--mode", choices=("exact", "numeric"))
        s.add_argument("--jet-order", type=int)
        if verb == "run":
            s.add_argument("--tasks", help="comma-separated task names")
            s.add_argument("--out")
            s.add_argument("--jobs", type=int, default=1)
    d = sub.add_parser("report-diff")
    d.add_argument("a")
    d.add_argument("b")
    return p


def main(argv: list[str] | None = None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_PASS if exc.code == 0 else EXIT_USAGE
    try:
        if args.verb == "report-diff":
            try:
                a = json.loads(Path(args.a).read_text(encoding="utf-8"))
                b = json.loads(Path(args.b).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                print(f"error: {exc}", file=sys.stderr)
                return EXIT_USAGE
            diffs = report_diff(a, b)
            for line in diffs:
                print(line)
            return EXIT_FAIL if diffs else EXIT_PASS
        try:
            sc = validate_scenario(args.scenario, args.mode, args.jet_order)
        except ScenarioError as exc:
            for e in exc.errors:
                print(f"error: {e}", file=sys.stderr)
            return EXIT_USAGE
        if args.verb == "validate":
            print(f"ok: {sc.name or args.scenario} ({len(sc.tasks)} tasks)")
            return EXIT_PASS
        tasks = args.tasks.split(",") if args.tasks else None
        if tasks:
            unknown = [t for t in tasks if t not in TASKS]
            if unknown:
                print(f"error: unknown tasks {unknown}", file=sys.stderr)
                return EXIT_USAGE
        report = run(sc, tasks, max(1, args.jobs))
        text = json.dumps(report, indent=2, sort_keys=True)
        if args.out:
            Path(args.out).write_text(text + "\n", encoding="utf-8")
        else:
            print(text)
        for t in report["report"]["tasks"]:
            print(f"{t['status'].upper():5} {t['name']}", file=sys.stderr)
        return EXIT_PASS if report["report"]["passed"] else EXIT_FAIL
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
