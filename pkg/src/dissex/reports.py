"""Command dispatch and report emission."""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .expr import ExpressionError
from .extensions import (InvalidPairError, NotDissipativeError, classify_case, is_maximally_dissipative,
                         is_selfadjoint, symmetric_part, validate)
from .linalg_core import DEFAULT_TOL, DimensionError
from .perturbation import (UNKNOWN, DissipativeModel, ModelError, RangeMembershipError, check_dissipative,
                           hsym_conditions, symmetric_part_cnsa)
from .scenario import ScenarioError
from .secular_oracle import RefineStepsError, SecularProblem, find_roots
from .spectral_fd import DegenerateBoundaryError, assemble, cnsa_verdict, real_tolerance, spectrum
from .stargraph import dirichlet_union, incommensurable, star_cnsa_bound, star_spectrum

COMMANDS = ("classify", "check", "spectrum", "oracle", "cnsa", "star")
SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NOT_DISSIPATIVE = 3

ORACLE_STEPS = 2000
ORACLE_TOL = 1e-8
MATCH_REL = 1e-3

_VALIDATION_ERRORS = (ScenarioError, ExpressionError, InvalidPairError, DimensionError, ModelError,
                      RangeMembershipError, DegenerateBoundaryError, RefineStepsError, ValueError)


@dataclass
class RunFlags:
    grid: int | None = None
    box: tuple | None = None
    require_dissipative: bool = False
    timings: bool = True


@dataclass
class Report:
    command: str
    data: dict
    exit_code: int = EXIT_OK
    rows: list = field(default_factory=list)

    def to_json(self):
        return json.dumps(self.data, sort_keys=True, indent=2) + "\n"

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["re", "im", "residual", "multiplicity", "source"])
        for lam, res, mult, src in self.rows:
            w.writerow([repr(float(lam.real)), repr(float(lam.imag)), repr(float(res)), int(mult), src])
        return buf.getvalue()


def cjson(z):
    z = complex(z)
    # + 0.0 folds negative zero so reports do not depend on its sign
    return [float(z.real) + 0.0, float(z.imag) + 0.0]


def mjson(M):
    return [[cjson(z) for z in row] for row in np.atleast_2d(M)]


class _Clock:
    def __init__(self):
        self.stages = {}

    def stage(self, name, fn, *args, **kw):
        t = time.perf_counter()
        out = fn(*args, **kw)
        self.stages[name] = round(time.perf_counter() - t, 6)
        return out


def _tolerances():
    return {"psd_abs": DEFAULT_TOL.abs, "psd_rel": DEFAULT_TOL.rel, "oracle_abs": ORACLE_TOL,
            "oracle_ode_steps": ORACLE_STEPS, "match_rel": MATCH_REL}


def _case_json(case):
    return {"tag": case.tag, "parameters": {k: cjson(v) for k, v in sorted(case.parameters.items())},
            "B": mjson(case.pair.B), "C": mjson(case.pair.C), "ill_conditioned": bool(case.ill_conditioned),
            "tolerance": {"abs": DEFAULT_TOL.abs, "rel": DEFAULT_TOL.rel}}


def _classify(sc):
    pair = sc.pair
    v = validate(pair)
    if not v["valid"]:
        raise InvalidPairError(f"(B|-C) has rank {v['rank']} < {pair.eta}")
    ok, witness = is_maximally_dissipative(pair)
    out = {"valid": True, "rank": v["rank"], "maximally_dissipative": bool(ok),
           "selfadjoint": bool(is_selfadjoint(pair)) if ok else False,
           "boundary_imag": mjson((pair.B @ pair.C.conj().T - pair.C @ pair.B.conj().T) / 2j),
           "tolerance": {"abs": DEFAULT_TOL.abs, "rel": DEFAULT_TOL.rel}}
    case = None
    if not ok:
        out["witness"] = [cjson(z) for z in witness]
        return out, None
    if pair.eta == 2:
        case = classify_case(pair)
        if sc.case_override is not None and sc.case_override != case.tag:
            raise ScenarioError("/case_override",
                                f"case_override {sc.case_override} disagrees with computed {case.tag}")
        out["case"] = _case_json(case)
        info = symmetric_part(pair)
        out["symmetric_part"] = {"ell": info.ell, "reduced_triple": None if info.reduced_triple is None else
                                 {"b": cjson(info.reduced_triple.b), "c": cjson(info.reduced_triple.c)}}
    return out, case


def _model(sc, case, n=None):
    n = sc.grid_n if n is None else n
    return DissipativeModel(sc.pair, sc.potential(n), sc.channel(n), case)


def _check_json(res):
    r = res.report
    # the regime is only meaningful for dissipative models
    out = {"dissipative": bool(res.ok), "regime": r.regime if res.ok else None, "nu": r.nu, "ell": r.ell,
           "deficiency_rank": r.deficiency_rank, "gram": mjson(r.gram), "boundary_form": mjson(r.boundary_imag),
           "tolerance": {"abs": DEFAULT_TOL.abs + 10 * r.gram_error / 4, "rel": DEFAULT_TOL.rel,
                         "gram_quadrature_error": r.gram_error}}
    if not res.ok and res.witness is not None:
        out["witness"] = [cjson(z) for z in res.witness]
    return out


def _spectrum_json(rep, box):
    keep = rep.window(box)
    return {"n": rep.n, "count": int(keep.sum()),
            "eigenvalues": [{"lambda": cjson(z), "residual": r, "multiplicity": m, "real": bool(k)}
                            for (z, r, m), k in zip(rep.rows(box), rep.real_mask[keep])],
            "tolerance": {"real_rel": rep.real_tol, "cluster_rel": 1e-6}}


def _roots_json(roots):
    return [{"lambda": cjson(r.lam), "multiplicity": r.multiplicity, "newton_residual": r.newton_residual,
             "converged": r.converged} for r in roots]


def _fd_rows(rep, box):
    return [(z, r, m, "fd") for z, r, m in rep.rows(box)]


def _oracle_rows(roots):
    return [(r.lam, r.newton_residual, r.multiplicity, "oracle") for r in roots]


def _dissipative_gate(data, flags, ok):
    if not ok and flags.require_dissipative:
        data["error"] = {"type": "NotDissipative", "message": "model is not dissipative"}
        return EXIT_NOT_DISSIPATIVE
    return EXIT_OK


def _run_pair(command, sc, flags, data, clock):
    box = data["search_box"]
    cls, case = clock.stage("classify", _classify, sc)
    data["classification"] = cls
    if case is None:
        if not cls["maximally_dissipative"]:
            if command in ("classify", "check") and not flags.require_dissipative:
                return EXIT_OK, []
            raise NotDissipativeError("boundary pair is not maximally dissipative")
        if command != "classify":
            raise DimensionError("only eta = 2 models can be analysed beyond classification")
        return EXIT_OK, []
    if command == "classify":
        return EXIT_OK, []
    model = clock.stage("model", _model, sc, case)
    res = clock.stage("check", check_dissipative, model)
    data["dissipativity"] = _check_json(res)
    if command == "check":
        return _dissipative_gate(data, flags, res.ok), []
    if not res.ok:
        raise NotDissipativeError("model with this channel is not dissipative")
    rows = []
    if command == "spectrum":
        r1 = clock.stage("fd_n", lambda: spectrum(assemble(model, sc.grid_n)))
        r2 = clock.stage("fd_2n", lambda: spectrum(assemble(_model(sc, case, 2 * sc.grid_n), 2 * sc.grid_n)))
        data["spectrum"] = {"grid_n": _spectrum_json(r1, box), "grid_2n": _spectrum_json(r2, box)}
        rows = _fd_rows(r1, box)
    elif command == "oracle":
        p = SecularProblem(model, ORACLE_STEPS, tuple(box))
        roots = clock.stage("oracle", find_roots, p)
        data["oracle"] = {"roots": _roots_json(roots), "ode_steps": p.ode_steps,
                          "tolerance": {"abs": ORACLE_TOL}}
        rows = _oracle_rows(roots)
    elif command == "cnsa":
        r1 = clock.stage("fd_n", lambda: spectrum(assemble(model, sc.grid_n)))
        rep = clock.stage("cnsa", cnsa_verdict, model, r1, box=tuple(box), match_rel=MATCH_REL)
        strip = (box[0], box[1], -0.5, 0.5)
        roots = clock.stage("oracle", find_roots, SecularProblem(model, ORACLE_STEPS, strip))
        real_roots = [r.lam for r in roots if abs(r.lam.imag) <= real_tolerance(sc.grid_n) * (1 + abs(r.lam))]
        confirmed = [any(abs(lam - z) <= MATCH_REL * (1 + abs(lam)) for z in real_roots)
                     for lam in rep.persistent_real]
        cond = hsym_conditions(model)
        data["cnsa"] = {
            "verdict": rep.verdict, "hsa_dim_estimate": rep.hsa_dim_estimate,
            "hsa_dim_bound": rep.hsa_dim_bound if rep.hsa_dim_bound == UNKNOWN else int(rep.hsa_dim_bound),
            "red_flag": bool(rep.red_flag), "note": rep.note,
            "persistent_real": [cjson(z) for z in rep.persistent_real],
            "unmatched_real": [cjson(z) for z in rep.unmatched_real],
            "oracle_confirmed": confirmed, "oracle_real_roots": [cjson(z) for z in real_roots],
            "candidates": [{"lambda": cjson(c["lambda"]), "passed": bool(c["passed"]), "sign": c["sign"],
                            "residuals": {k: float(v) for k, v in sorted(c["residuals"].items())}}
                           for c in rep.real_eigenpairs],
            "symmetric_part_cnsa": symmetric_part_cnsa(model),
            "hsym_matrix_condition": mjson(cond.matrix_condition), "w_dim_bound": cond.w_dim_bound,
            "tolerance": {"real_rel": real_tolerance(sc.grid_n), "match_rel": MATCH_REL, "candidate": 1e-3}}
        rows = _fd_rows(r1, box) + _oracle_rows(roots)
    else:
        raise ScenarioError("/graph", "the star command needs a graph scenario")
    return EXIT_OK, rows


def _run_star(command, sc, flags, data, clock):
    if command != "star":
        raise ScenarioError("/B", f"the {command} command needs a boundary pair (B, C)")
    g = sc.graph
    box = tuple(data["search_box"])
    ok = bool(g.is_dissipative())
    out = {"edges": list(g.edges), "b": cjson(g.b), "c": cjson(g.c), "dissipative": ok,
           "incommensurable": bool(incommensurable(g.edges)),
           "tolerance": {"rational_qmax": 64, "rational_tol": 1e-9, "root_abs": ORACLE_TOL}}
    data["star"] = out
    if not ok:
        if flags.require_dissipative:
            return _dissipative_gate(data, flags, ok), []
    pots = None
    if sc.graph_potentials is not None:
        pots = [None if p is None else _edge_potential(sc, p) for p in sc.graph_potentials]
    bound = star_cnsa_bound(g, pots)
    out["hsa_dim_bound"] = bound
    roots = clock.stage("star", star_spectrum, g, box)
    out["roots"] = [{"lambda": cjson(z), "multiplicity": m} for z, m in roots]
    if g.c == 0:
        out["dirichlet_union"] = [{"lambda": cjson(z), "multiplicity": m} for z, m in dirichlet_union(g.edges, box)]
    return EXIT_OK, [(z, 0.0, m, "oracle") for z, m in roots]


def _edge_potential(sc, spec):
    from .scenario import Scenario
    tmp = Scenario("edge", None, None, None, None, spec, [], sc.grid_n, sc.search_box, None)
    return tmp.potential(400)


def run(command, scenario, flags=None):
    """Execute one command on a parsed scenario; returns a Report."""
    flags = RunFlags() if flags is None else flags
    if command not in COMMANDS:
        raise ValueError(f"unknown command {command!r}")
    sc = scenario
    if flags.grid is not None:
        sc = dataclasses.replace(sc, grid_n=int(flags.grid))
    box = list(flags.box) if flags.box is not None else list(sc.search_box)
    data = {"schema_version": SCHEMA_VERSION, "version": __version__, "command": command,
            "scenario": sc.echo, "grid_n": sc.grid_n, "search_box": [float(v) for v in box],
            "tolerances": _tolerances()}
    clock = _Clock()
    rows = []
    try:
        with np.errstate(all="ignore"):
            if sc.graph is not None:
                code, rows = _run_star(command, sc, flags, data, clock)
            else:
                code, rows = _run_pair(command, sc, flags, data, clock)
    except NotDissipativeError as exc:
        data["error"] = {"type": "NotDissipative", "message": str(exc)}
        code = EXIT_NOT_DISSIPATIVE if flags.require_dissipative else EXIT_INVALID
    except _VALIDATION_ERRORS as exc:
        err = {"type": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, ScenarioError):
            err["pointer"] = exc.pointer
        data["error"] = err
        code = EXIT_INVALID
    if flags.timings:
        data["timings"] = clock.stages
    data["exit_code"] = code
    return Report(command, data, code, rows)


def error_report(command, exc):
    """Report for a scenario that failed to parse."""
    err = {"type": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ScenarioError):
        err["pointer"] = exc.pointer
    data = {"schema_version": SCHEMA_VERSION, "version": __version__, "command": command,
            "error": err, "exit_code": EXIT_INVALID}
    return Report(command, data, EXIT_INVALID)


def emit(report, fmt, path=None):
    """Render a report as json or csv; write it to path when given."""
    if fmt == "json":
        text = report.to_json()
    elif fmt == "csv":
        text = report.to_csv()
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path is not None:
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise OSError(f"cannot write report to {path}: {exc.strerror}") from exc
    return text


def plot_spectrum(report, path):
    """Scatter plot of the report eigenvalues (needs matplotlib)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for src, marker in (("fd", "o"), ("oracle", "x")):
        pts = [r[0] for r in report.rows if r[3] == src]
        if pts:
            ax.scatter([z.real for z in pts], [z.imag for z in pts], marker=marker, label=src, s=16)
    ax.set_xlabel("Re")
    ax.set_ylabel("Im")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
