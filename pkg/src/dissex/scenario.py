"""Scenario files: JSON documents describing one model or one star graph."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .expr import ExpressionError, compile_expression
from .extensions import CASE_TAGS, BoundaryPair
from .perturbation import NonlocalChannel, Potential, grid
from .stargraph import StarGraph

KNOWN_KEYS = {"name", "eta", "B", "C", "case_override", "potential", "channel",
              "grid_n", "search_box", "graph"}
DEFAULT_BOX = [-50.0, 600.0, -50.0, 50.0]


class ScenarioError(ValueError):
    def __init__(self, pointer, message):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer or "/"
        self.message = message


@dataclass
class Scenario:
    name: str
    eta: int | None
    B: np.ndarray | None
    C: np.ndarray | None
    case_override: str | None
    potential_spec: dict | None
    channel_spec: list
    grid_n: int
    search_box: tuple
    graph: StarGraph | None
    graph_potentials: list | None = None
    echo: dict = field(default_factory=dict, repr=False)

    @property
    def pair(self):
        return BoundaryPair(self.B, self.C)

    def potential(self, n=None):
        n = self.grid_n if n is None else n
        spec = self.potential_spec
        if spec is None:
            return Potential.zero(n)
        if "expression" in spec:
            f = compile_expression(spec["expression"])
            return Potential.from_function(lambda x: np.broadcast_to(f(x), np.shape(x)), n)
        samples = np.asarray(spec["samples"], dtype=float)
        return Potential(samples).resample(n)

    def channel(self, n=None):
        n = self.grid_n if n is None else n
        if not self.channel_spec:
            return NonlocalChannel.empty()
        funcs = [_channel_func(entry) for entry in self.channel_spec]
        return NonlocalChannel.from_functions(funcs, n)


def _channel_func(entry):
    if "samples" in entry:
        vals = np.array([complex(*v) if isinstance(v, list) else complex(v)
                         for v in entry["samples"]])
        g = grid(vals.size - 1)
        return lambda x: np.interp(x, g, vals.real) + 1j * np.interp(x, g, vals.imag)
    re = compile_expression(entry.get("re", entry.get("expression", "0")))
    im = compile_expression(entry.get("im", "0"))
    return lambda x: re(x) + 1j * im(x)


def _complex(v, ptr):
    if isinstance(v, bool):
        raise ScenarioError(ptr, "expected a number or [re, im]")
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, list) and len(v) == 2 and all(isinstance(t, (int, float)) and not isinstance(t, bool) for t in v):
        return complex(v[0], v[1])
    raise ScenarioError(ptr, "expected a number or [re, im]")


def _matrix(v, eta, ptr):
    if not isinstance(v, list) or len(v) != eta:
        raise ScenarioError(ptr, f"expected {eta} rows")
    rows = []
    for i, row in enumerate(v):
        if not isinstance(row, list) or len(row) != eta:
            raise ScenarioError(f"{ptr}/{i}", f"expected {eta} entries")
        rows.append([_complex(e, f"{ptr}/{i}/{j}") for j, e in enumerate(row)])
    M = np.array(rows, dtype=complex)
    if not np.all(np.isfinite(M)):
        raise ScenarioError(ptr, "entries must be finite")
    return M


def _check_expr(text, ptr):
    try:
        return compile_expression(text)
    except ExpressionError as exc:
        raise ScenarioError(ptr, str(exc)) from None


def _potential(spec, ptr):
    if not isinstance(spec, dict) or len(spec) != 1 or not ({"expression", "samples"} & spec.keys()):
        raise ScenarioError(ptr, "expected {\"expression\": ...} or {\"samples\": [...]}")
    if "expression" in spec:
        f = _check_expr(spec["expression"], ptr + "/expression")
        with np.errstate(all="ignore"):
            vals = np.broadcast_to(f(grid(2000)), (2001,))
        if not np.all(np.isfinite(vals)):
            raise ScenarioError(ptr + "/expression", "potential is not finite on [0, 1]")
        if np.any(vals < 0):
            raise ScenarioError(ptr + "/expression", "potential takes negative values")
        return {"expression": spec["expression"]}
    s = spec["samples"]
    if not isinstance(s, list) or len(s) < 2:
        raise ScenarioError(ptr + "/samples", "expected a list of at least two samples")
    for i, v in enumerate(s):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v):
            raise ScenarioError(f"{ptr}/samples/{i}", "expected a finite number")
        if v < 0:
            raise ScenarioError(f"{ptr}/samples/{i}", "negative potential sample")
    return {"samples": [float(v) for v in s]}


def _channel(spec, ptr):
    if not isinstance(spec, list):
        raise ScenarioError(ptr, "expected a list of channel vectors")
    out = []
    for i, e in enumerate(spec):
        p = f"{ptr}/{i}"
        if isinstance(e, str):
            e = {"expression": e}
        if not isinstance(e, dict):
            raise ScenarioError(p, "expected an expression or an object")
        if "samples" in e:
            if set(e) != {"samples"} or not isinstance(e["samples"], list) or len(e["samples"]) < 2:
                raise ScenarioError(p, "samples must be a list of at least two values")
            vals = [_complex(v, f"{p}/samples/{j}") for j, v in enumerate(e["samples"])]
            out.append({"samples": [[v.real, v.imag] for v in vals]})
            continue
        keys = set(e)
        if not keys or not keys <= {"expression", "re", "im"} or ("expression" in keys and "re" in keys):
            raise ScenarioError(p, "expected keys 'expression' or 're'/'im'")
        norm = {}
        for k in sorted(keys):
            _check_expr(e[k], f"{p}/{k}")
            norm[k] = e[k]
        out.append(norm)
    return out


def _graph(spec, ptr):
    if not isinstance(spec, dict):
        raise ScenarioError(ptr, "expected an object")
    edges = spec.get("edges")
    if not isinstance(edges, list) or len(edges) < 2:
        raise ScenarioError(ptr + "/edges", "expected at least two edge lengths")
    for i, x in enumerate(edges):
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not (x > 0 and np.isfinite(x)):
            raise ScenarioError(f"{ptr}/edges/{i}", "edge length must be positive and finite")
    b = _complex(spec.get("b", 1.0), ptr + "/b")
    c = _complex(spec.get("c", 0.0), ptr + "/c")
    pots = spec.get("potentials")
    if pots is not None:
        if not isinstance(pots, list) or len(pots) != len(edges):
            raise ScenarioError(ptr + "/potentials", "expected one potential per edge")
        pots = [None if p is None else _potential(p, f"{ptr}/potentials/{i}")
                for i, p in enumerate(pots)]
    extra = set(spec) - {"edges", "b", "c", "potentials"}
    if extra:
        raise ScenarioError(f"{ptr}/{sorted(extra)[0]}", "unknown key")
    return StarGraph(tuple(float(x) for x in edges), b, c), pots


def _count(v, ptr, lo):
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        raise ScenarioError(ptr, f"expected an integer >= {lo}")
    return v


def parse_scenario(text):
    try:
        doc = json.loads(text) if isinstance(text, str) else text
    except json.JSONDecodeError as exc:
        raise ScenarioError("", f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ScenarioError("", "scenario must be a JSON object")
    for k in sorted(doc):
        if k not in KNOWN_KEYS:
            raise ScenarioError(f"/{k}", "unknown key")
    name = doc.get("name", "scenario")
    if not isinstance(name, str) or not name:
        raise ScenarioError("/name", "expected a non-empty string")
    has_pair = "B" in doc or "C" in doc
    if has_pair == ("graph" in doc):
        raise ScenarioError("", "exactly one of (B, C) or graph must be given")
    grid_n = _count(doc.get("grid_n", 500), "/grid_n", 16)
    box = doc.get("search_box", DEFAULT_BOX)
    if (not isinstance(box, list) or len(box) != 4
            or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in box)):
        raise ScenarioError("/search_box", "expected [re0, re1, im0, im1]")
    if not (box[0] < box[1] and box[2] <= box[3]):
        raise ScenarioError("/search_box", "empty box")
    echo = {"name": name, "grid_n": grid_n, "search_box": [float(v) for v in box]}
    eta = B = C = graph = pots = None
    override = None
    pot = None
    chan = []
    if has_pair:
        eta = _count(doc.get("eta", 2), "/eta", 1)
        for key in ("B", "C"):
            if key not in doc:
                raise ScenarioError(f"/{key}", "missing matrix")
        B = _matrix(doc["B"], eta, "/B")
        C = _matrix(doc["C"], eta, "/C")
        override = doc.get("case_override")
        if override is not None and override not in CASE_TAGS:
            raise ScenarioError("/case_override", f"expected one of {', '.join(CASE_TAGS)}")
        if "potential" in doc:
            pot = _potential(doc["potential"], "/potential")
        chan = _channel(doc.get("channel", []), "/channel")
        echo.update({"eta": eta, "B": _mat_json(B), "C": _mat_json(C), "channel": chan})
        if pot is not None:
            echo["potential"] = pot
        if override is not None:
            echo["case_override"] = override
    else:
        for k in ("eta", "potential", "channel", "case_override"):
            if k in doc:
                raise ScenarioError(f"/{k}", "not allowed together with graph")
        graph, pots = _graph(doc["graph"], "/graph")
        echo["graph"] = {"edges": list(graph.edges), "b": [graph.b.real, graph.b.imag],
                         "c": [graph.c.real, graph.c.imag]}
        if pots is not None:
            echo["graph"]["potentials"] = pots
    return Scenario(name, eta, B, C, override, pot, chan, grid_n, tuple(echo["search_box"]),
                    graph, pots, echo)


def _mat_json(M):
    return [[[float(z.real), float(z.imag)] for z in row] for row in M]


def load_scenario(path):
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())
