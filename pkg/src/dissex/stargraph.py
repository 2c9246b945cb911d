"""Star graph with Dirichlet outer vertices and a one-parameter central condition.

Edges [0, x_j] meet at the centre, functions are continuous there and the
extension S_{b,c} imposes b f(0) = -c sum_j f_j'(0).
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .perturbation import UNKNOWN, Potential
from .secular_oracle import find_roots_analytic


@dataclass(frozen=True)
class StarGraph:
    edges: tuple
    b: complex
    c: complex

    def __post_init__(self):
        e = tuple(float(x) for x in self.edges)
        if len(e) < 2:
            raise ValueError("a star graph needs at least two edges")
        if not all(np.isfinite(x) and x > 0 for x in e):
            raise ValueError("edge lengths must be positive and finite")
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "b", complex(self.b))
        object.__setattr__(self, "c", complex(self.c))

    def is_dissipative(self, tol=1e-12):
        # Im<f, -f''> = Im(c/b) |sum f_j'(0)|^2 on this domain
        return (np.conj(self.b) * self.c).imag >= -tol


def _sinc(s, x):
    """sin(s x)/s, entire in s**2."""
    s = np.asarray(s, dtype=complex)
    small = np.abs(s * x) < 1e-4
    safe = np.where(small, 1.0, s)
    z2 = (s * x) ** 2
    series = x * (1 - z2 / 6 + z2**2 / 120)
    return np.where(small, series, np.sin(safe * x) / safe)


def star_secular_det(g, lam):
    """Pole-cleared secular function divided by s**n (entire in lam).

    b prod_j sin(s x_j)/s - c sum_j cos(s x_j) prod_{i != j} sin(s x_i)/s.
    """
    lam = np.asarray(lam, dtype=complex)
    s = np.sqrt(lam)
    sn = [_sinc(s, x) for x in g.edges]
    cs = [np.cos(s * x) for x in g.edges]
    total = g.b * np.prod(sn, axis=0)
    for j in range(len(g.edges)):
        others = [sn[i] for i in range(len(g.edges)) if i != j]
        total = total - g.c * cs[j] * np.prod(others, axis=0)
    return total


def star_spectrum(g, box):
    roots = find_roots_analytic(lambda z: star_secular_det(g, z), box)
    return [(r.lam, r.multiplicity) for r in roots]


def dirichlet_union(edges, box):
    """Union of edge Dirichlet spectra with multiplicities inside a box."""
    re0, re1, im0, im1 = box
    vals = []
    for x in edges:
        k = 1
        while (k * np.pi / x) ** 2 <= re1:
            lam = (k * np.pi / x) ** 2
            if lam >= re0 and im0 <= 0 <= im1:
                vals.append(lam)
            k += 1
    vals.sort()
    out = []
    for v in vals:
        if out and abs(out[-1][0] - v) <= 1e-9 * (1 + v):
            out[-1] = (out[-1][0], out[-1][1] + 1)
        else:
            out.append((v, 1))
    return out


def rational_relation(a, b, qmax=64, tol=1e-9):
    """Return p/q with p, q <= qmax and |a/b - p/q| <= tol, or None."""
    r = a / b
    f = Fraction(r).limit_denominator(qmax)
    if f.numerator <= qmax and abs(r - f.numerator / f.denominator) <= tol:
        return f
    for q in range(1, qmax + 1):
        p = round(r * q)
        if 1 <= p <= qmax and abs(r - p / q) <= tol:
            return Fraction(p, q)
    return None


def incommensurable(edges, qmax=64, tol=1e-9):
    e = list(edges)
    return all(rational_relation(e[i], e[j], qmax, tol) is None
               for i in range(len(e)) for j in range(i + 1, len(e)))


def star_cnsa_bound(g, potential_per_edge=None, channel=None, qmax=64):
    """Bound 1 on dim H_sa, or UNKNOWN when neither criterion applies."""
    if incommensurable(g.edges, qmax):
        return 1
    if potential_per_edge is None or len(potential_per_edge) != len(g.edges):
        return UNKNOWN
    for V in potential_per_edge:
        if V is None:
            return UNKNOWN
        if not isinstance(V, Potential):
            V = Potential.from_function(V, 400)
        if not V.has_interior_support():
            return UNKNOWN
    return 1
