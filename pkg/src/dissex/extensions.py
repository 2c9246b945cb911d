"""Boundary-condition extensions of the minimal Laplacian on [0, 1].

An extension is described by a pair (B, C) of eta x eta matrices; its
domain is ``B @ gamma0 = C @ gamma1`` where for the interval

    gamma0 f = (f(0), f(1)),    gamma1 f = (f'(0), -f'(1)).

Inner products are antilinear in the first argument throughout.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg_core import (
    DEFAULT_TOL,
    DimensionError,
    as_cmatrix,
    imaginary_part,
    is_psd,
    null_space,
    numeric_rank,
)

CASE_TAGS = ("CaseI", "CaseII", "CaseIII", "CaseIV", "CaseV")


class InvalidPairError(ValueError):
    pass


class NotDissipativeError(ValueError):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


@dataclass(frozen=True)
class BoundaryPair:
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        B, C = as_cmatrix(self.B), as_cmatrix(self.C)
        if B.shape != C.shape or B.shape[0] != B.shape[1]:
            raise DimensionError(f"B and C must be square of equal shape, got {B.shape}, {C.shape}")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def eta(self):
        return self.B.shape[0]

    @property
    def block(self):
        """The eta x 2eta matrix (B | -C)."""
        return np.hstack([self.B, -self.C])

    def transformed(self, E):
        E = as_cmatrix(E)
        return BoundaryPair(E @ self.B, E @ self.C)


@dataclass(frozen=True)
class TraceVector:
    gamma0: np.ndarray
    gamma1: np.ndarray

    def __post_init__(self):
        g0 = np.asarray(self.gamma0, dtype=complex).ravel()
        g1 = np.asarray(self.gamma1, dtype=complex).ravel()
        if g0.shape != g1.shape:
            raise DimensionError("gamma0 and gamma1 must have equal length")
        if not (np.all(np.isfinite(g0)) and np.all(np.isfinite(g1))):
            raise ValueError("trace data must be finite")
        object.__setattr__(self, "gamma0", g0)
        object.__setattr__(self, "gamma1", g1)

    @classmethod
    def from_values(cls, f0, f1, df0, df1):
        """Traces of a function on [0, 1] from (f(0), f(1), f'(0), f'(1))."""
        return cls([f0, f1], [df0, -df1])

    def values(self):
        """Return (f(0), f(1), f'(0), f'(1)) for eta = 2."""
        return (self.gamma0[0], self.gamma0[1], self.gamma1[0], -self.gamma1[1])

    def stacked(self):
        return np.concatenate([self.gamma0, self.gamma1])


@dataclass(frozen=True)
class CanonicalCase:
    tag: str
    parameters: dict
    pair: BoundaryPair
    ill_conditioned: bool = False

    def __post_init__(self):
        if self.tag not in CASE_TAGS:
            raise ValueError(f"unknown case tag {self.tag!r}")
        if self.tag == "CaseII" and self.parameters["c22"] == 0:
            raise ValueError("CaseII requires c22 != 0")

    @property
    def b(self):
        return self.parameters["c22"]

    @property
    def c(self):
        return self.parameters["c12"]


@dataclass(frozen=True)
class ReducedTriple:
    """Boundary triple of the symmetric part for CaseII.

    gamma0~ f = conj(b) f(0) - f(1) and gamma1~ f = f'(1); the extension with
    domain gamma0~ = alpha gamma1~ is selfadjoint iff alpha is real.
    """

    b: complex
    c: complex

    @property
    def alpha(self):
        return np.conj(self.b) * self.c

    @property
    def alpha_adjoint(self):
        return self.b * np.conj(self.c)

    def gamma0(self, traces):
        f0, f1, _, _ = traces.values()
        return np.conj(self.b) * f0 - f1

    def gamma1(self, traces):
        return traces.values()[3]

    def in_symmetric_domain(self, traces, tol=1e-10):
        f0, f1, d0, d1 = traces.values()
        scale = 1 + max(abs(f0), abs(f1), abs(d0), abs(d1))
        return (abs(f1 - np.conj(self.b) * f0) <= tol * scale
                and abs(d0) <= tol * scale and abs(d1) <= tol * scale)

    def generator(self):
        """Traces (u(0), u(1), u'(0), u'(1)) = (0, c conj(b), b, 1)."""
        return TraceVector.from_values(0, self.c * np.conj(self.b), self.b, 1)


@dataclass(frozen=True)
class SymmetricPartInfo:
    ell: int
    kernel_basis: np.ndarray
    reduced_triple: ReducedTriple | None = None


def validate(pair, tol=DEFAULT_TOL):
    rank = numeric_rank(pair.block, tol)
    return {"valid": rank == pair.eta, "rank": rank}


def _require_valid(pair, tol):
    info = validate(pair, tol)
    if not info["valid"]:
        raise InvalidPairError(f"rank(B|-C) = {info['rank']} != {pair.eta}")


def boundary_imag(pair):
    return imaginary_part(pair.B @ pair.C.conj().T)


def is_maximally_dissipative(pair, tol=DEFAULT_TOL):
    """Matrix criterion im(B C*) >= 0; returns (ok, witness)."""
    _require_valid(pair, tol)
    return is_psd(boundary_imag(pair), tol)


def is_selfadjoint(pair, tol=DEFAULT_TOL):
    _require_valid(pair, tol)
    M = boundary_imag(pair)
    scale = max(np.linalg.norm(pair.B, 2), np.linalg.norm(pair.C, 2)) ** 2
    return bool(np.linalg.norm(M, 2) <= tol.threshold(scale))


def adjoint_traces(pair, a):
    """Traces of the adjoint-domain element parameterized by a."""
    a = np.asarray(a, dtype=complex)
    return TraceVector(pair.C.conj().T @ a, pair.B.conj().T @ a)


def recover_parameter(pair, g):
    """Inverse of :func:`adjoint_traces` on its range."""
    M = pair.C @ pair.C.conj().T + pair.B @ pair.B.conj().T
    return np.linalg.solve(M, pair.C @ g.gamma0 + pair.B @ g.gamma1)


def domain_traces(pair, coeffs, tol=DEFAULT_TOL):
    """Trace data in the domain of the extension from free coordinates."""
    W = null_space(pair.block, tol)
    w = W @ np.asarray(coeffs, dtype=complex)
    n = pair.eta
    return TraceVector(w[:n], w[n:])


def green_pairing(f, g):
    if f.gamma0.shape != g.gamma0.shape:
        raise DimensionError("trace vectors of different length")
    return complex(np.vdot(f.gamma0, g.gamma1) - np.vdot(f.gamma1, g.gamma0))


def green_form_invertible_B(pair, f, g):
    """<gamma1 f, (C* B*^-1 - B^-1 C) gamma1 g> for invertible B."""
    Binv = np.linalg.inv(pair.B)
    M = pair.C.conj().T @ np.linalg.inv(pair.B.conj().T) - Binv @ pair.C
    return complex(np.vdot(f.gamma1, M @ g.gamma1))


def symmetric_part(pair, tol=DEFAULT_TOL):
    ok, witness = is_maximally_dissipative(pair, tol)
    if not ok:
        raise NotDissipativeError("pair is not maximally dissipative", witness)
    M = boundary_imag(pair)
    ell = numeric_rank(M, tol)
    w, V = np.linalg.eigh(M)
    scale = max(np.max(np.abs(w)), 1.0)
    kernel = V[:, np.abs(w) <= tol.threshold(scale)]
    reduced = None
    if pair.eta == 2:
        case = classify_case(pair, tol)
        if case.tag == "CaseII" and np.imag(np.conj(case.b) * case.c) > tol.threshold(1.0):
            reduced = ReducedTriple(case.b, case.c)
    return SymmetricPartInfo(ell, kernel, reduced)


# Column pairs of (B | -C) in the order the canonical shapes are enumerated.
_PIVOTS = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]


def _smin(M):
    return np.linalg.svd(M, compute_uv=False)[-1]


def _close(z, tol):
    return abs(z) <= tol


def classify_case(pair, tol=DEFAULT_TOL):
    """Reduce (B | -C) to one of the five canonical dissipative shapes."""
    if pair.eta != 2:
        raise DimensionError("canonical cases exist only for eta = 2")
    ok, witness = is_maximally_dissipative(pair, tol)
    if not ok:
        raise NotDissipativeError("classification refused: im(B C*) is not >= 0", witness)
    M = pair.block
    thresh = tol.threshold(np.linalg.norm(M, 2))
    ill = False
    chosen = None
    for cols in _PIVOTS:
        s = _smin(M[:, cols])
        if s > thresh:
            chosen = cols
            ill = ill or s <= 10 * thresh
            break
        if s > thresh / 10:
            ill = True
    if chosen is None:
        raise InvalidPairError("no invertible 2x2 pivot block in (B|-C)")
    R = np.linalg.solve(M[:, chosen], M)
    # R has the identity in the pivot columns; clean exact zeros
    R[np.abs(R) <= thresh] = 0
    R[:, chosen] = np.eye(2)
    small = 1e3 * thresh + 1e-9 * np.max(np.abs(R))
    if chosen == (0, 1):
        c = -R[:, 2:]
        tag, params = "CaseI", {"c11": c[0, 0], "c12": c[0, 1], "c21": c[1, 0], "c22": c[1, 1]}
    elif chosen == (0, 2):
        # rows [1, b12, 0, -c12] and [0, 0, 1, c22]
        b12, c12, c22 = R[0, 1], -R[0, 3], R[1, 3]
        if _close(c22, small) or not _close(b12 * np.conj(c22) + 1, small * (1 + abs(b12 * c22))):
            raise NotDissipativeError("shape with f(0), f'(0) pivots violates dissipativity")
        tag, params = "CaseII", {"c12": c12, "c22": c22}
    elif chosen == (0, 3):
        # rows [1, x, -c11, 0] and [0, 0, 0, 1]
        if not _close(R[0, 1], small):
            raise NotDissipativeError("shape with f(0), f'(1) pivots violates dissipativity")
        tag, params = "CaseIII", {"c11": -R[0, 2]}
    elif chosen == (1, 2):
        # rows [0, 1, 0, -c12] and [0, 0, 1, z], dissipative only for z = 0
        if not _close(R[1, 3], small):
            raise NotDissipativeError("shape with f(1), f'(0) pivots violates dissipativity")
        tag, params = "CaseIV", {"c12": -R[0, 3]}
    elif chosen == (1, 3):
        raise NotDissipativeError("shape with f(1), f'(1) pivots is never dissipative")
    else:
        tag, params = "CaseV", {}
    params = {k: complex(v) for k, v in params.items()}
    case = CanonicalCase(tag, params, canonical_pair(tag, params), ill)
    if not case_condition(case, tol):
        raise NotDissipativeError(f"{tag} scalar dissipativity condition fails")
    return case


def canonical_pair(tag, p):
    """The normalized pair (B, C) of a canonical case."""
    if tag == "CaseI":
        return BoundaryPair(np.eye(2), [[p["c11"], p["c12"]], [p["c21"], p["c22"]]])
    if tag == "CaseII":
        b, c = p["c22"], p["c12"]
        return BoundaryPair([[1, -1 / np.conj(b)], [0, 0]], [[0, c], [1, b]])
    if tag == "CaseIII":
        return BoundaryPair([[1, 0], [0, 0]], [[p["c11"], 0], [0, 1]])
    if tag == "CaseIV":
        return BoundaryPair([[0, 1], [0, 0]], [[0, p["c12"]], [1, 0]])
    return BoundaryPair(np.zeros((2, 2)), np.eye(2))


def make_case(tag, **params):
    params = {k: complex(v) for k, v in params.items()}
    return CanonicalCase(tag, params, canonical_pair(tag, params))


def case_condition(case, tol=DEFAULT_TOL):
    """Explicit scalar dissipativity conditions of each canonical case."""
    p = case.parameters
    eps = tol.threshold(1 + sum(abs(v) for v in p.values()) ** 2)
    if case.tag == "CaseI":
        a, d = p["c11"].imag, p["c22"].imag
        gap = abs(p["c12"] - np.conj(p["c21"])) ** 2 / 4
        return a <= eps and d <= eps and a * d >= gap - eps
    if case.tag == "CaseII":
        return p["c22"] != 0 and (p["c12"] * np.conj(p["c22"])).imag >= -eps
    if case.tag == "CaseIII":
        return np.conj(p["c11"]).imag >= -eps
    if case.tag == "CaseIV":
        return np.conj(p["c12"]).imag >= -eps
    return True


def domain_basis(case):
    """Trace data of the basis (u, v) of the domain modulo the minimal domain."""
    p = case.parameters
    if case.tag == "CaseI":
        u = (p["c11"], p["c21"], 1, 0)
        v = (-p["c12"], -p["c22"], 0, 1)
    elif case.tag == "CaseII":
        u = (1 / np.conj(p["c22"]), 1, 0, 0)
        v = (-p["c12"], 0, p["c22"], 1)
    elif case.tag == "CaseIII":
        u = (0, 1, 0, 0)
        v = (p["c11"], 0, 1, 0)
    elif case.tag == "CaseIV":
        u = (1, 0, 0, 0)
        v = (0, -p["c12"], 0, 1)
    else:
        u = (1, 0, 0, 0)
        v = (0, 1, 0, 0)
    return TraceVector.from_values(*u), TraceVector.from_values(*v)


def form_matrix(vectors):
    """Matrix of <gamma0 e_r, gamma1 e_s> over a list of trace vectors."""
    m = len(vectors)
    G = np.zeros((m, m), dtype=complex)
    for r, er in enumerate(vectors):
        for s, es in enumerate(vectors):
            G[r, s] = np.vdot(er.gamma0, es.gamma1)
    return G


def dissipativity_form(u, v):
    return imaginary_part(form_matrix([u, v]))


def channel_coordinates(case):
    """Linear functionals x(f) multiplying the channel vectors.

    Returned as a (m, 4) matrix acting on (f(0), f(1), gamma1 f) stacked
    traces, together with trace vectors e_r dual to them.  CaseI uses
    x = gamma1 f; CaseII and CaseIV use x = f'(1) and CaseIII x = f'(0), the
    coefficient of v in each case.  CaseV carries no channel.
    """
    u, v = domain_basis(case)
    if case.tag == "CaseI":
        X = np.array([[0, 0, 1, 0], [0, 0, 0, 1]], dtype=complex)
        neg_v = TraceVector(-v.gamma0, -v.gamma1)
        return X, [u, neg_v]
    if case.tag in ("CaseII", "CaseIV"):
        return np.array([[0, 0, 0, -1]], dtype=complex), [v]
    if case.tag == "CaseIII":
        return np.array([[0, 0, 1, 0]], dtype=complex), [v]
    return np.zeros((0, 4), dtype=complex), []
