"""Dissipative perturbations A = S + iV with non-local point interactions.

The operator acts as

    A f = -f'' + i V f + sum_r x_r(f) k_r

where x(f) are the case-dependent boundary coordinates returned by
:func:`dissex.extensions.channel_coordinates` and k_r lie in the range of
V^(1/2).  Grid functions live on x_i = i/n, i = 0..n.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .extensions import (
    BoundaryPair,
    CanonicalCase,
    channel_coordinates,
    classify_case,
    form_matrix,
    is_maximally_dissipative,
)
from .linalg_core import DEFAULT_TOL, Tolerance, imaginary_part, is_psd, loewner_geq, numeric_rank

UNKNOWN = "Unknown"


class RangeMembershipError(ValueError):
    pass


class UnsupportedCaseError(ValueError):
    pass


class ModelError(ValueError):
    pass


def grid(n):
    return np.arange(n + 1) / n


def trapezoid_weights(n):
    w = np.full(n + 1, 1.0 / n)
    w[0] = w[-1] = 0.5 / n
    return w


@dataclass(frozen=True)
class Potential:
    """Non-negative multiplication potential sampled on a uniform grid.

    ``func``, when present, is a vectorized callable used to resample the
    potential on other grids; otherwise samples are linearly interpolated.
    """

    samples: np.ndarray
    func: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float).ravel()
        if s.size < 2:
            raise ValueError("a potential needs at least two samples")
        if not np.all(np.isfinite(s)):
            raise ValueError("potential samples must be finite")
        if np.any(s < 0):
            raise ValueError("potential samples must be non-negative")
        object.__setattr__(self, "samples", s)

    @classmethod
    def from_function(cls, func, n):
        return cls(np.broadcast_to(func(grid(n)), (n + 1,)).astype(float), func)

    @classmethod
    def zero(cls, n):
        return cls.from_function(lambda x: np.zeros_like(x), n)

    @property
    def n(self):
        return self.samples.size - 1

    @property
    def kernel_eps(self):
        return 1e-12 * float(np.max(self.samples))

    @property
    def kernel_mask(self):
        return self.samples <= self.kernel_eps

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.func is not None:
            return np.broadcast_to(np.asarray(self.func(x), dtype=float), x.shape)
        return np.interp(x, grid(self.n), self.samples)

    def resample(self, n):
        if n == self.n:
            return self
        return Potential(self(grid(n)), self.func)

    def scaled(self, mu):
        f = self.func
        return Potential(mu * self.samples, None if f is None else (lambda x: mu * f(x)))

    def has_interior_support(self, min_nodes=3):
        """True when V > kernel_eps on a run of interior nodes."""
        pos = ~self.kernel_mask[1:-1]
        run = best = 0
        for p in pos:
            run = run + 1 if p else 0
            best = max(best, run)
        return best >= min_nodes


@dataclass(frozen=True)
class NonlocalChannel:
    """Channel vectors k_r as complex grid functions (one row each)."""

    vectors: np.ndarray
    funcs: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=complex)
        if v.ndim == 1:
            v = v[None, :] if v.size else v.reshape(0, 0)
        if not np.all(np.isfinite(v)):
            raise ValueError("channel vectors must be finite")
        object.__setattr__(self, "vectors", v)

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 0), dtype=complex))

    @classmethod
    def from_functions(cls, funcs, n):
        x = grid(n)
        rows = [np.broadcast_to(np.asarray(f(x), dtype=complex), x.shape) for f in funcs]
        return cls(np.array(rows, dtype=complex).reshape(len(rows), n + 1), tuple(funcs))

    @property
    def ell(self):
        return self.vectors.shape[0]

    def is_zero(self):
        return self.ell == 0 or not np.any(self.vectors)

    def evaluate(self, x):
        """Channel values at arbitrary points, shape (ell, len(x))."""
        x = np.asarray(x, dtype=float)
        if self.ell == 0:
            return np.zeros((0, x.size), dtype=complex)
        if self.funcs:
            return np.array([np.broadcast_to(np.asarray(f(x), dtype=complex), x.shape)
                             for f in self.funcs])
        g = grid(self.vectors.shape[1] - 1)
        return np.array([np.interp(x, g, v.real) + 1j * np.interp(x, g, v.imag)
                         for v in self.vectors])

    def resample(self, n):
        if self.ell == 0 or self.vectors.shape[1] == n + 1:
            return self
        return NonlocalChannel(self.evaluate(grid(n)), self.funcs)

    def padded(self, m, n):
        """Samples on grid n as an (m, n+1) array, zero rows appended."""
        out = np.zeros((m, n + 1), dtype=complex)
        if self.ell:
            out[: self.ell] = self.resample(n).vectors
        return out


@dataclass(frozen=True)
class DissipativeModel:
    pair: BoundaryPair
    potential: Potential
    channel: NonlocalChannel
    case: CanonicalCase = None

    def __post_init__(self):
        if self.case is None:
            object.__setattr__(self, "case", classify_case(self.pair))
        X, _ = channel_coordinates(self.case)
        if self.channel.ell > X.shape[0]:
            raise ModelError(f"{self.case.tag} allows at most {X.shape[0]} channel vectors, "
                             f"got {self.channel.ell}")
        if self.channel.ell and self.channel.vectors.shape[1] != self.potential.n + 1:
            object.__setattr__(self, "channel", self.channel.resample(self.potential.n))

    @property
    def coordinates(self):
        return channel_coordinates(self.case)

    @property
    def m(self):
        """Number of boundary coordinates that can carry a channel."""
        return self.coordinates[0].shape[0]

    def channel_matrix(self, n):
        return self.channel.padded(self.m, n)

    def with_potential(self, potential):
        return DissipativeModel(self.pair, potential, self.channel, self.case)

    def at_resolution(self, n):
        return DissipativeModel(self.pair, self.potential.resample(n),
                                self.channel.resample(n), self.case)


@dataclass
class CriticalityReport:
    gram: np.ndarray
    boundary_imag: np.ndarray
    deficiency_rank: int
    ell: int
    nu: int
    regime: str
    gram_error: float = 0.0


@dataclass
class DissipativityResult:
    ok: bool
    report: CriticalityReport
    witness: np.ndarray = None


def _check_range(potential, channel):
    mask = potential.kernel_mask
    vecs = channel.resample(potential.n).vectors if channel.ell else channel.vectors
    for r, k in enumerate(vecs):
        bad = mask & (np.abs(k) > 0)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise RangeMembershipError(
                f"channel vector {r} is nonzero at x={i / potential.n:.6g} where V vanishes")
    return vecs


def gram_matrix(potential, channel, m=None):
    """Trapezoid approximation of <V^-1/2 k_r, V^-1/2 k_s>."""
    m = channel.ell if m is None else m
    G = np.zeros((m, m), dtype=complex)
    if channel.ell == 0:
        return G
    vecs = _check_range(potential, channel)
    mask = ~potential.kernel_mask
    w = trapezoid_weights(potential.n)[mask] / potential.samples[mask]
    K = vecs[:, mask]
    G[: channel.ell, : channel.ell] = (K.conj() * w) @ K.T
    G = 0.5 * (G + G.conj().T)
    if not np.all(np.isfinite(G)) or np.max(np.abs(G)) > 1e300:
        raise RangeMembershipError("V^-1/2 k is not square integrable on the grid")
    return G


def boundary_form(model):
    """im of the form matrix over the channel-coordinate basis."""
    _, basis = model.coordinates
    if not basis:
        return np.zeros((0, 0), dtype=complex)
    return imaginary_part(form_matrix(basis))


def _regime(ell, deficiency):
    if deficiency == ell:
        return "NonCritical"
    if deficiency == 0:
        return "Critical"
    return "Intermediate"


def gram_error(potential, channel, m=None):
    """Richardson estimate of the trapezoid error of the Gram matrix."""
    n = potential.n
    if channel.ell == 0 or n % 2 or n < 8:
        return 0.0
    coarse_v = Potential(potential.samples[::2])
    coarse_k = NonlocalChannel(channel.resample(n).vectors[:, ::2])
    diff = gram_matrix(potential, channel, m) - gram_matrix(coarse_v, coarse_k, m)
    return float(np.linalg.norm(diff, 2) / 3)


def check_dissipative(model, tol=DEFAULT_TOL):
    """Loewner test im G >= M_K / 4 in the channel coordinates.

    The comparison tolerance is widened by the estimated quadrature error of
    the Gram matrix so that critical models are recognized as such.
    """
    F = boundary_form(model)
    if model.case.tag == "CaseV" and not model.channel.is_zero():
        raise ModelError("CaseV admits no channel")
    G = gram_matrix(model.potential, model.channel, model.m)
    qerr = gram_error(model.potential, model.channel, model.m)
    tol = Tolerance(tol.abs + 10 * qerr / 4, tol.rel)
    D = F - 0.25 * G
    ell = numeric_rank(F, tol)
    scale = max(np.linalg.norm(F, 2), np.linalg.norm(G, 2) / 4, 1.0) if F.size else 1.0
    ok, witness = loewner_geq(F, 0.25 * G, tol)
    w = np.linalg.eigvalsh(0.5 * (D + D.conj().T)) if D.size else np.zeros(0)
    deficiency = int(np.sum(np.abs(w) > tol.threshold(scale)))
    nu = max(ell - deficiency, 0)
    report = CriticalityReport(G, F, deficiency, ell, nu, _regime(ell, deficiency), qerr)
    return DissipativityResult(bool(ok), report, witness)


def minimal_scaling(model, rel=1e-6, tol=DEFAULT_TOL):
    """Smallest mu with mu*V dissipative; 0 without a channel, inf if impossible."""
    F = boundary_form(model)
    G = gram_matrix(model.potential, model.channel, model.m)
    if not np.any(np.abs(G) > 0):
        return 0.0
    if not is_psd(F, tol)[0]:
        return np.inf
    # channel components in ker F cannot be paid for by any scaling
    w, U = np.linalg.eigh(F)
    Z = U[:, np.abs(w) <= tol.threshold(max(np.abs(w).max(), 1.0))]
    if Z.size and np.linalg.norm(Z.conj().T @ G @ Z, 2) > tol.threshold(np.linalg.norm(G, 2)):
        return np.inf

    def ok(mu):
        return loewner_geq(F, 0.25 * G / mu, tol)[0]

    hi = 1.0
    while not ok(hi):
        hi *= 2
        if hi > 1e300:
            return np.inf
    lo = hi / 2
    while ok(lo) and lo > 1e-300:
        hi, lo = lo, lo / 2
    while hi - lo > rel * hi:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def inner(f, g, n):
    return complex(np.sum(trapezoid_weights(n) * np.conj(f) * g))


def adjoint_boundary_relation(model, g_samples, g_traces):
    """gamma0 g - C* B*^-1 gamma1 g + (<k_j, g>)_j for CaseI with invertible B."""
    if model.case.tag != "CaseI":
        raise UnsupportedCaseError("adjoint boundary relation is implemented for CaseI only")
    B, C = model.pair.B, model.pair.C
    if numeric_rank(B) < 2:
        raise UnsupportedCaseError("B is not invertible")
    g = np.asarray(g_samples, dtype=complex)
    n = g.size - 1
    K = model.channel_matrix(n)
    kg = np.array([inner(k, g, n) for k in K])
    return g_traces.gamma0 - C.conj().T @ np.linalg.solve(B.conj().T, g_traces.gamma1) + kg


@dataclass
class HsymConditions:
    matrix_condition: np.ndarray
    w_dim_bound: int
    vector_condition: str = "2i V f = -(gamma1~ f)^T K, up to the sign convention of K"


def hsym_conditions(model, tol=DEFAULT_TOL):
    res = check_dissipative(model, tol)
    r = res.report
    M = r.boundary_imag - 0.25 * r.gram
    return HsymConditions(M, r.nu)


def symmetric_part_cnsa(model, tol=DEFAULT_TOL):
    """Whether the symmetric part of the boundary extension is cnsa, if known.

    Settled only for CaseII: with im(conj(b) c) > 0 it is cnsa iff b != +-1;
    selfadjoint boundary data give a selfadjoint (hence not cnsa) part.
    """
    case = model.case
    F = boundary_form(model)
    if numeric_rank(F, tol) == 0:
        return False
    if case.tag == "CaseII":
        b = case.b
        return not (abs(b - 1) <= 1e-12 or abs(b + 1) <= 1e-12)
    return None


def hsa_dimension_bound(model, symmetric_part_cnsa=None, kernel_invariant=True, tol=DEFAULT_TOL):
    """Upper bound for dim H_sa, or UNKNOWN when no criterion applies."""
    res = check_dissipative(model, tol)
    nu = res.report.nu
    if symmetric_part_cnsa is None:
        symmetric_part_cnsa = globals()["symmetric_part_cnsa"](model, tol)
    if symmetric_part_cnsa and kernel_invariant:
        return nu
    if model.potential.has_interior_support():
        return nu
    return UNKNOWN


@dataclass
class CandidateResult:
    in_domain: bool
    outside_symmetric: bool
    eigen: bool
    sign_plus: bool
    sign_minus: bool
    coordinate: np.ndarray
    residuals: dict

    @property
    def sign(self):
        if self.sign_plus and not self.sign_minus:
            return "+"
        if self.sign_minus and not self.sign_plus:
            return "-"
        return None

    @property
    def passed(self):
        return (self.in_domain and self.outside_symmetric and self.eigen
                and (self.sign_plus or self.sign_minus))


def _fd_traces(phi, n):
    h = 1.0 / n
    d0 = (-3 * phi[0] + 4 * phi[1] - phi[2]) / (2 * h)
    d1 = (3 * phi[-1] - 4 * phi[-2] + phi[-3]) / (2 * h)
    return phi[0], phi[-1], d0, d1


def hsa_candidate_test(model, phi, lam, tol=1e-3, traces=None, action=None):
    """Check the three conditions characterizing an element of H_sa.

    ``phi`` holds samples on x_i = i/n.  ``traces`` (f(0), f(1), f'(0),
    f'(1)) default to second-order one-sided differences.  ``action`` is the
    operator applied to phi; by default the three-point Laplacian is used on
    interior nodes.  Condition (c) is tested for both signs of
    V phi = +-(1/2i) x(phi) K.
    """
    phi = np.asarray(phi, dtype=complex)
    n = phi.size - 1
    x = np.arange(n + 1) / n
    f0, f1, d0, d1 = _fd_traces(phi, n) if traces is None else traces
    stacked = np.array([f0, f1, d0, -d1], dtype=complex)
    B, C = model.case.pair.B, model.case.pair.C
    norm = np.sqrt(abs(inner(phi, phi, n)))
    scale = np.max(np.abs(stacked)) + norm
    bc = np.linalg.norm(B @ stacked[:2] - C @ stacked[2:])
    in_domain = bool(bc <= tol * scale)
    X, _ = model.coordinates
    xc = X @ stacked
    outside = bool(xc.size and np.max(np.abs(xc)) > tol * scale)
    V = model.potential(x)
    K = model.channel_matrix(n)
    kx = xc @ K if xc.size else np.zeros(n + 1, dtype=complex)
    if action is None:
        h = 1.0 / n
        action = np.zeros(n + 1, dtype=complex)
        action[1:-1] = -(phi[2:] - 2 * phi[1:-1] + phi[:-2]) / h**2
        action += 1j * V * phi + kx
        sl = slice(1, n)
    else:
        sl = slice(0, n + 1)
    lam_real = abs(np.imag(lam)) <= tol * (1 + abs(lam))
    r = action[sl] - lam * phi[sl]
    eig_res = np.sqrt(abs(np.sum(np.abs(r) ** 2) / n)) / max(norm, 1e-300)
    eigen = bool(lam_real and eig_res <= tol * (1 + abs(lam)))
    vphi = V * phi
    ref = max(np.sqrt(abs(inner(vphi, vphi, n))), 1e-300)
    rhs = kx / 2j
    res_plus = np.sqrt(abs(inner(vphi - rhs, vphi - rhs, n))) / ref
    res_minus = np.sqrt(abs(inner(vphi + rhs, vphi + rhs, n))) / ref
    return CandidateResult(in_domain, outside, eigen, bool(res_plus <= tol), bool(res_minus <= tol),
                           xc, {"boundary": float(bc / scale), "eigen": float(eig_res),
                                "plus": float(res_plus), "minus": float(res_minus)})


def proper_extension_consistent(model, tol=DEFAULT_TOL):
    """For k = 0 the channel test reduces to the boundary criterion."""
    return check_dissipative(model, tol).ok == is_maximally_dissipative(model.pair, tol)[0]
