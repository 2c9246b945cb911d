"""Dense complex-matrix primitives.

Matrices are plain ``numpy`` arrays of complex dtype.  Positivity and rank
tests take a :class:`Tolerance` so that floating-point noise does not flip
a verdict.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    pass


class ContractError(ValueError):
    pass


class EigenError(RuntimeError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class Tolerance:
    abs: float = 1e-12
    rel: float = 1e-10

    def __post_init__(self):
        if self.abs < 0 or self.rel < 0:
            raise ValueError("tolerances must be non-negative")
        if self.abs == 0 and self.rel == 0:
            raise ValueError("abs and rel tolerance cannot both be zero")

    def threshold(self, scale):
        return self.abs + self.rel * scale


DEFAULT_TOL = Tolerance()


def as_cmatrix(M):
    """Coerce to a finite 2-d complex array."""
    A = np.atleast_2d(np.asarray(M, dtype=complex))
    if A.ndim != 2:
        raise DimensionError("expected a matrix")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def _square(M):
    A = as_cmatrix(M)
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got {A.shape}")
    return A


def hermitian_part(M):
    A = _square(M)
    return 0.5 * (A + A.conj().T)


def imaginary_part(M):
    """Return (M - M*)/(2i), symmetrized so the result is exactly Hermitian."""
    A = _square(M)
    H = (A - A.conj().T) / 2j
    return 0.5 * (H + H.conj().T)


def _check_hermitian(A, tol):
    scale = np.linalg.norm(A, 2) if A.size else 0.0
    gap = np.linalg.norm(A - A.conj().T, 2) if A.size else 0.0
    # allow somewhat more than the psd threshold: inputs come out of arithmetic
    if gap > 10 * tol.threshold(scale) + 1e-9 * scale:
        raise ContractError(f"matrix is not Hermitian (asymmetry {gap:.3e})")
    return 0.5 * (A + A.conj().T)


def is_psd(M, tol=DEFAULT_TOL):
    """Test M >= 0.

    Returns ``(ok, witness)``.  ``witness`` is ``None`` when ``ok``; otherwise a
    unit vector v with <v, M v> < 0.
    """
    A = _check_hermitian(_square(M), tol)
    if A.shape[0] == 0:
        return True, None
    w, V = np.linalg.eigh(A)
    scale = np.max(np.abs(w))
    if w[0] >= -tol.threshold(scale):
        return True, None
    v = V[:, 0]
    return False, v / np.linalg.norm(v)


def psd_2x2_closed_form(M):
    """Closed-form test of im M >= 0 for a general complex 2x2 matrix.

    With M = [[a, b], [c, d]] the condition is im a >= 0, im d >= 0 and
    im a * im d >= |b - conj(c)|^2 / 4.
    """
    A = as_cmatrix(M)
    if A.shape != (2, 2):
        raise DimensionError(f"expected a 2x2 matrix, got {A.shape}")
    a, b = A[0]
    c, d = A[1]
    ia, id_ = a.imag, d.imag
    return bool(ia >= 0 and id_ >= 0 and ia * id_ >= 0.25 * abs(b - np.conj(c)) ** 2)


def numeric_rank(M, tol=DEFAULT_TOL):
    A = as_cmatrix(M)
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    return int(np.sum(s > tol.threshold(s[0])))


def null_space(M, tol=DEFAULT_TOL):
    """Orthonormal basis (columns) of ker M using the rank threshold."""
    A = as_cmatrix(M)
    _, s, Vh = np.linalg.svd(A)
    r = int(np.sum(s > tol.threshold(s[0] if s.size else 0.0)))
    return Vh[r:].conj().T


def loewner_geq(M1, M2, tol=DEFAULT_TOL):
    A1, A2 = _square(M1), _square(M2)
    if A1.shape != A2.shape:
        raise DimensionError(f"shape mismatch {A1.shape} vs {A2.shape}")
    return is_psd(A1 - A2, tol)


@dataclass(frozen=True)
class EigenPair:
    value: complex
    vector: np.ndarray
    residual: float


def sort_key(z):
    return (round(z.real, 12), round(z.imag, 12))


def eig_dense(M):
    """All eigenpairs of a square matrix, sorted by (Re, Im)."""
    A = _square(M)
    try:
        w, V = np.linalg.eig(A)
    except np.linalg.LinAlgError as exc:
        raise EigenError(str(exc)) from exc
    norms = np.linalg.norm(V, axis=0)
    norms[norms == 0] = 1.0
    V = V / norms
    res = np.linalg.norm(A @ V - V * w, axis=0)
    order = sorted(range(len(w)), key=lambda i: sort_key(w[i]))
    return [EigenPair(complex(w[i]), V[:, i], float(res[i])) for i in order]


def cluster(values, rel=1e-6):
    """Group sorted complex values closer than rel*(1+|z|).

    Returns a list of (mean, count, members) with members being indices.
    """
    groups = []
    for i, z in enumerate(values):
        for g in groups:
            centre = g[0]
            if abs(z - centre) <= rel * (1 + abs(centre)):
                g[2].append(i)
                g[0] = np.mean([values[j] for j in g[2]])
                break
        else:
            groups.append([z, 1, [i]])
    return [(complex(g[0]), len(g[2]), g[2]) for g in groups]
