"""Secular-determinant eigenvalue oracle.

Eigenvalues of A f = -f'' + iVf + sum_r x_r(f) k_r are the zeros of the
determinant of a small linear system built from RK4 solutions of

    -y'' + i V y - lam y = r(x)

with r = 0 (two fundamental solutions) and r = k_r (particular solutions
with zero initial data).  Roots are located by scanning in s = sqrt(lam)
and polished by Newton's method.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg_core import sort_key


class RefineStepsError(RuntimeError):
    pass


@dataclass(frozen=True)
class SecularProblem:
    model: object
    ode_steps: int = 2000
    search_box: tuple = (-10.0, 400.0, -5.0, 5.0)

    def __post_init__(self):
        if self.ode_steps < 200:
            raise ValueError("ode_steps must be at least 200")
        re0, re1, im0, im1 = self.search_box
        if not (re0 < re1 and im0 <= im1):
            raise ValueError("empty search box")


@dataclass
class SecularValue:
    lam: complex
    det_value: complex
    solve_matrix: np.ndarray


def _integrate(V, R, lams, steps):
    """RK4 for y'' = (iV - lam) y - r on [0, 1], batched over lam.

    V: values at the 2*steps+1 half nodes; R: (m, 2*steps+1) forcing, one row
    per solution column (zero for the homogeneous columns).  Returns the
    values and derivatives at x = 0 and x = 1 for every column.
    """
    lams = np.asarray(lams, dtype=complex).reshape(-1, 1)
    m = R.shape[0]
    h = 1.0 / steps
    y = np.zeros((lams.shape[0], m), dtype=complex)
    yp = np.zeros_like(y)
    y[:, 0] = 1.0
    yp[:, 1] = 1.0
    y0, yp0 = y.copy(), yp.copy()
    q = 1j * V[None, :] - lams  # (nl, 2*steps+1)
    for j in range(steps):
        a, b, c = 2 * j, 2 * j + 1, 2 * j + 2
        k1y = yp
        k1p = q[:, a:a + 1] * y - R[:, a]
        y2 = y + 0.5 * h * k1y
        p2 = yp + 0.5 * h * k1p
        k2y = p2
        k2p = q[:, b:b + 1] * y2 - R[:, b]
        y3 = y + 0.5 * h * k2y
        p3 = yp + 0.5 * h * k2p
        k3y = p3
        k3p = q[:, b:b + 1] * y3 - R[:, b]
        y4 = y + h * k3y
        p4 = yp + h * k3p
        k4y = p4
        k4p = q[:, c:c + 1] * y4 - R[:, c]
        y = y + (h / 6) * (k1y + 2 * k2y + 2 * k3y + k4y)
        yp = yp + (h / 6) * (k1p + 2 * k2p + 2 * k3p + k4p)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(yp))):
        raise RefineStepsError("ODE solution overflowed; increase ode_steps or shrink the box")
    return y0, yp0, y, yp


def _forcing(p):
    n = p.ode_steps
    xs = np.arange(2 * n + 1) / (2 * n)
    model = p.model
    V = model.potential(xs)
    m = model.m
    K = np.zeros((m, xs.size), dtype=complex)
    if model.channel.ell:
        K[: model.channel.ell] = model.channel.evaluate(xs)
    keep = [r for r in range(m) if np.any(K[r])]
    R = np.zeros((2 + len(keep), xs.size), dtype=complex)
    for i, r in enumerate(keep):
        R[2 + i] = K[r]
    return V, R, keep


def secular_matrices(p, lams):
    """Solve matrices for a batch of lam values, shape (nl, 2+q, 2+q)."""
    V, R, keep = _forcing(p)
    y0, yp0, y1, yp1 = _integrate(V, R, lams, p.ode_steps)
    pair = p.model.case.pair
    X, _ = p.model.coordinates
    # stacked traces (f(0), f(1), f'(0), -f'(1)) for each column
    T = np.stack([y0, y1, yp0, -yp1], axis=1)  # (nl, 4, cols)
    T[:, :, 2:] *= -1  # f = a y1 + b y2 - sum x_r p_r
    bc = np.concatenate([pair.B, -pair.C], axis=1)
    top = np.einsum("ij,ljc->lic", bc, T)
    q = len(keep)
    if q == 0:
        return top
    Xk = X[keep]
    bottom = -np.einsum("ij,ljc->lic", Xk, T)
    bottom[:, :, 2:] += np.eye(q)[None]
    return np.concatenate([top, bottom], axis=1)


def secular_det_batch(p, lams):
    return np.linalg.det(secular_matrices(p, lams))


def secular_det(p, lam):
    M = secular_matrices(p, [lam])[0]
    return SecularValue(complex(lam), complex(np.linalg.det(M)), M)


def proper_determinant(p, lam):
    """det(B G0 - C G1) from the homogeneous solutions alone."""
    V, R, _ = _forcing(p)
    y0, yp0, y1, yp1 = _integrate(V, R[:2], [lam], p.ode_steps)
    G0 = np.array([y0[0], y1[0]])
    G1 = np.array([yp0[0], -yp1[0]])
    pair = p.model.case.pair
    return complex(np.linalg.det(pair.B @ G0 - pair.C @ G1))


@dataclass
class Root:
    lam: complex
    multiplicity: int
    newton_residual: float
    converged: bool


def _scan_points(box, ds=0.05, n_im=9):
    re0, re1, im0, im1 = box
    pts = []
    if re1 > 0:
        s = np.arange(np.sqrt(max(re0, 0.0)), np.sqrt(re1) + ds, ds)
        pts.append(s**2)
    if re0 < 0:
        s = np.arange(ds, np.sqrt(-re0) + ds, ds)
        pts.append(-(s**2))
    re = np.unique(np.concatenate(pts))
    re = re[(re >= re0) & (re <= re1)]
    re = np.unique(np.concatenate([re, [re0, re1]]))
    im = np.linspace(im0, im1, n_im) if im1 > im0 else np.array([im0])
    return re, im


def _local_minima(A):
    """Indices of grid points whose |D| is a local minimum (8-neighbourhood)."""
    P = np.pad(A, 1, constant_values=np.inf)
    core = P[1:-1, 1:-1]
    mask = np.ones_like(core, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di or dj:
                mask &= core <= P[1 + di:P.shape[0] - 1 + di, 1 + dj:P.shape[1] - 1 + dj]
    return np.argwhere(mask)


def _newton(func, z, iters=60, fd=1e-6):
    """Batched Newton iteration with central-difference derivatives.

    Converged entries are frozen so later iterations only evaluate the rest.
    """
    z = np.array(z, dtype=complex)
    step = np.full(z.shape, np.inf)
    active = np.ones(z.shape, dtype=bool)
    for _ in range(iters):
        za = z[active]
        dz = fd * (1 + np.abs(za))
        vals = func(np.concatenate([za, za + dz, za - dz]))
        f0, fp, fm = np.split(vals, 3)
        d = (fp - fm) / (2 * dz)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(d != 0, f0 / d, 0)
            s = np.where(np.isfinite(s), s, 0)
            cap = 0.5 * (1 + np.abs(za))
            s = np.where(np.abs(s) > cap, s / np.abs(s) * cap, s)
        z[active] = za - s
        step[active] = np.abs(s)
        active = step > 1e-14 * (1 + np.abs(z))
        if not np.any(active):
            break
    return z, step


def _derivative(func, fd=1e-6):
    def g(z):
        dz = fd * (1 + np.abs(z))
        vals = func(np.concatenate([z + dz, z - dz]))
        fp, fm = np.split(vals, 2)
        return (fp - fm) / (2 * dz)
    return g


def _multiplicity(func, z, rho_rel=1e-3):
    """Vanishing order from the decay of |D| on shrinking circles, capped at 2."""
    z = np.asarray(z, dtype=complex)
    th = np.exp(2j * np.pi * np.arange(8) / 8)
    rho = rho_rel * (1 + np.abs(z))
    pts = np.concatenate([(z[:, None] + rho[:, None] * th).ravel(),
                          (z[:, None] + 0.5 * rho[:, None] * th).ravel()])
    vals = np.abs(func(pts)).reshape(2, z.size, 8).mean(axis=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        order = np.log2(vals[0] / vals[1])
    order = np.where(np.isfinite(order), order, 1)
    return np.clip(np.rint(order), 1, 2).astype(int)


def find_roots_analytic(func, box, ds=0.05, n_im=9, dedup_rel=1e-6):
    """Scan + Newton root finder for a batched analytic function of lam."""
    re, im = _scan_points(box, ds, n_im)
    L = re[None, :] + 1j * im[:, None]
    A = np.abs(func(L.ravel())).reshape(L.shape)
    seeds = np.array([L[i, j] for i, j in _local_minima(A)])
    if seeds.size == 0:
        return []
    z, step = _newton(func, seeds, iters=8)
    mult = _multiplicity(func, z)
    single = mult == 1
    if np.any(single):
        z[single], step[single] = _newton(func, z[single])
    mult = _multiplicity(func, z)
    double = mult == 2
    if np.any(double):
        z[double], step[double] = _newton(_derivative(func), z[double], fd=1e-4)
    fd_scale = np.abs(_derivative(func)(z)) * (1 + np.abs(z)) + 1e-300
    resid = np.abs(func(z))
    roots = []
    re0, re1, im0, im1 = box
    pad = 1e-9
    order = sorted(range(z.size), key=lambda i: sort_key(z[i]))
    for i in order:
        lam = z[i]
        if not (re0 - pad <= lam.real <= re1 + pad and im0 - pad <= lam.imag <= im1 + pad):
            continue
        if any(abs(lam - r.lam) <= dedup_rel * (1 + abs(lam)) for r in roots):
            continue
        conv = bool(step[i] <= 1e-8 * (1 + abs(lam)))
        near = resid[i] <= 1e-4 * fd_scale[i]
        if mult[i] == 1:
            conv = conv and resid[i] <= 1e-6 * fd_scale[i]
        # seeds that never approach a zero are scan artefacts; near misses stay, flagged
        if conv or near:
            roots.append(Root(complex(lam), int(mult[i]), float(resid[i]), conv))
    return roots


def find_roots(p, ds=0.05, n_im=9):
    return find_roots_analytic(lambda z: secular_det_batch(p, z), p.search_box, ds, n_im)


def closed_form_spectrum(kind, count):
    if count < 1:
        raise ValueError("count must be positive")
    pi2 = np.pi**2
    if kind == "Dirichlet":
        return [((k * np.pi) ** 2, 1) for k in range(1, count + 1)]
    if kind == "Neumann":
        return [((k * np.pi) ** 2, 1) for k in range(count)]
    if kind == "Periodic":
        return [(0.0, 1)] + [((2 * k * np.pi) ** 2, 2) for k in range(1, count)]
    if kind == "Antiperiodic":
        return [((2 * k + 1) ** 2 * pi2, 2) for k in range(count)]
    raise ValueError(f"unknown closed form {kind!r}")
