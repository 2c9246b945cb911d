"""Property tests for the invariants of each module."""
import numpy as np
import pytest
from battery import ONE, const, model
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from dissex.extensions import (BoundaryPair, NotDissipativeError, TraceVector, adjoint_traces, classify_case,
                               dissipativity_form, domain_basis, domain_traces, green_form_invertible_B,
                               green_pairing, is_maximally_dissipative, is_selfadjoint, make_case, symmetric_part)
from dissex.linalg_core import eig_dense, imaginary_part, is_psd, numeric_rank
from dissex.perturbation import (NonlocalChannel, Potential, check_dissipative, gram_matrix, hsym_conditions,
                                 minimal_scaling, proper_extension_consistent)
from dissex.secular_oracle import SecularProblem, _integrate, secular_det
from dissex.spectral_fd import assemble, quadratic_form_check, spectrum
from dissex.stargraph import StarGraph, star_secular_det, star_spectrum

SETTINGS = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
finite = st.floats(-5, 5, allow_nan=False)
cplx = st.builds(complex, finite, finite)


def cmat(n):
    return st.lists(cplx, min_size=n * n, max_size=n * n).map(lambda v: np.array(v).reshape(n, n))


def well_conditioned(E):
    s = np.linalg.svd(E, compute_uv=False)
    return s[-1] > 1e-2 * s[0] and s[-1] > 1e-2


# linalg_core

@SETTINGS
@given(cmat(3))
def test_imaginary_part_hermitian(M):
    H = imaginary_part(M)
    assert np.array_equal(H, H.conj().T)
    assert np.allclose(imaginary_part(M + M.conj().T), 0, atol=1e-12)


@SETTINGS
@given(cmat(3), cmat(3))
def test_rank_invariant_under_row_operations(M, E):
    assume(well_conditioned(E))
    M = M.copy()
    M[2] = M[0] + 2 * M[1]
    assert numeric_rank(E @ M) == numeric_rank(M)


def test_eig_dense_residuals():
    rng = np.random.default_rng(7)
    M = rng.normal(size=(400, 400)) + 1j * rng.normal(size=(400, 400))
    pairs = eig_dense(M)
    assert max(p.residual for p in pairs) <= 1e-8 * np.linalg.norm(M, 2)


# extensions

def dissipative_case():
    return st.one_of(
        st.builds(lambda a, d, c12, t: make_case("CaseI", c11=-1j * a, c12=c12,
                                                 c21=np.conj(c12) + t * 2 * np.sqrt(a * d) * np.exp(1j * t),
                                                 c22=-1j * d),
                  st.floats(0.1, 3), st.floats(0.1, 3), cplx, st.floats(0, 0.99)),
        st.builds(lambda b, c: make_case("CaseII", c12=c * b, c22=b),
                  cplx.filter(lambda z: abs(z) > 0.1), st.builds(complex, finite, st.floats(0, 3))),
        st.builds(lambda c: make_case("CaseIII", c11=c), st.builds(complex, finite, st.floats(-3, 0))),
        st.builds(lambda c: make_case("CaseIV", c12=c), st.builds(complex, finite, st.floats(-3, 0))),
        st.just(make_case("CaseV")),
    )


@SETTINGS
@given(dissipative_case(), cmat(2))
def test_classification_invariant_under_row_operations(case, E):
    assume(well_conditioned(E))
    got = classify_case(case.pair.transformed(E))
    assume(not got.ill_conditioned)
    assert got.tag == case.tag
    for k, v in case.parameters.items():
        assert abs(got.parameters[k] - v) <= 1e-7 * (1 + abs(v))


@SETTINGS
@given(dissipative_case())
def test_form_route_psd(case):
    assert is_maximally_dissipative(case.pair)[0]
    assert is_psd(dissipativity_form(*domain_basis(case)))[0]


@SETTINGS
@given(cmat(2), cmat(2), st.lists(cplx, min_size=2, max_size=2), st.lists(cplx, min_size=2, max_size=2))
def test_green_identity(B, C, a, w):
    pair = BoundaryPair(B, C)
    assume(np.linalg.svd(pair.block, compute_uv=False)[-1] > 1e-3)
    f = domain_traces(pair, w)
    g = adjoint_traces(pair, a)
    scale = (1 + np.abs(f.stacked()).max()) * (1 + np.abs(g.stacked()).max())
    assert abs(green_pairing(f, g)) <= 1e-12 * scale


@SETTINGS
@given(cmat(2), cmat(2), st.lists(cplx, min_size=2, max_size=2), st.lists(cplx, min_size=2, max_size=2))
def test_green_form_invertible_b(B, C, x, y):
    assume(well_conditioned(B))
    pair = BoundaryPair(B, C)
    Binv = np.linalg.inv(B)
    # f, g in D(T_{B,C}): gamma0 = B^-1 C gamma1
    f = TraceVector(Binv @ C @ np.array(x), x)
    g = TraceVector(Binv @ C @ np.array(y), y)
    # <f, Ag> - <Af, g> = <gamma0 f, gamma1 g> - <gamma1 f, gamma0 g>
    lhs = np.vdot(f.gamma0, g.gamma1) - np.vdot(f.gamma1, g.gamma0)
    assert abs(lhs - green_form_invertible_B(pair, f, g)) <= 1e-9 * (1 + abs(lhs))


@SETTINGS
@given(dissipative_case(), cmat(2))
def test_symmetric_part_rank(case, E):
    assume(well_conditioned(E))
    pair = case.pair.transformed(E)
    ell = symmetric_part(pair).ell
    assert ell in (0, 1, 2)
    assert (ell == 0) == is_selfadjoint(pair)


# perturbation

channels = st.lists(st.tuples(finite, finite, st.integers(0, 3)), min_size=1, max_size=2)


def channel_funcs(spec):
    return [lambda x, a=a, b=b, k=k: (a + 1j * b) * np.cos(k * np.pi * x) for a, b, k in spec]


@SETTINGS
@given(channels, st.floats(0.1, 5))
def test_gram_hermitian_psd_and_scaling(spec, mu):
    V = Potential.from_function(lambda x: 1 + x**2, 100)
    K = NonlocalChannel.from_functions(channel_funcs(spec), 100)
    G = gram_matrix(V, K)
    assert np.allclose(G, G.conj().T)
    assert np.linalg.eigvalsh(G).min() >= -1e-9 * max(1, np.abs(G).max())
    assert np.allclose(gram_matrix(V.scaled(mu), K), G / mu)


@SETTINGS
@given(dissipative_case().filter(lambda c: c.tag != "CaseV"), channels)
def test_rescaling_restores_dissipativity(case, spec):
    m = model(case, ONE, channel_funcs(spec[: 2 if case.tag == "CaseI" else 1]), n=100)
    assume(np.abs(m.channel.vectors).max() > 1e-2)
    mu = minimal_scaling(m)
    if not np.isfinite(mu):
        # the channel reaches a direction where the boundary form vanishes
        assert not check_dissipative(m.with_potential(m.potential.scaled(1e3))).ok
        return
    assert check_dissipative(m.with_potential(m.potential.scaled(2 * mu))).ok
    if mu > 1e-6:
        assert not check_dissipative(m.with_potential(m.potential.scaled(0.5 * mu))).ok


@SETTINGS
@given(dissipative_case())
def test_zero_channel_matches_boundary_criterion(case):
    assert proper_extension_consistent(model(case, ONE, n=50))


@pytest.mark.parametrize("k", [0.1, 1.0, 5.0])
def test_selfadjoint_boundary_rejects_channel(k):
    sa = make_case("CaseI", c11=1, c12=0.5, c21=0.5, c22=-2)
    assert not check_dissipative(model(sa, ONE, [const(k)])).ok
    assert minimal_scaling(model(sa, ONE, [const(k)])) == np.inf


@SETTINGS
@given(dissipative_case().filter(lambda c: c.tag != "CaseV"), channels, st.floats(0.05, 1))
def test_hsym_bound(case, spec, shrink):
    m = model(case, ONE, channel_funcs(spec[: 2 if case.tag == "CaseI" else 1]), n=100)
    res = check_dissipative(m)
    assume(res.ok)
    w = hsym_conditions(m).w_dim_bound
    assert 0 <= w <= res.report.ell
    if res.report.regime == "NonCritical":
        assert w == 0


# spectral_fd

@settings(max_examples=15, deadline=None)
@given(dissipative_case(), channels, st.integers(0, 2**31 - 1))
def test_discrete_quadratic_form(case, spec, seed):
    spec = spec[: 2 if case.tag == "CaseI" else 1] if case.tag != "CaseV" else []
    m = model(case, lambda x: 1 + np.sin(np.pi * x), channel_funcs(spec), n=60)
    if spec:
        mu = minimal_scaling(m)
        assume(np.isfinite(mu))
        m = m.with_potential(m.potential.scaled(max(mu, 1e-3) * 1.01))
    assume(check_dissipative(m).ok)
    d = assemble(m, 60)
    rng = np.random.default_rng(seed)
    f = rng.normal(size=d.size) + 1j * rng.normal(size=d.size)
    im, scale = quadratic_form_check(d, f)
    assert im >= -1e-8 * scale
    assert spectrum(d).eigenvalues.imag.min() >= -1e-8 * max(1, np.abs(d.operator).max())


# secular_oracle

def test_rk4_fourth_order():
    m = model(make_case("CaseIII", c11=-1j), lambda x: 1 + np.sin(3 * x), [lambda x: np.cos(x)], n=100)
    lam = 20 + 3j
    d = [secular_det(SecularProblem(m, s), lam).det_value for s in (250, 500, 1000)]
    ratio = abs(d[0] - d[1]) / abs(d[1] - d[2])
    assert 12 < ratio < 20


def test_particular_solutions_are_linear():
    x = np.arange(801) / 800
    V = 1 + x
    k1, k2 = np.cos(x), np.exp(1j * x)
    R = np.array([0 * x, 0 * x, k1, k2, k1 + 2 * k2])
    out = _integrate(V, R, [5 + 1j, 40.0], 400)
    for arr in out[2:]:
        assert np.allclose(arr[:, 4], arr[:, 2] + 2 * arr[:, 3], atol=1e-12)


# stargraph

@SETTINGS
@given(st.lists(st.floats(0.3, 3), min_size=2, max_size=4), cplx, cplx)
def test_star_det_entire(edges, b, c):
    g = StarGraph(tuple(edges), b, c)
    lam = np.concatenate([np.linspace(-50, 300, 200), [(np.pi / e) ** 2 for e in edges], [0.0]])
    assert np.all(np.isfinite(star_secular_det(g, lam)))


@settings(max_examples=10, deadline=None)
@given(st.lists(st.floats(0.5, 2), min_size=2, max_size=3), st.floats(0.01, 2), st.floats(-2, 2))
def test_star_dissipative_roots(edges, imc, rec):
    g = StarGraph(tuple(edges), 1, complex(rec, imc))
    assert g.is_dissipative()
    assert all(z.imag >= -1e-8 for z, _ in star_spectrum(g, (0.5, 60, -3, 3)))


def test_case_vi_refused():
    with pytest.raises(NotDissipativeError):
        classify_case(BoundaryPair([[0, 1], [0, 0]], [[0, 0], [0, 1]]))
