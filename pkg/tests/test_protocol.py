import math

import numpy as np
import pytest
from scipy.integrate import quad

from cvqnd.errors import CVQNDError, GridError, ParameterError
from cvqnd.protocol import (
    ProtocolParams,
    feedback_shift,
    identity_residuals,
    pm_distribution,
    resolution_from_q,
    run_protocol,
    trapezoid_weights,
    xm_quadrature_nodes,
)
from cvqnd.state import (
    apply_qnd_kraus,
    inner_product,
    make_coherent,
    make_fock,
    make_grid,
    make_vacuum,
    moments,
    reference_grid,
    superpose,
)

SQRT_HALF = 1 / math.sqrt(2)


@pytest.fixture(scope="module")
def grid():
    return reference_grid()


def test_resolution_values():
    assert resolution_from_q(SQRT_HALF) == pytest.approx(0.5, rel=1e-15)
    assert resolution_from_q(0.6) == pytest.approx(0.375, rel=1e-15)
    assert resolution_from_q(1e-9) < 1e-9
    for q in (0.0, 1.0, 1.5):
        with pytest.raises(ParameterError):
            resolution_from_q(q)


def test_feedback_shift_values():
    assert feedback_shift(0.5, 2.0) == pytest.approx(3.0)
    assert feedback_shift(0.8, 0.0) == 0.0
    # (1 - 1/2) / (1/sqrt 2) = sqrt(2)/2
    assert feedback_shift(SQRT_HALF, 1.0) == pytest.approx(0.5 * math.sqrt(2), rel=1e-15)


def test_params():
    p = ProtocolParams(0.6)
    assert 4 * p.delta_x**2 == pytest.approx(p.q**2 / (1 - p.q**2), rel=1e-15)
    assert p.gain * p.q == pytest.approx(p.reflectivity, rel=1e-15)


def test_run_protocol_vacuum_posterior(grid):
    trace = run_protocol(make_vacuum(grid), SQRT_HALF, 1.0)
    m = moments(trace.psi_out_normalized)
    # posterior product rule: mean x_m/4 / (1/4 + dx^2), variance (dx^2/4) / (1/4 + dx^2)
    assert m.mean_x == pytest.approx(0.5, abs=1e-4)
    assert m.var_x == pytest.approx(0.125, abs=1e-4)


@pytest.mark.parametrize("q, x_m", [(0.3, 0.2), (0.6, -0.8), (0.9, 1.5)])
def test_run_protocol_keeps_mean_p(grid, q, x_m):
    trace = run_protocol(make_coherent(grid, 0.3, 0.45), q, x_m)
    assert moments(trace.psi_out_normalized).mean_p == pytest.approx(0.45, abs=1e-4)


def test_weak_measurement_limit(grid):
    psi = make_vacuum(grid)
    trace = run_protocol(psi, 0.99, 0.0)
    assert abs(inner_product(psi, trace.psi_out_normalized)) ** 2 >= 0.999


def test_trace_norms_agree(grid):
    psi = superpose([make_fock(grid, n) for n in range(3)], [0.5, 0.6j, -0.4])
    t = run_protocol(psi, 0.7, 0.4)
    for s in (t.psi_bs, t.psi_fb, t.psi_out):
        assert s.norm_sq == pytest.approx(t.density, abs=1e-6)


def test_intermediate_states_match_closed_forms(grid):
    # bare beam splitter output and post-feedback state, evaluated from their integral kernels
    q, x_m = 0.6, 0.5
    psi = make_coherent(grid, 0.2, 0.1)
    t = run_protocol(psi, q, x_m)
    x = grid.points
    c2 = 1 - q * q
    bs = (2 * c2 / math.pi) ** 0.25 * np.exp(-c2 * (x - q * x_m) ** 2) * psi(c2 * x_m + q * x)
    fb = (2 * c2 / math.pi) ** 0.25 * np.exp(-c2 / q**2 * (q * x - x_m) ** 2) * psi(q * x)
    assert np.max(np.abs(t.psi_bs.amps - bs)) < 1e-8
    assert np.max(np.abs(t.psi_fb.amps - fb)) < 1e-7


def test_pm_distribution_vacuum(grid):
    q = SQRT_HALF
    nodes = xm_quadrature_nodes(grid, q, 2049)
    pm = pm_distribution(make_vacuum(grid), q, nodes)
    assert np.interp(0.0, nodes, pm) == pytest.approx(1 / math.sqrt(2 * math.pi * 0.5), abs=1e-4)


def test_pm_distribution_variance_two_routes(grid):
    q = 0.8
    psi = make_vacuum(grid)
    nodes = xm_quadrature_nodes(grid, q, 2048)
    pm = pm_distribution(psi, q, nodes)
    w = trapezoid_weights(nodes)
    var = float(w @ (pm * nodes**2)) - float(w @ (pm * nodes)) ** 2
    closed = 1 / (4 * (1 - q * q))
    # caption route: Var(x_in) + q^2/(1-q^2) Var(x_vac)
    caption = moments(psi).var_x + q * q / (1 - q * q) * moments(make_vacuum(grid)).var_x
    assert closed == pytest.approx(0.69444, abs=1e-5)
    assert var == pytest.approx(closed, abs=1e-3)
    assert caption == pytest.approx(closed, abs=1e-8)


@pytest.mark.parametrize("q", [0.3, 0.75])
def test_pm_distribution_fock1_is_symmetric(grid, q):
    nodes = xm_quadrature_nodes(grid, q, 1025)
    pm = pm_distribution(make_fock(grid, 1), q, nodes)
    assert np.max(np.abs(pm - pm[::-1])) < 1e-12
    assert float(trapezoid_weights(nodes) @ (pm * nodes)) == pytest.approx(0.0, abs=1e-12)


def test_pm_distribution_kraus_vs_quad(grid):
    # independent check of the Kraus-route integral at a few outcomes
    q = 0.5
    dx2 = resolution_from_q(q) ** 2
    psi = make_fock(grid, 1)
    xm = np.array([-1.0, 0.3, 1.7])
    pm = pm_distribution(psi, q, xm, completeness_tol=np.inf)
    f1 = lambda x: (2 / math.pi) ** 0.5 * 4 * x * x * math.exp(-2 * x * x)  # noqa: E731
    for k, v in enumerate(xm):
        oracle = quad(lambda x: f1(x) * math.exp(-((v - x) ** 2) / (2 * dx2)) / math.sqrt(2 * math.pi * dx2), -10, 10)[0]
        assert pm[k] == pytest.approx(oracle, rel=1e-9)


def test_pm_distribution_incomplete_grid(grid):
    with pytest.raises(CVQNDError):
        pm_distribution(make_vacuum(grid), 0.5, np.linspace(-0.5, 0.5, 600))


def test_pm_distribution_routes_agree(grid):
    q = 0.5
    psi = superpose([make_fock(grid, n) for n in range(4)], [0.3, -0.5j, 0.6, 0.2 + 0.1j])
    nodes = xm_quadrature_nodes(grid, q, 1024)
    a, b = pm_distribution(psi, q, nodes, method="both")
    assert np.max(np.abs(a - b)) <= 1e-5 * np.max(a)


@pytest.mark.parametrize(
    "label, q, x_m, tol",
    [("vacuum", 0.6, 0.5, 1e-5), ("fock1", 0.3, -1.0, 1e-4)],
)
def test_identity_residual_examples(grid, label, q, x_m, tol):
    psi = make_vacuum(grid) if label == "vacuum" else make_fock(grid, 1)
    r = identity_residuals(psi, q, x_m)
    assert max(r) < tol


def test_identity_residuals_outside_box(grid):
    with pytest.raises(GridError):
        identity_residuals(make_vacuum(grid), 0.5, 40.0)


def test_r7_decreases_with_resolution():
    # reference box; the 256-point grid is already inside the norm-drift guard
    res = []
    for n in (256, 512, 1024, 2048):
        g = make_grid(-8, 8, n)
        res.append(identity_residuals(make_fock(g, 1), 0.6, 0.5).r7)
    assert all(b < a for a, b in zip(res, res[1:]))


@pytest.mark.parametrize("x_m", [-2.0, 0.0, 0.7])
def test_density_equals_kraus_norm(grid, x_m):
    psi = superpose([make_fock(grid, n) for n in range(4)], [1, 0.5j, -0.3, 0.2])
    q = 0.5
    t = run_protocol(psi, q, x_m)
    direct = apply_qnd_kraus(psi, x_m, resolution_from_q(q)).norm_sq
    assert t.density == pytest.approx(direct, rel=1e-5)


@pytest.mark.parametrize("q", [0.3, 0.7, 0.9])
def test_nonselective_x_marginal_preserved(grid, q):
    psi = superpose([make_fock(grid, n) for n in range(3)], [0.6, 0.3, -0.7j])
    d = resolution_from_q(q)
    nodes = xm_quadrature_nodes(grid, q, 4096)
    w = trapezoid_weights(nodes)
    kern = (2 * math.pi * d * d) ** -0.5 * np.exp(-((nodes[:, None] - grid.points[None, :]) ** 2) / (2 * d * d))
    averaged = w @ (kern * psi.density[None, :])
    assert np.max(np.abs(averaged - psi.density)) < 1e-6
