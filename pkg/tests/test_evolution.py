import math

import numpy as np
import pytest
import sympy as sp

from ksradial.evolution import (
    BLOWN_UP,
    FAULTS,
    FINISHED,
    initial_state,
    load_checkpoint,
    save_checkpoint,
    simulate,
    stable_dt,
    step,
)
from ksradial.grid import build_grid, integrate, make_initial_data
from ksradial.params import ModelParams


def manufactured(n, eps, kappa, mu):
    """Exact pair (u*, v*) with v* = 60 + (1 + t/2)(1 - r^2)^4 and the source that makes u* solve the system."""
    r, t = sp.symbols("r t", nonnegative=True)
    vs = 60 + (1 + t / 2) * (1 - r**2) ** 4

    def lap(f):
        return sp.diff(f, r, 2) + (n - 1) / r * sp.diff(f, r)

    us = sp.simplify(vs - lap(vs))
    div = sp.diff(us, r) * sp.diff(vs, r) + us * lap(vs)
    src = sp.simplify(sp.diff(us, t) - eps * lap(us) + div - kappa * us + mu * us**2)
    return sp.lambdify((r, t), us, "numpy"), sp.lambdify((t, r), src, "numpy")


def mms_errors(n, eps, cells, advection="fitted", T=0.1):
    uex, src = manufactured(n, eps, 0.3, 1.0)
    errs = []
    for I in cells:
        g = build_grid(n, 1.0, I)
        p = ModelParams(dim=n, kappa=0.3, mu=1.0, eps=eps, dt_max=0.02 * g.h, advection=advection)
        tr = simulate(uex(g.centers, 0.0), p, g, T, T, source=lambda t, r: src(t, r) * np.ones_like(r), cap=1e9)
        errs.append(np.max(np.abs(tr.state.u - uex(g.centers, T))))
    return np.array(errs)


def test_stable_dt_zero_field():
    # without diffusion no limit applies to the zero field
    g = build_grid(3, 1.0, 32)
    p = ModelParams(kappa=0.0, eps=0.0)
    assert stable_dt(initial_state(np.zeros(32), g), p) == p.dt_max


def test_stable_dt_diffusive_limit():
    g = build_grid(3, 1.0, 64)
    p = ModelParams(eps=0.01, mu=1.0, dt_max=1.0)
    # u = 0 gives no drift and no reaction, leaving only the diffusive bound
    assert stable_dt(initial_state(np.zeros(64), g), p) == pytest.approx(0.4 * g.h**2 / (2 * 3 * 0.01))


def test_stable_dt_halves_when_max_doubles():
    g = build_grid(3, 1.0, 64)
    p = ModelParams(eps=0.0, mu=0.2, dt_max=1.0)
    s1 = initial_state(np.full(64, 1e3), g)
    s2 = initial_state(np.full(64, 2e3), g)
    assert stable_dt(s2, p) == pytest.approx(0.5 * stable_dt(s1, p), rel=1e-12)


def test_heun_hand_example():
    # u = 1, v = 1, so there is no drift: Heun on u' = -u^2 gives 1 - 0.05 (1 + 0.81)
    g = build_grid(3, 1.0, 16)
    p = ModelParams(eps=0.0, kappa=0.0, mu=1.0, dt_max=1.0)
    s, rep = step(initial_state(np.ones(16), g), p, 0.1)
    np.testing.assert_allclose(s.u, 0.9095, rtol=1e-14)
    assert rep.clip_mass == 0.0


def test_zero_field_stays_zero():
    g = build_grid(3, 1.0, 16)
    s, rep = step(initial_state(np.zeros(16), g), ModelParams(), 0.01)
    assert np.all(s.u == 0.0)
    tr = simulate(np.zeros(16), ModelParams(), g, 0.2, 0.05)
    assert tr.status == FINISHED and tr.state.t == 0.2 and np.all(tr.state.u == 0)


def test_step_rejects_oversized_dt():
    g = build_grid(3, 1.0, 64)
    s = initial_state(make_initial_data("poly_bump", 5.0, g), g)
    p = ModelParams()
    with pytest.raises(ValueError):
        step(s, p, 2 * stable_dt(s, p))
    with pytest.raises(ValueError):
        step(s, p, stable_dt(s, p), fault="bogus")


def test_mass_identity_every_step():
    g = build_grid(3, 1.0, 64)
    p = ModelParams(kappa=0.7, mu=0.6, eps=0.01)
    s = initial_state(make_initial_data("gaussian_bump", 6.0, g, width=0.3), g)
    for _ in range(100):
        dt = stable_dt(s, p)
        m0 = integrate(s.u, g)
        new, rep = step(s, p, dt)
        # relative defect of the trapezoid mass law; flux terms must telescope
        assert rep.mass_law_residual <= 1e-12
        assert rep.clip_mass == 0.0
        assert rep.mass_before == pytest.approx(m0, rel=1e-15)
        assert integrate(new.u, g) == pytest.approx(rep.mass_after, rel=1e-15)
        s = new


def test_constant_data_stays_constant_and_logistic():
    # v = u for constant data, so the drift vanishes and u' = kappa u - mu u^2 exactly
    g = build_grid(3, 1.0, 64)
    p = ModelParams(kappa=0.5, mu=2.0, eps=0.1)
    tr = simulate(np.ones(64), p, g, 1.0, 0.5)
    u = tr.state.u
    assert u.max() - u.min() <= 1e-12 * u.max()
    exact = 0.5 / (2.0 + (0.5 - 2.0) * math.exp(-0.5))
    assert u.max() == pytest.approx(exact, rel=1e-5)


def test_radial_margin_nonnegative_during_run():
    g = build_grid(3, 1.0, 64)
    p = ModelParams(mu=0.3, eps=0.01)
    tr = simulate(make_initial_data("poly_bump", 20.0, g), p, g, 0.05, 0.01)
    assert tr.worst_radial_margin >= -1e-10
    assert tr.clip_mass == 0.0


def test_record_cadence_lands_on_multiples():
    class Sink:
        def __init__(self):
            self.t = []

        def record(self, s):
            self.t.append(s.t)
            return s.t

    g = build_grid(3, 1.0, 32)
    sink = Sink()
    tr = simulate(make_initial_data("poly_bump", 2.0, g), ModelParams(), g, 0.1, 0.02, sink)
    assert tr.records == pytest.approx([0.0, 0.02, 0.04, 0.06, 0.08, 0.1], abs=1e-15)


def test_blowup_cap_detected():
    g = build_grid(3, 1.0, 64)
    p = ModelParams(mu=0.2, eps=0.001, blowup_cap=200.0)
    tr = simulate(make_initial_data("poly_bump", 50.0, g), p, g, 1.0, 0.01)
    assert tr.status == BLOWN_UP
    assert tr.linf_max > 200.0


def test_checkpoint_resume_matches_continuous(tmp_path):
    g = build_grid(3, 1.0, 64)
    p = ModelParams(mu=0.8, kappa=0.5, eps=0.01)
    u0 = make_initial_data("poly_bump", 4.0, g)
    full = simulate(u0, p, g, 0.4, 0.1)
    half = simulate(u0, p, g, 0.2, 0.1)
    path = tmp_path / "ck.json"
    save_checkpoint(path, half.state, p)
    s, p2, _ = load_checkpoint(path)
    assert p2 == p
    np.testing.assert_array_equal(s.u, half.state.u)
    s.status = "running"
    rest = simulate(None, p, g, 0.4, 0.1, state=s)
    np.testing.assert_allclose(rest.state.u, full.state.u, rtol=1e-12, atol=0)


def test_checkpoint_rejects_foreign_file(tmp_path):
    path = tmp_path / "x.json"
    path.write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        load_checkpoint(path)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_manufactured_second_order_with_diffusion(n):
    errs = mms_errors(n, 0.1 if n == 3 else 0.05, (32, 64, 128))
    orders = np.log2(errs[:-1] / errs[1:])
    assert np.all(orders >= 1.8), orders


def test_manufactured_first_order_without_diffusion():
    errs = mms_errors(3, 0.0, (32, 64, 128))
    orders = np.log2(errs[:-1] / errs[1:])
    assert np.all(orders >= 0.8), orders


def test_upwind_variant_is_first_order():
    errs = mms_errors(3, 0.1, (32, 64, 128), advection="upwind")
    orders = np.log2(errs[:-1] / errs[1:])
    assert np.all(orders >= 0.8) and np.all(orders < 1.5), orders


@pytest.mark.parametrize("fault", FAULTS)
def test_faults_change_the_solution(fault):
    g = build_grid(3, 1.0, 64)
    p = ModelParams(mu=0.5, eps=0.01)
    u0 = make_initial_data("poly_bump", 5.0, g)
    s = initial_state(u0, g)
    dt = stable_dt(s, p)
    good, _ = step(s, p, dt)
    bad, _ = step(s, p, dt, fault=fault)
    assert not np.array_equal(good.u, bad.u)
