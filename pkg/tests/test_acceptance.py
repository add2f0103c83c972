"""End-to-end acceptance checks, one numbered test per criterion.

Each test prints a single summary line with the measured quantities; run

    pytest tests/test_acceptance.py -v -s

to see them alongside the per-criterion pass/fail status.  The whole module
is designed to finish in well under five minutes on a laptop-class machine.
"""

import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from fpkproj import (
    circle_diffusion,
    cosine_circle_family,
    decay_experiment,
    default_domain,
    divergence_l2,
    ef_eta_rhs,
    ef_theta_rhs,
    ep_family,
    galerkin_rhs,
    gaussian_mixture_family,
    gaussian_pdf_fn,
    grid_density,
    hermite_family,
    integrate_ode,
    make_ode,
    metric_project_ef,
    metric_project_mix,
    mixture_m_rhs,
    mixture_theta_rhs,
    ornstein_uhlenbeck,
    polynomial_drift,
    residual,
    residual_terms,
    solve_fpk,
)

DOM = default_domain(1.0)
OU = ornstein_uhlenbeck(kappa=1.0, sigma=np.sqrt(2.0))
SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"

# regression lock for the cubic-drift residual at theta = (0, -1/2);
# analytically sqrt(6): E[w^2]/4 = 8 with projection norm 2
CUBIC_RESIDUAL_LOCK = 2.449489742783178


def report(num, text):
    print(f"[acceptance] criterion {num:02d} PASS: {text}")


def draw_ep2(rng):
    return np.array([rng.uniform(-0.7, 0.7), rng.uniform(-1.5, -0.35)])


def draw_ep4(rng):
    return np.array([rng.uniform(-0.3, 0.3), rng.uniform(-0.6, -0.2),
                     rng.uniform(-0.03, 0.03), rng.uniform(-0.3, -0.05)])


def draw_simplex(rng, n):
    while True:
        theta = rng.uniform(0.03, 0.5, size=n)
        if theta.sum() <= 0.92:
            return theta


def test_criterion_01_matched_start_stays_exact():
    # in-family start, eigenfunction statistics: the projected flow must
    # track the reference moments to discretization error only
    t0 = time.perf_counter()
    fam = hermite_family([1, 2])
    p0 = grid_density(DOM, 2001, gaussian_pdf_fn(0.5, 1.5))
    rep = decay_experiment(OU, fam, p0, t_end=2.0, pde_dt=1e-3, ode_dt=1e-3,
                           sample_stride=10)
    elapsed = time.perf_counter() - t0
    worst = float(np.max(rep.max_abs_epsilon))
    assert worst <= 5e-4, f"sup |eps| = {worst}"
    assert elapsed < 60.0, f"runtime {elapsed:.1f}s"
    report(1, f"sup |eps| = {worst:.3e} (<= 5e-4), runtime {elapsed:.1f}s")


def test_criterion_02_decay_rates_linear_model():
    fam = hermite_family([1, 2])

    def bimodal(x):
        return (0.3 * gaussian_pdf_fn(-1.0, 0.3)(x)
                + 0.7 * gaussian_pdf_fn(1.5, 0.4)(x))

    p0 = grid_density(DOM, 2001, bimodal)
    rep = decay_experiment(OU, fam, p0, t_end=2.0, pde_dt=1e-3, ode_dt=1e-3,
                           sample_stride=10, start=np.zeros(2),
                           fit_window=(0.05, 1.0))
    rates = np.array([float(r) for r in rep.fitted_rates])
    target = np.array([1.0, 2.0])
    rel = np.max(np.abs(rates - target) / target)
    assert rel <= 0.03, f"rates {rates}"
    report(2, f"fitted rates {rates} vs (1, 2), worst relative error {rel:.2e}")


def test_criterion_03_decay_rates_circle_model():
    model = circle_diffusion(2.0)
    fam = cosine_circle_family([1, 2])

    def p0_fn(x):
        return (1.0 + 0.4 * np.cos(x) + 0.3 * np.cos(2.0 * x)
                + 0.2 * np.cos(3.0 * x)) / (2.0 * np.pi)

    p0 = grid_density(model.domain, 2001, p0_fn)
    start = fam.weights_to_expectations(np.array([0.1, 0.05]))
    rep = decay_experiment(model, fam, p0, t_end=1.2, pde_dt=1e-3, ode_dt=1e-3,
                           sample_stride=10, start=start, fit_window=(0.05, 1.0))
    rates = np.array([float(r) for r in rep.fitted_rates])
    target = np.array([1.0, 4.0])
    rel = np.max(np.abs(rates - target) / target)
    assert rel <= 0.03, f"rates {rates}"
    report(3, f"fitted rates {rates} vs (1, 4), worst relative error {rel:.2e}")


def test_criterion_04_expectation_equals_tangent_projection():
    rng = np.random.default_rng(2024)
    worst = 0.0
    ef_presets = [
        (ep_family(2), draw_ep2, OU),
        (ep_family(4), draw_ep4, polynomial_drift([0.1, -0.9, 0.0, -0.2], 1.6)),
        (hermite_family([1, 2]), draw_ep2, OU),
    ]
    for fam, draw, model in ef_presets:
        for _ in range(100):
            theta = draw(rng)
            eta = fam.expectation_params(theta)
            lhs = ef_eta_rhs(fam, model, eta, initial=theta)
            rhs = fam.fisher_matrix(theta) @ ef_theta_rhs(fam, model, theta)
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    mix_presets = [
        (gaussian_mixture_family([-1.0, 0.0, 1.0], [0.5, 0.5, 0.5]), OU),
        (cosine_circle_family([1, 2]), circle_diffusion(2.0)),
    ]
    for fam, model in mix_presets:
        for _ in range(100):
            theta = draw_simplex(rng, fam.n)
            m = fam.weights_to_expectations(theta)
            lhs = mixture_m_rhs(fam, model, m)
            rhs = fam.gamma @ mixture_theta_rhs(fam, model, theta)
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    assert worst <= 1e-10, f"worst identity residual {worst}"
    report(4, f"worst coordinate-identity residual {worst:.3e} over 5 x 100 points")


def test_criterion_05_galerkin_equals_direct_projection():
    rng = np.random.default_rng(2025)
    worst = 0.0
    presets = [
        (gaussian_mixture_family([-1.0, 0.0, 1.0], [0.5, 0.5, 0.5]), OU),
        (cosine_circle_family([1, 2]), circle_diffusion(2.0)),
    ]
    for fam, model in presets:
        for _ in range(100):
            theta = draw_simplex(rng, fam.n)
            coeffs = np.concatenate([theta, [1.0]])
            diff = galerkin_rhs(fam, model, coeffs) - mixture_theta_rhs(fam, model, theta)
            worst = max(worst, float(np.max(np.abs(diff))))
    assert worst <= 1e-10, f"worst difference {worst}"
    report(5, f"worst weak-form vs direct difference {worst:.3e} over 2 x 100 points")


def test_criterion_06_moment_roundtrip():
    rng = np.random.default_rng(2026)
    worst_rt = 0.0
    worst_rec = 0.0
    for fam, draw in ((ep_family(2), draw_ep2), (ep_family(4), draw_ep4)):
        for _ in range(100):
            theta = draw(rng)
            mom = fam.expectation_params(theta, count=2 * fam.n)
            back = fam.expectation_to_canonical(mom)
            worst_rt = max(worst_rt, float(np.max(np.abs(back - theta))))
            rec = fam.moments_by_recursion(theta, 2 * fam.n)
            worst_rec = max(worst_rec, float(np.max(np.abs(rec - mom))))
    assert worst_rt <= 1e-6, f"roundtrip error {worst_rt}"
    assert worst_rec <= 1e-6, f"recursion mismatch {worst_rec}"
    report(6, f"roundtrip {worst_rt:.3e}, recursion vs quadrature {worst_rec:.3e}")


def test_criterion_07_metric_projection_optimality():
    g = gaussian_pdf_fn
    fam = ep_family(2)
    ef_targets = [
        lambda x: 0.5 * g(-1.0, 0.25)(x) + 0.5 * g(1.0, 0.25)(x),
        lambda x: 0.3 * g(-1.2, 0.3)(x) + 0.7 * g(0.8, 0.5)(x),
        lambda x: 0.25 * g(-1.5, 0.2)(x) + 0.5 * g(0.0, 0.4)(x) + 0.25 * g(1.5, 0.2)(x),
        lambda x: 0.6 * g(-0.3, 1.2)(x) + 0.4 * g(1.4, 0.3)(x),
        lambda x: 0.2 * g(-2.0, 0.4)(x) + 0.8 * g(0.5, 0.7)(x),
        lambda x: g(0.0, 1.0)(x) * (1.0 + 0.4 * np.tanh(1.5 * x)),
        lambda x: g(0.2, 0.8)(x) * np.exp(0.3 * np.sin(2.0 * x)),
        lambda x: 0.45 * g(-0.9, 0.35)(x) + 0.35 * g(0.6, 0.45)(x) + 0.2 * g(1.8, 0.25)(x),
        lambda x: g(-0.4, 1.5)(x) * (1.0 + 0.25 * np.cos(3.0 * x)),
        lambda x: 0.5 * g(-0.6, 0.15)(x) + 0.5 * g(0.6, 0.9)(x),
    ]
    worst_gap = -np.inf
    offsets = np.linspace(-0.2, 0.2, 41)
    for fn in ef_targets:
        p = grid_density(DOM, 2001, fn)
        star = metric_project_ef(p, fam)
        eta_t = np.array([p.expect(lambda x: x), p.expect(lambda x: x * x)])
        # K(p, p_theta) = const + psi(theta) - theta . moments(p), so KL
        # differences on the grid reduce to differences of this objective
        def objective(theta):
            return fam.log_partition(theta) - theta @ eta_t
        base = objective(star)
        for d1 in offsets:
            for d2 in offsets:
                cand = star + np.array([d1, d2])
                if not fam.is_admissible(cand):
                    continue
                gap = base - objective(cand)
                worst_gap = max(worst_gap, gap)
    assert worst_gap <= 1e-9, f"a grid point beats the projection by {worst_gap}"

    mfam = gaussian_mixture_family([-1.0, 0.0, 1.0], [0.5, 0.5, 0.5])
    mix_targets = [
        lambda x: 0.35 * g(-1.05, 0.62)(x) + 0.3 * g(0.1, 0.45)(x) + 0.35 * g(0.95, 0.55)(x),
        lambda x: 0.3 * g(-0.95, 0.55)(x) + 0.4 * g(0.0, 0.6)(x) + 0.3 * g(1.05, 0.5)(x),
        lambda x: 0.25 * g(-1.1, 0.5)(x) + 0.45 * g(-0.05, 0.52)(x) + 0.3 * g(1.0, 0.62)(x),
        lambda x: 0.4 * g(-0.9, 0.48)(x) + 0.25 * g(0.05, 0.55)(x) + 0.35 * g(1.1, 0.45)(x),
        lambda x: 0.33 * g(-1.0, 0.58)(x) + 0.34 * g(0.0, 0.42)(x) + 0.33 * g(0.9, 0.5)(x),
        lambda x: 0.3 * g(-1.0, 0.5)(x) + 0.3 * g(0.1, 0.5)(x) + 0.4 * g(0.95, 0.58)(x),
        lambda x: 0.28 * g(-1.02, 0.45)(x) + 0.42 * g(0.02, 0.5)(x) + 0.3 * g(1.02, 0.52)(x),
        lambda x: 0.36 * g(-0.98, 0.52)(x) + 0.3 * g(-0.02, 0.62)(x) + 0.34 * g(0.98, 0.48)(x),
        lambda x: 0.32 * g(-1.08, 0.5)(x) + 0.36 * g(0.06, 0.48)(x) + 0.32 * g(0.92, 0.55)(x),
        lambda x: 0.3 * g(-0.92, 0.6)(x) + 0.35 * g(0.0, 0.5)(x) + 0.35 * g(1.08, 0.5)(x),
    ]
    dirs = [np.array([1.0, 0.0]), np.array([0.0, 1.0]),
            np.array([1.0, 1.0]) / np.sqrt(2.0), np.array([1.0, -1.0]) / np.sqrt(2.0),
            np.array([2.0, 1.0]) / np.sqrt(5.0), np.array([-1.0, 2.0]) / np.sqrt(5.0)]
    worst_line = -np.inf
    for fn in mix_targets:
        p = grid_density(DOM, 2001, fn)
        star = metric_project_mix(p, mfam)
        base = divergence_l2(p, mfam.density(star))
        for d in dirs:
            for s in (1e-3, -1e-3, 3e-3, -3e-3, 1e-2, -1e-2, 3e-2, -3e-2):
                cand = star + s * d
                if not mfam.is_admissible(cand):
                    continue
                worst_line = max(worst_line, base - divergence_l2(p, mfam.density(cand)))
    assert worst_line <= 1e-9, f"a line point beats the projection by {worst_line}"
    report(7, f"best grid advantage {worst_gap:.2e}, best line advantage {worst_line:.2e}")


def test_criterion_08_residual_identity_and_lock():
    rng = np.random.default_rng(2028)
    quartic = polynomial_drift([0.1, -0.3, 0.0, -0.8], diffusion=1.3)
    worst_pyth = 0.0
    cases = [(ep_family(2), OU, draw_ep2), (ep_family(2), quartic, draw_ep2),
             (ep_family(4), quartic, draw_ep4)]
    for fam, model, draw in cases:
        for _ in range(20):
            terms = residual_terms(fam, model, draw(rng))
            gap = abs(terms["w_norm_sq"] - terms["proj_norm_sq"] - terms["residual_sq"])
            worst_pyth = max(worst_pyth, gap)
    assert worst_pyth <= 1e-8, f"orthogonality defect {worst_pyth}"

    fam = ep_family(2)
    worst_inv = 0.0
    for _ in range(50):
        worst_inv = max(worst_inv, residual(fam, OU, draw_ep2(rng)))
    assert worst_inv <= 1e-8, f"invariant-family residual {worst_inv}"

    cubic = polynomial_drift([0.0, 0.0, 0.0, -1.0], diffusion=2.0)
    r = residual(fam, cubic, np.array([0.0, -0.5]))
    assert r > 1e-3
    assert abs(r - CUBIC_RESIDUAL_LOCK) <= 1e-12, f"lock drifted: {r!r}"
    report(8, f"orthogonality defect {worst_pyth:.2e}, invariant residual "
              f"{worst_inv:.2e}, cubic lock {r!r}")


def test_criterion_09_reference_solver_quality():
    p0 = grid_density(DOM, 2001, gaussian_pdf_fn(0.5, 0.25))
    snaps = solve_fpk(OU, p0, t_end=1.0, dt=1e-3, sample_stride=50)
    worst_mean = 0.0
    worst_var = 0.0
    for snap in snaps:
        t = snap.time
        mean = snap.expect(lambda x: x)
        var = snap.expect(lambda x: x * x) - mean * mean
        worst_mean = max(worst_mean, abs(mean - 0.5 * np.exp(-t)))
        worst_var = max(worst_var, abs(var - (1.0 - 0.75 * np.exp(-2.0 * t))))
    assert worst_mean <= 1e-3, f"mean error {worst_mean}"
    assert worst_var <= 1e-3, f"variance error {worst_var}"

    from fpkproj import Domain
    wide = Domain(-10.0, 10.0, "unbounded-truncated")

    def l1_error(nx, dt):
        start = grid_density(wide, nx, gaussian_pdf_fn(0.5, 0.25))
        end = solve_fpk(OU, start, t_end=0.5, dt=dt, sample_stride=int(round(0.5 / dt)))[-1]
        m = 0.5 * np.exp(-0.5)
        v = 1.0 - 0.75 * np.exp(-1.0)
        exact = gaussian_pdf_fn(m, v)(end.x)
        return float(end.trapezoid_weights @ np.abs(end.values - exact))

    coarse = l1_error(251, 4e-3)
    fine = l1_error(501, 2e-3)
    ratio = coarse / fine
    assert ratio >= 3.0, f"convergence ratio {ratio}"

    dense = solve_fpk(OU, p0, t_end=1.0, dt=1e-3, sample_stride=1)
    masses = np.array([snap.mass() for snap in dense])
    step_drift = float(np.max(np.abs(np.diff(masses))))
    assert step_drift <= 1e-10, f"per-step mass drift {step_drift}"
    report(9, f"mean {worst_mean:.2e}, var {worst_var:.2e}, order ratio "
              f"{ratio:.2f}, mass drift/step {step_drift:.2e}")


def test_criterion_10_kl_matches_fisher_quadratic():
    fam = ep_family(2)
    theta0 = np.array([0.3, -0.55])
    g = fam.fisher_matrix(theta0)

    def kl(theta_a, theta_b):
        # within one family the divergence has the exact convex-dual form
        # psi(b) - psi(a) - (b - a) . eta(a)
        return (fam.log_partition(theta_b) - fam.log_partition(theta_a)
                - (theta_b - theta_a) @ fam.expectation_params(theta_a))

    dirs = [np.array([1.0, 0.0]), np.array([0.0, 1.0]),
            np.array([1.0, 1.0]) / np.sqrt(2.0),
            np.array([1.0, -1.0]) / np.sqrt(2.0), np.array([0.6, -0.8])]
    scales = (1e-2, 5e-3, 2.5e-3)
    noise_floor = 1e-7
    worst_growth = 0.0
    worst_half = 0.0
    for u in dirs:
        quad = float(u @ g @ u)
        r = np.array([abs(kl(theta0, theta0 + s * u) - 0.5 * s * s * quad) / s**3
                      for s in scales])
        # halving dtheta twice must not grow the third-order ratio beyond 4x
        growth = r[1:].max() / max(r[0], noise_floor)
        worst_growth = max(worst_growth, growth)
        # and the quadratic term itself carries the one-half factor: the
        # defect against the unhalved form sits at 50 percent exactly
        s = scales[-1]
        half = abs(kl(theta0, theta0 + s * u) - s * s * quad) / (s * s * quad)
        worst_half = max(worst_half, abs(half - 0.5))
    assert worst_growth <= 4.0, f"ratio grew by {worst_growth}"
    assert worst_half <= 0.05, f"quadratic coefficient off by {worst_half}"
    report(10, f"max ratio growth {worst_growth:.3f} (<= 4), "
               f"half-factor deviation {worst_half:.2e}")


def test_criterion_11_integrator_is_fourth_order():
    ode = make_ode(ep_family(2), OU, "ada-ef")
    exact = np.array([0.5 * np.exp(-1.0), 1.0 + 0.25 * np.exp(-2.0)])
    errs = []
    for dt in (0.1, 0.05):
        traj = integrate_ode(ode, np.array([0.5, 1.25]), t_end=1.0, dt=dt)
        errs.append(float(np.max(np.abs(traj.final_state - exact))))
    ratio = errs[0] / errs[1]
    assert 8.0 <= ratio <= 32.0, f"error ratio {ratio}"
    report(11, f"dt-halving error ratio {ratio:.2f} in [8, 32]")


def test_criterion_12_shipped_scenarios_are_reproducible(tmp_path):
    def run_all(target):
        cmd = [sys.executable, "-m", "fpkproj.cli", "run-all", str(SCENARIO_DIR),
               "--output-dir", str(target), "--quiet"]
        res = subprocess.run(cmd, capture_output=True, text=True)
        assert res.returncode == 0, res.stderr
        return res

    t0 = time.perf_counter()
    run_all(tmp_path / "first")
    elapsed = time.perf_counter() - t0
    assert elapsed < 300.0, f"suite took {elapsed:.0f}s"
    run_all(tmp_path / "second")

    first = sorted((tmp_path / "first").rglob("*"))
    second = sorted((tmp_path / "second").rglob("*"))
    rel_first = [p.relative_to(tmp_path / "first") for p in first if p.is_file()]
    rel_second = [p.relative_to(tmp_path / "second") for p in second if p.is_file()]
    assert rel_first == rel_second and len(rel_first) > 0
    for rel in rel_first:
        a = (tmp_path / "first" / rel).read_bytes()
        b = (tmp_path / "second" / rel).read_bytes()
        assert a == b, f"{rel} differs between runs"
    report(12, f"{len(rel_first)} files byte-identical across runs, "
               f"one pass in {elapsed:.1f}s (< 300s)")
