"""Tangent-space projection of Fokker-Planck dynamics onto a family.

For an exponential family the projected flow in canonical coordinates is

    theta_dot = g(theta)^{-1} v(theta),   v_i = E_theta[L c_i],

and in expectation coordinates simply eta_dot_i = E_eta[L c_i]; the two
are the same flow because d eta = g d theta.  For a simple mixture family
the metric is constant and

    theta_dot = gamma^{-1} v(theta),
    v_j = E_theta[L (q_j - q_{n+1})] = sum_k theta_hat_k <L(q_j - q_{n+1}), q_k>,

with the sum running over all n+1 components, so v is affine in theta.
The expectation form m_dot = v(theta(m)) and a Galerkin discretization on
the basis (q_1 - q_{n+1}, ..., q_n - q_{n+1}, q_{n+1}) with the last
coefficient frozen at 1 reproduce the identical vector field.

The residual of the projection at theta is the L2 distance, in the
sqrt-density geometry, between L* p and its tangent-space image:

    w = L* p / (2 sqrt(p)),  u_i = sqrt(p) (c_i - eta_i) / 2,
    R^2 = ||w||^2 - 4 b' g^{-1} b,  b_i = <w, u_i>.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import (
    DegenerateBasis,
    FpkprojError,
    NonFiniteIntegrand,
    TrajectoryExit,
    ValidationError,
)
from .expfamily import ExpFamily
from .mixture import MixtureFamily
from .sde import SdeModel

METHODS = ("tangent-ef", "ada-ef", "tangent-mix", "ada-mix", "galerkin")
EF_METHODS = ("tangent-ef", "ada-ef")
MIX_METHODS = ("tangent-mix", "ada-mix", "galerkin")


def _model_arrays(model: SdeModel, x: np.ndarray):
    return np.asarray(model.drift(x), dtype=float), np.asarray(model.diffusion(x), dtype=float)


def generator_on_stats(fam: ExpFamily, model: SdeModel) -> np.ndarray:
    """(n, m) array of (L c_i)(x_j) at the family's quadrature nodes."""
    f, a = _model_arrays(model, fam.rule.nodes)
    c1, c2 = fam.stat_derivative_values()
    return f * c1 + 0.5 * a * c2


def ef_theta_rhs(fam: ExpFamily, model: SdeModel, theta) -> np.ndarray:
    """Canonical-coordinate projected drift g(theta)^{-1} E_theta[L c]."""
    lc = generator_on_stats(fam, model)
    pvals = fam.density_values(theta)
    v = lc @ (fam.rule.weights * pvals)
    g = fam.fisher_matrix(theta)
    return cho_solve(cho_factor(g, lower=True), v)


def ef_eta_rhs(fam: ExpFamily, model: SdeModel, eta, initial=None) -> np.ndarray:
    """Expectation-coordinate projected drift E_eta[L c].

    The canonical point is recovered by Newton inversion; `initial` seeds
    the iteration when a good guess is available.
    """
    theta = fam.expectation_to_canonical(np.asarray(eta, dtype=float), initial=initial)
    lc = generator_on_stats(fam, model)
    pvals = fam.density_values(theta)
    return lc @ (fam.rule.weights * pvals)


def mixture_generator_matrix(fam: MixtureFamily, model: SdeModel) -> np.ndarray:
    """(n, n+1) matrix B_jk = <L(q_j - q_{n+1}), q_k>."""
    f, a = _model_arrays(model, fam.rule.nodes)
    q1, q2 = fam.component_derivative_values()
    d1 = q1[:-1] - q1[-1]
    d2 = q2[:-1] - q2[-1]
    ld = f * d1 + 0.5 * a * d2
    return (ld * fam.rule.weights) @ fam.component_values().T


def mixture_theta_rhs(fam: MixtureFamily, model: SdeModel, theta) -> np.ndarray:
    """Weight-coordinate projected drift gamma^{-1} E_theta[L(q - q_{n+1})]."""
    theta = fam.require_admissible(theta)
    b = mixture_generator_matrix(fam, model)
    v = b @ fam.theta_hat(theta)
    return np.linalg.solve(fam.gamma, v)


def mixture_m_rhs(fam: MixtureFamily, model: SdeModel, m) -> np.ndarray:
    """Expectation-coordinate projected drift E_m[L(q - q_{n+1})]."""
    theta = fam.expectations_to_weights(m)
    b = mixture_generator_matrix(fam, model)
    return b @ fam.theta_hat(theta)


def galerkin_rhs(fam: MixtureFamily, model: SdeModel, coeffs) -> np.ndarray:
    """Weak-form coefficient dynamics on the basis (q_i - q_{n+1}, q_{n+1}).

    The last coefficient is constrained to 1 (mass) and its equation is
    dropped; the returned vector is d/dt of the first n coefficients.
    Assembled independently of the projection formulas: full mass and
    stiffness matrices first, constraint elimination second.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (fam.n + 1,):
        raise ValidationError(f"expected {fam.n + 1} coefficients")
    if abs(coeffs[-1] - 1.0) > 1e-12:
        raise ValidationError("the last coefficient is the mass constraint and must equal 1")
    w = fam.rule.weights
    q = fam.component_values()
    basis = np.vstack([fam.tangent_values(), q[-1]])
    mass = (basis * w) @ basis.T
    f, a = _model_arrays(model, fam.rule.nodes)
    q1, q2 = fam.component_derivative_values()
    d1 = q1[:-1] - q1[-1]
    d2 = q2[:-1] - q2[-1]
    lphi = f * d1 + 0.5 * a * d2
    stiffness = (lphi * w) @ basis.T
    lhs = mass[:-1, :-1]
    try:
        factor = cho_factor(lhs, lower=True)
    except np.linalg.LinAlgError as err:
        raise DegenerateBasis("mass matrix is singular on the constrained subspace") from err
    return cho_solve(factor, stiffness @ coeffs)


def residual_terms(fam: ExpFamily, model: SdeModel, theta) -> dict:
    """All pieces of the orthogonal decomposition of L* p at theta.

    Uses the sqrt-free form (L* p)/p = -(f' + f S') + (a'' + 2 a' S' +
    a (S'' + S'^2))/2 with S = theta . c, so no square roots of small
    densities appear.
    """
    theta = fam.require_admissible(theta)
    x = fam.rule.nodes
    w = fam.rule.weights
    f, a = _model_arrays(model, x)
    f1 = np.asarray(model.drift.d1(x), dtype=float)
    a1 = np.asarray(model.diffusion.d1(x), dtype=float)
    a2 = np.asarray(model.diffusion.d2(x), dtype=float)
    c1, c2 = fam.stat_derivative_values()
    s1 = theta @ c1
    s2 = theta @ c2
    ratio = -(f1 + f * s1) + 0.5 * (a2 + 2.0 * a1 * s1 + a * (s2 + s1 * s1))
    pvals = fam.density_values(theta)
    if not np.all(np.isfinite(ratio)):
        bad = int(np.flatnonzero(~np.isfinite(ratio))[0])
        raise NonFiniteIntegrand("adjoint ratio is not finite", node=float(x[bad]), index=bad)
    wp = w * pvals
    eta = fam.stat_values() @ wp
    w_norm_sq = float(wp @ (ratio * ratio)) / 4.0
    centered = fam.stat_values() - eta[:, None]
    b = (centered * wp) @ ratio / 4.0
    g = fam.fisher_matrix(theta)
    coeff = cho_solve(cho_factor(g, lower=True), b)
    proj_norm_sq = 4.0 * float(b @ coeff)
    tangent = coeff @ centered
    proj_pointwise_sq = float(wp @ (tangent * tangent))
    # integrating the squared pointwise difference avoids the catastrophic
    # cancellation of w_norm_sq - proj_norm_sq when the flow stays in the
    # family, where the residual is zero to round-off
    diff = 0.5 * ratio - 2.0 * tangent
    residual_sq = float(wp @ (diff * diff))
    return {
        "w_norm_sq": w_norm_sq,
        "proj_norm_sq": proj_norm_sq,
        "proj_pointwise_sq": proj_pointwise_sq,
        "residual_sq": residual_sq,
    }


def residual(fam: ExpFamily, model: SdeModel, theta) -> float:
    """Norm of the component of L* p orthogonal to the tangent space."""
    r_sq = residual_terms(fam, model, theta)["residual_sq"]
    return float(np.sqrt(max(r_sq, 0.0)))


@dataclass(frozen=True)
class ClampEvent:
    step: int
    time: float
    raw_state: tuple


@dataclass
class Trajectory:
    """Dense record of an integrated projected flow."""

    times: np.ndarray
    states: np.ndarray
    coordinates: str
    residuals: np.ndarray | None = None
    clamped: np.ndarray | None = None
    clamp_events: list = field(default_factory=list)

    @property
    def final_state(self):
        return self.states[-1]


class ProjectedOde:
    """Family + model + coordinate choice, with cached assembly.

    The cached generator arrays make each right-hand-side evaluation a
    matter of one density evaluation and a few small matvecs.
    """

    def __init__(self, family, model: SdeModel, method: str):
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}")
        if method in EF_METHODS and not isinstance(family, ExpFamily):
            raise ValueError("method/family mismatch")
        if method in MIX_METHODS and not isinstance(family, MixtureFamily):
            raise ValueError("method/family mismatch")
        self.family = family
        self.model = model
        self.method = method
        self.coordinates = "expectation" if method in ("ada-ef", "ada-mix") else "canonical"
        self.dim = family.n
        if isinstance(family, ExpFamily):
            self._lc = generator_on_stats(family, model)
            self._b = None
        else:
            self._lc = None
            self._b = mixture_generator_matrix(family, model)

    # -- right-hand side ------------------------------------------------

    def rhs(self, state, theta_guess=None) -> np.ndarray:
        fam = self.family
        if self.method == "tangent-ef":
            pvals = fam.density_values(state)
            v = self._lc @ (fam.rule.weights * pvals)
            g = fam.fisher_matrix(state)
            return cho_solve(cho_factor(g, lower=True), v)
        if self.method == "ada-ef":
            theta = fam.expectation_to_canonical(state, initial=theta_guess)
            pvals = fam.density_values(theta)
            return self._lc @ (fam.rule.weights * pvals)
        if self.method == "tangent-mix":
            return np.linalg.solve(fam.gamma, self._b @ fam.theta_hat(fam.require_admissible(state)))
        if self.method == "ada-mix":
            theta = fam.expectations_to_weights(state)
            return self._b @ fam.theta_hat(theta)
        # galerkin: state holds the free coefficients, mass coefficient pinned at 1
        return galerkin_rhs(fam, self.model, np.concatenate([state, [1.0]]))

    # -- coordinate plumbing ---------------------------------------------

    def theta_at(self, state, guess=None) -> np.ndarray:
        """Canonical/weight coordinates of the current state."""
        if self.method == "ada-ef":
            return self.family.expectation_to_canonical(state, initial=guess)
        if self.method == "ada-mix":
            return self.family.expectations_to_weights(state)
        return np.asarray(state, dtype=float)

    def prepare_initial(self, state) -> np.ndarray:
        state = np.asarray(state, dtype=float)
        if state.shape != (self.dim,):
            raise ValueError(f"initial state must have length {self.dim}")
        if self.method in ("tangent-ef",):
            self.family.require_admissible(state)
        elif self.method in ("tangent-mix", "galerkin"):
            self.family.require_admissible(state)
        elif self.method == "ada-mix":
            self.family.expectations_to_weights(state)
        return state

    def constrain(self, state):
        """Post-step admissibility repair; returns (state, clamped?, raw)."""
        fam = self.family
        if self.method in ("tangent-mix", "galerkin"):
            clamped, changed = fam.clamp_weights(state)
            return clamped, changed, state
        if self.method == "ada-mix":
            theta = np.linalg.solve(fam.gamma, state - fam.beta)
            clamped, changed = fam.clamp_weights(theta)
            if changed:
                return fam.gamma @ clamped + fam.beta, True, state
            return state, False, state
        if self.method == "tangent-ef" and not fam.is_admissible(state):
            raise TrajectoryExit(f"canonical state left the admissible set: {state}")
        return state, False, state


def make_ode(family, model: SdeModel, method: str) -> ProjectedOde:
    return ProjectedOde(family, model, method)


def integrate_ode(ode: ProjectedOde, initial_state, t_end: float, dt: float,
                  record_residual: bool = False) -> Trajectory:
    """Classic fixed-step fourth-order Runge-Kutta integration.

    Residual recording is available for exponential-family methods only.
    Mixture weights are clamped to the margin-shrunk simplex after each
    step and every clamp is recorded.
    """
    if dt <= 0 or t_end <= 0:
        raise ValidationError("dt and t_end must be positive")
    nsteps = int(round(t_end / dt))
    if nsteps < 1 or abs(nsteps * dt - t_end) > 1e-8 * max(1.0, t_end):
        raise ValidationError("t_end must be an integral number of steps")
    if record_residual and not isinstance(ode.family, ExpFamily):
        raise ValidationError("residual recording applies to exponential families only")

    y = ode.prepare_initial(initial_state)
    times = dt * np.arange(nsteps + 1)
    states = np.empty((nsteps + 1, ode.dim))
    clamped = np.zeros(nsteps + 1, dtype=bool)
    residuals = np.empty(nsteps + 1) if record_residual else None
    events = []
    states[0] = y

    guess = None
    if ode.method == "ada-ef":
        guess = ode.theta_at(y, None)
    if record_residual:
        residuals[0] = residual(ode.family, ode.model, ode.theta_at(y, guess))

    half = 0.5 * dt
    sixth = dt / 6.0
    for k in range(1, nsteps + 1):
        try:
            k1 = ode.rhs(y, guess)
            k2 = ode.rhs(y + half * k1, guess)
            k3 = ode.rhs(y + half * k2, guess)
            k4 = ode.rhs(y + dt * k3, guess)
            y = y + sixth * (k1 + 2.0 * (k2 + k3) + k4)
            y, was_clamped, raw = ode.constrain(y)
            if ode.method == "ada-ef":
                guess = ode.theta_at(y, guess)
            if record_residual:
                residuals[k] = residual(ode.family, ode.model, ode.theta_at(y, guess))
        except TrajectoryExit as err:
            raise TrajectoryExit(f"step {k}: {err}", step=k) from err
        except FpkprojError as err:
            raise TrajectoryExit(f"rhs failed at step {k}: {err}", step=k) from err
        if was_clamped:
            events.append(ClampEvent(step=k, time=float(times[k]), raw_state=tuple(raw)))
            clamped[k] = True
        states[k] = y
    return Trajectory(times=times, states=states, coordinates=ode.coordinates,
                      residuals=residuals, clamped=clamped, clamp_events=events)
