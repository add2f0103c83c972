"""Time-homogeneous scalar diffusion models dX = f(X) dt + sigma(X) dW.

The model carries the drift f and the squared diffusion a = sigma**2 as
differentiable functions, plus the interval the densities live on.  The
generator acts on observables,

    L phi = f phi' + (a/2) phi'',

and its formal adjoint acts on densities,

    L* p = -(f' p + f p') + (1/2)(a'' p + 2 a' p' + a p''),

so that <L* p, phi> = <p, L phi> for reflecting or rapidly decaying p.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DerivativeUnavailable, ValidationError
from .functions import DifferentiableFn, constant_fn, polynomial_fn
from .quadrature import Domain, default_domain

_PROBE_POINTS = 513


@dataclass(frozen=True)
class SdeModel:
    drift: DifferentiableFn
    diffusion: DifferentiableFn
    domain: Domain
    name: str = "custom"

    def __post_init__(self):
        x = np.linspace(self.domain.lower, self.domain.upper, _PROBE_POINTS)
        a = np.asarray(self.diffusion(x), dtype=float)
        f = np.asarray(self.drift(x), dtype=float)
        if not np.all(np.isfinite(f)):
            raise ValidationError("drift is not finite on the domain")
        if not np.all(np.isfinite(a)) or np.min(a) <= 0:
            raise ValidationError("diffusion coefficient must be positive on the domain")

    def apply_generator(self, phi: DifferentiableFn):
        """Return x -> f(x) phi'(x) + a(x) phi''(x) / 2."""
        if not phi.has_derivatives:
            raise DerivativeUnavailable("generator needs phi with two derivatives")
        f, a = self.drift, self.diffusion

        def l_phi(x):
            return f(x) * phi.d1(x) + 0.5 * a(x) * phi.d2(x)

        return l_phi

    def apply_adjoint(self, p: DifferentiableFn):
        """Return the density-side operator x -> (L* p)(x)."""
        if not p.has_derivatives:
            raise DerivativeUnavailable("adjoint needs p with two derivatives")
        if not (self.drift.has_derivatives and self.diffusion.has_derivatives):
            raise DerivativeUnavailable("adjoint needs differentiable drift and diffusion")
        f, a = self.drift, self.diffusion

        def lstar_p(x):
            return (-(f.d1(x) * p(x) + f(x) * p.d1(x))
                    + 0.5 * (a.d2(x) * p(x) + 2.0 * a.d1(x) * p.d1(x) + a(x) * p.d2(x)))

        return lstar_p


def ornstein_uhlenbeck(kappa: float = 1.0, sigma: float = np.sqrt(2.0),
                       domain: Domain | None = None) -> SdeModel:
    """Mean-reverting linear drift -kappa*x with constant diffusion."""
    if kappa <= 0 or sigma <= 0:
        raise ValidationError("kappa and sigma must be positive")
    if domain is None:
        domain = default_domain()
    return SdeModel(
        drift=polynomial_fn([0.0, -kappa]),
        diffusion=constant_fn(sigma * sigma),
        domain=domain,
        name="ou",
    )


def circle_diffusion(diffusion: float = 2.0) -> SdeModel:
    """Pure diffusion on [0, 2*pi] with reflecting ends."""
    if diffusion <= 0:
        raise ValidationError("diffusion must be positive")
    return SdeModel(
        drift=constant_fn(0.0),
        diffusion=constant_fn(diffusion),
        domain=Domain(0.0, 2.0 * np.pi, kind="bounded-reflecting"),
        name="circle-diffusion",
    )


def polynomial_drift(coeffs, diffusion: float = 2.0,
                     domain: Domain | None = None) -> SdeModel:
    """Polynomial drift (ascending coefficients) with constant diffusion."""
    if diffusion <= 0:
        raise ValidationError("diffusion must be positive")
    if domain is None:
        domain = default_domain()
    return SdeModel(
        drift=polynomial_fn(coeffs),
        diffusion=constant_fn(diffusion),
        domain=domain,
        name="polynomial-drift",
    )
