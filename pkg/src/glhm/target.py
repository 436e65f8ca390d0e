"""Unit-sphere target and the smooth capped penalty driving the relaxation.

The target is the unit sphere S^{n-1} in R^n, so the distance and the
nearest-point map are closed-form.  The penalty equals squared distance
close to the sphere, is constant far away, and is bridged by the unique
C^2 monotone quintic in squared distance on the band in between.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NearFocalSet


def _blend_g(s):
    # quintic with g(0)=0, g'(0)=1, g''(0)=0, g(1)=1, g'(1)=g''(1)=0
    return s + 4.0 * s**3 - 7.0 * s**4 + 3.0 * s**5


def _blend_g_prime(s):
    return 1.0 + 12.0 * s**2 - 28.0 * s**3 + 15.0 * s**4


@dataclass(frozen=True)
class PenaltyProfile:
    """Capped squared-distance penalty profile in the variable w = dist^2.

    Exact branches: F = w for w < gamma^2, F = 4 gamma^2 for w >= 4 gamma^2;
    the transition on [gamma^2, 4 gamma^2] is the unique monotone quintic in
    w matching value and first two derivatives at both ends.
    """

    gamma: float

    def value_from_w(self, w):
        g2 = self.gamma**2
        w = np.asarray(w, dtype=float)
        s = np.clip((w - g2) / (3.0 * g2), 0.0, 1.0)
        blended = g2 + 3.0 * g2 * _blend_g(s)
        return np.where(w < g2, w, np.where(w >= 4.0 * g2, 4.0 * g2, blended))

    def dvalue_dw(self, w):
        g2 = self.gamma**2
        w = np.asarray(w, dtype=float)
        s = np.clip((w - g2) / (3.0 * g2), 0.0, 1.0)
        return np.where(w < g2, 1.0, np.where(w >= 4.0 * g2, 0.0, _blend_g_prime(s)))


@dataclass(frozen=True)
class TargetSphere:
    """Unit sphere S^{n-1} embedded in R^n with its tubular-neighborhood data.

    Attributes
    ----------
    n : intrinsic dimension + 1 convention is not used; n is the ambient
        dimension and the sphere is S^{n-1} (default n = 3, so S^2).
    curvature_bound : sectional-curvature bound of the unit sphere (= 1).
    gamma : tubular-neighborhood radius on which dist^2 is used exactly.
    gamma_floor : guard radius around the focal point at the origin.
    """

    n: int = 3
    gamma: float = 0.4
    gamma_floor: float = 0.05
    curvature_bound: float = 1.0
    penalty_profile: PenaltyProfile = field(default=None)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("ambient dimension must be >= 2")
        if not (0.0 < self.gamma <= 0.5):
            raise ValueError("gamma must lie in (0, 1/2]")
        if self.penalty_profile is None:
            object.__setattr__(self, "penalty_profile", PenaltyProfile(self.gamma))

    @property
    def J(self) -> int:
        return self.n

    def distance(self, p):
        """Distance | |p| - 1 | to the sphere; total and vectorized."""
        p = np.asarray(p, dtype=float)
        return np.abs(np.linalg.norm(p, axis=-1) - 1.0)

    def project(self, p):
        """Nearest-point map p / |p|.

        Raises NearFocalSet when |p| < gamma_floor: the caller is about to
        evaluate the smooth branch of the distance where it is not smooth.
        """
        p = np.asarray(p, dtype=float)
        norm = np.linalg.norm(p, axis=-1)
        if np.any(norm < self.gamma_floor):
            raise NearFocalSet(
                f"|p| = {float(np.min(norm)):.3g} < gamma_floor = {self.gamma_floor}"
            )
        return p / norm[..., None]

    def penalty(self, p):
        """Penalty F(p): squared distance near the sphere, capped at 4 gamma^2."""
        p = np.asarray(p, dtype=float)
        d = self.distance(p)
        return self.penalty_profile.value_from_w(d * d)

    def penalty_from_norm(self, norm):
        """Penalty evaluated from precomputed |p| (grid fast path)."""
        d = np.abs(np.asarray(norm, dtype=float) - 1.0)
        return self.penalty_profile.value_from_w(d * d)

    def penalty_gradient(self, p):
        """Gradient f = grad F; vanishes on the sphere and on the cap.

        On the quadratic branch f(p) = 2 dist(p) grad dist(p) with
        grad dist = sign(|p| - 1) p / |p|; the blend multiplies by the
        quintic's derivative in w = dist^2.
        """
        p = np.asarray(p, dtype=float)
        norm = np.linalg.norm(p, axis=-1)
        signed = norm - 1.0
        d = np.abs(signed)
        w = d * d
        dFdw = self.penalty_profile.dvalue_dw(w)
        # f = dF/dw * 2 d * sign * p/|p| = dF/dw * 2 (|p|-1) * p/|p|
        safe = np.maximum(norm, self.gamma_floor)
        coef = np.where(d >= 2.0 * self.gamma, 0.0, 2.0 * dFdw * signed / safe)
        return coef[..., None] * p
