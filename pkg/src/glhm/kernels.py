"""Compactly supported heat-like mollifier and its derived cutoff family.

The profile follows c_m e^{-t} exactly up to the cutoff scale R, then decays
to zero on [R, R+2] through a fixed C^2 quintic taper.  The normalization
constant c_m makes the associated radial kernel integrate to one over R^m.
All derived cutoffs used by the density machinery live here as well:

* P   -- compactly supported antiderivative with P' = -rho,
* psi -- smooth step vanishing for t <= e^{-2R}, equal one for t >= 2e^{-2R},
* phi -- nonincreasing step, one on t <= 1, zero on t >= 2,
* rho_hat  -- rho_r cut off near a plane (psi factor on the normal part),
* rho_tilde -- radial antiderivative of rho_hat in the normal directions,
* psi_T -- the region cutoff phi(r_x/r) phi(r) phi(|Pi_L (x-p)|^2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn

from .errors import NormalizationFailure, QuadratureFailure


def smoothstep(x):
    """C^2 quintic step: 0 below 0, 1 above 1, 6x^5-15x^4+10x^3 between."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return x**3 * (10.0 + x * (-15.0 + 6.0 * x))


def smoothstep_prime(x):
    x = np.asarray(x, dtype=float)
    inside = (x > 0.0) & (x < 1.0)
    xc = np.clip(x, 0.0, 1.0)
    return np.where(inside, 30.0 * xc**2 * (xc - 1.0) ** 2, 0.0)


def smoothstep_second(x):
    x = np.asarray(x, dtype=float)
    inside = (x > 0.0) & (x < 1.0)
    xc = np.clip(x, 0.0, 1.0)
    return np.where(inside, 60.0 * xc * (1.0 - 3.0 * xc + 2.0 * xc**2), 0.0)


def _surface_area(m: int) -> float:
    # area of the unit (m-1)-sphere
    return 2.0 * np.pi ** (m / 2.0) / gamma_fn(m / 2.0)


def unit_ball_volume(k: int) -> float:
    """Volume of the unit k-ball by closed form (k = 0 gives 1)."""
    return float(np.pi ** (k / 2.0) / gamma_fn(k / 2.0 + 1.0))


@dataclass(frozen=True)
class KernelProfile:
    """Mollified heat profile rho with cutoff scale R in dimension m."""

    R: float
    m: int
    c_m: float

    @property
    def support_t(self) -> float:
        return self.R + 2.0

    def support_radius(self, r: float) -> float:
        """Radius of supp rho_r: r sqrt(2(R+2))."""
        return r * np.sqrt(2.0 * (self.R + 2.0))

    def _taper(self, t):
        # the transition multiplier S(t) with S(R)=1, S(R+2)=0, C^2 at both ends
        x = (np.asarray(t, dtype=float) - self.R) / 2.0
        return 1.0 - smoothstep(x)

    def rho(self, t):
        t = np.asarray(t, dtype=float)
        base = self.c_m * np.exp(-np.minimum(t, self.support_t))
        out = np.where(t <= self.R, base, base * self._taper(t))
        return np.where(t >= self.support_t, 0.0, out)

    def rho_dot(self, t):
        t = np.asarray(t, dtype=float)
        base = self.c_m * np.exp(-np.minimum(t, self.support_t))
        x = (t - self.R) / 2.0
        g = smoothstep(x)
        gp = smoothstep_prime(x)
        trans = base * (-(1.0 - g) - 0.5 * gp)
        out = np.where(t <= self.R, -base, trans)
        return np.where(t >= self.support_t, 0.0, out)

    def rho_ddot(self, t):
        t = np.asarray(t, dtype=float)
        base = self.c_m * np.exp(-np.minimum(t, self.support_t))
        x = (t - self.R) / 2.0
        g = smoothstep(x)
        gp = smoothstep_prime(x)
        gpp = smoothstep_second(x)
        trans = base * ((1.0 - g) + gp - 0.25 * gpp)
        out = np.where(t <= self.R, base, trans)
        return np.where(t >= self.support_t, 0.0, out)

    def antiderivative_P(self, t):
        """P(t) = int_t^inf rho(s) ds; compactly supported with P' = -rho."""
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        tv = np.atleast_1d(t).astype(float)
        out = np.zeros_like(tv)
        tail_R = integrate.quad(lambda s: float(self.rho(s)), self.R, self.support_t,
                                limit=200)[0]
        for i, ti in enumerate(tv):
            if ti >= self.support_t:
                out[i] = 0.0
            elif ti <= self.R:
                out[i] = self.c_m * (np.exp(-ti) - np.exp(-self.R)) + tail_R
            else:
                out[i] = integrate.quad(lambda s: float(self.rho(s)), ti,
                                        self.support_t, limit=200)[0]
        return float(out[0]) if scalar else out

    # -- rescalings ---------------------------------------------------------

    def rho_r(self, r: float, y):
        """rho_r(y) = r^{-m} rho(|y|^2 / 2r^2) for points y (last axis = m)."""
        y = np.asarray(y, dtype=float)
        t = np.sum(y * y, axis=-1) / (2.0 * r * r)
        return self.rho(t) / r**self.m

    def rho_dot_r(self, r: float, y):
        y = np.asarray(y, dtype=float)
        t = np.sum(y * y, axis=-1) / (2.0 * r * r)
        return self.rho_dot(t) / r**self.m


def build_kernel(R: float, m: int) -> KernelProfile:
    """Construct the profile and compute c_m by radial quadrature.

    Requires R >= 4 and m in {2, 3}.  Raises NormalizationFailure when the
    quadrature does not converge cleanly.
    """
    if R < 4:
        raise ValueError("cutoff scale R must be >= 4")
    if m not in (2, 3):
        raise ValueError("domain dimension m must be 2 or 3")
    raw = KernelProfile(R=float(R), m=int(m), c_m=1.0)

    def integrand(s):
        return raw.rho(s * s / 2.0) * s ** (m - 1)

    edge1 = np.sqrt(2.0 * R)
    edge2 = np.sqrt(2.0 * (R + 2.0))
    total = 0.0
    for a, b in ((0.0, edge1), (edge1, edge2)):
        val, err = integrate.quad(integrand, a, b, limit=400, epsabs=1e-13,
                                  epsrel=1e-12)
        if not np.isfinite(val) or err > 1e-8:
            raise NormalizationFailure(f"radial quadrature error {err:.2e}")
        total += val
    mass = _surface_area(m) * total
    if mass <= 0:
        raise NormalizationFailure("nonpositive kernel mass")
    return KernelProfile(R=float(R), m=int(m), c_m=1.0 / mass)


def kernel_eval(profile: KernelProfile, t):
    """Evaluate (rho, rho_dot, rho_ddot) at parameter t >= 0."""
    return profile.rho(t), profile.rho_dot(t), profile.rho_ddot(t)


def kernel_scaled(profile: KernelProfile, r: float, y):
    """Evaluate (rho_r(y), rho_dot_r(y)) at scale r > 0."""
    if r <= 0:
        raise ValueError("scale r must be positive")
    return profile.rho_r(r, y), profile.rho_dot_r(r, y)


# -- cutoff family ----------------------------------------------------------


def psi_step(profile: KernelProfile, t):
    """Smooth step: 0 for t <= e^{-2R}, 1 for t >= 2 e^{-2R}."""
    a = np.exp(-2.0 * profile.R)
    return smoothstep((np.asarray(t, dtype=float) - a) / a)


def phi_step(t):
    """Nonincreasing step: 1 on t <= 1, 0 on t >= 2."""
    return 1.0 - smoothstep(np.asarray(t, dtype=float) - 1.0)


def l_cutoff(profile: KernelProfile, y, L, r: float):
    """rho_hat_r(y; L) = rho_r(y) psi(|Pi_{L-perp}(y)|^2 / 2r^2).

    L is a Projector onto the plane; the cutoff removes the kernel mass
    within ~ r e^{-R} of the plane.
    """
    y = np.asarray(y, dtype=float)
    perp = y - L.apply(y)
    t_perp = np.sum(perp * perp, axis=-1) / (2.0 * r * r)
    return profile.rho_r(r, y) * psi_step(profile, t_perp)


def radial_antiderivative_rho_tilde(profile: KernelProfile, y, L, r: float):
    """rho_tilde_r(y; L) by one-dimensional quadrature of its closed form.

    Defined so that the normal gradient satisfies
    Pi_{L-perp} grad rho_tilde = -(Pi_{L-perp} y / r^2) rho_hat_r(y; L);
    constant in the normal directions where the psi factor vanishes.
    """
    y = np.asarray(y, dtype=float)
    tang = L.apply(y)
    perp = y - tang
    s0 = float(np.linalg.norm(perp))
    q_tang = float(np.sum(tang * tang))
    s_max_sq = 2.0 * r * r * (profile.R + 2.0) - q_tang
    if s_max_sq <= s0 * s0:
        return 0.0
    s_max = np.sqrt(s_max_sq)

    def integrand(s):
        t_perp = s * s / (2.0 * r * r)
        t_full = (s * s + q_tang) / (2.0 * r * r)
        return float(psi_step(profile, t_perp) * profile.rho(t_full)) * s

    val, err = integrate.quad(integrand, s0, s_max, limit=400, epsabs=1e-14,
                              epsrel=1e-11)
    if not np.isfinite(val):
        raise QuadratureFailure("rho_tilde quadrature diverged")
    return val / (r ** profile.m * r * r)


def region_cutoff_psi_T(x, r: float, r_x: float, p, L_A) -> float:
    """psi_T(x, r) = phi(r_x / r) phi(r) phi(|Pi_{L_A}(x - p)|^2).

    Vanishes when r <= r_x / 2 or the tangential offset of x from the
    anchor p exceeds the unit window; equals one when r_x <= r <= 1 and
    the offset is at most one.
    """
    if r <= 0:
        raise ValueError("scale r must be positive")
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    tang = L_A.apply(x - p)
    off2 = float(np.sum(tang * tang))
    return float(phi_step(r_x / r) * phi_step(r) * phi_step(off2))


# -- property report --------------------------------------------------------


@dataclass
class KernelCheckRow:
    clause: str
    measured: float
    bound: float
    passed: bool


@dataclass
class KernelReport:
    R: float
    m: int
    c_m: float
    rows: list

    @property
    def all_passed(self) -> bool:
        return all(row.passed for row in self.rows)

    def measured(self, clause: str) -> float:
        for row in self.rows:
            if row.clause == clause:
                return row.measured
        raise KeyError(clause)

    def to_text(self) -> str:
        lines = [f"kernel profile R={self.R:g} m={self.m} c_m={self.c_m:.10e}"]
        for row in self.rows:
            status = "pass" if row.passed else "FAIL"
            lines.append(
                f"  {row.clause:<28s} measured={row.measured: .6e} "
                f"bound={row.bound: .6e} [{status}]"
            )
        lines.append(f"overall: {'pass' if self.all_passed else 'FAIL'}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        lines = ["clause,measured,bound,passed"]
        for row in self.rows:
            lines.append(f"{row.clause},{row.measured!r},{row.bound!r},{int(row.passed)}")
        return "\n".join(lines) + "\n"


def verify_kernel(profile: KernelProfile, n_samples: int = 10000,
                  seed: int = 0) -> KernelReport:
    """Measure every profile property the density formulas rely on.

    Reports pass/fail plus the measured constant for each clause: the
    normalization residual, sign and range of the derivatives, the
    exponential-comparison bounds with factor 1.21, the rho <= C (-rho_dot)
    comparison, the exact transition bound on |rho + rho_dot|, and the
    ball-inclusion comparison between rescalings.
    """
    R, m, c = profile.R, profile.m, profile.c_m
    rng = np.random.default_rng(seed)
    rows = []

    # normalization residual via independent radial quadrature in s
    def integrand(s):
        return profile.rho(s * s / 2.0) * s ** (m - 1)

    edges = (0.0, np.sqrt(2.0 * R), np.sqrt(2.0 * (R + 2.0)))
    mass = _surface_area(m) * sum(
        integrate.quad(integrand, a, b, limit=400, epsabs=1e-13, epsrel=1e-12)[0]
        for a, b in zip(edges[:-1], edges[1:])
    )
    rows.append(KernelCheckRow("normalization_residual", abs(mass - 1.0), 1e-6,
                               abs(mass - 1.0) <= 1e-6))

    t_all = np.linspace(0.0, R + 2.0, n_samples)
    t_trans = np.linspace(R, R + 2.0, n_samples)

    rho_a, dot_a, ddot_a = kernel_eval(profile, t_all)
    rows.append(KernelCheckRow("rho_dot_nonpositive", float(dot_a.max()), 0.0,
                               bool(dot_a.max() <= 0.0)))
    rows.append(KernelCheckRow("rho_ddot_nonnegative", float(ddot_a.min()), 0.0,
                               bool(ddot_a.min() >= -1e-15)))
    ddot_t = profile.rho_ddot(t_trans)
    cap = c * np.exp(-R)
    rows.append(KernelCheckRow("rho_ddot_transition_cap", float(ddot_t.max()),
                               cap, bool(ddot_t.max() <= cap * (1.0 + 1e-12))))

    # clause (1): -rho_dot - t rho_dot + t^2 rho_ddot <= C min(rho, -rho_dot)(t/1.21)
    lhs = -dot_a - t_all * dot_a + t_all**2 * ddot_a
    t_shift = t_all / 1.21
    denom = np.minimum(profile.rho(t_shift), -profile.rho_dot(t_shift))
    ok = denom > 0
    c1 = float(np.max(lhs[ok] / denom[ok]))
    rows.append(KernelCheckRow("lemma_clause1_C", c1, np.inf, np.isfinite(c1)))

    # clause (2): rho <= C (-rho_dot) wherever rho > 0
    pos = rho_a > 0
    c2 = float(np.max(rho_a[pos] / (-dot_a[pos])))
    rows.append(KernelCheckRow("lemma_clause2_C", c2, np.inf, np.isfinite(c2)))

    # clause (3): rho + rho_dot = 0 exactly on [0, R]; bounded by 2 c e^{-R} after
    t_exp = np.linspace(0.0, R, n_samples)
    exact = float(np.max(np.abs(profile.rho(t_exp) + profile.rho_dot(t_exp))))
    rows.append(KernelCheckRow("lemma_clause3_pure_exp", exact, 0.0, exact == 0.0))
    sup3 = float(np.max(np.abs(profile.rho(t_trans) + profile.rho_dot(t_trans))))
    rows.append(KernelCheckRow("lemma_clause3_transition", sup3, 2.0 * cap,
                               sup3 <= 2.0 * cap))

    # clause (4): ball inclusion comparison rho_r(y-x) <= C rho_s(y-x')
    ratios = []
    for _ in range(400):
        r = 1.0
        s = float(rng.uniform(1.0, 10.0))
        # B_r(0) inside B_s(x') requires |x'| <= s - r
        xp = rng.normal(size=m)
        nrm = np.linalg.norm(xp)
        xp = xp / nrm * rng.uniform(0.0, s - r) if nrm > 0 else xp * 0.0
        y = rng.normal(size=m)
        ny = np.linalg.norm(y)
        y = y / ny * rng.uniform(0.0, 0.98 * profile.support_radius(r))
        num = float(profile.rho_r(r, y))
        den = float(profile.rho_r(s, y - xp))
        if num > 0 and den > 0:
            ratios.append(num / den)
    c4 = float(np.max(ratios))
    rows.append(KernelCheckRow("lemma_clause4_C", c4, np.inf, np.isfinite(c4)))

    # compact support
    sup_out = float(np.max(np.abs(profile.rho(np.linspace(R + 2.0, R + 6.0, 64)))))
    rows.append(KernelCheckRow("support_outside_zero", sup_out, 0.0, sup_out == 0.0))

    return KernelReport(R=R, m=m, c_m=c, rows=rows)
