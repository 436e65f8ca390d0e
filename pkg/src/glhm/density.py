"""Mollified energy densities, partial energies, and best-plane extraction.

Every probe evaluates grid quadratures of the field's energy density and
gradient against the compactly supported heat-like kernel at a scale r.
The best (m-2)-plane at a probe is read off the eigendecomposition of the
second-moment tensor of the gradient; no iterative minimization is needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (BallOutOfDomain, NotIndependent, RankMismatch,
                     SupportOutOfDomain)
from .fields import VectorField
from .kernels import KernelProfile, psi_step as psi_step_of
from .solver import energy_density, gradient_arrays
from .target import TargetSphere


# -- projectors --------------------------------------------------------------


@dataclass(frozen=True)
class Projector:
    """Orthogonal projector onto a k-plane in R^m, stored as its matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.matrix, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError("projector matrix must be square")
        if np.max(np.abs(P - P.T)) > 1e-10:
            raise ValueError("projector must be symmetric")
        if np.max(np.abs(P @ P - P)) > 1e-10:
            raise ValueError("projector must be idempotent")
        object.__setattr__(self, "matrix", P)

    @classmethod
    def from_span(cls, vectors, m: int | None = None) -> "Projector":
        """Projector onto the span of the given vectors (may be empty)."""
        vecs = [np.asarray(v, dtype=float) for v in vectors]
        if not vecs:
            if m is None:
                raise ValueError("need ambient dimension for the empty span")
            return cls(np.zeros((m, m)))
        A = np.stack(vecs, axis=1)
        Q, _ = np.linalg.qr(A)
        rank = np.linalg.matrix_rank(A, tol=1e-12)
        Q = Q[:, :rank]
        return cls(Q @ Q.T)

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def rank(self) -> int:
        return int(round(np.trace(self.matrix)))

    def apply(self, y):
        y = np.asarray(y, dtype=float)
        return y @ self.matrix.T

    def complement(self) -> "Projector":
        return Projector(np.eye(self.m) - self.matrix)


def grassmann_distance(P1: Projector, P2: Projector) -> float:
    """Operator norm of the projector difference (our d_Gr representative)."""
    if P1.rank != P2.rank or P1.m != P2.m:
        raise RankMismatch(f"ranks {P1.rank}/{P2.rank} in R^{P1.m}/R^{P2.m}")
    w = np.linalg.eigvalsh(P1.matrix - P2.matrix)
    return float(np.max(np.abs(w)))


# -- cached per-field arrays --------------------------------------------------


class FieldAnalysis:
    """Precomputed density and gradient arrays of one field at one eps."""

    def __init__(self, field_obj: VectorField, eps: float,
                 target: TargetSphere | None = None):
        self.field = field_obj
        self.eps = float(eps)
        self.target = target or TargetSphere()
        self.domain = field_obj.domain
        self.grads = gradient_arrays(field_obj)  # (m, ..., J)
        self.penalty = self.target.penalty(field_obj.values)
        self.grad_sq = np.sum(self.grads * self.grads, axis=(0, -1))
        self.dens = 0.5 * self.grad_sq + self.penalty / self.eps**2


def _ensure_analysis(field_obj, eps: float,
                     target: TargetSphere | None = None) -> FieldAnalysis:
    if isinstance(field_obj, FieldAnalysis):
        return field_obj
    cache = field_obj.meta.setdefault("_analysis_cache", {})
    key = (float(eps), id(target) if target is not None else None)
    if key not in cache:
        cache.clear()  # keep at most one
        cache[key] = FieldAnalysis(field_obj, eps, target)
    return cache[key]


def _support_check(fa: FieldAnalysis, kernel: KernelProfile, x, r: float):
    x = np.asarray(x, dtype=float)
    rad = kernel.support_radius(r)
    if not fa.domain.contains_ball(x, rad):
        raise SupportOutOfDomain(
            f"kernel support ball radius {rad:.3g} at {np.round(x, 3)} leaves the box"
        )
    return x


class _Local:
    """Kernel-weighted subgrid around one probe."""

    def __init__(self, fa: FieldAnalysis, kernel: KernelProfile, x, r: float):
        dom = fa.domain
        self.x = x
        self.r = r
        self.slices = dom.ball_slices(x, kernel.support_radius(r))
        self.d2 = dom.local_dist2(x, self.slices)
        t = self.d2 / (2.0 * r * r)
        self.rho = kernel.rho(t) / r**kernel.m
        self.rho_dot = kernel.rho_dot(t) / r**kernel.m
        self.offsets = dom.local_offsets(x, self.slices)
        self._fa = fa

    @property
    def dens(self):
        return self._fa.dens[self.slices]

    @property
    def penalty(self):
        return self._fa.penalty[self.slices]

    @property
    def grads(self):
        sl = (slice(None),) + self.slices + (slice(None),)
        return self._fa.grads[sl]

    def offset_vectors(self):
        """(y - x) on the subgrid, shape (..., m)."""
        offs = self.offsets
        m = len(offs)
        if m == 2:
            ox = offs[0][:, None]
            oy = offs[1][None, :]
            return np.stack(np.broadcast_arrays(ox, oy), axis=-1)
        ox = offs[0][:, None, None]
        oy = offs[1][None, :, None]
        oz = offs[2][None, None, :]
        return np.stack(np.broadcast_arrays(ox, oy, oz), axis=-1)

    def directional_grad_sq(self, vec_field):
        """|grad_{v(y)} u|^2 for a per-node direction field v (..., m)."""
        g = self.grads  # (m, ..., J)
        dot = np.einsum("...i,i...c->...c", vec_field, g)
        return np.sum(dot * dot, axis=-1)


# -- densities ----------------------------------------------------------------


def theta_classical(field_obj, eps: float, x, r: float,
                    target: TargetSphere | None = None) -> float:
    """Classical density r^{2-m} int_{B_r(x)} e_eps."""
    fa = _ensure_analysis(field_obj, eps, target)
    x = np.asarray(x, dtype=float)
    if not fa.domain.contains_ball(x, r):
        raise BallOutOfDomain(f"ball radius {r:.3g} at {np.round(x, 3)} leaves the box")
    sl = fa.domain.ball_slices(x, r)
    d2 = fa.domain.local_dist2(x, sl)
    local = fa.dens[sl]
    total = float(np.sum(local[d2 <= r * r]) * fa.domain.h**fa.domain.m)
    return total * r ** (2 - fa.domain.m)


def theta_bar(field_obj, eps: float, kernel: KernelProfile, x, r: float,
              target: TargetSphere | None = None) -> float:
    """Heat-mollified density r^2 int rho_r(y - x) e_eps(y) dy."""
    fa = _ensure_analysis(field_obj, eps, target)
    x = _support_check(fa, kernel, x, r)
    loc = _Local(fa, kernel, x, r)
    return float(r * r * np.sum(loc.rho * loc.dens) * fa.domain.h**fa.domain.m)


def theta_bar_partial(field_obj, eps: float, kernel: KernelProfile, x, r: float,
                      L: Projector, part: str,
                      target: TargetSphere | None = None,
                      return_info: bool = False, hat: bool = False):
    """Partial mollified energies with respect to the plane L.

    part: 'tangential' gives r^2 int rho_r (|Pi_L grad u|^2 + 2F/eps^2);
    'radial'/'angular' split the normal part with weight |Pi_perp(y-x)|^2;
    'perp' is their sum.  Nodes closer than h to the plane through x are
    excluded from the radial/angular split; the exclusion count is
    reported through return_info.  With hat=True the kernel weight is the
    plane cutoff rho_hat (the psi factor removes mass near the plane).
    """
    fa = _ensure_analysis(field_obj, eps, target)
    x = _support_check(fa, kernel, x, r)
    loc = _Local(fa, kernel, x, r)
    h_m = fa.domain.h**fa.domain.m
    info = {"skipped": 0}

    perp = L.complement()
    offs = loc.offset_vectors()
    perp_off = offs @ perp.matrix.T
    s2 = np.sum(perp_off * perp_off, axis=-1)
    weight = loc.rho
    if hat:
        weight = weight * psi_step_of(kernel, s2 / (2.0 * r * r))

    if part == "tangential":
        g = loc.grads
        proj = np.einsum("ij,j...c->i...c", L.matrix, g)
        tang_sq = np.sum(proj * proj, axis=(0, -1))
        val = r * r * np.sum(weight * (tang_sq + 2.0 * loc.penalty / eps**2)) * h_m
        return (float(val), info) if return_info else float(val)

    g = loc.grads
    gp = np.einsum("ij,j...c->i...c", perp.matrix, g)
    perp_grad_sq = np.sum(gp * gp, axis=(0, -1))

    # nodes essentially on the plane: the radial direction is undefined,
    # the s^2 weight makes them O(h^2); skip them in every normal part so
    # that perp = radial + angular holds to rounding
    degenerate = s2 < fa.domain.h**2
    info["skipped"] = int(np.sum(degenerate & (loc.rho > 0)))
    keep = ~degenerate

    if part == "perp":
        val = float(np.sum((weight * s2 * perp_grad_sq)[keep]) * h_m)
        return (val, info) if return_info else val

    radial_raw = loc.directional_grad_sq(perp_off)  # = |grad_{n} u|^2 s^2
    if part == "radial":
        val = float(np.sum((weight * radial_raw)[keep]) * h_m)
    elif part == "angular":
        ang = weight * (s2 * perp_grad_sq - radial_raw)
        val = float(np.sum(ang[keep]) * h_m)
    else:
        raise ValueError(f"unknown part {part!r}")
    return (val, info) if return_info else val


def theta_bar_r_derivative(field_obj, eps: float, kernel: KernelProfile, x,
                           r: float, target: TargetSphere | None = None):
    """r d/dr of the mollified density, by formula and by finite difference.

    formula: int -rho_dot_r |grad_{x-y} u|^2 + r^2 (F/eps^2) rho_r, which is
    what the inner-variation identity gives for critical fields and is
    nonnegative by construction; fd: central difference of theta_bar in r
    with step r/100, scaled by r.
    """
    fa = _ensure_analysis(field_obj, eps, target)
    x = _support_check(fa, kernel, x, 1.01 * r)
    loc = _Local(fa, kernel, x, r)
    h_m = fa.domain.h**fa.domain.m
    offs = loc.offset_vectors()
    dir_sq = loc.directional_grad_sq(offs)  # |grad_{y-x} u|^2 = |grad_{x-y} u|^2
    formula = float(np.sum(-loc.rho_dot * dir_sq
                           + r * r * (loc.penalty / eps**2) * loc.rho) * h_m)
    dr = r / 100.0
    fd = r * (theta_bar(fa, eps, kernel, x, r + dr)
              - theta_bar(fa, eps, kernel, x, r - dr)) / (2.0 * dr)
    return formula, fd


def theta_bar_full_gradient(field_obj, eps: float, kernel: KernelProfile, x,
                            r: float, target: TargetSphere | None = None):
    """Spatial gradient of theta_bar from the inner-variation formula.

    grad_l theta_bar = int rho_dot_r <grad_{x-y} u, grad_l u>.
    """
    fa = _ensure_analysis(field_obj, eps, target)
    x = _support_check(fa, kernel, x, r)
    loc = _Local(fa, kernel, x, r)
    h_m = fa.domain.h**fa.domain.m
    offs = loc.offset_vectors()  # y - x
    g = loc.grads
    dir_grad = np.einsum("...i,i...c->...c", -offs, g)  # grad_{x-y} u
    weighted = loc.rho_dot[..., None] * dir_grad
    spatial = "ab" if fa.domain.m == 2 else "abd"
    vec = np.einsum(f"{spatial}c,j{spatial}c->j", weighted, g) * h_m
    return vec


def theta_bar_gradient(field_obj, eps: float, kernel: KernelProfile, x,
                       r: float, L: Projector,
                       target: TargetSphere | None = None,
                       check_bound: bool = False):
    """Gradient of theta_bar restricted to the plane L.

    With check_bound=True also returns the measured constant in the
    Cauchy-Schwarz comparison r^2 |grad_L theta_bar|^2 <=
    C r d/dr theta_bar(x, r) theta_bar(x, 2r; L).
    """
    full = theta_bar_full_gradient(field_obj, eps, kernel, x, r, target)
    vec = L.matrix @ full
    if not check_bound:
        return vec
    fa = _ensure_analysis(field_obj, eps, target)
    dformula, _ = theta_bar_r_derivative(fa, eps, kernel, x, r)
    tang2r = theta_bar_partial(fa, eps, kernel, x, 2.0 * r, L, "tangential")
    denom = dformula * tang2r
    measured = float(r * r * np.dot(vec, vec) / denom) if denom > 0 else np.inf
    return vec, measured


# -- Q tensor and best planes -------------------------------------------------


@dataclass
class QTensor:
    """Second-moment tensor of the gradient at a probe, eigen-decomposed."""

    x: np.ndarray
    r: float
    matrix: np.ndarray
    eigenvalues: np.ndarray   # descending
    eigenvectors: np.ndarray  # columns, matching order
    unique: bool

    def validate(self):
        lam1 = max(self.eigenvalues[0], 1e-300)
        if self.eigenvalues[-1] < -1e-10 * max(lam1, 1.0):
            raise ValueError("Q tensor not positive semidefinite")
        res = self.matrix @ self.eigenvectors - self.eigenvectors * self.eigenvalues
        if np.max(np.abs(res)) > 1e-8 * max(lam1, 1e-30):
            raise ValueError("eigen-decomposition residual too large")


def q_tensor(field_obj, kernel: KernelProfile, x, r: float,
             eps: float | None = None,
             target: TargetSphere | None = None) -> QTensor:
    """Q(x,r)[v,w] = r^2 int rho_r(y-x) <grad_v u, grad_w u>."""
    fa = _ensure_analysis(field_obj, eps if eps is not None else 1.0, target)
    x = _support_check(fa, kernel, x, r)
    loc = _Local(fa, kernel, x, r)
    h_m = fa.domain.h**fa.domain.m
    g = loc.grads
    gw = g * loc.rho[None, ..., None]
    spatial = "ab" if fa.domain.m == 2 else "abd"
    Q = r * r * np.einsum(f"i{spatial}c,j{spatial}c->ij", gw, g) * h_m
    Q = 0.5 * (Q + Q.T)
    w, V = np.linalg.eigh(Q)
    order = np.argsort(w)[::-1]
    w = w[order]
    V = V[:, order]
    # deterministic sign: first component above tolerance made positive
    for j in range(V.shape[1]):
        col = V[:, j]
        nz = np.nonzero(np.abs(col) > 1e-8)[0]
        if nz.size and col[nz[0]] < 0:
            V[:, j] = -col
    m = fa.domain.m
    if m > 2:
        gap = w[1] - w[2]
        unique = bool(gap > 1e-6 * max(w[0], 1e-300))
    else:
        unique = True
    qt = QTensor(x=np.asarray(x, dtype=float), r=r, matrix=Q,
                 eigenvalues=w, eigenvectors=V, unique=unique)
    qt.validate()
    return qt


def best_plane(field_obj, eps: float, kernel: KernelProfile, x, r: float,
               target: TargetSphere | None = None):
    """Best (m-2)-plane: span of the m-2 smallest eigenvectors of Q.

    Returns (Projector, QTensor, theta_bar(x, r; L), uniqueness flag).
    """
    fa = _ensure_analysis(field_obj, eps, target)
    qt = q_tensor(fa, kernel, x, r, eps=eps)
    m = fa.domain.m
    if m == 2:
        plane = Projector(np.zeros((2, 2)))
    else:
        V = qt.eigenvectors[:, 2:]
        plane = Projector(V @ V.T)
    theta_L = theta_bar_partial(fa, eps, kernel, x, r, plane, "tangential")
    return plane, qt, float(theta_L), qt.unique


def symmetry_classify(field_obj, eps: float, kernel: KernelProfile, x,
                      r: float, delta: float,
                      target: TargetSphere | None = None):
    """(m-2, delta)-symmetry test: tangential plus radial deficit <= delta."""
    fa = _ensure_analysis(field_obj, eps, target)
    plane, _, theta_L, _ = best_plane(fa, eps, kernel, x, r)
    radial = theta_bar_partial(fa, eps, kernel, x, r, plane, "radial")
    deficit = float(theta_L + radial)
    return deficit <= delta, plane, deficit


def alpha_independent(points, r: float, alpha: float) -> bool:
    """x_0..x_k are alpha-linearly independent at scale r."""
    pts = [np.asarray(p, dtype=float) for p in points]
    x0 = pts[0]
    for i in range(1, len(pts)):
        span = Projector.from_span([p - x0 for p in pts[1:i]], m=x0.size)
        resid = (pts[i] - x0) - span.apply(pts[i] - x0)
        if np.linalg.norm(resid) <= alpha * r:
            return False
    return True


def cone_splitting_check(field_obj, eps: float, kernel: KernelProfile,
                         points, r: float, alpha: float,
                         target: TargetSphere | None = None):
    """Measured cone-splitting ratio at alpha-independent points.

    lhs is the tangential-plus-normal deficit at x_0 with respect to the
    span of the offsets (full normal energy when k = m-2, radial part
    otherwise); rhs = r * sum_i d/dr theta_bar(x_i, 1.4 r) by formula.
    Returns (lhs, rhs, ratio).
    """
    fa = _ensure_analysis(field_obj, eps, target)
    pts = [np.asarray(p, dtype=float) for p in points]
    if not alpha_independent(pts, r, alpha):
        raise NotIndependent("points are not alpha-linearly independent at scale r")
    k = len(pts) - 1
    x0 = pts[0]
    L = Projector.from_span([p - x0 for p in pts[1:]], m=fa.domain.m)
    tang = theta_bar_partial(fa, eps, kernel, x0, r, L, "tangential")
    if k == fa.domain.m - 2:
        normal = theta_bar_partial(fa, eps, kernel, x0, r, L, "perp")
    else:
        normal = theta_bar_partial(fa, eps, kernel, x0, r, L, "radial")
    lhs = float(tang + normal)
    rhs = 0.0
    for p in pts:
        formula, _ = theta_bar_r_derivative(fa, eps, kernel, p, 1.4 * r)
        rhs += formula
    rhs = float(rhs)
    ratio = lhs / rhs if rhs > 0 else (np.inf if lhs > 0 else 0.0)
    return lhs, rhs, ratio


# -- probe records ------------------------------------------------------------


@dataclass
class DensityProbe:
    """One row of the density table at a probe (x, r)."""

    x: np.ndarray
    r: float
    theta: float
    theta_bar: float
    dtheta_formula: float
    dtheta_fd: float
    eigenvalues: np.ndarray
    theta_L: float
    deficit: float
    plane: Projector

    def csv_row(self) -> str:
        cells = [*(f"{xi!r}" for xi in self.x), repr(self.r), repr(self.theta),
                 repr(self.theta_bar), repr(self.dtheta_formula),
                 repr(self.dtheta_fd), *(f"{v!r}" for v in self.eigenvalues),
                 repr(self.theta_L), repr(self.deficit)]
        m = self.plane.m
        basis = _plane_basis(self.plane)
        for vec in basis:
            cells.extend(f"{v!r}" for v in vec)
        if not basis:
            cells.extend([])
        return ",".join(cells)


def _plane_basis(plane: Projector):
    if plane.rank == 0:
        return []
    w, V = np.linalg.eigh(plane.matrix)
    cols = [V[:, i] for i in range(plane.m) if w[i] > 0.5]
    return cols


def probe(field_obj, eps: float, kernel: KernelProfile, x, r: float,
          target: TargetSphere | None = None) -> DensityProbe:
    """Evaluate the full density record at one probe."""
    fa = _ensure_analysis(field_obj, eps, target)
    x = np.asarray(x, dtype=float)
    th = theta_classical(fa, eps, x, min(r, fa.domain.extent - float(np.max(np.abs(x)))))
    tb = theta_bar(fa, eps, kernel, x, r)
    dform, dfd = theta_bar_r_derivative(fa, eps, kernel, x, r)
    plane, qt, theta_L, _ = best_plane(fa, eps, kernel, x, r)
    radial = theta_bar_partial(fa, eps, kernel, x, r, plane, "radial")
    return DensityProbe(x=x, r=r, theta=th, theta_bar=tb, dtheta_formula=dform,
                        dtheta_fd=dfd, eigenvalues=qt.eigenvalues,
                        theta_L=theta_L, deficit=float(theta_L + radial),
                        plane=plane)


def probe_table_csv(probes) -> str:
    """Delimited density table; one probe per row."""
    if not probes:
        return ""
    m = probes[0].x.size
    header = [*(f"x{i+1}" for i in range(m)), "r", "theta", "theta_bar",
              "dtheta_formula", "dtheta_fd",
              *(f"lambda{i+1}" for i in range(m)), "theta_L", "deficit"]
    n_basis = m * (m - 2)
    header.extend(f"plane{i+1}" for i in range(n_basis))
    lines = [",".join(header)]
    lines.extend(p.csv_row() for p in probes)
    return "\n".join(lines) + "\n"
