"""Synthetic sphere-valued fields used as fixtures and boundary data.

The basic building block is the inverse stereographic image of a rational
map of the plane; degree-d maps carry gradient energy 8 pi |d| (that is,
half of it, 4 pi |d|, in the conventional (1/2)|grad u|^2 normalization).
"""

from __future__ import annotations

import numpy as np

from .fields import GridDomain, VectorField


def inverse_stereographic(w: np.ndarray) -> np.ndarray:
    """Map complex values to S^2: w -> (2 Re w, 2 Im w, |w|^2 - 1)/(1 + |w|^2).

    Infinite w maps to the north pole (0, 0, 1).
    """
    w = np.asarray(w, dtype=complex)
    finite = np.isfinite(w)
    wf = np.where(finite, w, 0.0)
    denom = 1.0 + np.abs(wf) ** 2
    u = np.stack([2.0 * wf.real / denom, 2.0 * wf.imag / denom,
                  (np.abs(wf) ** 2 - 1.0) / denom], axis=-1)
    u[~finite] = np.array([0.0, 0.0, 1.0])
    return u


def _complex_grid(domain: GridDomain) -> np.ndarray:
    ax = domain.axis
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    return X + 1j * Y


def synth_bubble(domain: GridDomain, center=(0.0, 0.0), scale: float = 0.1,
                 degree: int = 1) -> VectorField:
    """Degree-d bubble u = InvStereo(((z - c)/s)^d) on a 2D grid (J = 3).

    Values lie exactly on the sphere and the gradient energy over the
    plane is 4 pi |d|.  The bubble center maps to the south pole for
    d > 0 (north pole for d < 0).
    """
    if domain.m != 2:
        raise ValueError("synth_bubble needs a 2D domain")
    if degree == 0:
        raise ValueError("degree must be nonzero")
    z = _complex_grid(domain)
    c = complex(center[0], center[1])
    base = (z - c) / scale
    with np.errstate(divide="ignore", invalid="ignore"):
        w = base**degree
    if degree < 0:
        w = np.where(base == 0, np.inf, w)
    return VectorField(domain, inverse_stereographic(w))


def bubble_gradient_density(points, center=(0.0, 0.0), scale: float = 0.1):
    """Closed-form |grad u|^2 / 2 of the degree-1 bubble at 2D points."""
    pts = np.asarray(points, dtype=float)
    s2 = np.sum((pts - np.asarray(center)) ** 2, axis=-1)
    return 4.0 * scale**2 / (scale**2 + s2) ** 2


def synth_bubble_pair(domain: GridDomain, centers, scales) -> VectorField:
    """Two concentration cores from a product of Moebius factors (degree 2).

    Each factor (z - c_i)/(z - c_i - s_i) sweeps the sphere once at scale
    s_i around c_i, so the total gradient energy is exactly 8 pi and each
    core carries 4 pi up to an interaction correction O(s_i / separation).
    """
    if domain.m != 2:
        raise ValueError("synth_bubble_pair needs a 2D domain")
    z = _complex_grid(domain)
    w = np.ones_like(z)
    for (cx, cy), s in zip(centers, scales):
        c = complex(cx, cy)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = w * (z - c) / (z - c - s)
    w = np.where(np.isfinite(w), w, np.inf)
    return VectorField(domain, inverse_stereographic(w))


def axis_basis(axis_vector: np.ndarray):
    """Deterministic orthonormal basis (b1, b2) of the plane normal to axis."""
    a = np.asarray(axis_vector, dtype=float)
    a = a / np.linalg.norm(a)
    trial = np.array([1.0, 0.0, 0.0])
    if abs(np.dot(trial, a)) > 0.9:
        trial = np.array([0.0, 1.0, 0.0])
    b1 = trial - np.dot(trial, a) * a
    b1 /= np.linalg.norm(b1)
    b2 = np.cross(a, b1)
    return b1, b2


def synth_bubble_tube(domain: GridDomain, axis_vector=(0.0, 0.0, 1.0),
                      scale: float = 0.1, center=(0.0, 0.0, 0.0),
                      degree: int = 1) -> VectorField:
    """2D bubble extended constantly along an axis line in 3D (J = 3).

    The field is exactly invariant along the axis; for the grid-aligned
    default axis the nodewise values repeat exactly.
    """
    if domain.m != 3:
        raise ValueError("synth_bubble_tube needs a 3D domain")
    a = np.asarray(axis_vector, dtype=float)
    a = a / np.linalg.norm(a)
    b1, b2 = axis_basis(a)
    ax = domain.axis
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    pts = np.stack([X, Y, Z], axis=-1) - np.asarray(center, dtype=float)
    w = (np.tensordot(pts, b1, axes=([-1], [0]))
         + 1j * np.tensordot(pts, b2, axes=([-1], [0]))) / scale
    with np.errstate(divide="ignore", invalid="ignore"):
        wd = w**degree
    if degree < 0:
        wd = np.where(w == 0, np.inf, wd)
    return VectorField(domain, inverse_stereographic(wd))


def constant_field(domain: GridDomain, value) -> VectorField:
    value = np.asarray(value, dtype=float)
    shape = (domain.n,) * domain.m + (value.size,)
    vals = np.broadcast_to(value, shape).copy()
    return VectorField(domain, vals)


def linear_field(domain: GridDomain, matrix) -> VectorField:
    """u(y) = A y for an (J x m) matrix A."""
    A = np.asarray(matrix, dtype=float)
    ax = domain.axis
    grids = np.meshgrid(*([ax] * domain.m), indexing="ij")
    pts = np.stack(grids, axis=-1)
    vals = np.tensordot(pts, A.T, axes=([-1], [0]))
    return VectorField(domain, vals)


def radial_profile_field(domain: GridDomain, center, profile, J: int = 3) -> VectorField:
    """Radially symmetric scalar profile in the first component (2D)."""
    if domain.m != 2:
        raise ValueError("radial_profile_field needs a 2D domain")
    ax = domain.axis
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    s = np.hypot(X - center[0], Y - center[1])
    vals = np.zeros((domain.n, domain.n, J))
    vals[..., 0] = profile(s)
    return VectorField(domain, vals)


def bump_blob_field(domain: GridDomain, center, width: float,
                    amplitude: float = 1.0, J: int = 3) -> VectorField:
    """Compactly supported smooth blob; its energy density is contained in
    the width-ball, handy for scaling tests."""
    ax = domain.axis
    grids = np.meshgrid(*([ax] * domain.m), indexing="ij")
    pts = np.stack(grids, axis=-1)
    q2 = np.sum((pts - np.asarray(center, dtype=float)) ** 2, axis=-1) / width**2
    bump = np.where(q2 < 1.0, (1.0 - np.minimum(q2, 1.0)) ** 3, 0.0)
    vals = np.zeros(bump.shape + (J,))
    vals[..., 0] = amplitude * bump
    return VectorField(domain, vals)
