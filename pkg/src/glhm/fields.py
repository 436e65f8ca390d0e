"""Gridded vector fields on a cubic box and their snapshot format.

A field stores J components per node of a uniform grid on [-a, a]^m.
Snapshots are a fixed little-endian binary layout (magic "GLHM") that
round-trips bit-exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import SnapshotFormatError

_MAGIC = b"GLHM"
_VERSION = 1
_HEADER = struct.Struct("<4sIIIIddd")


@dataclass(frozen=True)
class GridDomain:
    """Uniform grid on the box [-extent, extent]^m with n nodes per axis."""

    m: int
    extent: float
    n: int

    def __post_init__(self):
        if self.m not in (2, 3):
            raise ValueError("spatial dimension must be 2 or 3")
        if self.n < 8:
            raise ValueError("need at least 8 nodes per axis")
        if self.extent <= 0:
            raise ValueError("extent must be positive")

    @property
    def h(self) -> float:
        return 2.0 * self.extent / (self.n - 1)

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.extent, self.extent, self.n)

    def contains_ball(self, x, radius: float) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(np.abs(x) + radius <= self.extent + 1e-12))

    def ball_slices(self, x, radius: float):
        """Per-axis index slices covering the axis-aligned bounding box."""
        x = np.asarray(x, dtype=float)
        h = self.h
        los, his = [], []
        for i in range(self.m):
            lo = int(np.floor((x[i] - radius + self.extent) / h))
            hi = int(np.ceil((x[i] + radius + self.extent) / h)) + 1
            los.append(max(lo, 0))
            his.append(min(hi, self.n))
        return tuple(slice(lo, hi) for lo, hi in zip(los, his))

    def local_offsets(self, x, slices):
        """Arrays of per-axis offsets (axis value - x_i) for the given slices."""
        ax = self.axis
        return [ax[s] - x[i] for i, s in enumerate(slices)]

    def local_dist2(self, x, slices):
        """Squared distance to x on the subgrid selected by slices."""
        offs = self.local_offsets(x, slices)
        if self.m == 2:
            return offs[0][:, None] ** 2 + offs[1][None, :] ** 2
        return (offs[0][:, None, None] ** 2 + offs[1][None, :, None] ** 2
                + offs[2][None, None, :] ** 2)


@dataclass
class VectorField:
    """Map values on a GridDomain; shape (n, ..., n, J)."""

    domain: GridDomain
    values: np.ndarray
    eps: float | None = None
    residual: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = (self.domain.n,) * self.domain.m
        if self.values.shape[:-1] != expected:
            raise ValueError(
                f"values shape {self.values.shape} does not match grid {expected}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    @property
    def J(self) -> int:
        return self.values.shape[-1]

    def copy(self) -> "VectorField":
        return VectorField(self.domain, self.values.copy(), self.eps,
                           self.residual, dict(self.meta))


def write_field(path, field_obj: VectorField) -> None:
    """Write the snapshot: header then row-major little-endian float64."""
    dom = field_obj.domain
    eps = np.nan if field_obj.eps is None else float(field_obj.eps)
    res = np.nan if field_obj.residual is None else float(field_obj.residual)
    header = _HEADER.pack(_MAGIC, _VERSION, dom.m, dom.n, field_obj.J,
                          float(dom.extent), eps, res)
    data = np.ascontiguousarray(field_obj.values, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())


def read_field(path) -> VectorField:
    """Read a snapshot written by write_field; bit-exact round trip."""
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) != _HEADER.size:
            raise SnapshotFormatError("truncated header")
        magic, version, m, n, J, extent, eps, res = _HEADER.unpack(raw)
        if magic != _MAGIC:
            raise SnapshotFormatError(f"bad magic {magic!r}")
        if version != _VERSION:
            raise SnapshotFormatError(f"unsupported version {version}")
        count = n**m * J
        body = fh.read(count * 8)
        if len(body) != count * 8:
            raise SnapshotFormatError("truncated payload")
        values = np.frombuffer(body, dtype="<f8").reshape((n,) * m + (J,)).copy()
    dom = GridDomain(m=m, extent=extent, n=n)
    return VectorField(dom, values,
                       eps=None if np.isnan(eps) else float(eps),
                       residual=None if np.isnan(res) else float(res))
