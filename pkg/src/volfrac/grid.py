"""Voxel grid, two-phase conductivity field and boundary data containers."""

import struct
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .errors import ConfigError
from .expressions import TrigPoly, affine_component

__all__ = [
    "FACES",
    "Grid3",
    "ConductivityField",
    "DirichletData",
    "NeumannData",
    "write_field_dump",
    "read_field_dump",
]

# The six box faces as (axis, side); side 0 has outward normal -e_axis.
FACES = [(axis, side) for axis in range(3) for side in (0, 1)]


def face_sign(side):
    return -1.0 if side == 0 else 1.0


@dataclass(frozen=True)
class Grid3:
    """Uniform voxel grid: ``dims`` cells of size ``spacing`` per axis."""

    dims: tuple
    spacing: tuple

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))
        object.__setattr__(self, "spacing", tuple(float(h) for h in self.spacing))
        if len(self.dims) != 3 or len(self.spacing) != 3:
            raise ConfigError("grid dims and spacing must have three entries")
        if any(n < 4 for n in self.dims):
            raise ConfigError("grid must have at least 4 cells per axis")
        if any(h <= 0 for h in self.spacing):
            raise ConfigError("grid spacing must be positive")

    @property
    def lengths(self):
        return tuple(n * h for n, h in zip(self.dims, self.spacing))

    @property
    def cell_volume(self):
        hx, hy, hz = self.spacing
        return hx * hy * hz

    @property
    def volume(self):
        lx, ly, lz = self.lengths
        return lx * ly * lz

    def cell_centers(self, axis):
        n, h = self.dims[axis], self.spacing[axis]
        return (np.arange(n) + 0.5) * h

    def vertices(self, axis):
        n, h = self.dims[axis], self.spacing[axis]
        return np.arange(n + 1) * h

    def face_area(self, axis):
        hs = list(self.spacing)
        del hs[axis]
        return hs[0] * hs[1]

    def face_shape(self, axis):
        ns = list(self.dims)
        del ns[axis]
        return tuple(ns)

    def face_plane_coordinate(self, axis, side):
        return 0.0 if side == 0 else self.lengths[axis]

    def face_center_points(self, axis, side):
        """(3, n1, n2) coordinates of boundary-face centers."""
        tang = [a for a in range(3) if a != axis]
        c1 = self.cell_centers(tang[0])
        c2 = self.cell_centers(tang[1])
        g1, g2 = np.meshgrid(c1, c2, indexing="ij")
        pts = [None, None, None]
        pts[axis] = np.full_like(g1, self.face_plane_coordinate(axis, side))
        pts[tang[0]] = g1
        pts[tang[1]] = g2
        return np.stack(pts)

    def face_gauss_points(self, axis, side, order=2):
        """Tensor Gauss points on every face cell: (3, n1, n2, order**2)
        coordinates plus the common weight (sums to 1 per face cell)."""
        tang = [a for a in range(3) if a != axis]
        nodes, weights = np.polynomial.legendre.leggauss(order)
        nodes = 0.5 * (nodes + 1.0)  # to [0, 1]
        weights = 0.5 * weights
        o1 = self.vertices(tang[0])[:-1]
        o2 = self.vertices(tang[1])[:-1]
        h1 = self.spacing[tang[0]]
        h2 = self.spacing[tang[1]]
        p1 = o1[:, None] + h1 * nodes[None, :]  # (n1, order)
        p2 = o2[:, None] + h2 * nodes[None, :]
        n1, n2 = self.face_shape(axis)
        q = order * order
        g1 = np.broadcast_to(p1[:, None, :, None], (n1, n2, order, order))
        g2 = np.broadcast_to(p2[None, :, None, :], (n1, n2, order, order))
        pts = [None, None, None]
        pts[axis] = np.full((n1, n2, q), self.face_plane_coordinate(axis, side))
        pts[tang[0]] = g1.reshape(n1, n2, q)
        pts[tang[1]] = g2.reshape(n1, n2, q)
        w = (weights[:, None] * weights[None, :]).reshape(q)
        return np.stack(pts), w


class ConductivityField:
    """Phase labels on a voxel grid plus the two conductivities.

    Phase 1 is the high-conductivity inclusion; f1 is its cell fraction,
    the ground truth every bound is validated against.
    """

    def __init__(self, grid, phase, sigma1, sigma2):
        if not (sigma1 > sigma2 > 0):
            raise ConfigError("require sigma1 > sigma2 > 0")
        phase = np.asarray(phase)
        if phase.shape != grid.dims:
            raise ConfigError("phase array shape must match grid dims")
        if not np.isin(phase, (1, 2)).all():
            raise ConfigError("phase labels must be 1 or 2")
        self.grid = grid
        self.phase = phase.astype(np.uint8)
        self.sigma1 = float(sigma1)
        self.sigma2 = float(sigma2)

    @property
    def f1(self):
        return float(np.count_nonzero(self.phase == 1)) / self.phase.size

    def sigma(self):
        return np.where(self.phase == 1, self.sigma1, self.sigma2)

    def homogeneous(self):
        return bool(np.all(self.phase == self.phase.flat[0]))


@dataclass
class DirichletData:
    """Three Dirichlet components as closed-form expressions of (x,y,z)."""

    components: tuple

    kind = "dirichlet"

    def __post_init__(self):
        if len(self.components) != 3:
            raise ConfigError("Dirichlet data needs three components")

    @classmethod
    def affine(cls):
        return cls(tuple(affine_component(a) for a in range(3)))

    def combined(self, K):
        """Linear recombination of the data: new_j = sum_i V_i K[i, j]."""
        K = np.asarray(K, dtype=float)
        new = []
        for j in range(3):
            poly = TrigPoly.zero()
            for i in range(3):
                if K[i, j] != 0.0:
                    poly = poly + self.components[i].scaled(K[i, j])
            new.append(poly)
        return DirichletData(tuple(new))

    def face_values(self, grid, axis, side):
        """(3, n1, n2) data samples at boundary-face centers."""
        pts = grid.face_center_points(axis, side)
        return np.stack([c(*pts) for c in self.components])

    def vertex_face_values(self, grid, axis, side):
        """(3, n1+1, n2+1) data samples at boundary vertices of one face."""
        tang = [a for a in range(3) if a != axis]
        v1 = grid.vertices(tang[0])
        v2 = grid.vertices(tang[1])
        g1, g2 = np.meshgrid(v1, v2, indexing="ij")
        pts = [None, None, None]
        pts[axis] = np.full_like(g1, grid.face_plane_coordinate(axis, side))
        pts[tang[0]] = g1
        pts[tang[1]] = g2
        return np.stack([c(*pts) for c in self.components])


@dataclass
class NeumannData:
    """Prescribed flux data q = -n.J per face: for each box face a tuple of
    three expressions of (x,y,z) evaluated on that face plane."""

    face_components: dict

    kind = "neumann"

    def __post_init__(self):
        for key in FACES:
            if key not in self.face_components:
                raise ConfigError(f"missing Neumann data on face {key}")
            if len(self.face_components[key]) != 3:
                raise ConfigError("Neumann data needs three components per face")

    @classmethod
    def special(cls):
        """q = -n on every face (uniform current data)."""
        comps = {}
        for axis, side in FACES:
            qs = [TrigPoly.zero()] * 3
            qs[axis] = TrigPoly.constant(-face_sign(side))
            comps[(axis, side)] = tuple(qs)
        return cls(comps)

    def combined(self, K):
        K = np.asarray(K, dtype=float)
        comps = {}
        for key, qs in self.face_components.items():
            new = []
            for j in range(3):
                poly = TrigPoly.zero()
                for i in range(3):
                    if K[i, j] != 0.0:
                        poly = poly + qs[i].scaled(K[i, j])
                new.append(poly)
            comps[key] = tuple(new)
        return NeumannData(comps)

    def face_values(self, grid, axis, side, gauss_order=3):
        """(3, n1, n2) face-cell averages of q via tensor Gauss quadrature."""
        pts, w = grid.face_gauss_points(axis, side, order=gauss_order)
        out = []
        for comp in self.face_components[(axis, side)]:
            vals = comp(*pts)
            out.append(vals @ w)
        return np.stack(out)


def write_field_dump(path, arrays, spacing):
    """Raw dump: magic "TBF1", int32 dims, float64 spacing, int32 count,
    then each field as little-endian float64 in x-fastest order."""
    arrays = [np.asarray(a, dtype="<f8") for a in arrays]
    dims = arrays[0].shape
    if any(a.shape != dims for a in arrays):
        raise ValueError("all dumped fields must share one grid")
    with open(path, "wb") as fh:
        fh.write(b"TBF1")
        fh.write(struct.pack("<3i", *dims))
        fh.write(struct.pack("<3d", *spacing))
        fh.write(struct.pack("<i", len(arrays)))
        for a in arrays:
            fh.write(a.reshape(-1, order="F").tobytes())


def read_field_dump(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != b"TBF1":
            raise ValueError(f"not a TBF1 dump (magic {magic!r})")
        dims = struct.unpack("<3i", fh.read(12))
        spacing = struct.unpack("<3d", fh.read(24))
        (count,) = struct.unpack("<i", fh.read(4))
        n = dims[0] * dims[1] * dims[2]
        arrays = []
        for _ in range(count):
            flat = np.frombuffer(fh.read(8 * n), dtype="<f8")
            arrays.append(flat.reshape(dims, order="F").copy())
    return arrays, spacing
