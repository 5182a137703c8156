"""Coarse incompressible flow field standing in for a full CFD solve.

The velocity is the gradient of a potential on a staggered (MAC) grid:
face velocities live on cell faces, the potential at cell centres.  Inlet
faces carry a prescribed inflow, outlet faces pin the potential to zero, and
walls block faces.  The resulting symmetric positive definite system is
solved by conjugate gradients until the discrete divergence of every cell is
below the requested tolerance.  This is potential flow, not RANS: it gives
plausible advection from inlet to outlet, nothing more.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import cg

from sniffy.environment.grid import GridTopology
from sniffy.environment.model import Environment, Vent

DEFAULT_INLET_SPEED = 0.5


class FlowError(ValueError):
    pass


class FlowNotConverged(RuntimeError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(f"flow solve did not converge: max divergence {residual:.3e} 1/s "
                         f"after {iterations} iterations")
        self.residual = residual
        self.iterations = iterations


@dataclass
class FlowField:
    cell_size: float
    u: np.ndarray  # (ny, nx + 1) x-velocity on vertical faces
    v: np.ndarray  # (ny + 1, nx) y-velocity on horizontal faces
    fluid: np.ndarray  # (ny, nx) cells belonging to the flow volume
    inlet_speed: float = DEFAULT_INLET_SPEED

    @property
    def shape(self) -> tuple[int, int]:
        return self.fluid.shape

    @classmethod
    def zeros(cls, env: Environment, cell_size: float = 0.1) -> "FlowField":
        topo = GridTopology(env, cell_size)
        ny, nx = topo.ny, topo.nx
        return cls(cell_size, np.zeros((ny, nx + 1)), np.zeros((ny + 1, nx)),
                   np.ones((ny, nx), dtype=bool), 0.0)

    def divergence(self) -> np.ndarray:
        h = self.cell_size
        return (self.u[:, 1:] - self.u[:, :-1]) / h + (self.v[1:, :] - self.v[:-1, :]) / h

    def centered(self) -> np.ndarray:
        """Cell-centre velocities, shape ``(ny, nx, 2)``."""
        uc = 0.5 * (self.u[:, 1:] + self.u[:, :-1])
        vc = 0.5 * (self.v[1:, :] + self.v[:-1, :])
        return np.stack([uc, vc], axis=-1)

    def sample(self, x: float, y: float) -> tuple[float, float]:
        c = self.centered()
        return bilinear_centered(c[..., 0], self.cell_size, x, y), bilinear_centered(c[..., 1], self.cell_size, x, y)

    def sample_many(self, xs: np.ndarray, ys: np.ndarray, centered: np.ndarray | None = None) -> np.ndarray:
        c = self.centered() if centered is None else centered
        h = self.cell_size
        ny, nx = self.fluid.shape
        gx = np.clip(xs / h - 0.5, 0.0, nx - 1)
        gy = np.clip(ys / h - 0.5, 0.0, ny - 1)
        i0 = np.minimum(np.floor(gx).astype(int), max(nx - 2, 0))
        j0 = np.minimum(np.floor(gy).astype(int), max(ny - 2, 0))
        i1 = np.minimum(i0 + 1, nx - 1)
        j1 = np.minimum(j0 + 1, ny - 1)
        fx = (gx - i0)[:, None]
        fy = (gy - j0)[:, None]
        return ((1 - fx) * (1 - fy) * c[j0, i0] + fx * (1 - fy) * c[j0, i1]
                + (1 - fx) * fy * c[j1, i0] + fx * fy * c[j1, i1])


def bilinear_centered(a: np.ndarray, h: float, x: float, y: float) -> float:
    """Bilinear interpolation of cell-centred values with edge clamping."""
    ny, nx = a.shape
    gx = min(max(x / h - 0.5, 0.0), nx - 1.0)
    gy = min(max(y / h - 0.5, 0.0), ny - 1.0)
    i0 = min(int(math.floor(gx)), max(nx - 2, 0))
    j0 = min(int(math.floor(gy)), max(ny - 2, 0))
    i1 = min(i0 + 1, nx - 1)
    j1 = min(j0 + 1, ny - 1)
    fx = gx - i0
    fy = gy - j0
    return float((1 - fx) * (1 - fy) * a[j0, i0] + fx * (1 - fy) * a[j0, i1]
                 + (1 - fx) * fy * a[j1, i0] + fx * fy * a[j1, i1])


def _vent_faces(vent: Vent, topo: GridTopology) -> list[tuple[str, int, int, int, int, float]]:
    """Faces covered by a vent: (axis, face_j, face_i, cell_j, cell_i, normal sign)."""
    h = topo.h
    n = vent.normal
    if abs(n.x) == 1.0 and n.y == 0.0:
        axis = "x"
    elif abs(n.y) == 1.0 and n.x == 0.0:
        axis = "y"
    else:
        raise FlowError("vents must be axis-aligned")
    count = max(1, int(round(vent.length() / h)))
    out = []
    seen = set()
    for q in range(count):
        p = vent.a + (vent.b - vent.a) * ((q + 0.5) / count)
        cell = topo.cell_of(p + n * (0.5 * h))
        j, i = cell
        if axis == "x":
            fi = i if n.x > 0 else i + 1
            key = ("x", j, fi)
            sign = n.x
            fj = j
        else:
            fj = j if n.y > 0 else j + 1
            key = ("y", fj, i)
            sign = n.y
            fi = i
        if key in seen:
            continue
        seen.add(key)
        out.append((axis, fj, fi, j, i, sign))
    return out


def solve_flow(
    env: Environment,
    resolution: float = 0.1,
    tolerance: float = 1e-4,
    max_iters: int = 20000,
    inlet_speed: float = DEFAULT_INLET_SPEED,
) -> FlowField:
    """Divergence-free flow from the environment's inlets to its outlets.

    ``tolerance`` bounds the discrete divergence (1/s) of every fluid cell.
    Raises :class:`FlowError` for sealed environments and
    :class:`FlowNotConverged` when ``max_iters`` is exhausted.
    """
    if not env.inlets or not env.outlets:
        raise FlowError("flow needs at least one inlet and one outlet")
    topo = GridTopology(env, resolution)
    h = topo.h
    ny, nx = topo.ny, topo.nx
    fluid = topo.component_mask(env.source)
    index = -np.ones((ny, nx), dtype=np.int64)
    cells = np.argwhere(fluid)
    index[fluid] = np.arange(len(cells))
    n = len(cells)

    inlet_faces = [f for vent in env.inlets for f in _vent_faces(vent, topo) if fluid[f[3], f[4]]]
    outlet_faces = [f for vent in env.outlets for f in _vent_faces(vent, topo) if fluid[f[3], f[4]]]
    inlet_keys = {f[:3] for f in inlet_faces}
    outlet_faces = [f for f in outlet_faces if f[:3] not in inlet_keys]
    if not inlet_faces or not outlet_faces:
        raise FlowError("inlet and outlet must both border the flow volume")

    ox = topo.open_x.copy()
    oy = topo.open_y.copy()
    ox[:, 1:nx] &= fluid[:, :-1] & fluid[:, 1:]
    oy[1:ny, :] &= fluid[:-1, :] & fluid[1:, :]
    jx, ix = np.nonzero(ox[:, 1:nx])
    jy, iy = np.nonzero(oy[1:ny, :])
    a_idx = np.concatenate([index[jx, ix], index[jy, iy]])
    b_idx = np.concatenate([index[jx, ix + 1], index[jy + 1, iy]])

    diag = np.zeros(n)
    np.add.at(diag, a_idx, 1.0)
    np.add.at(diag, b_idx, 1.0)
    rhs = np.zeros(n)
    for f in outlet_faces:
        diag[index[f[3], f[4]]] += 2.0
    for f in inlet_faces:
        rhs[index[f[3], f[4]]] -= inlet_speed * h

    rows = np.concatenate([np.arange(n), a_idx, b_idx])
    cols = np.concatenate([np.arange(n), b_idx, a_idx])
    vals = np.concatenate([diag, -np.ones(len(a_idx)), -np.ones(len(b_idx))])
    A = coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()

    phi_flat, _ = cg(A, rhs, rtol=0.0, atol=0.25 * tolerance * h * h, maxiter=max_iters)
    phi = np.zeros((ny, nx))
    phi[fluid] = phi_flat

    u = np.zeros((ny, nx + 1))
    v = np.zeros((ny + 1, nx))
    u[:, 1:nx] = np.where(ox[:, 1:nx], (phi[:, 1:] - phi[:, :-1]) / h, 0.0)
    v[1:ny, :] = np.where(oy[1:ny, :], (phi[1:, :] - phi[:-1, :]) / h, 0.0)
    for axis, fj, fi, cj, ci, sign in inlet_faces:
        (u if axis == "x" else v)[fj, fi] = sign * inlet_speed
    for axis, fj, fi, cj, ci, sign in outlet_faces:
        (u if axis == "x" else v)[fj, fi] = 2.0 * phi[cj, ci] * sign / h

    field = FlowField(h, u, v, fluid, inlet_speed)
    residual = float(np.max(np.abs(field.divergence()[fluid])))
    if not residual <= tolerance:
        raise FlowNotConverged(residual, max_iters)
    return field


def boundary_fluxes(field: FlowField, env: Environment) -> tuple[float, float]:
    """(total inflow, total outflow) through the vents, in m^2/s."""
    topo = GridTopology(env, field.cell_size)
    h = field.cell_size

    def flux(vents, sign_out):
        total = 0.0
        for vent in vents:
            for axis, fj, fi, cj, ci, sign in _vent_faces(vent, topo):
                if not field.fluid[cj, ci]:
                    continue
                vel = (field.u if axis == "x" else field.v)[fj, fi]
                total += sign_out * vel * sign * h
        return total

    return flux(env.inlets, 1.0), flux(env.outlets, -1.0)
