"""Structured tensor meshes of the parameter rectangle and of the scaled shell."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import EmptyGamma0, OddLayers
from ..geometry import EDGES


@dataclass(frozen=True, eq=False)
class Mesh2D:
    """Uniform ``nx x ny`` grid of rectangular cells.

    Node ``i + (nx + 1) * j`` sits at ``(y1[i], y2[j])``; cell
    ``ix + nx * jy`` lists its corners counter-clockwise starting at the
    lower-left one.
    """

    bounds: tuple
    nx: int
    ny: int
    nodes: np.ndarray
    cells: np.ndarray
    clamped_edges: tuple
    clamped_nodes: np.ndarray
    boundary: dict

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def hx(self) -> float:
        return (self.bounds[1] - self.bounds[0]) / self.nx

    @property
    def hy(self) -> float:
        return (self.bounds[3] - self.bounds[2]) / self.ny

    def node_index(self, i, j):
        return np.asarray(i) + (self.nx + 1) * np.asarray(j)

    def cell_origin(self) -> np.ndarray:
        """Lower-left corner of every cell, shape ``(n_cells, 2)``."""
        return self.nodes[self.cells[:, 0]]


@dataclass(frozen=True, eq=False)
class Mesh3D:
    """Tensor product of a :class:`Mesh2D` with ``nz`` equal layers in x3.

    Node ``n + N2 * k`` sits above base node ``n`` at ``x3 = -1 + 2 k / nz``;
    hexahedra list the four base corners of layer ``k`` followed by those of
    layer ``k + 1``.
    """

    base: Mesh2D
    nz: int
    nodes: np.ndarray
    hexes: np.ndarray
    clamped_nodes: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def x3_levels(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.nz + 1)


def build_mesh2d(bounds: Sequence[float], nx: int, ny: int, clamped_edges: Sequence[str]) -> Mesh2D:
    """Structured mesh of the rectangle ``bounds = (y1min, y1max, y2min, y2max)``.

    Raises
    ------
    ValueError
        If ``nx`` or ``ny`` is below 2 or an edge name is unknown.
    EmptyGamma0
        If no clamped edge is given.
    """
    if nx < 2 or ny < 2:
        raise ValueError(f"need nx, ny >= 2, got ({nx}, {ny})")
    clamped_edges = tuple(clamped_edges)
    if not clamped_edges:
        raise EmptyGamma0("gamma_0 must contain at least one edge")
    for e in clamped_edges:
        if e not in EDGES:
            raise ValueError(f"unknown edge {e!r}")
    y1a, y1b, y2a, y2b = (float(b) for b in bounds)
    g1, g2 = np.meshgrid(np.linspace(y1a, y1b, nx + 1), np.linspace(y2a, y2b, ny + 1), indexing="xy")
    nodes = np.stack([g1.ravel(), g2.ravel()], axis=-1)
    ix, jy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    ix, jy = ix.ravel(), jy.ravel()
    n0 = ix + (nx + 1) * jy
    cells = np.stack([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1], axis=-1)
    I, J = np.arange(nx + 1), np.arange(ny + 1)
    boundary = {
        "left": 0 + (nx + 1) * J,
        "right": nx + (nx + 1) * J,
        "bottom": I,
        "top": I + (nx + 1) * ny,
    }
    clamped = np.unique(np.concatenate([boundary[e] for e in clamped_edges]))
    return Mesh2D((y1a, y1b, y2a, y2b), int(nx), int(ny), nodes, cells, clamped_edges, clamped, boundary)


def build_mesh3d(m2: Mesh2D, nz: int) -> Mesh3D:
    """Extrude ``m2`` over x3 in [-1, 1] with ``nz`` (even) layers.

    Raises
    ------
    OddLayers
        If ``nz`` is odd or below 2.
    """
    if nz < 2 or nz % 2:
        raise OddLayers(f"nz must be even and >= 2, got {nz}")
    N2 = m2.n_nodes
    x3 = np.linspace(-1.0, 1.0, nz + 1)
    nodes = np.concatenate([np.column_stack([m2.nodes, np.full(N2, z)]) for z in x3])
    hexes = np.concatenate([np.hstack([m2.cells + N2 * k, m2.cells + N2 * (k + 1)]) for k in range(nz)])
    clamped = np.concatenate([m2.clamped_nodes + N2 * k for k in range(nz + 1)])
    return Mesh3D(m2, int(nz), nodes, hexes, np.sort(clamped))
