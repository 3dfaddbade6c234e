"""Axis-aligned box domain with a uniform hexahedral grid.

Enumeration order (part of the checkpoint format, version 1):

* nodes ``(i, j, k)`` -> ``i + (n1 + 1) * (j + (n2 + 1) * k)``, x fastest;
* cells ``(i, j, k)`` -> ``i + n1 * (j + n2 * k)``;
* boundary faces wall by wall in the order ``-x, +x, -y, +y, -z, +z``,
  within a wall by the owning cell index;
* vector fields are node-major, component-minor: dof ``3 * node + comp``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .errors import InvalidDimensions

ENUMERATION_VERSION = 1

# local node a = a0 + 2 a1 + 4 a2 with reference offsets (a0, a1, a2)
LOCAL_OFFSETS = np.array([[a & 1, (a >> 1) & 1, (a >> 2) & 1] for a in range(8)])


@dataclass(frozen=True)
class BoxGrid:
    lengths: tuple
    cells: tuple

    def __post_init__(self):
        lengths = tuple(float(x) for x in self.lengths)
        cells = tuple(int(n) for n in self.cells)
        if len(lengths) != 3 or len(cells) != 3:
            raise InvalidDimensions("lengths and cells need three entries each")
        if not all(L > 0 and np.isfinite(L) for L in lengths):
            raise InvalidDimensions(f"lengths must be positive, got {lengths}")
        if not all(n >= 2 for n in cells):
            raise InvalidDimensions(f"need at least 2 cells per direction, got {cells}")
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "cells", cells)

    @property
    def spacing(self) -> np.ndarray:
        return np.array(self.lengths) / np.array(self.cells)

    @property
    def node_shape(self) -> tuple:
        return tuple(n + 1 for n in self.cells)

    @property
    def node_count(self) -> int:
        return int(np.prod(self.node_shape))

    @property
    def cell_count(self) -> int:
        return int(np.prod(self.cells))

    @property
    def dofs_per_field(self) -> int:
        return 3 * self.node_count

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def signature(self) -> dict:
        return {"lengths": list(self.lengths), "cells": list(self.cells)}

    def node_index(self, i, j, k):
        n1, n2, _ = self.node_shape
        return i + n1 * (j + n2 * k)

    def axis_coordinates(self, axis: int) -> np.ndarray:
        n = self.cells[axis]
        return np.arange(n + 1) * self.lengths[axis] / n

    @cached_property
    def nodes(self) -> np.ndarray:
        """Node coordinates, shape ``(node_count, 3)``."""
        x, y, z = (self.axis_coordinates(a) for a in range(3))
        Z, Y, X = np.meshgrid(z, y, x, indexing="ij")
        return np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)

    @cached_property
    def cell_nodes(self) -> np.ndarray:
        """Global node ids of the 8 cell corners, shape ``(cell_count, 8)``."""
        n1, n2, n3 = self.cells
        k, j, i = np.meshgrid(np.arange(n3), np.arange(n2), np.arange(n1), indexing="ij")
        i, j, k = i.ravel(), j.ravel(), k.ravel()
        off = LOCAL_OFFSETS
        return np.stack(
            [self.node_index(i + o[0], j + o[1], k + o[2]) for o in off], axis=1
        )

    @cached_property
    def cell_origins(self) -> np.ndarray:
        return self.nodes[self.cell_nodes[:, 0]]

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        """Boolean mask of nodes on the boundary."""
        idx = np.stack(np.unravel_index(np.arange(self.node_count), self.node_shape[::-1]), axis=1)[:, ::-1]
        return np.any((idx == 0) | (idx == np.array(self.cells)), axis=1)

    @cached_property
    def faces(self) -> "BoundaryFaces":
        return _build_faces(self)


class BoundaryFaces(NamedTuple):
    """All boundary faces, vectorised.

    ``nodes`` are the four face corners ordered so that local corner
    ``b = b0 + 2 b1`` sits at offsets ``(b0, b1)`` along the two tangential
    axes ``tangent_axes`` (ascending axis order).
    """

    cell: np.ndarray        # (F,)
    axis: np.ndarray        # (F,) normal axis
    side: np.ndarray        # (F,) 0 for the low wall, 1 for the high wall
    normal: np.ndarray      # (F, 3)
    area: np.ndarray        # (F,)
    centroid: np.ndarray    # (F, 3)
    nodes: np.ndarray       # (F, 4)
    tangent_axes: np.ndarray  # (F, 2)

    def __len__(self):
        return len(self.cell)


def _build_faces(grid: BoxGrid) -> BoundaryFaces:
    n = np.array(grid.cells)
    h = grid.spacing
    cell_ids = np.arange(grid.cell_count)
    cidx = np.stack(np.unravel_index(cell_ids, tuple(n[::-1])), axis=1)[:, ::-1]
    parts = {k: [] for k in BoundaryFaces._fields}
    for axis in range(3):
        t = [a for a in range(3) if a != axis]
        for side in (0, 1):
            sel = cidx[:, axis] == (0 if side == 0 else n[axis] - 1)
            cells = cell_ids[sel]
            ijk = cidx[sel]
            base = ijk.copy()
            base[:, axis] += side
            corners = []
            for b in range(4):
                c = base.copy()
                c[:, t[0]] += b & 1
                c[:, t[1]] += (b >> 1) & 1
                corners.append(grid.node_index(c[:, 0], c[:, 1], c[:, 2]))
            nu = np.zeros(3)
            nu[axis] = 1.0 if side else -1.0
            m = len(cells)
            parts["cell"].append(cells)
            parts["axis"].append(np.full(m, axis))
            parts["side"].append(np.full(m, side))
            parts["normal"].append(np.tile(nu, (m, 1)))
            parts["area"].append(np.full(m, h[t[0]] * h[t[1]]))
            centroid = base * h
            centroid[:, t[0]] += 0.5 * h[t[0]]
            centroid[:, t[1]] += 0.5 * h[t[1]]
            centroid[:, axis] = grid.lengths[axis] * side
            parts["centroid"].append(centroid)
            parts["nodes"].append(np.stack(corners, axis=1))
            parts["tangent_axes"].append(np.tile(t, (m, 1)))
    return BoundaryFaces(**{k: np.concatenate(v) for k, v in parts.items()})


def build_grid(lengths, cells) -> BoxGrid:
    return BoxGrid(tuple(lengths), tuple(cells))


class StarShapeReport(NamedTuple):
    x0: np.ndarray
    delta: float
    is_strict: bool


def star_shaped_delta(grid: BoxGrid, x0) -> StarShapeReport:
    """Minimum of ``(x - x0) . nu`` over face corners and centroids."""
    x0 = np.asarray(x0, dtype=float)
    f = grid.faces
    pts = np.concatenate([grid.nodes[f.nodes], f.centroid[:, None, :]], axis=1)
    m_dot_nu = np.einsum("fpk,fk->fp", pts - x0, f.normal)
    delta = float(m_dot_nu.min())
    return StarShapeReport(x0, delta, delta > 0)


def c_alpha(grid: BoxGrid, alpha) -> float:
    """``max |grad alpha|`` from nodal samples.

    Centred differences inside, first-order one-sided at the boundary layer.
    ``alpha`` is either an array of nodal values or a callable of ``x``.
    """
    if callable(alpha):
        alpha = alpha(grid.nodes)
    a = np.asarray(alpha, dtype=float).reshape(grid.node_shape[::-1])
    h = grid.spacing
    gz, gy, gx = np.gradient(a, h[2], h[1], h[0], edge_order=1)
    return float(np.sqrt(gx**2 + gy**2 + gz**2).max())


def tangential_decompose(X, nu):
    """Split ``X`` into normal ``(X.nu) nu`` and tangential remainder."""
    X = np.asarray(X, dtype=float)
    nu = np.asarray(nu, dtype=float)
    x_nu = np.sum(X * nu, axis=-1, keepdims=True) * nu
    return x_nu, X - x_nu
