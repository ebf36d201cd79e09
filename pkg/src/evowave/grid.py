"""Cartesian cell grids with an elastic/acoustic label per cell."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np


class Label(enum.IntEnum):
    ELASTIC = 0
    ACOUSTIC = 1

    @classmethod
    def parse(cls, value) -> "Label":
        if isinstance(value, Label):
            return value
        if isinstance(value, str):
            key = value.strip().upper()
            aliases = {"E": "ELASTIC", "SOLID": "ELASTIC", "A": "ACOUSTIC", "FLUID": "ACOUSTIC"}
            return cls[aliases.get(key, key)]
        return cls(int(value))


def n_voigt(d: int) -> int:
    return d * (d + 1) // 2


class Grid:
    """Uniform Cartesian grid of ``prod(counts)`` cells.

    Cells are numbered in C order over ``counts``. Cell ``k`` along axis ``a``
    spans ``[origin[a] + k h_a, origin[a] + (k+1) h_a]``.

    Args:
        counts: Cells per axis (1 to 3 axes).
        spacing: Cell width per axis in meters.
        labels: Per-cell labels, either an array of shape ``counts`` or a
            flat sequence of length ``prod(counts)``. Defaults to all elastic.
        origin: Coordinates of the lower corner.
    """

    def __init__(
        self,
        counts: Sequence[int],
        spacing: Sequence[float],
        labels=None,
        origin: Sequence[float] | None = None,
    ):
        counts = tuple(int(c) for c in counts)
        spacing = tuple(float(h) for h in spacing)
        if not 1 <= len(counts) <= 3:
            raise ValueError(f"grid dimension must be 1, 2 or 3, got {len(counts)}")
        if len(spacing) != len(counts):
            raise ValueError("counts and spacing must have the same length")
        if any(c <= 0 for c in counts):
            raise ValueError(f"cell counts must be positive, got {counts}")
        if any(not h > 0 for h in spacing):
            raise ValueError(f"spacing must be strictly positive, got {spacing}")
        self.counts = counts
        self.spacing = spacing
        self.origin = tuple(float(o) for o in origin) if origin is not None else (0.0,) * len(counts)
        if labels is None:
            lab = np.full(counts, int(Label.ELASTIC), dtype=np.int8)
        else:
            lab = np.asarray(
                [int(Label.parse(v)) for v in np.ravel(np.asarray(labels, dtype=object))],
                dtype=np.int8,
            )
            if lab.size != int(np.prod(counts)):
                raise ValueError(
                    f"expected {int(np.prod(counts))} labels, got {lab.size}"
                )
            lab = lab.reshape(counts)
        lab.setflags(write=False)
        self.labels = lab

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.counts))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def n_voigt(self) -> int:
        return n_voigt(self.dim)

    @cached_property
    def flat_labels(self) -> np.ndarray:
        return self.labels.ravel()

    def cells(self, label) -> np.ndarray:
        """Flat indices of the cells carrying ``label``, ascending."""
        return np.flatnonzero(self.flat_labels == int(Label.parse(label)))

    @cached_property
    def elastic_cells(self) -> np.ndarray:
        return self.cells(Label.ELASTIC)

    @cached_property
    def acoustic_cells(self) -> np.ndarray:
        return self.cells(Label.ACOUSTIC)

    def has(self, label) -> bool:
        return bool(np.any(self.flat_labels == int(Label.parse(label))))

    def centers(self) -> np.ndarray:
        """Cell-center coordinates, shape ``(n_cells, dim)``."""
        axes = [
            o + (np.arange(n) + 0.5) * h
            for o, n, h in zip(self.origin, self.counts, self.spacing)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def with_labels(self, labels) -> "Grid":
        return Grid(self.counts, self.spacing, labels, self.origin)

    def swapped(self) -> "Grid":
        """Same grid with every label exchanged."""
        return self.with_labels(1 - self.labels)

    def __repr__(self) -> str:
        return (
            f"Grid(counts={self.counts}, spacing={self.spacing}, "
            f"elastic={self.elastic_cells.size}, acoustic={self.acoustic_cells.size})"
        )


def half_space_grid(
    counts: Sequence[int],
    spacing: Sequence[float],
    axis: int = 0,
    split: float | None = None,
    lower=Label.ELASTIC,
    upper=Label.ACOUSTIC,
    origin: Sequence[float] | None = None,
) -> Grid:
    """Grid labelled ``lower`` where the cell center lies below ``split`` on ``axis``.

    ``split`` defaults to the midpoint of the domain along ``axis``.
    """
    probe = Grid(counts, spacing, origin=origin)
    if split is None:
        split = probe.origin[axis] + 0.5 * probe.counts[axis] * probe.spacing[axis]
    below = probe.centers()[:, axis] < split
    labels = np.where(below, int(Label.parse(lower)), int(Label.parse(upper)))
    return probe.with_labels(labels)


def checkerboard_grid(counts: Sequence[int], spacing: Sequence[float]) -> Grid:
    idx = np.indices(tuple(counts)).sum(axis=0) % 2
    return Grid(counts, spacing, idx)


@dataclass(frozen=True)
class FieldLayout:
    """Sizes and offsets of the unknowns ``(v, (T, p))`` on a grid.

    Velocity has ``dim`` components on every cell, stress has ``n_voigt``
    isometric Voigt components on every elastic cell and pressure is one scalar
    per acoustic cell. Symmetric tensors are stored in the order
    ``(11, 22, 33, 23, 13, 12)`` (3-D), ``(11, 22, 12)`` (2-D) with off-diagonal
    entries scaled by sqrt(2).
    """

    grid: Grid

    @property
    def velocity_len(self) -> int:
        return self.grid.dim * self.grid.n_cells

    @property
    def jacobian_len(self) -> int:
        g = self.grid
        faces = sum(
            int(np.prod([n + (1 if a == j else 0) for a, n in enumerate(g.counts)]))
            for j in range(g.dim)
        )
        return g.dim * faces

    @property
    def stress_len(self) -> int:
        return self.grid.n_voigt * self.grid.elastic_cells.size

    @property
    def pressure_len(self) -> int:
        return self.grid.acoustic_cells.size

    @property
    def state_len(self) -> int:
        return self.velocity_len + self.stress_len + self.pressure_len

    def split(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Views ``(velocity (n,d), stress (nE,s), pressure (nA,))`` of a state vector."""
        u = np.asarray(u)
        if u.shape != (self.state_len,):
            raise ValueError(f"state vector must have length {self.state_len}, got {u.shape}")
        g = self.grid
        a, b = self.velocity_len, self.velocity_len + self.stress_len
        return (
            u[:a].reshape(g.n_cells, g.dim),
            u[a:b].reshape(g.elastic_cells.size, g.n_voigt),
            u[b:],
        )

    def join(self, velocity, stress, pressure) -> np.ndarray:
        out = np.concatenate(
            [np.ravel(velocity), np.ravel(stress), np.ravel(pressure)]
        ).astype(float)
        if out.size != self.state_len:
            raise ValueError(f"components do not match layout of length {self.state_len}")
        return out
