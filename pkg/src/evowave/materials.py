"""Cellwise material law ``M(0)`` and its positivity certification."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .grid import FieldLayout, Grid, n_voigt
from .linop import LinearOperator

BLOCK_KINDS = ("rho_star", "compliance", "kappa_inv", "compressibility")


def isotropic_stiffness(d: int, lam: float, mu: float) -> np.ndarray:
    """Isotropic stiffness ``lam tr(E) I + 2 mu E`` in isometric Voigt storage."""
    s = n_voigt(d)
    C = np.zeros((s, s))
    C[:d, :d] = lam
    C[np.arange(s), np.arange(s)] += 2.0 * mu
    return C


@dataclass
class MaterialLaw:
    """Block-diagonal material law on a labelled grid.

    Attributes:
        rho_star: ``(n_elastic, d, d)`` mass density on elastic cells.
        compliance: ``(n_elastic, s, s)`` inverse stiffness, isometric Voigt.
        kappa_inv: ``(n_acoustic, d, d)`` fluid inertia on acoustic cells.
        compressibility: ``(n_acoustic,)`` positive scalars.
        elastic_cells: Grid cell index of each elastic block.
        acoustic_cells: Grid cell index of each acoustic block.
    """

    rho_star: np.ndarray
    compliance: np.ndarray
    kappa_inv: np.ndarray
    compressibility: np.ndarray
    elastic_cells: Optional[np.ndarray] = None
    acoustic_cells: Optional[np.ndarray] = None

    def __post_init__(self):
        self.rho_star = np.asarray(self.rho_star, dtype=float)
        self.compliance = np.asarray(self.compliance, dtype=float)
        self.kappa_inv = np.asarray(self.kappa_inv, dtype=float)
        self.compressibility = np.asarray(self.compressibility, dtype=float).ravel()
        if self.elastic_cells is None:
            self.elastic_cells = np.arange(len(self.rho_star))
        if self.acoustic_cells is None:
            self.acoustic_cells = np.arange(len(self.kappa_inv))
        self.elastic_cells = np.asarray(self.elastic_cells, dtype=int)
        self.acoustic_cells = np.asarray(self.acoustic_cells, dtype=int)
        if len(self.compliance) != len(self.rho_star):
            raise ValueError("rho_star and compliance must cover the same elastic cells")
        if len(self.compressibility) != len(self.kappa_inv):
            raise ValueError("kappa_inv and compressibility must cover the same acoustic cells")

    def blocks(self) -> dict[str, np.ndarray]:
        """All coefficient blocks as ``(m, k, k)`` arrays keyed by kind."""
        return {
            "rho_star": self.rho_star,
            "compliance": self.compliance,
            "kappa_inv": self.kappa_inv,
            "compressibility": self.compressibility.reshape(-1, 1, 1),
        }

    def cell_of(self, kind: str, local: int) -> int:
        cells = self.elastic_cells if kind in ("rho_star", "compliance") else self.acoustic_cells
        return int(cells[local])

    @classmethod
    def uniform(
        cls,
        grid: Grid,
        rho_solid=1.0,
        stiffness=None,
        rho_fluid=1.0,
        bulk_modulus: float = 1.0,
        lame: Optional[tuple[float, float]] = None,
    ) -> "MaterialLaw":
        """Constant coefficients per region.

        Densities may be scalars (isotropic) or ``d x d`` matrices. The elastic
        stiffness is either a full ``s x s`` Voigt matrix, a scalar multiple of
        the identity, or given through ``lame = (lambda, mu)``.
        """
        d, s = grid.dim, grid.n_voigt
        nE, nA = grid.elastic_cells.size, grid.acoustic_cells.size
        if lame is not None:
            C = isotropic_stiffness(d, *lame)
        elif stiffness is None:
            C = np.eye(s)
        else:
            C = _as_matrix(stiffness, s)
        return cls(
            rho_star=np.broadcast_to(_as_matrix(rho_solid, d), (nE, d, d)).copy(),
            compliance=np.broadcast_to(np.linalg.inv(C), (nE, s, s)).copy(),
            kappa_inv=np.broadcast_to(_as_matrix(rho_fluid, d), (nA, d, d)).copy(),
            compressibility=np.full(nA, 1.0 / bulk_modulus),
            elastic_cells=grid.elastic_cells,
            acoustic_cells=grid.acoustic_cells,
        )


def _as_matrix(value, k: int) -> np.ndarray:
    a = np.asarray(value, dtype=float)
    if a.ndim == 0:
        return float(a) * np.eye(k)
    if a.shape != (k, k):
        raise ValueError(f"expected a scalar or {k}x{k} matrix, got shape {a.shape}")
    return a


def _batched_eig(blocks: np.ndarray, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    w, q = np.linalg.eigh(blocks)
    return np.einsum("mij,mj,mkj->mik", q, fn(w), q)


class BlockDiagonalOperator(LinearOperator):
    """Symmetric block-diagonal operator given as groups of small dense blocks.

    Args:
        dim: Vector length.
        groups: Sequence of ``(index, blocks)`` where ``index`` has shape
            ``(m, k)`` (the vector entries of each block) and ``blocks`` has
            shape ``(m, k, k)``. Indices must be disjoint and cover ``0..dim-1``.
    """

    def __init__(self, dim: int, groups: Sequence[tuple[np.ndarray, np.ndarray]], name: str = "M0"):
        self.groups = tuple((np.asarray(i, dtype=int), np.asarray(b, dtype=float)) for i, b in groups)
        covered = np.concatenate([i.ravel() for i, _ in self.groups]) if self.groups else np.empty(0, int)
        if covered.size != dim or np.unique(covered).size != dim:
            raise ValueError("block index sets must partition the vector")

        def fwd(x):
            out = np.empty(dim)
            for idx, blk in self.groups:
                out[idx] = np.einsum("mij,mj->mi", blk, x[idx])
            return out

        def adj(y):
            out = np.empty(dim)
            for idx, blk in self.groups:
                out[idx] = np.einsum("mji,mj->mi", blk, y[idx])
            return out

        super().__init__(dim, dim, fwd, adj, name=name)
        self._inverse = None

    def map_blocks(self, fn: Callable[[np.ndarray], np.ndarray], name: str = "") -> "BlockDiagonalOperator":
        """Apply a spectral function to every (symmetric positive) block."""
        groups = []
        for idx, blk in self.groups:
            w = np.linalg.eigvalsh(blk)
            if np.any(w <= 0):
                raise ValueError("block is not positive definite")
            groups.append((idx, _batched_eig(blk, fn)))
        return BlockDiagonalOperator(self.domain_dim, groups, name=name)

    def inverse(self) -> "BlockDiagonalOperator":
        if self._inverse is None:
            self._inverse = self.map_blocks(lambda w: 1.0 / w, name=f"{self.name}^-1")
        return self._inverse

    def sqrt(self) -> "BlockDiagonalOperator":
        return self.map_blocks(np.sqrt, name=f"sqrt({self.name})")

    def inv_sqrt(self) -> "BlockDiagonalOperator":
        return self.map_blocks(lambda w: 1.0 / np.sqrt(w), name=f"sqrt({self.name}^-1)")


def _check_symmetric(kind: str, blocks: np.ndarray) -> None:
    if blocks.size == 0:
        return
    scale = np.maximum(np.abs(blocks).max(axis=(1, 2)), np.finfo(float).tiny)
    asym = np.abs(blocks - np.swapaxes(blocks, 1, 2)).max(axis=(1, 2)) / scale
    bad = np.flatnonzero(asym > 1e-13)
    if bad.size:
        raise ValueError(f"{kind} block {bad[0]} is not symmetric (defect {asym[bad[0]]:.3g})")


def assemble_M0(grid: Grid, material: MaterialLaw) -> BlockDiagonalOperator:
    """Material operator acting on state vectors of :class:`FieldLayout`.

    The velocity block is ``rho_star`` on elastic cells and ``kappa_inv`` on
    acoustic cells; stress gets the compliance, pressure the compressibility.
    """
    d, s = grid.dim, grid.n_voigt
    E, A = grid.elastic_cells, grid.acoustic_cells
    if material.rho_star.shape != (E.size, d, d):
        raise ValueError(
            f"rho_star must have shape {(E.size, d, d)}, got {material.rho_star.shape}"
        )
    if material.compliance.shape != (E.size, s, s):
        raise ValueError(
            f"compliance must have shape {(E.size, s, s)}, got {material.compliance.shape}"
        )
    if material.kappa_inv.shape != (A.size, d, d):
        raise ValueError(
            f"kappa_inv must have shape {(A.size, d, d)}, got {material.kappa_inv.shape}"
        )
    if material.compressibility.shape != (A.size,):
        raise ValueError("missing compressibility for some acoustic cell")
    if not (np.array_equal(material.elastic_cells, E) and np.array_equal(material.acoustic_cells, A)):
        raise ValueError("material blocks are not attached to the grid's labelled cells")
    for kind, blk in material.blocks().items():
        _check_symmetric(kind, blk)

    layout = FieldLayout(grid)
    vo, so = 0, layout.velocity_len
    po = so + layout.stress_len
    groups = [
        (vo + E[:, None] * d + np.arange(d), material.rho_star),
        (vo + A[:, None] * d + np.arange(d), material.kappa_inv),
        (so + np.arange(E.size)[:, None] * s + np.arange(s), material.compliance),
        (po + np.arange(A.size)[:, None], material.compressibility.reshape(-1, 1, 1)),
    ]
    return BlockDiagonalOperator(layout.state_len, [g for g in groups if g[0].size], name="M0")


@dataclass(frozen=True)
class PositivityReport:
    c0_estimate: float
    worst_cell: int
    block_kind: str
    passed: bool
    rho_range: Optional[tuple[float, float]] = None
    per_cell: tuple = field(default=(), repr=False)


def _min_eigs(blocks: Mapping[str, np.ndarray]) -> list[tuple[str, int, float]]:
    out = []
    for kind in BLOCK_KINDS:
        blk = blocks.get(kind)
        if blk is None or len(blk) == 0:
            continue
        w = np.linalg.eigvalsh(blk)[:, 0]
        out.extend((kind, k, float(v)) for k, v in enumerate(w))
    return out


def _summarize(material: MaterialLaw, rows, rho_range=None) -> PositivityReport:
    if not rows:
        return PositivityReport(float("nan"), -1, "", False, rho_range)
    # first minimum in (kind order, cell order): deterministic tie-breaking
    kind, local, c0 = min(rows, key=lambda r: r[2])
    per_cell = tuple((k, material.cell_of(k, i), v) for k, i, v in rows)
    return PositivityReport(c0, material.cell_of(kind, local), kind, c0 > 0, rho_range, per_cell)


def check_positivity_M0(material: MaterialLaw) -> PositivityReport:
    """Smallest eigenvalue over all cell blocks; passes iff strictly positive."""
    return _summarize(material, _min_eigs(material.blocks()))


@dataclass(frozen=True)
class RationalPositivityReport:
    """Per-``rho`` lower bounds of ``rho M0 + sym(M1)``.

    ``threshold_rho`` is the smallest checked ``rho`` from which every larger
    checked ``rho`` gives a positive bound (``None`` if the largest fails).
    """

    rho_values: tuple[float, ...]
    c0_per_rho: tuple[float, ...]
    reports: tuple[PositivityReport, ...]
    threshold_rho: Optional[float]
    nondecreasing: bool
    passed: bool


def check_positivity_rational(
    material: MaterialLaw,
    M1_blocks: Optional[Mapping[str, np.ndarray]],
    rho_values: Sequence[float],
) -> RationalPositivityReport:
    """Check ``rho M(0) + sym(M1) >= c0 > 0`` on a finite, sorted list of ``rho``.

    Args:
        material: Provides the ``M(0)`` blocks.
        M1_blocks: Optional cellwise blocks keyed like :meth:`MaterialLaw.blocks`;
            missing kinds are zero. Need not be symmetric.
        rho_values: Positive values, checked in ascending order.
    """
    rhos = sorted(float(r) for r in rho_values)
    if not rhos:
        raise ValueError("rho_values must be nonempty")
    if rhos[0] <= 0:
        raise ValueError("rho_values must be positive")
    base = material.blocks()
    sym_m1 = {}
    for kind, blk in (M1_blocks or {}).items():
        if kind not in base:
            raise ValueError(f"unknown block kind {kind!r}")
        blk = np.asarray(blk, dtype=float)
        if kind == "compressibility" and blk.ndim == 1:
            blk = blk.reshape(-1, 1, 1)
        if blk.shape != base[kind].shape:
            raise ValueError(
                f"M1 block {kind!r} has shape {blk.shape}, expected {base[kind].shape}"
            )
        sym_m1[kind] = 0.5 * (blk + np.swapaxes(blk, 1, 2))

    reports = []
    for rho in rhos:
        shifted = {k: rho * b + sym_m1[k] if k in sym_m1 else rho * b for k, b in base.items()}
        reports.append(_summarize(material, _min_eigs(shifted), (rho, rho)))
    c0s = tuple(r.c0_estimate for r in reports)

    threshold = None
    for rho, c0 in zip(reversed(rhos), reversed(c0s)):
        if c0 > 0:
            threshold = rho
        else:
            break
    tail = [c for r, c in zip(rhos, c0s) if threshold is not None and r >= threshold]
    nondecreasing = all(b >= a for a, b in zip(tail, tail[1:]))
    return RationalPositivityReport(
        tuple(rhos), c0s, tuple(reports), threshold, nondecreasing,
        threshold is not None and nondecreasing,
    )


def congruence_transform(M0: BlockDiagonalOperator, A: LinearOperator) -> LinearOperator:
    """``sqrt(M0^-1) A sqrt(M0^-1)``; skew whenever ``A`` is."""
    if not isinstance(M0, BlockDiagonalOperator):
        raise TypeError("congruence_transform needs a block-diagonal M0")
    W = M0.inv_sqrt()
    out = W @ A @ W
    out.name = "S"
    return out
