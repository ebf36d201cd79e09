"""Matrix-free linear operators with exact adjoint access.

Operators are immutable. Every operator carries both its forward map and its
adjoint map, so composition, scaling, transposition and block assembly never
lose adjoint consistency.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

DENSE_CAP = 5000

Map = Callable[[np.ndarray], np.ndarray]


class LinearOperator:
    """Linear map ``R^domain_dim -> R^codomain_dim`` with its transpose.

    Args:
        domain_dim: Length of input vectors.
        codomain_dim: Length of output vectors.
        apply: Forward map on 1-D float arrays.
        apply_adjoint: Adjoint map (codomain -> domain).
        name: Optional label used in reports and ``repr``.
    """

    def __init__(
        self,
        domain_dim: int,
        codomain_dim: int,
        apply: Map,
        apply_adjoint: Map,
        name: str = "",
    ):
        self.domain_dim = int(domain_dim)
        self.codomain_dim = int(codomain_dim)
        self._apply = apply
        self._apply_adjoint = apply_adjoint
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return (self.codomain_dim, self.domain_dim)

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.domain_dim,):
            raise ValueError(
                f"{self!r}: expected input of shape ({self.domain_dim},), got {x.shape}"
            )
        return self._apply(x)

    def apply_adjoint(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.shape != (self.codomain_dim,):
            raise ValueError(
                f"{self!r}: expected adjoint input of shape ({self.codomain_dim},), "
                f"got {y.shape}"
            )
        return self._apply_adjoint(y)

    __call__ = apply

    @property
    def T(self) -> "LinearOperator":
        return LinearOperator(
            self.codomain_dim,
            self.domain_dim,
            self._apply_adjoint,
            self._apply,
            name=f"{self.name}^T" if self.name else "",
        )

    def __matmul__(self, other):
        if isinstance(other, LinearOperator):
            if self.domain_dim != other.codomain_dim:
                raise ValueError(
                    f"cannot compose {self!r} with {other!r}: "
                    f"{self.domain_dim} != {other.codomain_dim}"
                )
            return LinearOperator(
                other.domain_dim,
                self.codomain_dim,
                lambda x: self._apply(other._apply(x)),
                lambda y: other._apply_adjoint(self._apply_adjoint(y)),
                name=f"({self.name} {other.name})" if self.name and other.name else "",
            )
        return self.apply(other)

    def __mul__(self, scalar: float) -> "LinearOperator":
        s = float(scalar)
        return LinearOperator(
            self.domain_dim,
            self.codomain_dim,
            lambda x: s * self._apply(x),
            lambda y: s * self._apply_adjoint(y),
            name=f"{s:g}*{self.name}" if self.name else "",
        )

    __rmul__ = __mul__

    def __truediv__(self, scalar: float) -> "LinearOperator":
        return self * (1.0 / float(scalar))

    def __neg__(self) -> "LinearOperator":
        return self * -1.0

    def __add__(self, other: "LinearOperator") -> "LinearOperator":
        if self.shape != other.shape:
            raise ValueError(f"shape mismatch in sum: {self.shape} vs {other.shape}")
        return LinearOperator(
            self.domain_dim,
            self.codomain_dim,
            lambda x: self._apply(x) + other._apply(x),
            lambda y: self._apply_adjoint(y) + other._apply_adjoint(y),
        )

    def __sub__(self, other: "LinearOperator") -> "LinearOperator":
        return self + (-other)

    def to_dense(self, cap: int = DENSE_CAP) -> np.ndarray:
        """Assemble the matrix column by column (small operators only)."""
        if max(self.shape) > cap:
            raise ValueError(
                f"dense assembly of {self.shape} operator exceeds cap {cap}"
            )
        out = np.empty(self.shape)
        e = np.zeros(self.domain_dim)
        for j in range(self.domain_dim):
            e[j] = 1.0
            out[:, j] = self._apply(e)
            e[j] = 0.0
        return out

    def __repr__(self) -> str:
        label = self.name or type(self).__name__
        return f"<{label} {self.codomain_dim}x{self.domain_dim}>"


def zero(domain_dim: int, codomain_dim: int) -> LinearOperator:
    return LinearOperator(
        domain_dim,
        codomain_dim,
        lambda x: np.zeros(codomain_dim),
        lambda y: np.zeros(domain_dim),
        name="0",
    )


def identity(n: int) -> LinearOperator:
    return LinearOperator(n, n, lambda x: x.copy(), lambda y: y.copy(), name="I")


def from_matrix(matrix, name: str = "") -> LinearOperator:
    """Wrap a dense array or scipy sparse matrix."""
    m = matrix
    return LinearOperator(
        m.shape[1],
        m.shape[0],
        lambda x: np.asarray(m @ x, dtype=float).ravel(),
        lambda y: np.asarray(m.T @ y, dtype=float).ravel(),
        name=name,
    )


class BlockOperator(LinearOperator):
    """Block operator; ``None`` entries are zero blocks.

    Every block row needs at least one non-``None`` entry, and likewise every
    block column, so that the partition sizes can be inferred.
    """

    def __init__(self, blocks: Sequence[Sequence[Optional[LinearOperator]]], name: str = ""):
        rows = [list(r) for r in blocks]
        ncols = len(rows[0])
        if any(len(r) != ncols for r in rows):
            raise ValueError("ragged block layout")
        row_dims = []
        for i, r in enumerate(rows):
            dims = {b.codomain_dim for b in r if b is not None}
            if len(dims) != 1:
                raise ValueError(f"block row {i} has inconsistent or unknown height {dims}")
            row_dims.append(dims.pop())
        col_dims = []
        for j in range(ncols):
            dims = {r[j].domain_dim for r in rows if r[j] is not None}
            if len(dims) != 1:
                raise ValueError(f"block column {j} has inconsistent or unknown width {dims}")
            col_dims.append(dims.pop())

        self.blocks = tuple(tuple(r) for r in rows)
        self.row_dims = tuple(row_dims)
        self.col_dims = tuple(col_dims)
        row_cuts = np.cumsum(row_dims)[:-1]
        col_cuts = np.cumsum(col_dims)[:-1]
        blocks_t = tuple(tuple(rows[i][j] for i in range(len(rows))) for j in range(ncols))

        def fwd(x):
            parts = np.split(x, col_cuts)
            out = []
            for i, r in enumerate(self.blocks):
                acc = np.zeros(row_dims[i])
                for j, b in enumerate(r):
                    if b is not None:
                        acc += b._apply(parts[j])
                out.append(acc)
            return np.concatenate(out)

        def adj(y):
            parts = np.split(y, row_cuts)
            out = []
            for j, c in enumerate(blocks_t):
                acc = np.zeros(col_dims[j])
                for i, b in enumerate(c):
                    if b is not None:
                        acc += b._apply_adjoint(parts[i])
                out.append(acc)
            return np.concatenate(out)

        super().__init__(sum(col_dims), sum(row_dims), fwd, adj, name=name)

    def block(self, i: int, j: int) -> Optional[LinearOperator]:
        return self.blocks[i][j]


def vstack(ops: Sequence[LinearOperator], name: str = "") -> BlockOperator:
    return BlockOperator([[op] for op in ops], name=name)


def block_diag(ops: Sequence[LinearOperator], name: str = "") -> BlockOperator:
    n = len(ops)
    return BlockOperator(
        [[ops[i] if i == j else None for j in range(n)] for i in range(n)], name=name
    )


@dataclass(frozen=True)
class AdjointReport:
    max_defect: float
    trials: int
    tol: float
    passed: bool


def adjoint_check(
    op: LinearOperator,
    trials: int = 10,
    tol: float = 1e-13,
    rng: Optional[np.random.Generator] = None,
) -> AdjointReport:
    """Randomized probe of ``<Ax, y> = <x, A^T y>``.

    The defect per trial is
    ``|<Ax,y> - <x,A^T y>| / (|Ax||y| + |x||A^T y| + eps)``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    rng = np.random.default_rng(0) if rng is None else rng
    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal(op.domain_dim)
        y = rng.standard_normal(op.codomain_dim)
        ax = op.apply(x)
        aty = op.apply_adjoint(y)
        scale = np.linalg.norm(ax) * np.linalg.norm(y) + np.linalg.norm(x) * np.linalg.norm(aty)
        defect = abs(ax @ y - x @ aty) / (scale + np.finfo(float).tiny)
        worst = max(worst, float(defect))
    return AdjointReport(worst, trials, tol, worst <= tol)


def skew_defect(
    op: LinearOperator,
    trials: int = 100,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Max of ``|<U, AU>| / (|U| |AU|)`` over random probes (0 if ``AU`` = 0)."""
    if op.domain_dim != op.codomain_dim:
        raise ValueError("skew probe needs a square operator")
    rng = np.random.default_rng(0) if rng is None else rng
    worst = 0.0
    for _ in range(trials):
        u = rng.standard_normal(op.domain_dim)
        au = op.apply(u)
        denom = np.linalg.norm(u) * np.linalg.norm(au)
        if denom == 0.0:
            continue
        worst = max(worst, abs(u @ au) / denom)
    return float(worst)
