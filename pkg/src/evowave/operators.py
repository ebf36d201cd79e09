"""Discrete gradient/divergence pair and the mother/descendant construction.

The Dirichlet Jacobian ``G`` maps cell-centered velocities to a full matrix
field sampled on cell faces: component ``(i, j)`` holds ``d u_i / d x_j`` on the
faces normal to axis ``j``, computed with zero exterior values. The weak
divergence is ``-G^T`` exactly. All inner products are the Euclidean ones
times the (uniform) cell volume, so every adjoint is a plain transpose.

Skew-symmetric spatial operators are produced only through :func:`mother`
and :func:`descendant`; nothing downstream assembles an off-diagonal block by
hand.
"""

from __future__ import annotations

import numpy as np

from .grid import FieldLayout, Grid, Label, n_voigt
from .linop import BlockOperator, LinearOperator, block_diag, identity, vstack

SQRT2 = np.sqrt(2.0)

VOIGT_PAIRS = {
    1: [(0, 0)],
    2: [(0, 0), (1, 1), (0, 1)],
    3: [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)],
}


def _check_dim(d: int) -> None:
    if d not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {d}")


def voigt_to_matrix(v: np.ndarray, d: int) -> np.ndarray:
    """Isometric Voigt vectors ``(..., s)`` to symmetric matrices ``(..., d, d)``."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (d, d))
    for k, (i, j) in enumerate(VOIGT_PAIRS[d]):
        if i == j:
            out[..., i, i] = v[..., k]
        else:
            out[..., i, j] = out[..., j, i] = v[..., k] / SQRT2
    return out


def matrix_to_voigt(m: np.ndarray, d: int) -> np.ndarray:
    """Isometric Voigt vector of ``sym(m)``."""
    m = np.asarray(m, dtype=float)
    out = np.empty(m.shape[:-2] + (n_voigt(d),))
    for k, (i, j) in enumerate(VOIGT_PAIRS[d]):
        if i == j:
            out[..., k] = m[..., i, i]
        else:
            out[..., k] = (m[..., i, j] + m[..., j, i]) / SQRT2
    return out


def _face_shape(grid: Grid, axis: int) -> tuple[int, ...]:
    return tuple(n + 1 if a == axis else n for a, n in enumerate(grid.counts))


def _face_sizes(grid: Grid) -> list[int]:
    return [int(np.prod(_face_shape(grid, j))) * grid.dim for j in range(grid.dim)]


def build_grad_dirichlet(grid: Grid) -> LinearOperator:
    """Face-sampled Jacobian of a cell-centered vector field, zero outside the grid.

    Input layout is ``(n_cells, d)``; output is the concatenation over axes ``j``
    of arrays of shape ``face_shape_j + (d,)`` holding ``d u_i / d x_j``.
    In 1-D this is the ``(n+1) x n`` matrix with rows ``(u_k - u_{k-1}) / h``.
    """
    d = grid.dim
    counts = grid.counts
    sizes = _face_sizes(grid)
    cuts = np.cumsum(sizes)[:-1]

    def fwd(x):
        u = x.reshape(counts + (d,))
        parts = []
        for j in range(d):
            pad = [(0, 0)] * (d + 1)
            pad[j] = (1, 1)
            parts.append((np.diff(np.pad(u, pad), axis=j) / grid.spacing[j]).ravel())
        return np.concatenate(parts)

    def adj(y):
        acc = np.zeros(counts + (d,))
        for j, w in enumerate(np.split(y, cuts)):
            w = w.reshape(_face_shape(grid, j) + (d,))
            acc -= np.diff(w, axis=j) / grid.spacing[j]
        return acc.ravel()

    return LinearOperator(grid.n_cells * d, sum(sizes), fwd, adj, name="grad0")


def weak_div(grad_op: LinearOperator) -> LinearOperator:
    """Weak divergence on matrix fields, defined as ``-(grad_op)^T``."""
    out = -grad_op.T
    out.name = "div"
    return out


def face_to_cell(grid: Grid) -> LinearOperator:
    """Sample a face Jacobian on the upper face of each cell.

    Output layout is ``(n_cells, d, d)`` with entry ``[c, i, j]`` taken from
    component ``(i, j)`` on the face of cell ``c`` on its upper side along
    axis ``j``. Composed with :func:`build_grad_dirichlet` this is the forward
    difference; its transpose chain gives the backward difference. The faces on
    the lower domain boundary are never sampled, so the zero exterior value
    only acts at upper boundaries; lower boundaries come out traction-free
    (pressure-release for fluid cells).
    """
    d = grid.dim
    counts = grid.counts
    sizes = _face_sizes(grid)
    cuts = np.cumsum(sizes)[:-1]

    def hi(j):
        return tuple(slice(1, None) if a == j else slice(None) for a in range(d))

    def fwd(y):
        out = np.empty(counts + (d, d))
        for j, w in enumerate(np.split(y, cuts)):
            out[..., :, j] = w.reshape(_face_shape(grid, j) + (d,))[hi(j)]
        return out.ravel()

    def adj(x):
        m = x.reshape(counts + (d, d))
        parts = []
        for j in range(d):
            w = np.zeros(_face_shape(grid, j) + (d,))
            w[hi(j)] = m[..., :, j]
            parts.append(w.ravel())
        return np.concatenate(parts)

    return LinearOperator(sum(sizes), grid.n_cells * d * d, fwd, adj, name="P")


def sym_projection(d: int, n_points: int = 1) -> LinearOperator:
    """Pointwise ``T -> sym(T)`` in isometric Voigt storage.

    The adjoint is the isometric embedding of symmetric matrices, so
    ``B B^T`` is the identity on Voigt fields.
    """
    _check_dim(d)
    s = n_voigt(d)

    def fwd(x):
        return matrix_to_voigt(x.reshape(n_points, d, d), d).ravel()

    def adj(y):
        return voigt_to_matrix(y.reshape(n_points, s), d).ravel()

    return LinearOperator(n_points * d * d, n_points * s, fwd, adj, name="sym")


def trace_op(d: int, n_points: int = 1) -> LinearOperator:
    """Pointwise trace; the adjoint puts ``p`` on the diagonal."""
    _check_dim(d)
    eye = np.eye(d)

    def fwd(x):
        return np.trace(x.reshape(n_points, d, d), axis1=1, axis2=2).copy()

    def adj(p):
        return (p[:, None, None] * eye).ravel()

    return LinearOperator(n_points * d * d, n_points, fwd, adj, name="trace")


def restriction(grid: Grid, label, n_components: int = 1) -> LinearOperator:
    """Select the cells carrying ``label``; the adjoint extends by zero."""
    label = Label.parse(label)
    idx = grid.cells(label)
    if idx.size == 0:
        raise ValueError(f"no cell carries label {label.name}: degenerate decomposition")
    k = n_components
    n = grid.n_cells

    def fwd(x):
        return x.reshape(n, k)[idx].ravel()

    def adj(y):
        out = np.zeros((n, k))
        out[idx] = y.reshape(idx.size, k)
        return out.ravel()

    return LinearOperator(n * k, idx.size * k, fwd, adj, name=f"R_{label.name.lower()}")


def mother(C: LinearOperator) -> BlockOperator:
    """``[[0, -C^T], [C, 0]]``."""
    return BlockOperator([[None, -C.T], [C, None]], name="mother")


def descendant(mother_A: BlockOperator, B: LinearOperator, side: str = "second") -> BlockOperator:
    """Descendant of a mother ``[[0, -C^T], [C, 0]]``.

    ``side="second"`` composes on the second component and returns
    ``[[0, -(BC)^T], [BC, 0]]``; ``side="first"`` composes on the first
    component and returns ``[[0, -(C B^T)^T], [C B^T, 0]]``. Both are
    skew-symmetric because they are mothers of the composed operator.
    """
    C = mother_A.block(1, 0)
    if C is None:
        raise ValueError("mother operator has no lower-left block")
    if side == "second":
        if B.domain_dim != C.codomain_dim:
            raise ValueError(
                f"B expects inputs of length {B.domain_dim}, "
                f"but C produces length {C.codomain_dim}"
            )
        BC = B @ C
    elif side == "first":
        if B.domain_dim != C.domain_dim:
            raise ValueError(
                f"B expects inputs of length {B.domain_dim}, "
                f"but C acts on length {C.domain_dim}"
            )
        BC = C @ B.T
    else:
        raise ValueError(f"side must be 'first' or 'second', got {side!r}")
    return mother(BC)


def elasticity_operator(grid: Grid) -> BlockOperator:
    """Symmetric elasticity ``[[0, -Div], [-Grad, 0]]`` on all cells."""
    B = sym_projection(grid.dim, grid.n_cells) @ face_to_cell(grid)
    return descendant(mother(-build_grad_dirichlet(grid)), B)


def acoustic_operator(grid: Grid) -> BlockOperator:
    """Acoustics ``[[0, grad], [div, 0]]`` on all cells."""
    B = trace_op(grid.dim, grid.n_cells) @ face_to_cell(grid)
    return descendant(mother(build_grad_dirichlet(grid)), B)


def coupling_map(grid: Grid) -> LinearOperator:
    """``B = [R_elastic sym ; -R_acoustic trace] P`` from face Jacobians to ``(T, p)``."""
    d, n = grid.dim, grid.n_cells
    P = face_to_cell(grid)
    to_stress = restriction(grid, Label.ELASTIC, n_voigt(d)) @ sym_projection(d, n)
    to_pressure = -(restriction(grid, Label.ACOUSTIC) @ trace_op(d, n))
    return vstack([to_stress, to_pressure]) @ P


def build_coupled_A(grid: Grid) -> BlockOperator:
    """Coupled elasto-acoustic operator on ``(v, (T, p))``.

    The descendant of the mother with ``C = -grad0`` under :func:`coupling_map`
    has lower-left block ``(-Grad on elastic cells ; div on acoustic cells)``
    and upper-right block ``(-Div, +grad)``. The ``+grad`` sign is what
    skew-symmetry forces given the ``div`` entry, and gives the split equations
    ``kappa^-1 dv/dt + grad p = f`` and ``c dp/dt + div v = g``.
    """
    if not (grid.has(Label.ELASTIC) and grid.has(Label.ACOUSTIC)):
        missing = Label.ACOUSTIC if grid.has(Label.ELASTIC) else Label.ELASTIC
        raise ValueError(
            f"coupled operator needs both labels; no {missing.name.lower()} cells "
            "(use elasticity_operator/acoustic_operator for single-physics grids)"
        )
    A = descendant(mother(-build_grad_dirichlet(grid)), coupling_map(grid))
    A.name = "A"
    layout = FieldLayout(grid)
    assert A.domain_dim == layout.state_len
    return A


def spatial_operator(grid: Grid) -> BlockOperator:
    """The operator matching :class:`FieldLayout` for any labelling."""
    if grid.has(Label.ELASTIC) and grid.has(Label.ACOUSTIC):
        return build_coupled_A(grid)
    if grid.has(Label.ELASTIC):
        return elasticity_operator(grid)
    # pure fluid: the pressure block enters with the same sign as in the coupled map
    B = -(trace_op(grid.dim, grid.n_cells) @ face_to_cell(grid))
    return descendant(mother(-build_grad_dirichlet(grid)), B)


def _diag_mask(mask: np.ndarray, name: str) -> LinearOperator:
    m = mask.astype(float)
    return LinearOperator(m.size, m.size, lambda x: m * x, lambda y: m * y, name=name)


def window_masks(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Masks for the window ``]-1/2, 1/2[`` on ``n`` cells over ``[-1, 1]``.

    Returns ``(cells, open_faces, closed_faces)``: window cells (center inside
    the window), faces between two window cells, and all faces of window cells.
    """
    if n < 8:
        raise ValueError(f"need n >= 8 cells, got {n}")
    h = 2.0 / n
    centers = -1.0 + (np.arange(n) + 0.5) * h
    cells = np.abs(centers) < 0.5
    if cells.sum() < 2:
        raise ValueError("window ]-1/2, 1/2[ is not resolved by at least 2 cells")
    left = np.concatenate([[False], cells])
    right = np.concatenate([cells, [False]])
    return cells, left & right, left | right


def order_dependence_example(n: int) -> tuple[BlockOperator, BlockOperator]:
    """The two descendants of the 1-D derivative under a cut-off to ``]-1/2, 1/2[``.

    Both are built from the mother of the Dirichlet difference ``D`` on
    ``[-1, 1]`` by cutting off the cell side with the window indicator and the
    face side with a face indicator. Discrete cut-offs commute, so the order of
    the two constructions shows up only in which faces survive: keeping only
    faces interior to the window leaves the first component free at the window
    edges and forces the second to vanish there (``A_D2``); keeping the edge
    faces as well forces the first component to vanish (``A_D1``).

    Returns:
        ``(A_D2, A_D1)`` acting on ``(u on n cells, w on n+1 faces)``.
    """
    cells, open_faces, closed_faces = window_masks(n)
    grid = Grid((n,), (2.0 / n,), origin=(-1.0,))
    base = mother(build_grad_dirichlet(grid))
    X = _diag_mask(cells, "chi")
    a_d2 = descendant(descendant(base, _diag_mask(open_faces, "chi_open")), X, side="first")
    a_d1 = descendant(descendant(base, _diag_mask(closed_faces, "chi_closed")), X, side="first")
    a_d2.name, a_d1.name = "A_D2", "A_D1"
    return a_d2, a_d1


def window_edge_indices(n: int) -> np.ndarray:
    """State indices touching the window edges: edge faces and their window cells."""
    cells, open_faces, closed_faces = window_masks(n)
    edge_faces = np.flatnonzero(closed_faces & ~open_faces)
    win = np.flatnonzero(cells)
    edge_cells = [k for k in (win[0], win[-1])]
    return np.unique(np.concatenate([edge_cells, n + edge_faces]))


__all__ = [
    "SQRT2",
    "acoustic_operator",
    "build_coupled_A",
    "build_grad_dirichlet",
    "coupling_map",
    "descendant",
    "elasticity_operator",
    "face_to_cell",
    "matrix_to_voigt",
    "mother",
    "order_dependence_example",
    "restriction",
    "spatial_operator",
    "sym_projection",
    "trace_op",
    "voigt_to_matrix",
    "weak_div",
    "window_edge_indices",
    "window_masks",
    "identity",
    "block_diag",
]
