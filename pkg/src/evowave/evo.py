"""Time integration of ``M0 dU/dt + A U = F``.

The Crank-Nicolson (Cayley) step conserves ``E(U) = 1/2 <U, M0 U>`` exactly
when ``A`` is skew and the source vanishes, up to the inner solver tolerance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from .grid import FieldLayout, Grid
from .linop import DENSE_CAP, BlockOperator, LinearOperator
from .materials import (
    BlockDiagonalOperator,
    MaterialLaw,
    assemble_M0,
    check_positivity_M0,
    congruence_transform,
)
from .operators import spatial_operator

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Inner linear solve did not reach the requested residual."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class CertificationError(RuntimeError):
    """Material law failed the positivity certification."""


@dataclass
class StateVector:
    """Unknowns ``(v, (T, p))``: velocity on all cells, Voigt stress on elastic
    cells, pressure on acoustic cells."""

    layout: FieldLayout
    velocity: np.ndarray
    stress: np.ndarray
    pressure: np.ndarray

    def __post_init__(self):
        g = self.layout.grid
        self.velocity = np.asarray(self.velocity, dtype=float).reshape(g.n_cells, g.dim)
        self.stress = np.asarray(self.stress, dtype=float).reshape(g.elastic_cells.size, g.n_voigt)
        self.pressure = np.asarray(self.pressure, dtype=float).reshape(g.acoustic_cells.size)

    @classmethod
    def zeros(cls, layout: FieldLayout) -> "StateVector":
        return cls.from_array(layout, np.zeros(layout.state_len))

    @classmethod
    def from_array(cls, layout: FieldLayout, u: np.ndarray) -> "StateVector":
        v, T, p = layout.split(np.array(u, dtype=float))
        return cls(layout, v, T, p)

    def to_array(self) -> np.ndarray:
        return self.layout.join(self.velocity, self.stress, self.pressure)

    def __add__(self, other: "StateVector") -> "StateVector":
        return StateVector.from_array(self.layout, self.to_array() + other.to_array())

    def __mul__(self, s: float) -> "StateVector":
        return StateVector.from_array(self.layout, s * self.to_array())

    __rmul__ = __mul__


StateLike = Union[StateVector, np.ndarray]


def _as_array(state: StateLike) -> np.ndarray:
    return state.to_array() if isinstance(state, StateVector) else np.asarray(state, dtype=float)


@dataclass
class SourceTerm:
    """Right-hand side ``F(t)`` with declared causal support ``t >= onset_time``.

    ``evaluate`` returns a state-shaped vector. Any value requested before
    the onset is zero regardless of what the wrapped function would return.
    """

    onset_time: float
    fn: Callable[[float], np.ndarray]
    length: int

    def evaluate(self, t: float) -> np.ndarray:
        if t < self.onset_time:
            return np.zeros(self.length)
        out = np.asarray(self.fn(t), dtype=float)
        if out.shape != (self.length,):
            raise ValueError(f"source returned shape {out.shape}, expected ({self.length},)")
        return out

    __call__ = evaluate

    def scaled(self, factor: float) -> "SourceTerm":
        return SourceTerm(self.onset_time, lambda t: factor * self.fn(t), self.length)

    @classmethod
    def none(cls, length: int) -> "SourceTerm":
        return cls(np.inf, lambda t: np.zeros(length), length)


def sin2_pulse(t: np.ndarray | float, onset: float, duration: float) -> np.ndarray | float:
    """Smooth pulse ``sin^2(pi (t - onset) / duration)`` on ``[onset, onset + duration]``."""
    s = (np.asarray(t, dtype=float) - onset) / duration
    return np.where((s >= 0) & (s <= 1), np.sin(np.pi * s) ** 2, 0.0)


def pulse_source(spatial: np.ndarray, onset: float, duration: float, amplitude: float = 1.0) -> SourceTerm:
    """Separable source ``amplitude * spatial * sin2_pulse(t)``."""
    spatial = np.asarray(spatial, dtype=float)

    def fn(t):
        return amplitude * float(sin2_pulse(t, onset, duration)) * spatial

    return SourceTerm(onset, fn, spatial.size)


@dataclass
class Trajectory:
    """Recorded snapshots of a run.

    ``energy[k]`` is the energy of ``states[k]``; ``energy_history`` holds the
    energy after every step as ``(times, energies)``.
    """

    times: np.ndarray
    states: list
    energy: np.ndarray
    energy_history: tuple[np.ndarray, np.ndarray]
    iterations: int = 0
    c0: float = float("nan")
    skew_defect: float = float("nan")


def energy(state: StateLike, M0: LinearOperator, cell_volume: Optional[float] = None) -> float:
    """``1/2 <U, M0 U>`` in the volume-weighted inner product (joules).

    ``cell_volume`` defaults to the state's grid cell volume, or 1 for bare arrays.
    """
    u = _as_array(state)
    if u.shape != (M0.domain_dim,):
        raise ValueError(f"state of length {u.size} does not match M0 of size {M0.domain_dim}")
    if cell_volume is None:
        cell_volume = state.layout.grid.cell_volume if isinstance(state, StateVector) else 1.0
    return 0.5 * cell_volume * float(u @ M0.apply(u))


def _inverse_of(M0: LinearOperator) -> LinearOperator:
    if isinstance(M0, BlockDiagonalOperator):
        return M0.inverse()
    raise TypeError("M0 must be block diagonal so that its inverse is cellwise")


def _shifted_gmres(M0, A, tau, rhs, tol, max_iter, restart=60):
    n = M0.domain_dim
    bnorm = np.linalg.norm(rhs)
    Minv = _inverse_of(M0)
    half = 0.5 * tau

    def shifted(x):
        return M0.apply(x) + half * A.apply(x)

    op = spla.LinearOperator((n, n), matvec=lambda y: shifted(Minv.apply(y)), dtype=float)
    restart = min(restart, n)
    count = [0]

    def tick(_):
        count[0] += 1

    y = np.zeros(n)
    residual = np.inf
    while count[0] < max_iter:
        y, _ = spla.gmres(
            op, rhs, x0=y, rtol=0.25 * tol, atol=0.0, restart=restart, maxiter=1,
            callback=tick, callback_type="pr_norm",
        )
        x = Minv.apply(y)
        residual = np.linalg.norm(rhs - shifted(x)) / bnorm
        if residual <= tol:
            return x, count[0]
    raise SolverError(
        f"shifted solve did not converge in {count[0]} iterations "
        f"(relative residual {residual:.3e} > {tol:.1e})",
        residual,
        count[0],
    )


def _mother_block(A: LinearOperator):
    """Lower-left block ``C`` if ``A`` is ``[[0, -C^T], [C, 0]]`` as built by ``mother``."""
    if not isinstance(A, BlockOperator) or len(A.blocks) != 2 or len(A.blocks[0]) != 2:
        return None
    C, upper = A.block(1, 0), A.block(0, 1)
    if A.block(0, 0) is not None or A.block(1, 1) is not None or C is None or upper is None:
        return None
    y = np.random.default_rng(0).standard_normal(C.codomain_dim)
    a, b = upper.apply(y), -C.apply_adjoint(y)
    if np.linalg.norm(a - b) > 1e-12 * max(np.linalg.norm(b), 1.0):
        return None
    return C


def _shifted_schur_cg(M0, A, C, tau, rhs, tol, max_iter):
    # K = [[Mv, -a C^T], [a C, Ms]]; eliminating the second unknown leaves the
    # SPD system (Mv + a^2 C^T Ms^-1 C) v = r_v + a C^T Ms^-1 r_s.
    a = 0.5 * tau
    nv = C.domain_dim
    Minv = _inverse_of(M0)
    ns = M0.domain_dim - nv
    zv, zs = np.zeros(nv), np.zeros(ns)

    def Mv(v):
        return M0.apply(np.concatenate([v, zs]))[:nv]

    def Mv_inv(v):
        return Minv.apply(np.concatenate([v, zs]))[:nv]

    def Ms_inv(s):
        return Minv.apply(np.concatenate([zv, s]))[nv:]

    r_v, r_s = rhs[:nv], rhs[nv:]
    b = r_v + a * C.apply_adjoint(Ms_inv(r_s))
    schur = spla.LinearOperator(
        (nv, nv), matvec=lambda v: Mv(v) + a * a * C.apply_adjoint(Ms_inv(C.apply(v))), dtype=float
    )
    precond = spla.LinearOperator((nv, nv), matvec=Mv_inv, dtype=float)
    bnorm = np.linalg.norm(rhs)
    count = [0]

    def tick(_):
        count[0] += 1

    v = np.zeros(nv)
    target = 0.25 * tol * bnorm
    residual = np.inf
    while count[0] < max_iter:
        v, _ = spla.cg(schur, b, x0=v, rtol=0.0, atol=target, maxiter=max_iter - count[0],
                       M=precond, callback=tick)
        s = Ms_inv(r_s - a * C.apply(v))
        x = np.concatenate([v, s])
        residual = np.linalg.norm(rhs - M0.apply(x) - a * A.apply(x)) / bnorm
        if residual <= tol:
            return x, count[0]
        target *= 0.1
        if target < np.finfo(float).eps * bnorm * 1e-3:
            break
    raise SolverError(
        f"shifted solve did not converge in {count[0]} iterations "
        f"(relative residual {residual:.3e} > {tol:.1e})",
        residual,
        count[0],
    )


def _shifted_solve(M0, A, tau, rhs, tol, max_iter):
    rhs = np.asarray(rhs, dtype=float)
    if not np.any(rhs):
        return np.zeros(M0.domain_dim), 0
    C = _mother_block(A)
    if C is not None:
        return _shifted_schur_cg(M0, A, C, tau, rhs, tol, max_iter)
    return _shifted_gmres(M0, A, tau, rhs, tol, max_iter)


def solve_shifted(
    M0: LinearOperator,
    A: LinearOperator,
    tau: float,
    rhs: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 5000,
) -> np.ndarray:
    """Solve ``(M0 + tau/2 A) x = rhs`` to relative residual ``tol``.

    When ``A`` has the mother form ``[[0, -C^T], [C, 0]]`` the second unknown
    is eliminated exactly and the symmetric positive definite velocity system
    is solved by conjugate gradients preconditioned with the velocity blocks of
    ``M0``. Any other skew ``A`` goes through restarted GMRES, right
    preconditioned with ``M0^-1``. Either way the residual of the full system
    is recomputed before returning. A zero right-hand side returns an exact zero.

    Raises:
        SolverError: if ``max_iter`` Krylov iterations do not suffice.
    """
    return _shifted_solve(M0, A, tau, rhs, tol, max_iter)[0]


def step_crank_nicolson(
    state: StateLike,
    M0: LinearOperator,
    A: LinearOperator,
    source: Optional[SourceTerm],
    t: float,
    tau: float,
    tol: float = 1e-12,
    max_iter: int = 5000,
) -> StateLike:
    """One midpoint step ``(M0 + tau/2 A) U+ = (M0 - tau/2 A) U + tau F(t + tau/2)``.

    ``tau`` may be negative (backward stepping). Returns the same type as ``state``.
    """
    if tau == 0:
        raise ValueError("tau must be nonzero")
    if tol <= 0:
        raise ValueError("tol must be positive")
    u = _as_array(state)
    rhs = M0.apply(u) - 0.5 * tau * A.apply(u)
    if source is not None:
        rhs = rhs + tau * source.evaluate(t + 0.5 * tau)
    new = solve_shifted(M0, A, tau, rhs, tol, max_iter)
    if isinstance(state, StateVector):
        return StateVector.from_array(state.layout, new)
    return new


def run(
    grid: Grid,
    material: MaterialLaw,
    source: SourceTerm,
    t_end: float,
    tau: float,
    tol: float = 1e-12,
    snapshot_stride: int = 10,
    max_iter: int = 5000,
    on_snapshot: Optional[Callable[[float, StateVector], None]] = None,
) -> Trajectory:
    """Integrate from the quiescent state ``U = 0`` up to ``t_end``.

    Snapshots are taken at ``t = 0``, every ``snapshot_stride`` steps and at the
    final step. Step ``n`` ends at ``n * tau``; the number of steps is
    ``round(t_end / tau)``.

    Raises:
        CertificationError: if ``M(0)`` is not positive definite.
        SolverError: propagated from the inner solve.
    """
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    if not tau > 0:
        raise ValueError("tau must be positive")
    if snapshot_stride < 1:
        raise ValueError("snapshot_stride must be >= 1")
    cert = check_positivity_M0(material)
    if not cert.passed:
        raise CertificationError(
            f"M(0) is not positive definite: smallest eigenvalue {cert.c0_estimate:.3e} "
            f"in {cert.block_kind} block of cell {cert.worst_cell}"
        )
    layout = FieldLayout(grid)
    M0 = assemble_M0(grid, material)
    A = spatial_operator(grid)
    n_steps = max(1, int(round(t_end / tau)))
    vol = grid.cell_volume

    u = np.zeros(layout.state_len)
    times, states, energies = [0.0], [StateVector.from_array(layout, u)], [0.0]
    hist_t, hist_e = [0.0], [0.0]
    if on_snapshot is not None:
        on_snapshot(0.0, states[0])
    iterations = 0
    for k in range(n_steps):
        t = k * tau
        rhs = M0.apply(u) - 0.5 * tau * A.apply(u) + tau * source.evaluate(t + 0.5 * tau)
        u, its = _shifted_solve(M0, A, tau, rhs, tol, max_iter)
        iterations += its
        t_new = (k + 1) * tau
        e = energy(u, M0, vol)
        hist_t.append(t_new)
        hist_e.append(e)
        if (k + 1) % snapshot_stride == 0 or k + 1 == n_steps:
            snap = StateVector.from_array(layout, u)
            times.append(t_new)
            states.append(snap)
            energies.append(e)
            if on_snapshot is not None:
                on_snapshot(t_new, snap)
    log.debug("run finished: %d steps, %d Krylov iterations", n_steps, iterations)
    return Trajectory(
        np.array(times), states, np.array(energies),
        (np.array(hist_t), np.array(hist_e)), iterations, cert.c0_estimate,
    )


def dense_expm_oracle(
    grid: Grid,
    material: MaterialLaw,
    U0: StateLike,
    t: float,
    cap: int = DENSE_CAP,
) -> StateLike:
    """Source-free solution ``U(t)`` through the orthogonal group ``exp(-t S)``.

    ``S = sqrt(M0^-1) A sqrt(M0^-1)`` is formed densely; the result is
    ``sqrt(M0^-1) exp(-t S) sqrt(M0) U0``.
    """
    layout = FieldLayout(grid)
    if layout.state_len > cap:
        raise ValueError(f"{layout.state_len} unknowns exceed the dense cap {cap}")
    M0 = assemble_M0(grid, material)
    S = congruence_transform(M0, spatial_operator(grid)).to_dense(cap)
    u0 = _as_array(U0)
    if t == 0:
        out = u0.copy()
    else:
        v = scipy.linalg.expm(-t * S) @ M0.sqrt().apply(u0)
        out = M0.inv_sqrt().apply(v)
    if isinstance(U0, StateVector):
        return StateVector.from_array(layout, out)
    return out
