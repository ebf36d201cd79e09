import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evowave.grid import FieldLayout, Grid, Label, checkerboard_grid, half_space_grid
from evowave.linop import adjoint_check, from_matrix, identity, skew_defect, zero
from evowave.operators import (
    SQRT2,
    acoustic_operator,
    build_coupled_A,
    build_grad_dirichlet,
    coupling_map,
    descendant,
    elasticity_operator,
    face_to_cell,
    matrix_to_voigt,
    mother,
    order_dependence_example,
    restriction,
    spatial_operator,
    sym_projection,
    trace_op,
    voigt_to_matrix,
    weak_div,
    window_edge_indices,
    window_masks,
)


def grid_1d(n=3, h=1.0):
    return Grid((n,), (h,))


class TestGradient:
    def test_constant_field(self):
        G = build_grad_dirichlet(grid_1d())
        assert np.array_equal(G(np.ones(3)), [1, 0, 0, -1])

    def test_linear_field(self):
        G = build_grad_dirichlet(grid_1d())
        assert np.array_equal(G(np.array([1.0, 2, 3])), [1, 1, 1, -3])

    def test_matrix_form_1d(self):
        n, h = 5, 0.5
        D = build_grad_dirichlet(grid_1d(n, h)).to_dense()
        expected = (np.eye(n + 1, n) - np.eye(n + 1, n, k=-1)) / h
        assert np.array_equal(D, expected)

    def test_adjoint_probe_2d(self, rng):
        G = build_grad_dirichlet(Grid((4, 4), (0.25, 0.25)))
        assert adjoint_check(G, trials=10, tol=1e-13, rng=rng).passed

    def test_shape_is_faces_times_d(self, mixed_3d):
        G = build_grad_dirichlet(mixed_3d)
        layout = FieldLayout(mixed_3d)
        assert G.shape == (layout.jacobian_len, layout.velocity_len)

    def test_zero_cells_rejected(self):
        with pytest.raises(ValueError):
            Grid((0,), (1.0,))


class TestWeakDiv:
    def test_1d_value(self):
        G = build_grad_dirichlet(grid_1d())
        div = weak_div(G)
        Gu = G(np.array([1.0, 2, 3]))
        assert np.array_equal(div(Gu), [0, 0, -4])
        assert np.array_equal(div.to_dense(), -G.to_dense().T)

    def test_duality_2d(self, rng, mixed_2d):
        G = build_grad_dirichlet(mixed_2d)
        div = weak_div(G)
        for _ in range(10):
            T, u = rng.standard_normal(G.codomain_dim), rng.standard_normal(G.domain_dim)
            lhs, rhs = div(T) @ u, T @ G(u)
            assert abs(lhs + rhs) <= 1e-13 * (np.linalg.norm(div(T)) * np.linalg.norm(u) + abs(rhs))

    def test_zero_field(self, mixed_2d):
        div = weak_div(build_grad_dirichlet(mixed_2d))
        assert not div(np.zeros(div.domain_dim)).any()


class TestVoigt:
    def test_isometric_2d_example(self):
        T = np.array([[0.0, 1.0], [0.0, 0.0]])
        v = sym_projection(2)(T.ravel())
        assert np.allclose(v, [0, 0, 1 / SQRT2])
        assert np.isclose(np.linalg.norm(v), np.linalg.norm(0.5 * (T + T.T)))

    def test_symmetric_roundtrip_3d(self, rng):
        X = rng.standard_normal((3, 3))
        S = X + X.T
        B = sym_projection(3)
        assert np.allclose(B.T(B(S.ravel())), S.ravel(), atol=1e-15)

    def test_antisymmetric_vanishes(self, rng):
        X = rng.standard_normal((3, 3))
        assert np.allclose(sym_projection(3)((X - X.T).ravel()), 0, atol=1e-15)

    def test_projection_identity(self, rng):
        for d in (1, 2, 3):
            B = sym_projection(d, 4)
            v = rng.standard_normal(B.codomain_dim)
            assert np.allclose(B(B.T(v)), v, atol=1e-14)

    def test_voigt_order_3d(self):
        m = voigt_to_matrix(np.arange(1.0, 7.0), 3)
        assert m[1, 2] * SQRT2 == pytest.approx(4) and m[0, 2] * SQRT2 == pytest.approx(5)
        assert m[0, 1] * SQRT2 == pytest.approx(6)
        assert np.allclose(matrix_to_voigt(m, 3), np.arange(1.0, 7.0))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 3), st.integers(0, 2**31))
    def test_norm_equals_frobenius_of_sym(self, d, seed):
        T = np.random.default_rng(seed).standard_normal((5, d, d))
        v = sym_projection(d, 5)(T.ravel())
        sym = 0.5 * (T + np.swapaxes(T, 1, 2))
        assert np.isclose(np.linalg.norm(v), np.linalg.norm(sym), rtol=1e-13)


class TestTrace:
    def test_identity_field(self):
        tr = trace_op(3, 2)
        assert np.array_equal(tr(np.tile(np.eye(3).ravel(), 2)), [3, 3])

    def test_adjoint_puts_p_on_diagonal(self):
        assert np.array_equal(trace_op(3).T(np.array([2.0])), (2 * np.eye(3)).ravel())

    def test_adjoint_probe_and_trace_identity(self, rng):
        for d in (1, 2, 3):
            tr = trace_op(d, 6)
            assert adjoint_check(tr, rng=rng).passed
            p = rng.standard_normal(6)
            assert np.allclose(tr(tr.T(p)), d * p)


class TestRestriction:
    def test_all_elastic_is_identity(self):
        g = Grid((3, 2), (1.0, 1.0))
        R = restriction(g, Label.ELASTIC, 2)
        assert np.array_equal(R.to_dense(), np.eye(12))

    def test_restrict_extend_is_characteristic_function(self, mixed_2d):
        R = restriction(mixed_2d, "acoustic")
        chi = (mixed_2d.flat_labels == Label.ACOUSTIC).astype(float)
        assert np.array_equal(R.T.to_dense() @ R.to_dense(), np.diag(chi))

    def test_adjoint_probe(self, rng, mixed_3d):
        assert adjoint_check(restriction(mixed_3d, Label.ELASTIC, 6), rng=rng).passed

    def test_missing_label(self):
        with pytest.raises(ValueError, match="no cell carries"):
            restriction(Grid((3,), (1.0,)), Label.ACOUSTIC)


class TestMotherDescendant:
    def test_mother_of_gradient_is_skew(self, rng, mixed_2d):
        A = mother(build_grad_dirichlet(mixed_2d))
        for _ in range(10):
            U = rng.standard_normal(A.domain_dim)
            assert abs(U @ A(U)) <= 1e-13 * np.linalg.norm(U) * np.linalg.norm(A(U))

    def test_zero_mother(self):
        assert not mother(zero(3, 2)).to_dense().any()

    def test_scalar_mother(self):
        assert np.array_equal(mother(from_matrix(np.array([[2.0]]))).to_dense(), [[0, -2], [2, 0]])

    def test_identity_descendant_is_mother(self, mixed_2d):
        A = mother(build_grad_dirichlet(mixed_2d))
        D = descendant(A, identity(A.block(1, 0).codomain_dim))
        assert np.array_equal(D.to_dense(), A.to_dense())

    def test_descendant_equals_explicit_blocks(self, rng):
        C, B = rng.standard_normal((5, 4)), rng.standard_normal((3, 5))
        D = descendant(mother(from_matrix(C)), from_matrix(B)).to_dense()
        explicit = np.block([[np.zeros((4, 4)), -C.T @ B.T], [B @ C, np.zeros((3, 3))]])
        assert np.allclose(D, explicit, atol=1e-13)

    def test_first_side(self, rng):
        C, B = rng.standard_normal((5, 4)), rng.standard_normal((4, 4))
        D = descendant(mother(from_matrix(C)), from_matrix(B), side="first").to_dense()
        assert np.allclose(D[4:, :4], C @ B.T)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ValueError, match="B expects"):
            descendant(mother(from_matrix(rng.standard_normal((5, 4)))), identity(4))
        with pytest.raises(ValueError, match="side"):
            descendant(mother(identity(2)), identity(2), side="middle")

    def test_elasticity_descendant(self, rng, mixed_3d):
        A = elasticity_operator(mixed_3d)
        assert skew_defect(A, rng=rng) < 1e-13
        G, P = build_grad_dirichlet(mixed_3d), face_to_cell(mixed_3d)
        B = sym_projection(3, mixed_3d.n_cells)
        u = rng.standard_normal(G.domain_dim)
        assert np.allclose(A(np.concatenate([u, np.zeros(A.block(1, 0).codomain_dim)]))[G.domain_dim:],
                           -B(P(G(u))), atol=1e-13)

    def test_acoustic_descendant(self, rng, mixed_2d):
        assert skew_defect(acoustic_operator(mixed_2d), rng=rng) < 1e-13


class TestCoupled:
    def test_skew_half_space(self, rng):
        A = build_coupled_A(half_space_grid((6, 6), (1 / 6, 1 / 6), axis=0))
        for _ in range(10):
            U = rng.standard_normal(A.domain_dim)
            assert abs(U @ A(U)) <= 1e-13 * np.linalg.norm(U) * np.linalg.norm(A(U))

    def test_single_label_rejected(self):
        with pytest.raises(ValueError, match="needs both labels"):
            build_coupled_A(Grid((4, 4), (1.0, 1.0), np.ones(16, int)))

    def test_zero_diagonal_blocks(self, mixed_2d):
        A = build_coupled_A(mixed_2d)
        assert A.block(0, 0) is None and A.block(1, 1) is None
        D = A.to_dense()
        nv = FieldLayout(mixed_2d).velocity_len
        assert not D[:nv, :nv].any() and not D[nv:, nv:].any()

    def test_blocks_are_grad_and_div(self, rng, mixed_2d):
        """Lower-left is (-Grad on elastic ; div on acoustic), upper-right (-Div, +grad)."""
        g = mixed_2d
        A = build_coupled_A(g)
        G, P = build_grad_dirichlet(g), face_to_cell(g)
        sym, tr = sym_projection(2, g.n_cells), trace_op(2, g.n_cells)
        RE, RA = restriction(g, "elastic", 3), restriction(g, "acoustic")
        u = rng.standard_normal(G.domain_dim)
        expected = np.concatenate([-RE(sym(P(G(u)))), RA(tr(P(G(u))))])
        assert np.allclose(A.block(1, 0)(u), expected, atol=1e-13)
        p = rng.standard_normal(RA.codomain_dim)
        grad_p = G.T(P.T(tr.T(RA.T(p))))  # -(div)^T p
        assert np.allclose(A.block(0, 1)(np.concatenate([np.zeros(RE.codomain_dim), p])), -grad_p)

    def test_checkerboard_and_3d(self, rng, mixed_3d):
        for g in (checkerboard_grid((5, 4), (0.2, 0.25)), mixed_3d):
            assert skew_defect(build_coupled_A(g), rng=rng) < 1e-12
            assert adjoint_check(coupling_map(g), rng=rng).passed

    def test_spatial_operator_single_physics(self, rng):
        for labels in (0, 1):
            g = Grid((4, 3), (0.25, 1 / 3), np.full(12, labels))
            A = spatial_operator(g)
            assert A.domain_dim == FieldLayout(g).state_len
            assert skew_defect(A, rng=rng) < 1e-13

    def test_upper_face_sampling_has_no_spurious_mode(self):
        """Constant-in-space velocity on interior cells is not annihilated."""
        g = Grid((8,), (1 / 8,))
        A = spatial_operator(g).to_dense()
        assert np.linalg.matrix_rank(A) == A.shape[0]


class TestOrderDependence:
    @pytest.mark.parametrize("n", [16, 64])
    def test_skew_and_different(self, rng, n):
        a2, a1 = order_dependence_example(n)
        D2, D1 = a2.to_dense(), a1.to_dense()
        assert np.array_equal(D2, -D2.T) and np.array_equal(D1, -D1.T)
        assert adjoint_check(a2, rng=rng).passed and adjoint_check(a1, rng=rng).passed
        assert not np.array_equal(D2, D1)

    @pytest.mark.parametrize("n", [16, 24, 64])
    def test_difference_confined_to_window_edges(self, n):
        a2, a1 = order_dependence_example(n)
        rows, cols = np.nonzero(a2.to_dense() - a1.to_dense())
        edge = window_edge_indices(n)
        assert np.isin(rows, edge).all() and np.isin(cols, edge).all()

    def test_edge_indices_by_enumeration(self):
        n = 16
        cells, open_f, closed_f = window_masks(n)
        centers = -1 + (np.arange(n) + 0.5) * (2 / n)
        assert np.array_equal(np.flatnonzero(cells), np.flatnonzero(np.abs(centers) < 0.5))
        faces = -1 + np.arange(n + 1) * (2 / n)
        edge_faces = np.flatnonzero(closed_f & ~open_f)
        assert np.allclose(np.abs(faces[edge_faces]), 0.5)
        assert np.array_equal(window_edge_indices(n), [4, 11, n + 4, n + 12])

    def test_which_component_vanishes(self):
        """A_D2 kills the face component at the window edges, A_D1 keeps it coupled."""
        n = 16
        a2, a1 = order_dependence_example(n)
        D2, D1 = a2.to_dense(), a1.to_dense()
        for f in (n + 4, n + 12):
            assert not D2[f].any() and D1[f].any()

    def test_interior_input_agrees(self, rng):
        n = 16
        a2, a1 = order_dependence_example(n)
        U = np.zeros(2 * n + 1)
        U[6:10] = rng.standard_normal(4)
        U[n + 6:n + 11] = rng.standard_normal(5)
        assert np.array_equal(a2(U), a1(U))

    @pytest.mark.parametrize("n", [4, 6])
    def test_unresolved_window(self, n):
        with pytest.raises(ValueError):
            order_dependence_example(n)
