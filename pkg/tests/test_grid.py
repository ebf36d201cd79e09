import numpy as np
import pytest

from evowave.grid import FieldLayout, Grid, Label, checkerboard_grid, half_space_grid


def test_label_parsing():
    assert Label.parse("fluid") is Label.ACOUSTIC
    assert Label.parse(" Elastic ") is Label.ELASTIC
    assert Label.parse(1) is Label.ACOUSTIC
    with pytest.raises(KeyError):
        Label.parse("plasma")


@pytest.mark.parametrize(
    "counts, spacing, match",
    [((), (), "dimension"), ((2, 2), (1.0,), "same length"), ((2, 0), (1.0, 1.0), "positive"),
     ((2,), (-1.0,), "spacing"), ((2,), (0.0,), "spacing")],
)
def test_invalid_grids(counts, spacing, match):
    with pytest.raises(ValueError, match=match):
        Grid(counts, spacing)


def test_label_count_mismatch():
    with pytest.raises(ValueError, match="expected 4 labels"):
        Grid((2, 2), (1.0, 1.0), [0, 1, 0])


def test_labels_partition_cells(mixed_3d):
    g = mixed_3d
    both = np.sort(np.concatenate([g.elastic_cells, g.acoustic_cells]))
    assert np.array_equal(both, np.arange(g.n_cells))


def test_half_space_and_swap():
    g = half_space_grid((4, 2), (0.25, 0.5), axis=0)
    assert g.labels[:2].max() == Label.ELASTIC and g.labels[2:].min() == Label.ACOUSTIC
    s = g.swapped()
    assert np.array_equal(s.elastic_cells, g.acoustic_cells)


def test_checkerboard_alternates():
    g = checkerboard_grid((3, 3), (1.0, 1.0))
    assert np.all(g.labels[1:] != g.labels[:-1]) and np.all(g.labels[:, 1:] != g.labels[:, :-1])


def test_centers_c_order():
    g = Grid((2, 3), (1.0, 0.5), origin=(1.0, 0.0))
    x = g.centers()
    assert np.allclose(x[1], [1.5, 0.75]) and np.allclose(x[3], [2.5, 0.25])


def test_layout_lengths_and_split(rng, mixed_2d):
    lay = FieldLayout(mixed_2d)
    nE, nA = mixed_2d.elastic_cells.size, mixed_2d.acoustic_cells.size
    assert lay.velocity_len == 2 * 48 and lay.stress_len == 3 * nE and lay.pressure_len == nA
    assert lay.jacobian_len == 2 * (9 * 6 + 8 * 7)
    u = rng.standard_normal(lay.state_len)
    v, T, p = lay.split(u)
    assert v.shape == (48, 2) and T.shape == (nE, 3) and p.shape == (nA,)
    assert np.array_equal(lay.join(v, T, p), u)
    with pytest.raises(ValueError):
        lay.split(u[:-1])
