import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import CONFIGS, DATA
from evowave.config import ConfigError, emit_config, load_config, parse_config
from evowave.grid import Label
from evowave.materials import assemble_M0

MINIMAL = """
[grid]
counts = [8]
spacing = [0.125]

[grid.labels]
rule = "half-space"

[material.elastic]
density = 1.0
stiffness = 1.0

[material.acoustic]
bulk_modulus = 1.0

[stepping]
tau = 0.01
t_end = 0.1
"""


def with_line(text, after, line):
    return text.replace(after, after + "\n" + line, 1)


def test_minimal_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.stepping.tol == 1e-12 and cfg.stepping.stride == 10
    assert cfg.source.type == "none" and cfg.output.formats == ("csv",)
    g = cfg.build_grid()
    assert g.counts == (8,) and g.elastic_cells.size == 4


@pytest.mark.parametrize("name", ["reflection_1d", "mixed_2d", "mixed_3d"])
def test_round_trip(name):
    cfg = load_config(CONFIGS / f"{name}.toml")
    assert parse_config(emit_config(cfg)) == cfg


def test_golden_canonical_form():
    cfg = load_config(CONFIGS / "reflection_1d.toml")
    assert emit_config(cfg) == (DATA / "reflection_1d.canonical.toml").read_text()


def test_negative_spacing_names_key():
    text = MINIMAL.replace("spacing = [0.125]", "spacing = [-0.125]")
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.key == "grid.spacing" and err.value.line == 4


@pytest.mark.parametrize(
    "after, line, key",
    [("[grid]", "cell_count = 3", "grid.cell_count"),
     ("[stepping]", "dt = 0.1", "stepping.dt"),
     ("[material.elastic]", "densty = 2.0", "material.elastic.densty"),
     ("[grid.labels]", "colour = 1", "grid.labels.colour")],
)
def test_unknown_key_is_error(after, line, key):
    text = with_line(MINIMAL, after, line)
    with pytest.raises(ConfigError, match="unknown key") as err:
        parse_config(text)
    assert err.value.key == key
    assert text.splitlines()[err.value.line - 1].strip() == line


def test_unknown_section():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config(MINIMAL + "\n[solver]\nrestart = 3\n")


@pytest.mark.parametrize(
    "old, new, key",
    [("tau = 0.01\n", "", "stepping.tau"), ("counts = [8]\n", "", "grid.counts")],
)
def test_missing_required(old, new, key):
    with pytest.raises(ConfigError, match="missing required") as err:
        parse_config(MINIMAL.replace(old, new))
    assert err.value.key == key


@pytest.mark.parametrize(
    "old, new, key",
    [("tau = 0.01", 'tau = "fast"', "stepping.tau"),
     ("counts = [8]", "counts = [8.5]", "grid.counts"),
     ("t_end = 0.1", "t_end = 0.1\nstride = 2.0", "stepping.stride"),
     ('rule = "half-space"', 'rule = "spiral"', "grid.labels.rule"),
     ("stiffness = 1.0", "stiffness = [[1.0, 0.0], [0.0, 1.0]]", "material.elastic.stiffness")],
)
def test_type_errors(old, new, key):
    with pytest.raises(ConfigError) as err:
        parse_config(MINIMAL.replace(old, new))
    assert err.value.key == key


def test_missing_region_material():
    text = MINIMAL.replace("[material.acoustic]\nbulk_modulus = 1.0\n", "")
    with pytest.raises(ConfigError, match="acoustic cells"):
        parse_config(text)


def test_conflicting_stiffness():
    with pytest.raises(ConfigError, match="only one"):
        parse_config(with_line(MINIMAL, "stiffness = 1.0", "lame = [1.0, 1.0]"))


def test_malformed_toml_reports_line():
    with pytest.raises(ConfigError, match="malformed") as err:
        parse_config("[grid]\ncounts = [8\n")
    assert err.value.line is not None


def test_explicit_labels_and_material():
    text = MINIMAL.replace('rule = "half-space"', 'rule = "explicit"\nvalues = ["E", "E", "A", "A", 0, 1, "fluid", "solid"]')
    g = parse_config(text).build_grid()
    assert list(g.flat_labels) == [0, 0, 1, 1, 0, 1, 1, 0]


def test_material_assembly_from_config():
    cfg = load_config(CONFIGS / "mixed_2d.toml")
    g = cfg.build_grid()
    M0 = assemble_M0(g, cfg.build_material(g))
    assert M0.domain_dim == 2 * g.n_cells + 3 * g.elastic_cells.size + g.acoustic_cells.size
    assert np.allclose(cfg.build_material(g).rho_star[0], 1.5 * np.eye(2))


def test_refined_grid_keeps_interface():
    cfg = load_config(CONFIGS / "mixed_2d.toml")
    g0, g1 = cfg.build_grid(), cfg.build_grid(refine=1)
    assert g1.counts == (64, 64) and g1.elastic_cells.size == 4 * g0.elastic_cells.size


def test_source_profile_and_causal_source():
    cfg = load_config(CONFIGS / "reflection_1d.toml")
    g = cfg.build_grid()
    src = cfg.build_source(g)
    assert not src(0.04).any() and src(0.1).any()
    prof = cfg.source_profile(g)
    p = prof[g.n_cells + g.elastic_cells.size:]
    assert 0.95 < p.max() <= 1.0 and not prof[:g.n_cells].any()


def test_positivity_section():
    cfg = load_config(CONFIGS / "mixed_2d.toml")
    g = cfg.build_grid()
    m1 = cfg.m1_blocks(cfg.build_material(g))
    assert set(m1) == {"rho_star"} and np.allclose(m1["rho_star"][0], -np.eye(2))


@settings(max_examples=25, deadline=None)
@given(
    counts=st.lists(st.integers(1, 6), min_size=1, max_size=3),
    tau=st.floats(1e-4, 1.0),
    stride=st.integers(1, 50),
    density=st.floats(0.1, 10.0),
)
def test_round_trip_property(counts, tau, stride, density):
    d = len(counts)
    text = f"""
[grid]
counts = {counts}
spacing = {[0.5] * d}
[grid.labels]
rule = "uniform"
label = "acoustic"
[material.acoustic]
density = {density!r}
compressibility = 2.0
[stepping]
tau = {tau!r}
t_end = 1.0
stride = {stride}
"""
    cfg = parse_config(text)
    assert parse_config(emit_config(cfg)) == cfg
    assert cfg.build_grid().has(Label.ACOUSTIC)
