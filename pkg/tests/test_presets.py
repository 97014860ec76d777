"""
Tests for the self-verifying presets
"""
import pytest

from app.cli.presets import (
    PRESETS,
    SEQUENCE_PRESETS,
    canonical_id,
    disk_reference,
    preset,
    run_preset,
    steklov_table,
)
from app.cli.schema import ExperimentConfig
from app.core.errors import InvalidInput
from app.services.fem2d import CoefficientField

ALGEBRAIC = ["identity", "5.2", "5.4", "5.13", "5.14", "5.15", "6.1", "8.2", "8.3"]


def _failed(table):
    return [c.name for c in table.checks if c.asserted and not c.passed]


class TestRegistry:
    """Preset lookup and configuration"""

    def test_all_presets_registered(self):
        assert list(PRESETS) == [
            "identity", "5.2", "5.4", "5.13", "5.14", "5.15", "6.1",
            "7.3", "7.4", "7.7", "8.2", "8.3", "8.4", "disk-steklov",
        ]
        assert SEQUENCE_PRESETS == ["5.2", "5.4", "5.13", "5.14", "5.15", "6.1", "7.3", "7.4", "7.7"]

    @pytest.mark.parametrize("raw", ["5.2", "example-5.2", "Example-5.2", " 5.2 "])
    def test_canonical_id(self, raw):
        assert canonical_id(raw) == "5.2"

    def test_unknown_preset(self):
        with pytest.raises(InvalidInput):
            canonical_id("9.9")

    def test_preset_config(self):
        config = preset("example-7.3")
        assert config.kind == "examples"
        assert config.id == "7.3"
        assert config.mesh == "square:16"
        assert preset("5.2").s_values == [0.5, 1.0, 2.0]

    def test_preset_is_deterministic(self):
        assert preset("8.4") == preset("8.4")


class TestAlgebraicPresets:
    """Every worked example reproduces its expected outcome"""

    @pytest.mark.parametrize("preset_id", ALGEBRAIC)
    def test_preset_passes(self, preset_id):
        table = run_preset(preset_id)
        assert table.ok, _failed(table)

    def test_example_5_2_has_one_row_per_n(self):
        table = run_preset("5.2")
        assert len(table.rows) == 14
        assert "resolvent_error_s=0.5" in table.columns
        assert table.meta["limit_dimW"] == 1

    def test_overrides_reach_the_preset(self):
        config = ExperimentConfig(kind="examples", id="5.4", s_values=[2.0])
        table = run_preset("5.4", config)
        assert "resolvent_error_s=2" in table.columns
        assert table.ok, _failed(table)

    def test_quantity_table(self):
        table = run_preset("8.3")
        values = dict(table.rows)
        assert values["graph_dim"] == 2
        assert values["accretive"] is False
        assert values["lower_bound"] is None

    def test_seeded_transport_example(self):
        config = ExperimentConfig(kind="examples", id="8.2", seed=7)
        assert run_preset("8.2", config).ok


class TestFemPresets:
    """Finite-element presets on coarse meshes"""

    @pytest.mark.parametrize("preset_id", ["7.3", "7.4", "7.7"])
    def test_sequence_presets_on_coarse_mesh(self, preset_id):
        config = ExperimentConfig(kind="examples", id=preset_id, mesh="square:4")
        table = run_preset(preset_id, config)
        assert table.ok, _failed(table)
        assert len(table.rows) == 20

    def test_mean_free_trace(self):
        config = ExperimentConfig(kind="examples", id="8.4", mesh="square:4")
        table = run_preset("8.4", config)
        assert table.ok, _failed(table)
        assert dict(table.rows)["dimW"] == 1

    def test_steklov_table_without_reference(self):
        table = steklov_table(
            "square", "square:4", lambda mesh: CoefficientField.identity(mesh.n_triangles), 4
        )
        assert table.columns == ["index", "steklov", "schur", "reference"]
        assert [c.name for c in table.checks] == ["graph_matches_schur"]
        assert all(row[3] is None for row in table.rows)
        assert table.ok

    def test_disk_reference(self):
        assert disk_reference(5) == [0.0, 1.0, 1.0, 2.0, 2.0]

    def test_reference_only_on_the_disk(self):
        config = ExperimentConfig(kind="examples", id="disk-steklov", mesh="square:4")
        table = run_preset("disk-steklov", config)
        assert "matches_reference" not in [c.name for c in table.checks]

    @pytest.mark.slow
    def test_disk_steklov(self):
        table = run_preset("disk-steklov")
        assert table.ok, _failed(table)
        assert [row[0] for row in table.rows] == [0, 1, 2, 3, 4]

    @pytest.mark.slow
    @pytest.mark.parametrize("preset_id", ["7.3", "7.4", "7.7", "8.4"])
    def test_default_meshes(self, preset_id):
        table = run_preset(preset_id)
        assert table.ok, _failed(table)
