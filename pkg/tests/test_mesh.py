"""
Tests for triangulations and the mesh text format
"""
import numpy as np
import pytest

from app.core.errors import DegenerateElement, InvalidInput, ParseError
from app.services.mesh import (
    Mesh,
    area,
    mesh_disk,
    mesh_from_spec,
    mesh_read,
    mesh_refine,
    mesh_unit_square,
    mesh_write,
    perimeter,
)

ONE_TRIANGLE = """\
# a single counterclockwise triangle
v 0 0
v 1 0
v 0 1
t 0 1 2
b 0 1
b 1 2
b 2 0
"""


class TestUnitSquare:
    """Structured meshes of [0,1]²"""

    @pytest.mark.parametrize("n", [1, 2, 5])
    def test_counts(self, n):
        mesh = mesh_unit_square(n)
        assert mesh.n_vertices == (n + 1) ** 2
        assert mesh.n_triangles == 2 * n * n
        assert mesh.boundary_edges.shape == (4 * n, 2)

    def test_area_and_perimeter(self):
        mesh = mesh_unit_square(4)
        assert area(mesh) == pytest.approx(1.0)
        assert perimeter(mesh) == pytest.approx(4.0)

    def test_valid_and_counterclockwise(self):
        mesh = mesh_unit_square(3).validate()
        assert np.all(mesh.signed_areas() > 0)

    def test_zero_n_rejected(self):
        with pytest.raises(InvalidInput):
            mesh_unit_square(0)


class TestDisk:
    """Hexagon fans refined towards the unit circle"""

    def test_level_zero_is_hexagon(self):
        mesh = mesh_disk(0)
        assert mesh.n_vertices == 7
        assert mesh.n_triangles == 6
        assert area(mesh) == pytest.approx(3 * np.sqrt(3) / 2)

    def test_boundary_on_circle(self):
        mesh = mesh_disk(2).validate()
        radii = np.linalg.norm(mesh.vertices[mesh.boundary_vertices], axis=1)
        assert np.allclose(radii, 1.0)

    def test_area_approaches_pi(self):
        """Inscribed 48-gon at level 3"""
        assert area(mesh_disk(3)) == pytest.approx(24 * np.sin(np.pi / 24), rel=1e-12)
        assert abs(area(mesh_disk(3)) - np.pi) < 0.02


class TestRefine:
    """Red refinement"""

    def test_refined_square_matches_finer_counts(self):
        fine = mesh_refine(mesh_unit_square(2)).validate()
        assert fine.n_vertices == 25
        assert fine.n_triangles == 32
        assert area(fine) == pytest.approx(1.0)
        assert perimeter(fine) == pytest.approx(4.0)


class TestTextFormat:
    """Reading and writing the v/t/b records"""

    def test_roundtrip_is_exact(self):
        mesh = mesh_disk(1)
        again = mesh_read(mesh_write(mesh))
        assert np.array_equal(again.vertices, mesh.vertices)
        assert np.array_equal(again.triangles, mesh.triangles)
        assert np.array_equal(again.boundary_edges, mesh.boundary_edges)

    def test_read_single_triangle(self):
        mesh = mesh_read(ONE_TRIANGLE)
        assert mesh.n_triangles == 1
        assert area(mesh) == pytest.approx(0.5)

    @pytest.mark.parametrize(
        "text, line_no",
        [
            ("v 0 0\nx 1 2\n", 2),
            ("v 0 a\n", 1),
            ("v 0 0\nv 1 0\nv 0 1\n\nt 0 1\n", 5),
            ("v 0 inf\n", 1),
        ],
    )
    def test_parse_errors_carry_line_numbers(self, text, line_no):
        with pytest.raises(ParseError) as exc:
            mesh_read(text)
        assert exc.value.line_no == line_no
        assert exc.value.to_dict()["line"] == line_no

    def test_clockwise_triangle_is_degenerate(self):
        text = ONE_TRIANGLE.replace("t 0 1 2", "t 0 2 1")
        with pytest.raises(DegenerateElement) as exc:
            mesh_read(text)
        assert exc.value.index == 0

    def test_missing_boundary_rejected(self):
        text = "\n".join(line for line in ONE_TRIANGLE.splitlines() if not line.startswith("b"))
        with pytest.raises(InvalidInput):
            mesh_read(text)

    def test_out_of_range_index(self):
        with pytest.raises(InvalidInput):
            Mesh(np.zeros((3, 2)), [[0, 1, 5]], []).validate()


class TestSpecs:
    """square:<n>, disk:<level>, file:<path>"""

    def test_square_and_disk(self):
        assert mesh_from_spec("square:3").n_triangles == 18
        assert mesh_from_spec("disk:1").n_triangles == 24

    def test_file(self, tmp_path):
        path = tmp_path / "tri.mesh"
        path.write_text(ONE_TRIANGLE)
        assert mesh_from_spec(f"file:{path}").n_vertices == 3

    @pytest.mark.parametrize("spec", ["square:x", "square:0", "disk:-1", "hex:3", "file:/nonexistent/relforms.mesh"])
    def test_bad_specs(self, spec):
        with pytest.raises(InvalidInput):
            mesh_from_spec(spec)
