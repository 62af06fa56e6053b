"""
Tests for the render service
"""

import xml.etree.ElementTree as ET

import numpy as np
import pytest

from src.exceptions import ContractError
from src.models.sequence import SignSequence
from src.services.render_service import RenderService


@pytest.fixture
def sequence(rng):
    return SignSequence(frames=rng.uniform(-1.0, 1.0, size=(3, 4, 2)))


@pytest.fixture
def renderer():
    return RenderService([(0, 1), (1, 2), (2, 3)], width=200, height=160, scale=30.0)


def joint_centres(path):
    root = ET.parse(path).getroot()
    centres = []
    for element in root.iter():
        tag = element.tag.rsplit("}", 1)[-1]
        if tag in ("circle", "ellipse"):
            centres.append((float(element.get("cx")), float(element.get("cy"))))
    return centres


class TestPixelCoordinates:
    def test_affine_mapping(self, renderer):
        seq = SignSequence(frames=np.array([[[0.0, 0.0], [1.0, -1.0], [0.5, 0.5], [-2.0, 0.0]]]))
        xy = renderer.pixel_coordinates(seq)
        np.testing.assert_allclose(xy[0, 1], [100.0 + 30.0, 80.0 - 30.0])
        np.testing.assert_allclose(xy[0, 3], [100.0 - 60.0, 80.0])

    def test_single_coordinate_centred_vertically(self, renderer):
        xy = renderer.pixel_coordinates(SignSequence(frames=np.ones((2, 4, 1))))
        np.testing.assert_allclose(xy[..., 1], 80.0)

    def test_edge_outside_skeleton(self, sequence):
        with pytest.raises(ContractError):
            RenderService([(0, 9)]).pixel_coordinates(sequence)


class TestSvgFrames:
    def test_one_file_per_frame(self, renderer, sequence, tmp_path):
        paths = renderer.render_svg_frames(sequence, tmp_path / "frames")
        assert [p.name for p in paths] == ["frame_0000.svg", "frame_0001.svg", "frame_0002.svg"]
        assert all(p.is_file() for p in paths)

    def test_joints_drawn_at_pixel_positions(self, renderer, sequence, tmp_path):
        paths = renderer.render_svg_frames(sequence, tmp_path)
        expected = renderer.pixel_coordinates(sequence)
        for frame, path in zip(expected, paths, strict=True):
            centres = joint_centres(path)
            assert len(centres) == 4
            drawn_x = sorted(x for x, _ in centres)
            np.testing.assert_allclose(drawn_x, sorted(frame[:, 0]), atol=0.5)


class TestPdfStrip:
    def test_writes_pdf(self, renderer, sequence, tmp_path):
        path = renderer.render_pdf_strip(sequence, tmp_path / "out" / "strip.pdf", panels=2, title="w1 w2")
        assert path.read_bytes().startswith(b"%PDF")

    def test_panels_must_be_positive(self, renderer, sequence, tmp_path):
        with pytest.raises(ContractError):
            renderer.render_pdf_strip(sequence, tmp_path / "strip.pdf", panels=0)


def test_from_config_uses_chain_edges(config):
    renderer = RenderService.from_config(config)
    assert renderer.edges == [(j, j + 1) for j in range(config.num_joints - 1)]
    assert renderer.width == config.render_width
