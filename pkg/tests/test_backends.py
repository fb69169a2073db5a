"""Stub backends and the sliding-window proposal source."""

import numpy as np
import pytest

from xrayproto.backends import (
    GridProposalSource,
    ScriptedMaterialOracle,
    StubExtractor,
    StubMaterialOracle,
    StubRgbFilter,
    StubSegmenter,
    build_bundle,
)
from xrayproto.types import ImageTensor


def image_with_square(size, sq, color=(0.2, 0.2, 0.8)):
    pixels = np.ones((size, size, 3))
    pixels[:sq, :sq] = color
    return ImageTensor(pixels)


class TestStubSegmenter:
    def test_dark_pixels_are_foreground(self):
        seg = StubSegmenter()
        img = image_with_square(8, 4)
        mask = seg.segment(img)
        assert mask.values[:4, :4].all()
        assert not mask.values[4:, 4:].any()

    def test_cutoff_is_strict_less_than(self):
        seg = StubSegmenter(cutoff=0.5)
        img = ImageTensor(np.full((2, 2, 3), 0.5))
        assert seg.segment(img).foreground_fraction() == 0.0

    def test_white_image_is_all_background(self):
        assert StubSegmenter().segment(
            ImageTensor(np.ones((4, 4, 3)))
        ).foreground_fraction() == 0.0


class TestStubExtractor:
    def test_single_patch_feature_layout(self):
        ext = StubExtractor(patch=8, dim=8)
        grid = ext.extract_grid(ImageTensor(np.full((8, 8, 3), 0.25)))
        assert (grid.grid_h, grid.grid_w, grid.dim) == (1, 1, 8)
        np.testing.assert_allclose(
            grid.features[0, 0], [0.25, 0.25, 0.25, 0, 0, 0, 0.5, 0.5],
            atol=1e-12,
        )

    def test_ceil_division_grid(self):
        ext = StubExtractor(patch=8, dim=8)
        grid = ext.extract_grid(ImageTensor(np.zeros((16, 9, 3))))
        assert (grid.grid_h, grid.grid_w) == (2, 2)

    def test_zero_padding_beyond_eight(self):
        ext = StubExtractor(patch=4, dim=12)
        grid = ext.extract_grid(ImageTensor(np.full((4, 4, 3), 0.5)))
        assert grid.dim == 12
        np.testing.assert_array_equal(grid.features[0, 0, 8:], np.zeros(4))
        assert ext.dim == 12

    def test_rejects_dim_below_eight(self):
        with pytest.raises(ValueError):
            StubExtractor(patch=4, dim=4)


class TestGridProposalSource:
    def test_even_tiling_yields_four_windows(self):
        # 100x100 with window 50, stride 50: four quadrant proposals.
        ext = StubExtractor(patch=10, dim=8)
        src = GridProposalSource(ext, window=50, stride=50)
        img = ImageTensor(np.random.default_rng(0).random((100, 100, 3)))
        proposals = src.propose(img)
        assert len(proposals) == 4
        boxes = sorted(p.box for p in proposals)
        assert boxes == [
            (0.0, 0.0, 50.0, 50.0),
            (0.0, 50.0, 50.0, 100.0),
            (50.0, 0.0, 100.0, 50.0),
            (50.0, 50.0, 100.0, 100.0),
        ]

    def test_window_equal_to_image_yields_one(self):
        ext = StubExtractor(patch=8, dim=8)
        src = GridProposalSource(ext, window=32, stride=32)
        img = ImageTensor(np.random.default_rng(1).random((32, 32, 3)))
        assert len(src.propose(img)) == 1

    def test_edge_snap_positions(self):
        # 100px axis, window 50, stride 30: starts 0, 30, then 60 snaps to 50.
        assert GridProposalSource._positions(100, 50, 30) == [0, 30, 50]
        assert GridProposalSource._positions(100, 50, 50) == [0, 50]
        assert GridProposalSource._positions(32, 32, 32) == [0]

    def test_feature_is_mean_of_covered_cells(self):
        # The pooled feature must equal the plain mean of the grid cells
        # whose centers fall inside the window, to tight tolerance.
        rng = np.random.default_rng(7)
        img = ImageTensor(rng.random((64, 64, 3)))
        ext = StubExtractor(patch=8, dim=8)
        src = GridProposalSource(ext, window=32, stride=32)
        grid = ext.extract_grid(img).features
        for prop in src.propose(img):
            x1, y1, x2, y2 = prop.box
            covered = []
            for i in range(grid.shape[0]):
                cy = (i * 8 + min((i + 1) * 8, 64)) / 2
                for j in range(grid.shape[1]):
                    cx = (j * 8 + min((j + 1) * 8, 64)) / 2
                    if y1 <= cy < y2 and x1 <= cx < x2:
                        covered.append(grid[i, j])
            want = np.mean(covered, axis=0)
            np.testing.assert_allclose(prop.feature, want, atol=1e-9, rtol=0)

    def test_window_larger_than_image_rejected(self):
        ext = StubExtractor(patch=8, dim=8)
        src = GridProposalSource(ext, window=64, stride=64)
        with pytest.raises(ValueError):
            src.propose(ImageTensor(np.zeros((32, 32, 3))))


class TestMaterialOracles:
    def test_stub_table_and_default(self):
        oracle = StubMaterialOracle()
        out = oracle.assign(["gun", "apple", "mystery thing"])
        assert out["gun"] == "metal"
        assert out["apple"] == "organic"
        assert out["mystery thing"] == "inorganic"

    def test_stub_without_default_omits_unknowns(self):
        oracle = StubMaterialOracle(default_material=None)
        out = oracle.assign(["gun", "mystery thing"])
        assert "gun" in out
        assert "mystery thing" not in out

    def test_scripted_returns_payload_verbatim(self):
        payload = {"apple": "organic", "junk": 42}
        oracle = ScriptedMaterialOracle(payload)
        assert oracle.assign(["apple", "junk"]) == payload


class TestStubRgbFilter:
    def test_confidence_is_foreground_fraction(self):
        filt = StubRgbFilter()
        img = image_with_square(8, 4)  # a quarter of the image is dark
        assert filt.confidence(img) == pytest.approx(0.25)


class TestBuildBundle:
    def test_builds_with_defaults(self):
        bundle = build_bundle()
        assert bundle.extractor.dim == 8
        assert "stub" in bundle.segmenter.backend_id

    def test_parameters_are_threaded(self):
        bundle = build_bundle(patch_size=4, feature_dim=16, window=16, stride=8)
        assert bundle.extractor.dim == 16
        img = ImageTensor(np.random.default_rng(2).random((16, 24, 3)))
        assert len(bundle.proposal_source.propose(img)) == 2

    def test_unknown_backend_name(self):
        with pytest.raises(ValueError):
            build_bundle(segmenter="nope")
        with pytest.raises(ValueError):
            build_bundle(proposal_source="rpn")
