import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from amdl import linalg_core as lc
from amdl.errors import DimensionMismatch, FormatError, NonDivisibleDimensions
from amdl.image import (
    PSNR_CAP_DB,
    assemble_patches,
    corrupt,
    dct_dictionary,
    extract_patches,
    psnr,
    read_mask_pgm,
    read_pgm,
    reconstruct,
    sparse_patch_image,
    write_mask_pgm,
    write_pgm,
)


class TestPatches:
    def test_layout(self):
        img = np.arange(16, dtype=float).reshape(4, 4) / 16
        g = extract_patches(img, 2, 2)
        assert g.patches.shape == (4, 4)
        np.testing.assert_array_equal(g.patches[:, 1], np.array([2, 3, 6, 7]) / 16)

    @given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 4), st.integers(1, 4))
    def test_roundtrip(self, ph, pw, gr, gc):
        img = np.random.default_rng(ph * 31 + pw).random((ph * gr, pw * gc))
        np.testing.assert_array_equal(assemble_patches(extract_patches(img, ph, pw)), img)

    def test_non_divisible(self):
        with pytest.raises(NonDivisibleDimensions):
            extract_patches(np.zeros((5, 4)), 2, 2)


class TestDct:
    @pytest.mark.parametrize("shape", [(1, 1), (4, 4), (8, 8), (10, 10), (3, 5)])
    def test_orthonormal(self, shape):
        assert lc.orthogonality_defect(dct_dictionary(*shape)) <= 1e-10

    def test_first_atom_is_constant(self):
        d = dct_dictionary(4, 4)
        np.testing.assert_allclose(d[:, 0], 0.25)


class TestCorruptAndPsnr:
    def test_exact_missing_count_and_determinism(self):
        img = np.full((10, 10), 0.7)
        bad, mask = corrupt(img, 0.5, 3)
        assert mask.sum() == 50
        assert np.all(bad[~mask] == 0) and np.all(bad[mask] == 0.7)
        bad2, mask2 = corrupt(img, 0.5, 3)
        np.testing.assert_array_equal(mask, mask2)

    def test_psnr(self):
        a = np.zeros((4, 4))
        assert psnr(a, a) == PSNR_CAP_DB
        assert psnr(a, a + 0.1) == pytest.approx(20.0)
        with pytest.raises(DimensionMismatch):
            psnr(np.zeros((2, 2)), np.zeros((3, 3)))


class TestReconstruct:
    def test_full_basis_hits_cap(self):
        img = np.random.default_rng(0).random((50, 50))
        assert psnr(reconstruct(img, dct_dictionary(10, 10), 100), img) == PSNR_CAP_DB

    def test_masked_recovery_beats_corruption(self):
        for seed in range(3):
            img = sparse_patch_image((50, 50), (10, 10), 5, seed)
            bad, mask = corrupt(img, 0.5, seed)
            rec = reconstruct(bad, dct_dictionary(10, 10), 35, (10, 10), mask)
            assert psnr(rec, img) > psnr(bad, img)

    def test_subtract_dc_sparse_image(self):
        img = sparse_patch_image((20, 20), (10, 10), 5, 1)
        rec = reconstruct(img, dct_dictionary(10, 10), 4, subtract_dc=True)
        assert psnr(rec, img) > 100

    def test_atom_patch_mismatch(self):
        with pytest.raises(DimensionMismatch):
            reconstruct(np.zeros((10, 10)), np.eye(10), 2)
        with pytest.raises(DimensionMismatch):
            reconstruct(np.zeros((10, 10)), np.eye(25), 2, (4, 4))

    def test_fully_masked_patch_is_zero(self):
        img = np.full((4, 4), 0.5)
        mask = np.ones((4, 4), dtype=bool)
        mask[:2, :2] = False
        rec = reconstruct(img, dct_dictionary(2, 2), 1, (2, 2), mask)
        np.testing.assert_allclose(rec[:2, :2], 0.0)
        np.testing.assert_allclose(rec[2:, 2:], 0.5)

    def test_sparse_image_in_range(self):
        img = sparse_patch_image((50, 50), (10, 10), 5, 7)
        assert img.min() >= 0 and img.max() <= 1


class TestPgm:
    @pytest.mark.parametrize("maxval", [255, 65535])
    def test_roundtrip(self, tmp_path, maxval):
        img = np.random.default_rng(1).random((7, 9))
        q = np.rint(img * maxval) / maxval
        write_pgm(tmp_path / "a.pgm", q, maxval)
        back = read_pgm(tmp_path / "a.pgm")
        np.testing.assert_allclose(back, q, atol=1e-12)
        assert back.shape == (7, 9)

    def test_header_comments(self, tmp_path):
        (tmp_path / "c.pgm").write_bytes(b"P5\n# made by hand\n2 1\n# depth\n255\n\x00\xff")
        np.testing.assert_array_equal(read_pgm(tmp_path / "c.pgm"), [[0.0, 1.0]])

    @pytest.mark.parametrize(
        "data", [b"P2\n1 1\n255\n0", b"P5\n2 2\n255\n\x00", b"P5\n2", b"P5\nx 2\n255\n\x00\x00"]
    )
    def test_malformed(self, tmp_path, data):
        (tmp_path / "bad.pgm").write_bytes(data)
        with pytest.raises(FormatError):
            read_pgm(tmp_path / "bad.pgm")

    def test_mask_roundtrip(self, tmp_path):
        mask = np.random.default_rng(2).random((5, 5)) > 0.5
        write_mask_pgm(tmp_path / "m.pgm", mask)
        np.testing.assert_array_equal(read_mask_pgm(tmp_path / "m.pgm"), mask)
