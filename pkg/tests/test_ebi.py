import numpy as np
import pytest

from scanbudget.acquisition import SeededRng
from scanbudget.ebi import (
    EbiParams, PatchDictionary, best_match, build_dictionary, ebi_inpaint,
    load_dictionary, save_dictionary,
)
from scanbudget.image import Image, SparseImage


def mosaic_16(rng):
    """16x16 image tiled 2x2 from four distinct random 8x8 tiles."""
    tiles = [rng.random((8, 8)) for _ in range(4)]
    top = np.concatenate([tiles[0], tiles[1]], axis=1)
    bottom = np.concatenate([tiles[2], tiles[3]], axis=1)
    return np.concatenate([top, bottom], axis=0), tiles


class TestBuildDictionary:
    def test_single_image_single_atom(self, rng):
        img = Image(rng.random((8, 8)))
        d = build_dictionary([img], 8, 8, 100, SeededRng(1))
        assert len(d) == 1
        assert np.array_equal(d.atoms[0].reshape(8, 8), img.data)

    def test_grid_count(self, rng):
        img = Image(rng.random((16, 16)))
        d = build_dictionary([img], 8, 8, 100, SeededRng(1))
        assert len(d) == 4

    def test_subsample_deterministic(self, rng):
        img = Image(rng.random((16, 16)))
        d1 = build_dictionary([img], 8, 8, 2, SeededRng(3))
        d2 = build_dictionary([img], 8, 8, 2, SeededRng(3))
        assert len(d1) == 2
        assert np.array_equal(d1.atoms, d2.atoms)

    def test_no_images_rejected(self):
        with pytest.raises(ValueError):
            build_dictionary([], 8, 8, 10, SeededRng(1))

    def test_too_small_image_rejected(self, rng):
        with pytest.raises(ValueError):
            build_dictionary([Image(rng.random((4, 4)))], 8, 8, 10, SeededRng(1))


class TestBestMatch:
    def test_single_atom(self, rng):
        atom = rng.random(64)
        d = PatchDictionary(8, atom[None, :])
        target = rng.random(64)
        known = rng.random(64) < 0.5
        idx, cost = best_match(d, target, known)
        assert idx == 0
        assert cost == pytest.approx(((atom - target) ** 2 * known).sum())

    def test_exact_match_cost_zero(self, rng):
        atoms = rng.random((5, 64))
        d = PatchDictionary(8, atoms)
        known = rng.random(64) < 0.4
        target = np.where(known, atoms[3], 0.0)
        idx, cost = best_match(d, target, known)
        assert idx == 3
        assert cost == 0.0

    def test_tie_breaks_to_lowest_index(self, rng):
        atom = rng.random(64)
        atoms = np.stack([rng.random(64), atom, atom])
        d = PatchDictionary(8, atoms)
        known = np.ones(64, dtype=bool)
        idx, _ = best_match(d, atom + 0.3, known)  # atoms 1 and 2 tie
        assert idx == 1

    def test_no_known_pixels_rejected(self, rng):
        d = PatchDictionary(8, rng.random((2, 64)))
        with pytest.raises(ValueError):
            best_match(d, rng.random(64), np.zeros(64, dtype=bool))


class TestEbiInpaint:
    def test_fully_observed_identity(self, rng):
        data = rng.random((16, 16))
        sp = SparseImage(Image(data), np.ones((16, 16), dtype=bool))
        d = build_dictionary([Image(data)], 8, 4, 100, SeededRng(1))
        out = ebi_inpaint(sp, d, EbiParams())
        assert np.array_equal(out.data, data)

    def test_exact_recovery_unique_atoms(self, rng):
        data, _ = mosaic_16(rng)
        # dictionary = every half-stride window of the clean mosaic, so each
        # candidate region's true content is present and uniquely identified
        d = build_dictionary([Image(data)], 8, 4, 100, SeededRng(1))
        mask = rng.random((16, 16)) < 0.5
        # the construction requires enough observed pixels per tile
        for ty in (0, 8):
            for tx in (0, 8):
                assert mask[ty:ty + 8, tx:tx + 8].sum() >= 8
        sp = SparseImage(Image(data), mask)
        out = ebi_inpaint(sp, d, EbiParams())
        assert np.array_equal(out.data, data)

    def test_observed_pixels_bit_preserved(self, rng):
        data = rng.random((24, 24))
        mask = rng.random((24, 24)) < 0.3
        d = build_dictionary([Image(rng.random((24, 24)))], 8, 4, 50, SeededRng(2))
        sp = SparseImage(Image(data), mask)
        out = ebi_inpaint(sp, d, EbiParams())
        assert np.array_equal(out.data[mask], data[mask])

    def test_min_known_fallback_warns(self, rng):
        data = rng.random((16, 16))
        mask = np.zeros((16, 16), dtype=bool)
        mask[0, 0] = mask[0, 1] = mask[1, 0] = mask[15, 15] = True
        d = build_dictionary([Image(data)], 8, 4, 100, SeededRng(1))
        sp = SparseImage(Image(data), mask)
        with pytest.warns(RuntimeWarning):
            out = ebi_inpaint(sp, d, EbiParams(min_known=10))
        # still a complete raster, observed pixels intact
        assert np.array_equal(out.data[mask], data[mask])

    def test_empty_mask_rejected(self, rng):
        data = rng.random((16, 16))
        d = build_dictionary([Image(data)], 8, 4, 100, SeededRng(1))
        with pytest.raises(ValueError):
            ebi_inpaint(SparseImage(Image(data), np.zeros((16, 16), bool)),
                        d, EbiParams())

    def test_patch_size_mismatch_rejected(self, rng):
        data = rng.random((16, 16))
        d = build_dictionary([Image(data)], 4, 4, 100, SeededRng(1))
        sp = SparseImage(Image(data), np.ones((16, 16), bool))
        with pytest.raises(ValueError):
            ebi_inpaint(sp, d, EbiParams(patch_size=8))


class TestDictionaryFile:
    def test_roundtrip(self, rng, tmp_path):
        d = PatchDictionary(8, rng.random((7, 64)), provenance="test")
        save_dictionary(d, tmp_path / "d.pdc")
        back = load_dictionary(tmp_path / "d.pdc")
        assert back.patch_size == 8
        assert len(back) == 7
        # exact at float32 storage precision
        assert np.abs(back.atoms - d.atoms).max() <= 1e-7
        save_dictionary(back, tmp_path / "d2.pdc")
        assert (tmp_path / "d.pdc").read_bytes() == (tmp_path / "d2.pdc").read_bytes()

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x.pdc").write_bytes(b"XXXX\n8 1\n" + b"\x00" * 256)
        from scanbudget.errors import CodecError
        with pytest.raises(CodecError):
            load_dictionary(tmp_path / "x.pdc")

    def test_empty_dictionary_rejected(self):
        with pytest.raises(ValueError):
            PatchDictionary(8, np.zeros((0, 64)))
