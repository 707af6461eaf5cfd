import numpy as np
import pytest

from usct.assess import connected_components
from usct.io import read_mask, write_mask, write_raster, read_raster
from usct.model import Grid2D
from usct.phantom import (
    DENSITY_CLASSES,
    FAT,
    FIBROGLANDULAR,
    SKIN,
    TUMOR,
    WATER,
    InfeasibleSpec,
    InvariantViolation,
    LabeledPhantom,
    PhantomSpec,
    default_spec,
    generate,
    load_raster,
    save_phantom,
)

GRID = Grid2D(nx=72, dx=1.0e-3, pad=8)


def spec_for(cls="B", seed=0, **overrides):
    spec = default_spec(cls, GRID.fov, seed=seed)
    return PhantomSpec(**{**spec.__dict__, **overrides}) if overrides else spec


class TestGenerate:
    def test_seeded_determinism(self):
        a = generate(spec_for(seed=5), GRID)
        b = generate(spec_for(seed=5), GRID)
        np.testing.assert_array_equal(a.map.values, b.map.values)
        np.testing.assert_array_equal(a.tissue_labels, b.tissue_labels)
        np.testing.assert_array_equal(a.tumor_mask, b.tumor_mask)

    def test_different_seeds_differ(self):
        a = generate(spec_for(seed=1), GRID)
        b = generate(spec_for(seed=2), GRID)
        assert not np.array_equal(a.map.values, b.map.values)

    @pytest.mark.parametrize("cls", sorted(DENSITY_CLASSES))
    def test_fibroglandular_fraction_within_class_range(self, cls):
        lo, hi = DENSITY_CLASSES[cls]
        for seed in range(4):
            ph = generate(spec_for(cls, seed=seed), GRID)
            breast = ph.tissue_labels != WATER
            fibro = ph.tissue_labels == FIBROGLANDULAR
            frac = fibro.sum() / breast.sum()
            assert lo <= frac <= hi, f"class {cls} seed {seed}: fraction {frac:.3f}"

    def test_class_ordering_monotone(self):
        means = []
        for cls in "ABCD":
            fracs = []
            for seed in range(6):
                ph = generate(spec_for(cls, seed=seed), GRID)
                breast = ph.tissue_labels != WATER
                fracs.append((ph.tissue_labels == FIBROGLANDULAR).sum() / breast.sum())
            means.append(np.mean(fracs))
        assert means[0] < means[1] < means[2] < means[3]

    def test_no_tumors_requested(self):
        ph = generate(spec_for(seed=3, n_tumors_range=(0, 0)), GRID)
        assert not ph.tumor_mask.any()

    def test_tumor_count_in_range(self):
        for seed in range(5):
            ph = generate(spec_for(seed=seed, n_tumors_range=(2, 3)), GRID)
            assert 2 <= ph.n_tumors <= 3

    def test_speed_values_within_tissue_envelope(self):
        spec = spec_for(seed=4)
        ph = generate(spec, GRID)
        lo = min(m - s for m, s in spec.tissue_speeds.values())
        hi = max(m + s for m, s in spec.tissue_speeds.values())
        assert ph.map.c_min >= lo - 0.5 and ph.map.c_max <= hi + 0.5

    def test_tumors_inside_breast_away_from_skin(self):
        for seed in range(5):
            ph = generate(spec_for(seed=seed), GRID)
            bad = ph.tumor_mask & np.isin(ph.tissue_labels, [WATER, SKIN])
            assert not bad.any()

    def test_water_outside_breast(self):
        ph = generate(spec_for(seed=6), GRID)
        # all four image corners are water for these radius ranges
        for corner in [(0, 0), (0, -1), (-1, 0), (-1, -1)]:
            assert ph.tissue_labels[corner] == WATER

    def test_tumor_components_at_least_four_pixels(self):
        for seed in range(5):
            ph = generate(spec_for(seed=seed), GRID)
            comp, n = connected_components(ph.tumor_mask)
            for t in range(1, n + 1):
                assert (comp == t).sum() >= 4

    def test_infeasible_breast_radius(self):
        spec = spec_for(breast_radius_range=(0.05, 0.06))  # exceeds half the 72 mm fov
        with pytest.raises(InfeasibleSpec):
            generate(spec, GRID)

    def test_infeasible_tumor_radius(self):
        spec = spec_for(tumor_radius_range=(0.05, 0.06))
        with pytest.raises(InfeasibleSpec):
            generate(spec, GRID)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            default_spec("E", 0.072)
        with pytest.raises(ValueError):
            spec_for(fibroglandular_fraction_range=(0.5, 1.5))
        with pytest.raises(ValueError):
            spec_for(n_tumors_range=(3, 1))


class TestRoundTrip:
    def test_save_load_identical(self, tmp_path):
        ph = generate(spec_for(seed=7), GRID)
        save_phantom(ph, tmp_path / "p")
        back = load_raster(tmp_path / "p.sos", grid=GRID)
        np.testing.assert_array_equal(back.map.values, ph.map.values)
        np.testing.assert_array_equal(back.tissue_labels, ph.tissue_labels)
        np.testing.assert_array_equal(back.tumor_mask, ph.tumor_mask)
        assert back.map.grid == ph.map.grid

    def test_zero_speed_pixel_rejected(self, tmp_path):
        ph = generate(spec_for(seed=8), GRID)
        save_phantom(ph, tmp_path / "p")
        values = read_raster(tmp_path / "p.sos")
        values[10, 10] = 0.0
        write_raster(tmp_path / "p.sos", values)
        with pytest.raises(InvariantViolation):
            load_raster(tmp_path / "p.sos", grid=GRID)

    def test_mask_outside_tumor_labels_rejected(self, tmp_path):
        ph = generate(spec_for(seed=9), GRID)
        save_phantom(ph, tmp_path / "p")
        mask = read_mask(tmp_path / "p.mask.msk")
        labels = read_mask(tmp_path / "p.labels.msk")
        water_pixel = tuple(np.argwhere(labels == WATER)[0])
        mask[water_pixel] = 1
        write_mask(tmp_path / "p.mask.msk", mask)
        with pytest.raises(InvariantViolation):
            load_raster(tmp_path / "p.sos", grid=GRID)

    def test_undersized_tumor_component_rejected(self):
        grid = Grid2D(nx=24, dx=1e-3)
        values = np.full((24, 24), 1500.0)
        labels = np.zeros((24, 24), dtype=np.uint8)
        labels[5, 5] = TUMOR
        mask = labels == TUMOR
        from usct.model import SoundSpeedMap

        with pytest.raises(InvariantViolation):
            LabeledPhantom(map=SoundSpeedMap(grid, values), tissue_labels=labels, tumor_mask=mask)

    def test_labels_structure(self):
        ph = generate(spec_for(seed=10), GRID)
        present = set(np.unique(ph.tissue_labels))
        assert present <= {WATER, FAT, SKIN, FIBROGLANDULAR, TUMOR}
        assert WATER in present and FAT in present and SKIN in present
