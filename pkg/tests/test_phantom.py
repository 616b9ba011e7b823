import numpy as np
import pytest

from petquant.components import connected_components
from petquant.detection import match_lesions
from petquant.metrics import patient_metrics
from petquant.phantom import (
    PerturbationSpec,
    PhantomSpec,
    SphereSpec,
    generate_phantom,
    perturb_mask,
    random_phantom_spec,
)
from petquant.volume import VoxelSpacing

from conftest import SPACING_2MM, flood_fill_components

DIMS = (24, 24, 24)


def one_lesion_spec(seed=0, peak=5.0, noise=0.0):
    return PhantomSpec(
        seed=seed,
        dims=DIMS,
        spacing=SPACING_2MM,
        lesions=(SphereSpec(center_mm=(24.0, 24.0, 24.0), radius_mm=5.0, suv_peak=peak),),
        background_suv=0.1,
        noise_sd=noise,
    )


class TestGeneratePhantom:
    def test_deterministic_bit_for_bit(self):
        spec = one_lesion_spec(noise=0.3)
        v1, m1, e1 = generate_phantom(spec)
        v2, m2, e2 = generate_phantom(spec)
        assert np.array_equal(v1.data, v2.data)
        assert np.array_equal(m1.data, m2.data)
        assert e1 == e2

    def test_constant_lesion_values(self):
        volume, mask, expected = generate_phantom(one_lesion_spec())
        n = mask.foreground_count()
        assert n > 0
        assert expected.suv_mean == 5.0
        assert expected.suv_max == 5.0
        assert expected.lesion_count == 1
        assert expected.tmtv == pytest.approx(n * 8 / 1000)

    def test_empty_phantom(self):
        spec = PhantomSpec(seed=1, dims=DIMS, spacing=SPACING_2MM, lesions=())
        volume, mask, expected = generate_phantom(spec)
        assert mask.foreground_count() == 0
        assert expected.lesion_count == 0
        assert (expected.suv_mean, expected.suv_max, expected.tmtv,
                expected.tla, expected.dmax) == (0, 0, 0, 0, 0)

    @pytest.mark.parametrize("seed", [3, 11, 29])
    def test_expected_equals_metrics_module(self, seed):
        spec = random_phantom_spec(seed, dims=DIMS, max_lesions=3, noise_sd=0.2)
        volume, mask, expected = generate_phantom(spec)
        pm = patient_metrics(volume, mask)
        assert pm.lesion_count == expected.lesion_count
        assert pm.suv_max == expected.suv_max
        assert pm.suv_mean == pytest.approx(expected.suv_mean, rel=1e-12)
        assert pm.tmtv == pytest.approx(expected.tmtv, rel=1e-12)
        assert pm.tla == pytest.approx(expected.tla, rel=1e-12)
        assert pm.dmax == pytest.approx(expected.dmax, rel=1e-12)

    def test_noise_does_not_leak_into_lesions(self):
        volume, mask, expected = generate_phantom(one_lesion_spec(noise=0.5))
        lesion_values = volume.data[np.asarray(mask.data) == 1]
        assert set(np.unique(lesion_values)) == {5.0}

    def test_overlapping_lesions_rejected(self):
        spec = PhantomSpec(
            seed=0, dims=DIMS, spacing=SPACING_2MM,
            lesions=(
                SphereSpec(center_mm=(20.0, 24.0, 24.0), radius_mm=5.0, suv_peak=5.0),
                SphereSpec(center_mm=(26.0, 24.0, 24.0), radius_mm=5.0, suv_peak=6.0),
            ),
        )
        with pytest.raises(ValueError, match="overlap"):
            generate_phantom(spec)

    def test_out_of_bounds_lesion_rejected(self):
        spec = PhantomSpec(
            seed=0, dims=DIMS, spacing=SPACING_2MM,
            lesions=(SphereSpec(center_mm=(2.0, 24.0, 24.0), radius_mm=5.0, suv_peak=5.0),),
        )
        with pytest.raises(ValueError, match="exceeds"):
            generate_phantom(spec)

    def test_spec_validation(self):
        with pytest.raises(ValueError, match="radius"):
            PhantomSpec(seed=0, dims=DIMS, spacing=SPACING_2MM,
                        lesions=(SphereSpec((24, 24, 24), 0.5, 5.0),))
        with pytest.raises(ValueError, match="exceed"):
            PhantomSpec(seed=0, dims=DIMS, spacing=SPACING_2MM,
                        lesions=(SphereSpec((24, 24, 24), 5.0, 0.05),))


class TestPerturbMask:
    def test_identity_perturbation(self):
        _, mask, _ = generate_phantom(random_phantom_spec(5, max_lesions=3))
        out = perturb_mask(mask, PerturbationSpec(seed=9))
        assert np.array_equal(out.data, mask.data)

    def test_drop_all_lesions_forces_all_fn(self):
        volume, mask, expected = generate_phantom(random_phantom_spec(8, max_lesions=3))
        gt = connected_components(mask)
        if not gt:
            pytest.skip("seed produced an empty phantom")
        pred_mask = perturb_mask(mask, PerturbationSpec(seed=4, drop_lesion_prob=1.0))
        assert pred_mask.foreground_count() == 0
        outcome = match_lesions(volume, gt, connected_components(pred_mask))
        assert (outcome.tp, outcome.fn, outcome.fp) == (0, len(gt), 0)

    @pytest.mark.parametrize("k", [1, 2, 4])
    def test_injected_blobs_increase_fp_by_exactly_k(self, k):
        volume, mask, _ = generate_phantom(one_lesion_spec())
        pred_mask = perturb_mask(mask, PerturbationSpec(
            seed=13, add_false_prob=1.0, add_false_count=k,
        ))
        before = len(flood_fill_components(np.asarray(mask.data), 26))
        after = len(flood_fill_components(np.asarray(pred_mask.data), 26))
        assert after == before + k
        gt = connected_components(mask)
        outcome = match_lesions(volume, gt, connected_components(pred_mask))
        assert outcome.fp == k
        assert outcome.tp == len(gt)

    def test_deterministic(self):
        _, mask, _ = generate_phantom(random_phantom_spec(21, max_lesions=3))
        p = PerturbationSpec(seed=2, drop_lesion_prob=0.5, add_false_prob=0.5,
                             add_false_count=3, dilate_erode_voxels=1, shift_voxels=1)
        a = perturb_mask(mask, p)
        b = perturb_mask(mask, p)
        assert np.array_equal(a.data, b.data)

    def test_dilate_grows_and_erode_shrinks(self):
        _, mask, _ = generate_phantom(one_lesion_spec())
        grown = perturb_mask(mask, PerturbationSpec(seed=0, dilate_erode_voxels=1))
        shrunk = perturb_mask(mask, PerturbationSpec(seed=0, dilate_erode_voxels=-1))
        assert grown.foreground_count() > mask.foreground_count() > shrunk.foreground_count()
        # dilation keeps every original voxel; erosion keeps only originals
        assert np.all(grown.data[np.asarray(mask.data) == 1] == 1)
        assert np.all(np.asarray(mask.data)[np.asarray(shrunk.data) == 1] == 1)

    def test_shift_translates_foreground(self):
        _, mask, _ = generate_phantom(one_lesion_spec())
        shifted = perturb_mask(mask, PerturbationSpec(seed=0, shift_voxels=2))
        src = mask.foreground_voxels()
        dst = shifted.foreground_voxels()
        assert {tuple(v + 2) for v in src} == {tuple(v) for v in dst}

    def test_probability_validation(self):
        with pytest.raises(ValueError):
            PerturbationSpec(seed=0, drop_lesion_prob=1.5)
        with pytest.raises(ValueError):
            PerturbationSpec(seed=0, add_false_prob=-0.1)


class TestRandomPhantomSpec:
    @pytest.mark.parametrize("seed", range(12))
    def test_specs_are_valid_and_reproducible(self, seed):
        spec1 = random_phantom_spec(seed, max_lesions=3)
        spec2 = random_phantom_spec(seed, max_lesions=3)
        assert spec1 == spec2
        volume, mask, expected = generate_phantom(spec1)
        assert patient_metrics(volume, mask).lesion_count == expected.lesion_count

    def test_respects_dims_and_spacing(self):
        spec = random_phantom_spec(3, dims=(16, 20, 12), spacing=VoxelSpacing(1.5, 2.0, 2.5))
        volume, mask, _ = generate_phantom(spec)
        assert volume.dims == (16, 20, 12)
        assert mask.spacing == VoxelSpacing(1.5, 2.0, 2.5)
