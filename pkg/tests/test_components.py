import numpy as np
import pytest

from petquant.components import Lesion, connected_components, lesions_to_mask
from petquant.volume import Connectivity, LabelMask

from conftest import SPACING_2MM, flood_fill_components, mask_from_voxels, random_mask


class TestLesion:
    def test_rejects_empty_and_duplicates(self):
        with pytest.raises(ValueError):
            Lesion(voxels=np.zeros((0, 3), dtype=int), spacing=SPACING_2MM)
        with pytest.raises(ValueError, match="duplicates"):
            Lesion(voxels=np.array([[1, 1, 1], [1, 1, 1]]), spacing=SPACING_2MM)
        with pytest.raises(ValueError, match="nonnegative"):
            Lesion(voxels=np.array([[-1, 0, 0]]), spacing=SPACING_2MM)

    def test_volume_cc(self):
        les = Lesion(voxels=np.array([[0, 0, 0], [1, 0, 0]]), spacing=SPACING_2MM)
        assert les.volume_cc() == pytest.approx(2 * 8 / 1000)


class TestConnectedComponents:
    def test_empty_mask(self):
        m = LabelMask(data=np.zeros((4, 4, 4), dtype=np.uint8), spacing=SPACING_2MM)
        assert connected_components(m) == []

    def test_corner_touch_depends_on_connectivity(self):
        m = mask_from_voxels([(1, 1, 1), (2, 2, 2)], (4, 4, 4))
        assert len(connected_components(m, Connectivity.CORNER26)) == 1
        assert len(connected_components(m, Connectivity.EDGE18)) == 2
        assert len(connected_components(m, Connectivity.FACE6)) == 2

    def test_edge_touch_depends_on_connectivity(self):
        m = mask_from_voxels([(1, 1, 1), (2, 2, 1)], (4, 4, 4))
        assert len(connected_components(m, Connectivity.CORNER26)) == 1
        assert len(connected_components(m, Connectivity.EDGE18)) == 1
        assert len(connected_components(m, Connectivity.FACE6)) == 2

    @pytest.mark.parametrize("connectivity", [Connectivity.FACE6, Connectivity.EDGE18,
                                              Connectivity.CORNER26])
    @pytest.mark.parametrize("seed", [0, 1, 7, 42, 99])
    def test_matches_flood_fill_oracle(self, connectivity, seed):
        rng = np.random.default_rng(seed)
        m = random_mask(rng, (8, 8, 8), fill=0.3)
        got = connected_components(m, connectivity)
        want = flood_fill_components(np.asarray(m.data), connectivity.value)
        assert len(got) == len(want)
        for lesion, oracle_voxels in zip(got, want):
            assert [tuple(v) for v in lesion.voxels] == oracle_voxels

    @pytest.mark.parametrize("seed", [3, 5, 11])
    def test_partitions_foreground(self, seed):
        rng = np.random.default_rng(seed)
        m = random_mask(rng, (10, 9, 8), fill=0.25)
        lesions = connected_components(m)
        all_voxels = [tuple(v) for les in lesions for v in les.voxels]
        assert len(all_voxels) == len(set(all_voxels)) == m.foreground_count()
        fg = {tuple(v) for v in m.foreground_voxels()}
        assert set(all_voxels) == fg

    @pytest.mark.parametrize("seed", range(6))
    def test_count_monotone_in_connectivity(self, seed):
        rng = np.random.default_rng(seed)
        m = random_mask(rng, (9, 9, 9), fill=0.35)
        n26 = len(connected_components(m, Connectivity.CORNER26))
        n18 = len(connected_components(m, Connectivity.EDGE18))
        n6 = len(connected_components(m, Connectivity.FACE6))
        assert n26 <= n18 <= n6

    def test_round_trip_through_lesions_to_mask(self, rng):
        m = random_mask(rng, (7, 7, 7), fill=0.3)
        lesions = connected_components(m)
        back = lesions_to_mask(lesions, m.dims, m.spacing)
        assert np.array_equal(back.data, m.data)

    def test_component_order_is_first_scan_voxel(self):
        # two blobs; the one whose first voxel scans earlier comes first
        m = mask_from_voxels([(3, 0, 0), (0, 2, 0), (1, 2, 0)], (5, 5, 5))
        lesions = connected_components(m, Connectivity.FACE6)
        assert [tuple(v) for v in lesions[0].voxels] == [(3, 0, 0)]
        assert [tuple(v) for v in lesions[1].voxels] == [(0, 2, 0), (1, 2, 0)]
