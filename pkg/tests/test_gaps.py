"""Gap dataset pipeline: closed-form gap oracles, Bernoulli masking,
incremental persistence with resume, and the train/val/test split."""

import json
import logging

import numpy as np
import pytest
from hypothesis import given, strategies as st

from memostyle.gaps import (
    GapHeader,
    GapMatrix,
    build_gap_dataset,
    compute_gap,
    load_gap_matrix,
    sample_mask,
    save_gap_matrix,
    split_dataset,
)
from memostyle.images import SeedCatalog, StyleSeed
from memostyle.scoring import oracle_scorer
from memostyle.synthetic import (
    flat_image,
    mid_gray_images,
    shift_seed_catalog,
    shift_synth,
)

from helpers import random_image

ORACLE = oracle_scorer("brightness")


def tiny_catalog(n=2, size=(8, 8)):
    seeds = tuple(
        StyleSeed(seed_id=f"s{i}", image=flat_image(0.3 + 0.1 * i, size), memorability=0.5)
        for i in range(n)
    )
    return SeedCatalog(seeds)


def identity_synth(image, seed):
    return image


class CountingSynth:
    """Instrumentation wrapper: counts how often synthesis actually runs."""

    def __init__(self, fn):
        self.fn = fn
        self.calls = 0

    def __call__(self, image, seed):
        self.calls += 1
        return self.fn(image, seed)


class TestComputeGap:
    def test_difference_of_known_scores(self):
        # brightness oracle scores a flat image at its gray level
        gap = compute_gap(flat_image(0.70), flat_image(0.82), ORACLE)
        np.testing.assert_allclose(gap, 0.12, atol=1e-6)

    def test_same_image_is_exactly_zero(self, rng):
        img = random_image(rng, (12, 12))
        assert compute_gap(img, img, ORACLE) == 0.0

    def test_uniform_brightening_of_mid_gray(self):
        img = flat_image(0.5, (16, 16))
        brighter = flat_image(0.6, (16, 16))
        np.testing.assert_allclose(compute_gap(img, brighter, ORACLE), 0.1, atol=1e-6)

    @given(st.integers(0, 2**32 - 1))
    def test_gap_always_within_unit_interval(self, seed):
        r = np.random.default_rng(seed)
        a, b = random_image(r, (6, 6)), random_image(r, (6, 6))
        assert -1.0 <= compute_gap(a, b, ORACLE) <= 1.0


class TestSampleMask:
    def test_omega_one_is_all_ones(self):
        mask = sample_mask(7, 5, 1.0, rng_seed=3)
        assert mask.dtype == np.uint8
        np.testing.assert_array_equal(mask, np.ones((7, 5), dtype=np.uint8))

    def test_same_seed_reproduces(self):
        a = sample_mask(40, 30, 0.5, rng_seed=11)
        b = sample_mask(40, 30, 0.5, rng_seed=11)
        np.testing.assert_array_equal(a, b)

    def test_different_seeds_differ(self):
        a = sample_mask(40, 30, 0.5, rng_seed=11)
        b = sample_mask(40, 30, 0.5, rng_seed=12)
        assert not np.array_equal(a, b)

    def test_density_concentrates_at_large_sizes(self):
        mask = sample_mask(1000, 100, 0.1, rng_seed=0)
        density = mask.mean()
        assert 0.09 <= density <= 0.11

    @pytest.mark.parametrize("omega", [0.0, -0.2, 1.0001, 2.0])
    def test_omega_out_of_range_rejected(self, omega):
        with pytest.raises(ValueError):
            sample_mask(4, 4, omega, rng_seed=0)

    @pytest.mark.parametrize("dims", [(0, 3), (3, 0), (-1, 2)])
    def test_empty_dims_rejected(self, dims):
        with pytest.raises(ValueError):
            sample_mask(*dims, 0.5, rng_seed=0)

    @given(st.integers(1, 20), st.integers(1, 20), st.integers(0, 1000))
    def test_mask_is_binary(self, G, S, seed):
        mask = sample_mask(G, S, 0.37, rng_seed=seed)
        assert set(np.unique(mask)) <= {0, 1}


class TestGapMatrixType:
    def make(self, gaps, mask):
        G, S = np.asarray(gaps).shape
        ids = tuple(f"i{k}" for k in range(G))
        sids = tuple(f"s{k}" for k in range(S))
        return GapMatrix(ids, sids, np.asarray(gaps, dtype=float), np.asarray(mask))

    def test_omega_bar_is_exact_ratio(self):
        gm = self.make([[0.1, 0.2], [0.3, 0.0]], [[1, 1], [1, 0]])
        assert gm.omega_bar == 3 / 4
        assert gm.observed_count == 3

    def test_unobserved_entries_forced_to_nan(self):
        gm = self.make([[0.1, 0.9]], [[1, 0]])
        assert gm.gaps[0, 0] == 0.1
        assert np.isnan(gm.gaps[0, 1])

    def test_nonbinary_mask_rejected(self):
        with pytest.raises(ValueError):
            self.make([[0.1]], [[2]])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            GapMatrix(("a",), ("s",), np.zeros((2, 1)), np.ones((2, 1), dtype=np.uint8))

    def test_observed_nan_rejected(self):
        with pytest.raises(ValueError):
            self.make([[np.nan]], [[1]])

    def test_observed_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            self.make([[1.5]], [[1]])
        with pytest.raises(ValueError):
            self.make([[-1.01]], [[1]])

    def test_arrays_are_read_only(self):
        gm = self.make([[0.1]], [[1]])
        with pytest.raises(ValueError):
            gm.gaps[0, 0] = 0.5
        with pytest.raises(ValueError):
            gm.mask[0, 0] = 0

    def test_with_mask_intersects(self):
        gm = self.make([[0.1, 0.2], [0.3, 0.4]], [[1, 1], [0, 1]])
        out = gm.with_mask(np.array([[1, 0], [1, 1]]))
        np.testing.assert_array_equal(out.mask, [[1, 0], [0, 1]])
        assert out.gaps[0, 0] == 0.1 and out.gaps[1, 1] == 0.4
        assert np.isnan(out.gaps[0, 1]) and np.isnan(out.gaps[1, 0])

    def test_subset_columns_reorders(self):
        gm = self.make([[0.1, 0.2, 0.3]], [[1, 1, 1]])
        sub = gm.subset_columns(["s2", "s0"])
        assert sub.seed_ids == ("s2", "s0")
        np.testing.assert_array_equal(sub.gaps, [[0.3, 0.1]])

    def test_subset_rows_selects(self):
        gm = self.make([[0.1], [0.2], [0.3]], [[1], [1], [1]])
        sub = gm.subset_rows(["i1"])
        assert sub.image_ids == ("i1",)
        np.testing.assert_array_equal(sub.gaps, [[0.2]])


class TestBuildGapDataset:
    def test_zero_mask_makes_no_synthesis_calls(self):
        images = mid_gray_images(2, (8, 8))
        catalog = tiny_catalog(2)
        synth = CountingSynth(identity_synth)
        gm = build_gap_dataset(images, catalog, ORACLE, synth, np.zeros((2, 2)))
        assert synth.calls == 0
        assert gm.observed_count == 0

    def test_identity_synth_gives_all_zero_gaps(self):
        images = mid_gray_images(2, (8, 8))
        catalog = tiny_catalog(2)
        gm = build_gap_dataset(
            images, catalog, ORACLE, identity_synth, np.ones((2, 2))
        )
        np.testing.assert_array_equal(gm.gaps, np.zeros((2, 2)))
        assert gm.omega_bar == 1.0

    def test_exactly_sum_mask_synthesis_calls(self):
        images = mid_gray_images(5, (8, 8))
        catalog = tiny_catalog(4)
        mask = sample_mask(5, 4, 0.5, rng_seed=9)
        synth = CountingSynth(identity_synth)
        gm = build_gap_dataset(images, catalog, ORACLE, synth, mask)
        assert synth.calls == int(mask.sum())
        np.testing.assert_array_equal(gm.mask, mask)

    def test_shift_catalog_rows_equal_shifts(self):
        # closed form: on mid-gray images an additive shift never clips, so
        # the brightness-oracle gap IS the shift
        images = mid_gray_images(5, (16, 16))
        catalog, table = shift_seed_catalog((0.2, 0.1, -0.1, -0.2))
        gm = build_gap_dataset(
            images, catalog, ORACLE, shift_synth(table), np.ones((5, 4))
        )
        want = np.tile([0.2, 0.1, -0.1, -0.2], (5, 1))
        np.testing.assert_allclose(gm.gaps, want, atol=1e-6)

    def test_failing_pair_downgraded_to_unobserved(self, caplog):
        images = mid_gray_images(2, (8, 8))
        catalog = tiny_catalog(2)

        def flaky(image, seed):
            if seed.seed_id == "s1":
                raise RuntimeError("synthetic blowup")
            return image

        with caplog.at_level(logging.WARNING, logger="memostyle.gaps"):
            gm = build_gap_dataset(images, catalog, ORACLE, flaky, np.ones((2, 2)))
        np.testing.assert_array_equal(gm.mask, [[1, 0], [1, 0]])
        assert np.isnan(gm.gaps[0, 1]) and np.isnan(gm.gaps[1, 1])
        assert any("synthesis failed" in r.message for r in caplog.records)

    def test_mask_shape_checked(self):
        with pytest.raises(ValueError):
            build_gap_dataset(
                mid_gray_images(2, (8, 8)),
                tiny_catalog(2),
                ORACLE,
                identity_synth,
                np.ones((3, 2)),
            )

    def test_image_ids_length_checked(self):
        with pytest.raises(ValueError):
            build_gap_dataset(
                mid_gray_images(2, (8, 8)),
                tiny_catalog(2),
                ORACLE,
                identity_synth,
                np.ones((2, 2)),
                image_ids=["only-one"],
            )

    def test_parallel_build_matches_serial(self):
        images = mid_gray_images(4, (8, 8))
        catalog, table = shift_seed_catalog()
        mask = sample_mask(4, 4, 0.7, rng_seed=2)
        serial = build_gap_dataset(
            images, catalog, ORACLE, shift_synth(table), mask, workers=1
        )
        parallel = build_gap_dataset(
            images, catalog, ORACLE, shift_synth(table), mask, workers=3
        )
        np.testing.assert_array_equal(serial.mask, parallel.mask)
        np.testing.assert_array_equal(
            np.nan_to_num(serial.gaps), np.nan_to_num(parallel.gaps)
        )


class TestPersistence:
    def test_round_trip_is_bit_exact(self, tmp_path, rng):
        gaps = rng.uniform(-1, 1, (6, 3))
        mask = sample_mask(6, 3, 0.6, rng_seed=4)
        gm = GapMatrix(
            tuple(f"i{k}" for k in range(6)),
            tuple(f"s{k}" for k in range(3)),
            np.where(mask == 1, gaps, np.nan),
            mask,
        )
        header = GapHeader(omega_target=0.6, rng_seed=4, scorer_tag="M", alpha=2.0)
        path = tmp_path / "gaps.jsonl"
        save_gap_matrix(gm, path, header)
        loaded, lh = load_gap_matrix(path)
        assert loaded.image_ids == gm.image_ids
        assert loaded.seed_ids == gm.seed_ids
        np.testing.assert_array_equal(loaded.mask, gm.mask)
        obs = gm.mask == 1
        assert np.array_equal(loaded.gaps[obs], gm.gaps[obs])  # no tolerance
        assert lh == header

    def test_unobserved_entries_absent_from_file(self, tmp_path):
        gm = GapMatrix(("i0",), ("s0", "s1"), np.array([[0.25, np.nan]]), [[1, 0]])
        path = tmp_path / "g.jsonl"
        save_gap_matrix(gm, path)
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 2  # header + single observed record
        rec = json.loads(lines[1])
        assert rec == {"image_id": "i0", "seed_id": "s0", "gap": 0.25}

    def test_header_carries_provenance(self, tmp_path):
        gm = GapMatrix(("i0",), ("s0",), np.array([[0.1]]), [[1]])
        save_gap_matrix(gm, tmp_path / "g.jsonl", GapHeader(0.5, 7, "E", 10.0))
        head = json.loads((tmp_path / "g.jsonl").read_text().splitlines()[0])
        assert head["omega_target"] == 0.5
        assert head["rng_seed"] == 7
        assert head["scorer_tag"] == "E"
        assert head["alpha"] == 10.0

    def test_record_outside_header_ids_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(
            json.dumps({"image_ids": ["i0"], "seed_ids": ["s0"]})
            + "\n"
            + json.dumps({"image_id": "i0", "seed_id": "mystery", "gap": 0.1})
            + "\n"
        )
        with pytest.raises(ValueError):
            load_gap_matrix(path)

    def test_headerless_file_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps({"image_id": "i0", "seed_id": "s0", "gap": 0.1}) + "\n")
        with pytest.raises(ValueError):
            load_gap_matrix(path)


class TestResume:
    def test_resume_skips_already_persisted_pairs(self, tmp_path):
        images = mid_gray_images(3, (8, 8))
        catalog, table = shift_seed_catalog()
        path = tmp_path / "gaps.jsonl"

        first_mask = np.zeros((3, 4), dtype=np.uint8)
        first_mask[0, :] = 1
        synth1 = CountingSynth(shift_synth(table))
        build_gap_dataset(
            images, catalog, ORACLE, synth1, first_mask, out_path=path
        )
        assert synth1.calls == 4

        full = np.ones((3, 4), dtype=np.uint8)
        synth2 = CountingSynth(shift_synth(table))
        gm = build_gap_dataset(
            images, catalog, ORACLE, synth2, full, out_path=path, resume=True
        )
        assert synth2.calls == 8  # rows 1-2 only; row 0 reused from disk
        assert gm.observed_count == 12
        want = np.tile([0.2, 0.1, -0.1, -0.2], (3, 1))
        np.testing.assert_allclose(gm.gaps, want, atol=1e-6)

    def test_resume_rerun_is_idempotent(self, tmp_path):
        images = mid_gray_images(2, (8, 8))
        catalog, table = shift_seed_catalog()
        path = tmp_path / "gaps.jsonl"
        mask = np.ones((2, 4), dtype=np.uint8)
        build_gap_dataset(images, catalog, ORACLE, shift_synth(table), mask, out_path=path)
        before = path.read_text()
        synth = CountingSynth(shift_synth(table))
        build_gap_dataset(
            images, catalog, ORACLE, synth, mask, out_path=path, resume=True
        )
        assert synth.calls == 0
        assert path.read_text() == before

    def test_resume_against_foreign_ids_rejected(self, tmp_path):
        images = mid_gray_images(2, (8, 8))
        catalog, table = shift_seed_catalog()
        path = tmp_path / "gaps.jsonl"
        mask = np.ones((2, 4), dtype=np.uint8)
        build_gap_dataset(images, catalog, ORACLE, shift_synth(table), mask, out_path=path)
        with pytest.raises(ValueError):
            build_gap_dataset(
                images,
                catalog,
                ORACLE,
                shift_synth(table),
                mask,
                image_ids=["x0", "x1"],
                out_path=path,
                resume=True,
            )

    def test_resume_off_restarts_file(self, tmp_path):
        images = mid_gray_images(1, (8, 8))
        catalog, table = shift_seed_catalog()
        path = tmp_path / "gaps.jsonl"
        mask = np.ones((1, 4), dtype=np.uint8)
        build_gap_dataset(images, catalog, ORACLE, shift_synth(table), mask, out_path=path)
        synth = CountingSynth(shift_synth(table))
        build_gap_dataset(
            images, catalog, ORACLE, synth, mask, out_path=path, resume=False
        )
        assert synth.calls == 4


class TestSplitDataset:
    def test_ten_items_split_8_1_1(self):
        train, val, test = split_dataset(list(range(10)))
        assert (len(train), len(val), len(test)) == (8, 1, 1)

    def test_hundred_items_split_80_10_10(self):
        train, val, test = split_dataset(list(range(100)))
        assert (len(train), len(val), len(test)) == (80, 10, 10)

    def test_partition_is_disjoint_and_exhaustive(self):
        items = [f"im{k}" for k in range(37)]
        train, val, test = split_dataset(items, rng_seed=5)
        combined = sorted(train + val + test)
        assert combined == sorted(items)
        assert len(set(train) & set(val)) == 0
        assert len(set(val) & set(test)) == 0
        assert len(set(train) & set(test)) == 0

    def test_same_seed_identical_partitions(self):
        items = list(range(50))
        assert split_dataset(items, rng_seed=3) == split_dataset(items, rng_seed=3)

    def test_different_seed_differs(self):
        items = list(range(50))
        assert split_dataset(items, rng_seed=3) != split_dataset(items, rng_seed=4)

    def test_too_few_items_rejected(self):
        with pytest.raises(ValueError):
            split_dataset(list(range(9)))

    def test_bad_ratios_rejected(self):
        with pytest.raises(ValueError):
            split_dataset(list(range(10)), ratios=(8, 0, 2))

    @given(st.integers(10, 200), st.integers(0, 50))
    def test_sizes_always_consistent(self, n, seed):
        train, val, test = split_dataset(list(range(n)), rng_seed=seed)
        assert len(train) + len(val) + len(test) == n
        assert len(val) >= 1 and len(test) >= 1
        assert len(train) >= len(val) and len(train) >= len(test)
