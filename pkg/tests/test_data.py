import numpy as np
import pytest

from halluc.data import (
    PAIR_ORDER,
    PairClass,
    PairKind,
    build_synthetic_handle,
    load_dataset,
    make_batch,
    make_hr_lr_pair,
    sample_pair,
    subset,
    write_synthetic_dataset,
)
from halluc.errors import DatasetStructureError, InsufficientDiversityError, ShapeError
from halluc.images import box_downsample, save_image, unit_to_signed
from halluc.synth import synth_face


# ---------------------------------------------------------------------------
# load_dataset


def test_load_dataset_counts(tmp_path):
    write_synthetic_dataset(tmp_path / "ds", 2, 3, 32, seed=0)
    handle = load_dataset(tmp_path / "ds", 32, 4)
    assert len(handle.records) == 6
    assert sorted(handle.identity_index) == [0, 1]
    assert all(len(v) == 3 for v in handle.identity_index.values())
    assert handle.lr_size == 8
    assert handle.skipped == 0


def test_load_dataset_empty_dir_is_structure_error(tmp_path):
    (tmp_path / "empty").mkdir()
    with pytest.raises(DatasetStructureError):
        load_dataset(tmp_path / "empty", 32, 4)


def test_load_dataset_missing_root_is_io_error(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path / "nope", 32, 4)


def test_load_dataset_single_identity_is_valid(tmp_path):
    write_synthetic_dataset(tmp_path / "one", 1, 3, 32, seed=0)
    handle = load_dataset(tmp_path / "one", 32, 4)
    assert len(handle.identity_index) == 1


def test_load_dataset_skips_non_image_files(tmp_path):
    root = write_synthetic_dataset(tmp_path / "ds", 2, 2, 32, seed=0)
    (root / "id000" / "notes.txt").write_text("not an image")
    handle = load_dataset(root, 32, 4)
    assert len(handle.records) == 4
    assert handle.skipped == 1


def test_load_dataset_identity_with_no_images_errors(tmp_path):
    root = write_synthetic_dataset(tmp_path / "ds", 2, 2, 32, seed=0)
    junk = root / "id_junk"
    junk.mkdir()
    (junk / "readme.md").write_text("x")
    with pytest.raises(DatasetStructureError):
        load_dataset(root, 32, 4)


def test_identity_ids_follow_sorted_directory_order(tmp_path):
    root = tmp_path / "ds"
    for name in ("zeta", "alpha"):
        (root / name).mkdir(parents=True)
        save_image(synth_face(hash(name) % 1000, 0, 32), root / name / "a.png")
    handle = load_dataset(root, 32, 4)
    assert handle.records[0].image_id.startswith("alpha/")
    assert handle.records[0].identity_id == 0
    assert handle.records[1].image_id.startswith("zeta/")
    assert handle.records[1].identity_id == 1


def test_geometry_validation(tmp_path):
    write_synthetic_dataset(tmp_path / "ds", 1, 1, 32, seed=0)
    with pytest.raises(DatasetStructureError):
        load_dataset(tmp_path / "ds", 32, 3)
    with pytest.raises(DatasetStructureError):
        load_dataset(tmp_path / "ds", 30, 4)


# ---------------------------------------------------------------------------
# make_hr_lr_pair


def test_hr_lr_sizes_at_factor_8():
    src = np.random.default_rng(0).uniform(0, 1, (3, 250, 250))
    hr, lr = make_hr_lr_pair(src, 128, 8)
    assert hr.shape == (3, 128, 128)
    assert lr.shape == (3, 16, 16)


def test_hr_lr_constant_preserved():
    src = np.full((3, 64, 64), 0.25)
    hr, lr = make_hr_lr_pair(src, 32, 4)
    np.testing.assert_array_equal(hr, np.full((3, 32, 32), 0.25))
    np.testing.assert_array_equal(lr, np.full((3, 8, 8), 0.25))


def test_hr_lr_checkerboard_block_means():
    # 2x2-periodic checkerboard: every 4x4 block averages to 0.5
    tile = np.array([[1.0, 0.0], [0.0, 1.0]])
    board = np.tile(tile, (4, 4))
    src = np.stack([board] * 3)
    hr, lr = make_hr_lr_pair(src, 8, 4)
    # independent oracle: brute-force area-weighted averaging
    expect = np.empty((3, 2, 2))
    for c in range(3):
        for u in range(2):
            for v in range(2):
                expect[c, u, v] = hr[c, 4 * u : 4 * u + 4, 4 * v : 4 * v + 4].mean()
    np.testing.assert_array_equal(lr, expect)
    np.testing.assert_array_equal(lr, np.full((3, 2, 2), 0.5))


def test_hr_lr_too_small_source():
    with pytest.raises(ShapeError):
        make_hr_lr_pair(np.zeros((3, 16, 16)), 32, 4)


def test_hr_lr_deterministic():
    src = np.random.default_rng(1).uniform(0, 1, (3, 40, 40))
    a = make_hr_lr_pair(src, 32, 4)
    b = make_hr_lr_pair(src.copy(), 32, 4)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


# ---------------------------------------------------------------------------
# sample_pair


def test_real_same_pair_invariants(tiny_handle, rng):
    for _ in range(20):
        p = sample_pair(tiny_handle, PairKind.REAL_SAME, rng)
        assert p.target_class is PairClass.GENUINE
        assert p.left_identity == p.right_identity
        assert p.left_index != p.right_index


def test_real_other_needs_two_identities(rng):
    one = build_synthetic_handle(1, 3, 32, 4, seed=0)
    with pytest.raises(InsufficientDiversityError) as exc:
        sample_pair(one, PairKind.REAL_OTHER, rng)
    assert exc.value.kind is PairKind.REAL_OTHER


def test_sr_cross_needs_two_identities(rng):
    one = build_synthetic_handle(1, 3, 32, 4, seed=0)
    with pytest.raises(InsufficientDiversityError):
        sample_pair(one, PairKind.SR_CROSS, rng)


def test_real_same_needs_multi_image_identity(rng):
    singles = build_synthetic_handle(3, 1, 32, 4, seed=0)
    with pytest.raises(InsufficientDiversityError):
        sample_pair(singles, PairKind.REAL_SAME, rng)


def test_sr_self_lr_matches_hr_lr_pair_exactly(tiny_handle, rng):
    for _ in range(10):
        p = sample_pair(tiny_handle, PairKind.SR_SELF, rng)
        assert p.target_class is PairClass.FAKE
        assert p.left_index == p.right_index
        hr, lr = tiny_handle.hr_lr(p.left_index)
        np.testing.assert_array_equal(p.left, hr)
        np.testing.assert_array_equal(p.right_source, lr)


def test_cross_kind_identities_differ(tiny_handle, rng):
    for kind in (PairKind.SR_CROSS, PairKind.REAL_OTHER):
        for _ in range(10):
            p = sample_pair(tiny_handle, kind, rng)
            assert p.left_identity != p.right_identity
            assert p.target_class is (
                PairClass.FAKE if kind is PairKind.SR_CROSS else PairClass.IMPOSTER
            )


def test_sr_self_sampling_uniform_over_records(tiny_handle):
    # 10,000 draws over 9 records: every count within 3 sigma of n*p
    rng = np.random.default_rng(99)
    n = 10_000
    counts = np.zeros(len(tiny_handle.records))
    for _ in range(n):
        p = sample_pair(tiny_handle, PairKind.SR_SELF, rng)
        counts[p.left_index] += 1
    prob = 1.0 / len(counts)
    sigma = np.sqrt(n * prob * (1 - prob))
    assert np.all(np.abs(counts - n * prob) <= 3 * sigma), counts


# ---------------------------------------------------------------------------
# make_batch


def _upsample_stub(scale_sizes):
    """Nearest-neighbor doubling stub standing in for the generator."""

    def fn(lr_signed):
        outs = []
        x = lr_signed
        for _ in scale_sizes:
            x = np.repeat(np.repeat(x, 2, axis=-2), 2, axis=-1)
            outs.append(x)
        return outs

    return fn


def test_make_batch_one_of_each_kind(tiny_handle, rng):
    batch = make_batch(tiny_handle, _upsample_stub(range(2)), 4, (1, 1, 1, 1), rng)
    assert [p.kind for p in batch.pairs] == list(PAIR_ORDER)
    assert batch.labels() == [
        PairClass.FAKE,
        PairClass.FAKE,
        PairClass.GENUINE,
        PairClass.IMPOSTER,
    ]
    for group in batch.groups.values():
        assert [s.shape[-1] for s in group.left_scales] == [16, 32]
        assert [np.asarray(s).shape[-1] for s in group.right_scales] == [16, 32]


def test_make_batch_without_sr_pairs_never_calls_generator(tiny_handle, rng):
    calls = []

    def spy(lr):
        calls.append(lr)
        return []

    batch = make_batch(tiny_handle, spy, 4, (0, 0, 4, 0), rng)
    assert calls == []
    assert batch.generated is None
    assert set(batch.groups) == {PairKind.REAL_SAME}


def test_make_batch_sr_right_equals_stub_of_left_lr(tiny_handle, rng):
    stub = _upsample_stub(range(2))
    batch = make_batch(tiny_handle, stub, 2, (2, 0, 0, 0), rng)
    group = batch.groups[PairKind.SR_SELF]
    for row, pair in enumerate(batch.pairs):
        lr_signed = unit_to_signed(pair.right_source).astype(np.float32)[None]
        expected = stub(lr_signed)
        for scale, exp in zip(group.right_scales, expected):
            np.testing.assert_array_equal(np.asarray(scale[row : row + 1]), exp)


def test_make_batch_left_scales_are_box_downsampled_reals(tiny_handle, rng):
    batch = make_batch(tiny_handle, _upsample_stub(range(2)), 2, (0, 0, 1, 1), rng)
    for group in batch.groups.values():
        lowest = group.left_scales[0]
        # left HR is at 32; the 16px copy must be the 2x box downsample
        full = group.left_scales[-1]
        np.testing.assert_allclose(
            lowest, box_downsample(np.asarray(full, dtype=np.float64), 2).astype(np.float32),
            atol=1e-6,
        )


def test_make_batch_sr_reference_is_right_sources_hr(tiny_handle, rng):
    batch = make_batch(tiny_handle, _upsample_stub(range(2)), 2, (1, 1, 0, 0), rng)
    for pair, ref in zip(batch.pairs, batch.sr_reference):
        np.testing.assert_array_equal(ref, tiny_handle.hr_image(pair.right_index))


def test_make_batch_validates_mix(tiny_handle, rng):
    with pytest.raises(ValueError):
        make_batch(tiny_handle, None, 4, (1, 1, 1), rng)
    with pytest.raises(ValueError):
        make_batch(tiny_handle, None, 4, (1, 1, 1, 2), rng)
    with pytest.raises(ValueError):
        make_batch(tiny_handle, None, 4, (2, 2, 0, 0), rng)  # SR pairs but no generator


def test_make_batch_propagates_sampling_errors(rng):
    one = build_synthetic_handle(1, 2, 32, 4, seed=0)
    with pytest.raises(InsufficientDiversityError):
        make_batch(one, _upsample_stub(range(2)), 4, (1, 1, 1, 1), rng)


# ---------------------------------------------------------------------------
# subset


def test_subset_regroups_identities(tiny_handle):
    sub = subset(tiny_handle, [0, 3, 4])
    assert len(sub.records) == 3
    assert sub.hr_size == tiny_handle.hr_size
    for ident, positions in sub.identity_index.items():
        for pos in positions:
            assert sub.records[pos].identity_id == ident
