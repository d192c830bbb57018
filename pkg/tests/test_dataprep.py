import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lsrna.codec import CodecSpec, CodecTrainConfig, MockCodec, train_codec
from lsrna.dataprep import (DESK_DATAPREP, PROVENANCE, DataprepConfig, PairRecord, build_pair_dataset,
                            check_disjoint, degrade_bicubic, harvest_crops, load_pair_dataset,
                            sample_training_batch, save_pair_dataset, tiling_count)
from lsrna.desk import Scene, render_set, scene_ids
from lsrna.resample import cubic_kernel, resize


def test_paper_scale_crop_sizes():
    assert DataprepConfig().crop_sizes == [1056, 1152, 1248, 1344, 1440]


def test_desk_crop_sizes_respect_divisibility():
    cfg = DESK_DATAPREP
    assert cfg.crop_sizes == [96, 144, 192]
    assert all(size % (math.lcm(*cfg.factors) * cfg.s) == 0 for size in cfg.crop_sizes)


@settings(max_examples=60, deadline=None)
@given(s=st.sampled_from([1, 2, 4, 8]), mult=st.integers(1, 4), factors=st.sampled_from([(2,), (2, 3), (2, 3, 4), (3,)]))
def test_valid_quantum_makes_every_crop_exactly_divisible(s, mult, factors):
    q = math.lcm(*factors) * s * mult
    cfg = DataprepConfig(crop_min=q, crop_max=3 * q, crop_quantum=q, factors=factors, s=s,
                         min_source_resolution=q)
    for size in cfg.crop_sizes:
        for f in factors:
            assert size % f == 0 and (size // f) % s == 0


def test_bad_quantum_is_rejected():
    with pytest.raises(ValueError, match="lcm"):
        DataprepConfig(crop_min=96, crop_max=160, crop_quantum=16, s=4)
    with pytest.raises(ValueError):
        DataprepConfig(crop_min=192, crop_max=96, crop_quantum=96, s=4)
    with pytest.raises(ValueError):
        DataprepConfig(factors=())


def test_full_size_crop_yields_one_tile():
    cfg = DataprepConfig(crop_min=1440, crop_max=1440, crop_quantum=96)
    crops = harvest_crops(np.zeros((1440, 1440, 3)), cfg, 0)
    assert len(crops) == 1 and crops[0].box == (0, 0, 1440, 1440)


def test_tiling_discards_margins_and_never_overlaps():
    cfg = DataprepConfig(crop_min=96, crop_max=96, crop_quantum=48, s=4, min_source_resolution=96)
    crops = harvest_crops(np.random.default_rng(0).random((250, 300, 3)), cfg, 0)
    assert len(crops) == tiling_count(250, 300, 96) == 6
    cover = np.zeros((250, 300), int)
    for c in crops:
        y, x, h, w = c.box
        cover[y:y + h, x:x + w] += 1
    assert cover.max() == 1


def test_small_source_is_skipped_with_warning(caplog):
    assert harvest_crops(np.zeros((100, 100, 3)), DESK_DATAPREP, 0) == []
    assert "below min resolution" in caplog.text


def test_crop_cap():
    cfg = DataprepConfig(crop_min=96, crop_max=96, crop_quantum=48, s=4, min_source_resolution=96,
                         max_crops_per_image=2)
    assert len(harvest_crops(np.zeros((384, 384, 3)), cfg, 0)) == 2


def test_degrade_examples():
    c = np.full((12, 12, 3), 0.3)
    out = degrade_bicubic(c, 3)
    assert out.shape == (4, 4, 3)
    np.testing.assert_allclose(out, 0.3, atol=1e-12)
    x = np.random.default_rng(0).random((8, 8, 3))
    np.testing.assert_array_equal(degrade_bicubic(x, 1), x)
    with pytest.raises(ValueError):
        degrade_bicubic(x, 3)


def test_degrade_by_two_matches_kernel_oracle():
    x = np.random.default_rng(1).random((8, 8, 3))
    taps = np.arange(8) + 0.5
    wmat = np.stack([cubic_kernel((taps - (i + 0.5) * 2) / 2) for i in range(4)])
    wmat /= wmat.sum(axis=1, keepdims=True)
    ref = np.einsum("oh,hwc,pw->opc", wmat, x, wmat)
    np.testing.assert_allclose(degrade_bicubic(x, 2), np.clip(ref, 0, 1), atol=1e-12)


@pytest.fixture(scope="module")
def desk_pairs():
    codec = MockCodec(CodecSpec.mock(4))
    sources = [(s.source_id, Scene(s).render(192)) for s in scene_ids("train", 1)]
    sources.append(("tiny", np.zeros((64, 64, 3))))
    return build_pair_dataset(sources, codec, DESK_DATAPREP), sources, codec


def test_pair_records_and_counts(desk_pairs):
    ds, sources, _ = desk_pairs
    expected = 0
    for entry in ds.manifest["sources"]:
        if entry["crop_size"] is not None:
            expected += tiling_count(entry["height"], entry["width"], entry["crop_size"]) * 3
    assert len(ds) == expected == ds.manifest["count"]
    assert set(ds.factor_counts()) == {2, 3, 4} and min(ds.factor_counts().values()) > 0
    for r in ds:
        lh, lw = r.lr_latent.shape[:2]
        assert r.hr_latent.shape[:2] == (lh * r.scale_factor, lw * r.scale_factor)
        assert r.provenance == PROVENANCE
    assert "tiny" not in ds.source_ids()


def test_lr_latents_are_not_resampled_hr_latents():
    train = render_set(scene_ids("train", 2), 96)
    codec = train_codec(train, train[:2], CodecSpec(s=4, channels=4),
                        CodecTrainConfig(iterations=100, batch_size=8, crop=32), width=16)
    sources = [(s.source_id, Scene(s).render(192)) for s in scene_ids("val", 1)]
    ds = build_pair_dataset(sources, codec, DESK_DATAPREP)
    gaps = []
    for r in ds:
        lh, lw = r.lr_latent.shape[:2]
        down = resize(r.hr_latent.astype(np.float64), lh, lw, "bicubic")
        gaps.append(np.abs(down - r.lr_latent).mean() / np.abs(r.lr_latent).mean())
    assert min(gaps) > 0.01


def test_records_encode_crops_independently(desk_pairs):
    ds, sources, codec = desk_pairs
    images = dict(sources)
    r = ds.records[0]
    y, x, h, w = r.crop_box
    crop = images[r.source_id][y:y + h, x:x + w]
    np.testing.assert_allclose(r.hr_latent, codec.encode(crop), atol=1e-6)
    lr = codec.encode(degrade_bicubic(crop, r.scale_factor))
    np.testing.assert_allclose(r.lr_latent, lr, atol=1e-6)


def test_codec_mismatch():
    with pytest.raises(ValueError, match="does not match"):
        build_pair_dataset([], MockCodec(CodecSpec.mock(2)), DESK_DATAPREP)
    with pytest.raises(ValueError):
        PairRecord(np.zeros((2, 2, 4)), np.zeros((5, 4, 4)), 2, "x", (0, 0, 8, 8))


def test_save_and_load(desk_pairs, tmp_path):
    ds, _, _ = desk_pairs
    path = save_pair_dataset(ds, tmp_path / "pairs")
    rows = json.loads(path.read_text())["records"]
    assert {"source_id", "crop_box", "factor", "shard"} <= set(rows[0])
    back = load_pair_dataset(tmp_path / "pairs")
    assert len(back) == len(ds)
    key = lambda r: (r.source_id, r.crop_box, r.scale_factor)
    for a, b in zip(sorted(ds, key=key), sorted(back, key=key)):
        assert key(a) == key(b)
        np.testing.assert_array_equal(a.lr_latent, b.lr_latent)
        np.testing.assert_array_equal(a.hr_latent, b.hr_latent)


def test_training_batch_at_paper_geometry():
    codec = MockCodec(CodecSpec.mock(1))
    cfg = DataprepConfig(crop_min=96, crop_max=96, crop_quantum=12, s=1, min_source_resolution=96)
    ds = build_pair_dataset([("a", np.random.default_rng(0).random((96, 96, 3)))], codec,
                            cfg)
    batch = sample_training_batch(ds, 3, 0, lr_crop=32, hr_samples=4096)
    assert batch["lr"].shape == (3, 32, 32, 3) and batch["target"].shape == (3, 4096, 3)
    assert not batch["augmented"]
    for b, i in enumerate(batch["records"]):
        rec = ds.records[i]
        y0, x0, n, _ = batch["hr_boxes"][b]
        n_hr = n
        iy = np.round((batch["coord"][b, :, 0] * n_hr + n_hr - 1) / 2).astype(int)
        ix = np.round((batch["coord"][b, :, 1] * n_hr + n_hr - 1) / 2).astype(int)
        assert iy.min() >= 0 and iy.max() < n_hr and ix.min() >= 0 and ix.max() < n_hr
        np.testing.assert_array_equal(batch["target"][b], rec.hr_latent[y0 + iy, x0 + ix])
        ly, lx, _, _ = batch["lr_boxes"][b]
        np.testing.assert_array_equal(batch["lr"][b], rec.lr_latent[ly:ly + 32, lx:lx + 32])
        assert (y0, x0) == (ly * rec.scale_factor, lx * rec.scale_factor)


def test_training_batch_is_seeded(desk_pairs):
    ds, _, _ = desk_pairs
    a = sample_training_batch(ds, 4, 5, lr_crop=4, hr_samples=50)
    b = sample_training_batch(ds, 4, 5, lr_crop=4, hr_samples=50)
    assert a["records"] == b["records"]
    for k in ("lr", "coord", "cell", "target"):
        np.testing.assert_array_equal(a[k], b[k])
    with pytest.raises(ValueError):
        sample_training_batch(ds, 1, 0, lr_crop=1000)


def test_split_isolation():
    ids = {split: [s.source_id for s in scene_ids(split, 5)] for split in ("train", "val", "test")}
    assert check_disjoint(ids["train"], ids["val"], ids["test"])
    assert not check_disjoint(["a", "b"], ["b"])
