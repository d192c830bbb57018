import numpy as np
import pytest
import torch

from lsrna.dataprep import PairDataset, PairRecord
from lsrna.lsr import (LsrConfig, LsrModel, LsrTrainConfig, bicubic_latent_upsample, consistency_l1,
                       extract_features, load_lsr, make_cell, make_coord, query_pixel, save_lsr,
                       train_lsr, upsample_from_features, upsample_latent, validation_l1)
from lsrna.lsr.train import smoothed
from lsrna.resample import cubic_kernel, resize

SMALL = LsrConfig(backbone="residual-conv", depth=2, width=16, feature_dim=16, io_channels=4, mlp_widths=(32, 32))


def smooth_latent(rng, h, w, c=4):
    coarse = rng.standard_normal((max(h // 4, 2), max(w // 4, 2), c))
    return resize(coarse, h, w, "bicubic")


@pytest.fixture(scope="module")
def model():
    torch.manual_seed(0)
    return LsrModel(SMALL).eval()


def realizable_pairs(seed, n, lr=12):
    rng = np.random.default_rng(seed)
    recs = []
    for i in range(n):
        z = smooth_latent(rng, lr, lr).astype(np.float32)
        f = (2, 3)[i % 2]
        hr = bicubic_latent_upsample(z, lr * f, lr * f).astype(np.float32)
        recs.append(PairRecord(z, hr, f, f"s{seed}-{i}", (0, 0, lr, lr)))
    return PairDataset(recs)


@pytest.fixture(scope="module")
def trained():
    cfg = LsrTrainConfig(iterations=300, batch_size=8, lr=2e-3, lr_crop=8, hr_samples=128, seed=1)
    val = realizable_pairs(11, 6)
    model, record = train_lsr(realizable_pairs(10, 24), SMALL, cfg, val_pairs=val)
    return model, record, val


def test_config_validation():
    with pytest.raises(ValueError):
        LsrConfig(backbone="transformer")
    with pytest.raises(ValueError):
        LsrConfig(width=0)
    assert LsrConfig(mlp_widths=[8, 8]).mlp_widths == (8, 8)


def test_coordinate_grid_is_centred_and_symmetric():
    c = make_coord(5, 4)
    assert c.shape == (5, 4, 2)
    torch.testing.assert_close(c, -torch.flip(c, dims=(0, 1)), rtol=0, atol=0)
    assert c[2, 0, 0] == 0.0 and c[0, 0, 1] == pytest.approx(-0.75)
    torch.testing.assert_close(make_cell(5, 4, 3)[0], torch.tensor([0.4, 0.5]))


def test_feature_shape_and_determinism(model):
    z = np.random.default_rng(0).standard_normal((32, 32, 4))
    f = extract_features(z, model)
    assert f.shape == (32, 32, SMALL.feature_dim)
    assert f.tobytes() == extract_features(z, model).tobytes()
    with pytest.raises(ValueError, match="channels"):
        extract_features(np.zeros((8, 8, 3)), model)


@pytest.mark.parametrize("backbone", ["residual-conv", "lightweight-attention"])
def test_zero_latent_with_zeroed_tail_gives_bias_field(backbone):
    cfg = LsrConfig(backbone=backbone, depth=1, width=12, feature_dim=6, io_channels=4, mlp_widths=(8,),
                    blocks_per_group=1, heads=2, window_size=4)
    m = LsrModel(cfg)
    with torch.no_grad():
        m.backbone.tail.weight.zero_()
    f = extract_features(np.zeros((6, 10, 4)), m)
    np.testing.assert_array_equal(f, np.broadcast_to(m.backbone.tail.bias.detach().numpy(), f.shape))


@pytest.mark.parametrize("target", [(96, 96), (80, 80), (40, 56)])
def test_upsample_shapes(model, target):
    out = upsample_latent(np.random.default_rng(1).standard_normal((32, 32, 4)), *target, model)
    assert out.shape == (*target, 4) and np.all(np.isfinite(out))


def test_attention_backbone_handles_ragged_sizes():
    cfg = LsrConfig(depth=1, width=12, feature_dim=8, mlp_widths=(16,), blocks_per_group=2, heads=2, window_size=4)
    out = upsample_latent(np.random.default_rng(2).standard_normal((10, 7, 4)), 25, 14, LsrModel(cfg))
    assert out.shape == (25, 14, 4) and np.all(np.isfinite(out))


def test_batched_grid_equals_per_pixel_queries(model):
    z = np.random.default_rng(3).standard_normal((6, 5, 4))
    feats = extract_features(z, model)
    H, W = 13, 11
    grid = upsample_from_features(feats, H, W, model)
    coord = make_coord(H, W).numpy()
    cell = (2.0 / H, 2.0 / W)
    loop = np.stack([np.stack([query_pixel(feats, coord[i, j], cell, model) for j in range(W)]) for i in range(H)])
    assert grid.tobytes() == loop.tobytes()


def test_cell_centre_query_uses_only_that_cell(model):
    z = np.random.default_rng(4).standard_normal((6, 6, 4))
    feats = extract_features(z, model)
    i, j = 2, 4
    centre = ((2 * i + 1 - 6) / 6, (2 * j + 1 - 6) / 6)
    cell = (2 / 12, 2 / 12)
    inp = torch.tensor(np.concatenate([feats[i, j], [0.0, 0.0], [cell[0] * 6, cell[1] * 6]]), dtype=torch.float32)
    with torch.no_grad():
        direct = model.imnet(inp[None])[0].numpy()
    np.testing.assert_allclose(query_pixel(feats, centre, cell, model), direct, atol=1e-6)


def test_query_rejects_out_of_range(model):
    feats = np.zeros((4, 4, SMALL.feature_dim), np.float32)
    with pytest.raises(ValueError):
        query_pixel(feats, (1.2, 0.0), (0.1, 0.1), model)
    with pytest.raises(ValueError):
        upsample_latent(np.zeros((8, 8, 4)), 4, 8, model)


def test_bicubic_latent_upsample_oracles():
    np.testing.assert_allclose(bicubic_latent_upsample(np.full((5, 7, 4), -0.7), 13, 20), -0.7, atol=1e-12)
    z = np.random.default_rng(5).standard_normal((5, 7, 4))
    np.testing.assert_array_equal(bicubic_latent_upsample(z, 5, 7), z)
    delta = np.zeros((7, 7, 1))
    delta[3, 3] = 1.0
    out = bicubic_latent_upsample(delta, 14, 14)[..., 0]
    taps = np.arange(7) + 0.5
    w = np.stack([cubic_kernel(taps - (i + 0.5) / 2) for i in range(14)])
    w /= w.sum(axis=1, keepdims=True)
    np.testing.assert_allclose(out, np.outer(w[:, 3], w[:, 3]), atol=1e-12)
    with pytest.raises(ValueError):
        bicubic_latent_upsample(z, 4, 7)


def test_train_defaults():
    d = LsrTrainConfig()
    assert (d.lr, d.batch_size, d.cosine, d.lr_crop) == (2e-4, 32, True, 32)


def test_realizable_training_drives_error_down(trained):
    model, record, val = trained
    torch.manual_seed(1)
    untrained = LsrModel(SMALL).eval()
    before = np.mean(validation_l1(untrained, val)[0])
    assert record["val_l1"] < 0.25 * before
    curve = smoothed(record["loss_curve"], 25)
    assert curve[len(curve) // 2] > curve[-1]


def test_continuity_under_tiny_coordinate_shift(trained):
    model = trained[0]
    z = trained[2].records[0].lr_latent
    feats = extract_features(z, model)
    rng = np.random.default_rng(6)
    cell = (2 / 36, 2 / 36)
    # local Lipschitz estimate from dense finite differences
    base = rng.uniform(-0.95, 0.95, (200, 2)).astype(np.float32)
    step = np.float32(1e-3)
    lip = 0.0
    for c in base:
        for axis in (0, 1):
            d = np.zeros(2, np.float32)
            d[axis] = step
            diff = np.abs(query_pixel(feats, c + d, cell, model) - query_pixel(feats, c, cell, model)).max()
            lip = max(lip, diff / step)
    for c in base[:50]:
        shifted = (c + np.float32(1e-6)).astype(np.float32)
        gap = np.abs(query_pixel(feats, shifted, cell, model) - query_pixel(feats, c, cell, model)).max()
        moved = np.abs(shifted - c).max()
        assert gap <= 2 * lip * moved + 1e-5


def test_training_log_and_consistency_bound(trained, tmp_path):
    model, record, val = trained
    assert {"loss_curve", "val_l1", "val_bicubic_l1", "consistency_bound"} <= set(record)
    latents = [r.lr_latent for r in realizable_pairs(12, 4)]
    assert max(consistency_l1(model, latents)) <= record["consistency_bound"]
    loaded, meta = load_lsr(save_lsr(model, tmp_path / "m.lsta", {"note": 1}))
    assert meta["note"] == 1
    z = val.records[0].lr_latent
    assert upsample_latent(z, 30, 30, loaded).tobytes() == upsample_latent(z, 30, 30, model).tobytes()


def test_training_is_seeded():
    cfg = LsrTrainConfig(iterations=15, batch_size=4, lr_crop=8, hr_samples=64, seed=3)
    pairs, val = realizable_pairs(20, 6), realizable_pairs(21, 2)
    a = train_lsr(pairs, SMALL, cfg, val_pairs=val)[1]
    b = train_lsr(pairs, SMALL, cfg, val_pairs=val)[1]
    assert a["val_l1"] == b["val_l1"] and a["loss_curve"] == b["loss_curve"]


def test_training_errors():
    with pytest.raises(ValueError, match="empty"):
        train_lsr(PairDataset([]), SMALL)
    bad = realizable_pairs(30, 2)
    with pytest.raises(ValueError, match="channels"):
        train_lsr(bad, LsrConfig(io_channels=3, backbone="residual-conv"))
    nan = realizable_pairs(31, 2)
    for r in nan.records:
        r.hr_latent[:] = np.nan
    with pytest.raises(FloatingPointError):
        train_lsr(nan, SMALL, LsrTrainConfig(iterations=3, batch_size=2, lr_crop=8, hr_samples=16))
