"""Invariants of the trained desk components."""

import numpy as np
import pytest
import torch
from scipy.stats import binomtest
from torch import nn
from torch.nn import functional as F

from lsrna.desk import CLASSES, render_set, scene_ids
from lsrna.lsr.train import consistency_l1
from lsrna.refgen import epsilon_mse

pytestmark = pytest.mark.slow


def _grey_contrast(images):
    # grey-level contrast only, so the oracle cannot lean on background colour
    x = torch.from_numpy(np.stack(images).astype(np.float32)).permute(0, 3, 1, 2).mean(1, keepdim=True)
    x = (x - x.mean((2, 3), keepdim=True)) / (x.std((2, 3), keepdim=True) + 1e-3)
    return x


def _classifier(images, labels, iterations=400, seed=0):
    torch.manual_seed(seed)
    net = nn.Sequential(nn.Conv2d(1, 16, 3, 2, 1), nn.ReLU(), nn.Conv2d(16, 32, 3, 2, 1), nn.ReLU(),
                        nn.Conv2d(32, 32, 3, 2, 1), nn.ReLU(), nn.AdaptiveAvgPool2d(1), nn.Flatten(),
                        nn.Linear(32, len(CLASSES)))
    x = _grey_contrast(images)
    y = torch.tensor(labels)
    opt = torch.optim.Adam(net.parameters(), lr=3e-3)
    gen = torch.Generator().manual_seed(seed)
    for _ in range(iterations):
        idx = torch.randint(0, len(x), (32,), generator=gen)
        batch = x[idx]
        if torch.rand(1, generator=gen) < 0.5:
            batch = batch.flip(3)
        loss = F.cross_entropy(net(batch), y[idx])
        opt.zero_grad()
        loss.backward()
        opt.step()
    net.eval()

    def predict(ims):
        with torch.no_grad():
            return net(_grey_contrast(ims)).argmax(1).numpy()
    return predict


def test_references_are_class_conditional(desk):
    ids = scene_ids("train", 48)
    predict = _classifier(render_set(ids, desk.cfg.data.base_px), [s.label for s in ids])
    test_ids = scene_ids("test", desk.cfg.data.test_per_class)
    gt_acc = np.mean(predict(render_set(test_ids, desk.cfg.data.base_px)) == [s.label for s in test_ids])
    assert gt_acc > 0.8
    conds = np.asarray(desk.bench.conditions(desk.cfg, len(CLASSES)))
    refs = [desk.components.codec.decode(r) for r in desk.refs]
    hits = int(np.sum(predict(refs) == conds))
    assert binomtest(hits, len(refs), 1 / len(CLASSES), alternative="greater").pvalue < 0.05, hits


def test_lsr_consistency_within_recorded_bound(desk):
    bound = desk.components.records["lsr"]["consistency_bound"]
    latents = [desk.components.codec.encode(im) for im in render_set(scene_ids("test", 2), 64)]
    assert max(consistency_l1(desk.components.lsr, latents)) <= bound


def test_rna_region_gap_positive_and_growing(desk):
    gaps = [desk.edge_difference(float(e))["rna"]["gap"] for e in desk.cfg.sweep.edge_values]
    assert gaps[0] > 0
    assert all(b > a for a, b in zip(gaps, gaps[1:])), gaps


def test_denoiser_learned_noise_prediction(desk):
    curve = np.asarray(desk.components.denoiser.loss_curve)
    k = max(1, len(curve) // 10)
    assert curve[-k:].mean() < 0.5 * curve[:k].mean()
    ids = scene_ids("val", desk.cfg.data.val_per_class)
    lat = [desk.components.codec.encode(im) for im in render_set(ids, desk.cfg.data.base_px)]
    labels = [s.label for s in ids]
    sched = desk.parts.schedule
    assert (epsilon_mse(desk.components.denoiser, lat, labels, sched, 0)
            < 0.5 * epsilon_mse(desk.components.denoiser, lat, labels, sched, 0, zero_baseline=True))
