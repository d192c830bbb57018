"""Desk-scale benchmark stages shared by the CLI and the test-suite.

Every stage takes a ``RunConfig`` and derives all of its randomness from
``cfg.seed``. Trained components can be cached on disk, keyed by the hash
of the configuration sections they depend on plus a hash of the package
sources, so a stale cache can never be picked up after a code change.
"""

from __future__ import annotations

import dataclasses
import hashlib
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .codec import PixelCodec, TinyCodec, train_codec
from .config import RunConfig
from .dataprep import PairDataset, build_pair_dataset
from .desk import Scene, render_set, scene_ids
from .lsr.model import LsrConfig, LsrModel, load_lsr, save_lsr
from .lsr.train import train_lsr
from .manifest import stable_hash
from .metrics import (FeatureFileEmbedder, MetricReport, PatchProtocol, RandomProjectionEmbedder,
                      evaluate_arrays, region_difference_report)
from .refgen import (DenoiserModel, GuidanceConfig, PipelineParts, generate_reference, lsrna_generate,
                     make_schedule, train_toy_denoiser)
from .rna import RnaConfig, canny_edges
from .seeding import derive_seed

log = logging.getLogger(__name__)

PACKAGE_ROOT = Path(__file__).resolve().parent


# modules whose code determines trained weights; the component cache is keyed on these
TRAINING_SOURCES = ("archive.py", "codec.py", "dataprep.py", "desk.py", "images.py", "resample.py",
                    "seeding.py", "lsr/*.py", "refgen/denoiser.py", "refgen/schedule.py")


def source_hash(patterns: tuple[str, ...] = ("**/*.py",)) -> str:
    """sha256 over the package source files matching ``patterns``, in path order."""
    h = hashlib.sha256()
    files = {p for pat in patterns for p in PACKAGE_ROOT.glob(pat)}
    for p in sorted(files):
        h.update(p.relative_to(PACKAGE_ROOT).as_posix().encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def _seed(cfg: RunConfig, *keys) -> int:
    # torch and numpy both accept 31-bit seeds
    return derive_seed(cfg.seed, *keys) % (2 ** 31)


def schedule_for(cfg: RunConfig):
    d = cfg.denoiser
    return make_schedule(d.schedule, d.total_steps, d.beta_start, d.beta_end)


# -- data -------------------------------------------------------------------

def codec_images(cfg: RunConfig) -> tuple[list[np.ndarray], list[np.ndarray]]:
    ids = scene_ids("train", cfg.data.codec_per_class)
    train = [im for size in cfg.data.codec_sizes for im in render_set(ids, size)]
    val = render_set(scene_ids("val", cfg.data.val_per_class), cfg.data.hr_px)
    return train, val


def lsr_sources(cfg: RunConfig, split: str = "train") -> list[tuple[str, np.ndarray]]:
    if split == "train":
        ids, px = scene_ids("train", cfg.data.lsr_sources_per_class), cfg.data.lsr_source_px
    else:
        ids, px = scene_ids("val", cfg.data.lsr_val_per_class), cfg.data.lsr_val_px
    return [(s.source_id, Scene(s).render(px)) for s in ids]


def reference_images(cfg: RunConfig) -> list[np.ndarray]:
    """Held-out ground-truth renders at the output resolution."""
    return render_set(scene_ids("test", cfg.data.test_per_class), cfg.data.hr_px)


# -- training stages --------------------------------------------------------

def fit_codec(cfg: RunConfig) -> TinyCodec:
    train, val = codec_images(cfg)
    tcfg = replace(cfg.codec.train, seed=_seed(cfg, "codec", cfg.codec.train.seed))
    return train_codec(train, val, cfg.codec.spec, tcfg, width=cfg.codec.width)


def build_pairs(cfg: RunConfig, codec) -> tuple[PairDataset, PairDataset]:
    dp = replace(cfg.dataprep, s=codec.s, rng_seed=_seed(cfg, "dataprep", cfg.dataprep.rng_seed))
    return (build_pair_dataset(lsr_sources(cfg, "train"), codec, dp),
            build_pair_dataset(lsr_sources(cfg, "val"), codec, dp))


def fit_lsr(cfg: RunConfig, codec, rgb: bool = False) -> tuple[LsrModel, dict]:
    """Latent LSR on ``codec`` pairs, or (``rgb=True``) the same network on RGB pairs."""
    model_cfg = cfg.lsr.model
    key = "rgb-sr" if rgb else "lsr"
    if rgb:
        codec = PixelCodec()
        model_cfg = replace(model_cfg, io_channels=3)
    pairs, val = build_pairs(cfg, codec)
    tcfg = replace(cfg.lsr.train, seed=_seed(cfg, key, cfg.lsr.train.seed))
    return train_lsr(pairs, model_cfg, tcfg, val_pairs=val, rng=tcfg.seed)


def denoiser_data(cfg: RunConfig, codec) -> tuple[list, list, list]:
    ids = scene_ids("train", cfg.data.train_per_class)
    labels = [s.label for s in ids]
    base = [codec.encode(im) for im in render_set(ids, cfg.data.base_px)]
    high = [codec.encode(im) for im in render_set(ids, cfg.data.hr_px)]
    return base + high, labels + labels, [0] * len(base) + [1] * len(high)


def fit_denoiser(cfg: RunConfig, codec) -> DenoiserModel:
    latents, labels, levels = denoiser_data(cfg, codec)
    tcfg = replace(cfg.denoiser.train, seed=_seed(cfg, "denoiser", cfg.denoiser.train.seed))
    mcfg = replace(cfg.denoiser.model, channels=codec.channels)
    return train_toy_denoiser(latents, labels, schedule_for(cfg), tcfg, mcfg, rng=tcfg.seed, levels=levels)


# -- cached bundle ----------------------------------------------------------

def _section_key(cfg: RunConfig, *names: str) -> str:
    d = cfg.to_dict()
    return stable_hash({"seed": cfg.seed, "sections": {n: d[n] for n in names}, "source": source_hash(TRAINING_SOURCES)})[:16]


@dataclass
class Components:
    codec: TinyCodec
    lsr: LsrModel
    denoiser: DenoiserModel
    rgb_sr: LsrModel | None
    records: dict

    def parts(self, cfg: RunConfig) -> PipelineParts:
        return PipelineParts(self.codec, self.denoiser, schedule_for(cfg), self.lsr, self.rgb_sr)


def _summary(record: dict) -> dict:
    return {k: v for k, v in record.items() if k != "loss_curve"}


def load_or_train(cfg: RunConfig, cache_dir: str | Path | None = None) -> Components:
    """Train every component (or load them from ``cache_dir`` when present)."""
    cache = Path(cache_dir) if cache_dir else None
    records: dict = {}

    def cached(name, keys, fit, save, load):
        if cache is None:
            return fit()
        path = cache / f"{name}-{_section_key(cfg, *keys)}.lsta"
        if path.is_file():
            return load(path)
        obj = fit()
        path.parent.mkdir(parents=True, exist_ok=True)
        save(obj, path)
        return obj

    codec = cached("codec", ["data", "codec"], lambda: fit_codec(cfg),
                   lambda c, p: c.save(p), TinyCodec.load)

    def fit_l(rgb):
        model, rec = fit_lsr(cfg, codec, rgb=rgb)
        records["rgb-sr" if rgb else "lsr"] = rec
        return model

    def save_l(name):
        return lambda m, p: save_lsr(m, p, {"record": _summary(records[name])})

    def load_l(name):
        def load(p):
            model, meta = load_lsr(p)
            records[name] = meta.get("record") or {}
            return model
        return load

    lsr = cached("lsr", ["data", "codec", "dataprep", "lsr"], lambda: fit_l(False), save_l("lsr"),
                 load_l("lsr"))
    rgb_sr = None
    if cfg.lsr.rgb_sr:
        rgb_sr = cached("rgbsr", ["data", "dataprep", "lsr"], lambda: fit_l(True), save_l("rgb-sr"),
                        load_l("rgb-sr"))
    denoiser = cached("denoiser", ["data", "codec", "denoiser"], lambda: fit_denoiser(cfg, codec),
                      lambda m, p: m.save(p), DenoiserModel.load)
    return Components(codec, lsr, denoiser, rgb_sr, records)


# -- generation and evaluation ---------------------------------------------

def conditions(cfg: RunConfig, n_classes: int) -> list[int]:
    return [i % n_classes for i in range(cfg.generate.n_images)]


def image_seed(cfg: RunConfig, index: int) -> int:
    return _seed(cfg, "image", index)


def references(cfg: RunConfig, parts: PipelineParts) -> list[np.ndarray]:
    shape = (cfg.data.base_px // parts.codec.s, cfg.data.base_px // parts.codec.s, parts.codec.channels)
    conds = conditions(cfg, parts.denoiser.cfg.n_classes)
    return [generate_reference(c, parts.denoiser, parts.schedule, cfg.generate.reference_steps,
                               derive_seed(image_seed(cfg, i), "reference"), shape)
            for i, c in enumerate(conds)]


def generate_images(cfg: RunConfig, parts: PipelineParts, refs: list[np.ndarray],
                    guidance: GuidanceConfig | None = None, rna: RnaConfig | None = None) -> list[np.ndarray]:
    guidance = guidance or cfg.guidance
    rna = rna or cfg.rna
    conds = conditions(cfg, parts.denoiser.cfg.n_classes)
    return [lsrna_generate(c, cfg.data.scale, guidance, rna, parts, image_seed(cfg, i), reference=r).image
            for i, (c, r) in enumerate(zip(conds, refs))]


def embedder_for(cfg: RunConfig):
    e = cfg.eval
    if e.embedder == "external-feature-files":
        return FeatureFileEmbedder(e.feature_file)
    return RandomProjectionEmbedder(feature_dim=e.feature_dim, input_size=e.patch_size, seed=e.embed_seed)


def protocol_for(cfg: RunConfig) -> PatchProtocol:
    return PatchProtocol(cfg.eval.patch_size, cfg.eval.num_patches, cfg.eval.patch_seed)


def evaluate(cfg: RunConfig, images: list[np.ndarray], gt: list[np.ndarray]) -> MetricReport:
    return evaluate_arrays(images, gt, embedder_for(cfg), protocol_for(cfg), cfg.eval.kid_block_size)


def sweep_rna(cfg: RunConfig, parts: PipelineParts, refs, gt) -> list[dict]:
    rows = []
    for e in cfg.sweep.e_max_values:
        rna = replace(cfg.rna, e_min=0.0, e_max=float(e))
        rep = evaluate(cfg, generate_images(cfg, parts, refs, rna=rna), gt)
        rows.append({"e_min": 0.0, "e_max": float(e), **_scores(rep)})
    return rows


def sweep_steps(cfg: RunConfig, parts: PipelineParts, refs, gt) -> list[dict]:
    rows = []
    for mode in cfg.sweep.step_modes:
        for steps in cfg.sweep.steps_values:
            g = replace(cfg.guidance, steps=int(steps), upsample_mode=mode,
                        t_init_rule=cfg.sweep.step_t_init_rule)
            rep = evaluate(cfg, generate_images(cfg, parts, refs, guidance=g), gt)
            rows.append({"upsample_mode": mode, "steps": int(steps), **_scores(rep)})
    return rows


def _scores(rep: MetricReport) -> dict:
    return {"fid": rep.fid, "kid": rep.kid, "pfid": rep.pfid, "pkid": rep.pkid}


def edge_difference(cfg: RunConfig, parts: PipelineParts, refs, e: float) -> dict:
    """Mean edge / non-edge differences of RNA [0, e] and UNA [e, e] against no noise."""
    conds = conditions(cfg, parts.denoiser.cfg.n_classes)
    out = {}
    variants = {"rna": replace(cfg.rna, e_min=0.0, e_max=e), "una": replace(cfg.rna, e_min=e, e_max=e)}
    base_rna = replace(cfg.rna, e_min=0.0, e_max=0.0)
    acc = {k: [] for k in variants}
    for i, (c, r) in enumerate(zip(conds, refs)):
        seed = image_seed(cfg, i)
        plain = lsrna_generate(c, cfg.data.scale, cfg.guidance, base_rna, parts, seed, reference=r).image
        edges = canny_edges(parts.codec.decode(r), cfg.rna)
        if not edges.any() or edges.all():
            continue
        fy, fx = plain.shape[0] // edges.shape[0], plain.shape[1] // edges.shape[1]
        hr_edges = np.repeat(np.repeat(edges, fy, axis=0), fx, axis=1)
        for name, rcfg in variants.items():
            img = lsrna_generate(c, cfg.data.scale, cfg.guidance, rcfg, parts, seed, reference=r).image
            acc[name].append(region_difference_report(img, plain, hr_edges))
    for name, reps in acc.items():
        if not reps:
            raise ValueError("no reference produced a usable edge map")
        out[name] = {k: float(np.mean([rp[k] for rp in reps])) for k in reps[0]}
        out[name]["images"] = len(reps)
    return out
