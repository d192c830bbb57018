"""``lsrna`` command-line entry point.

Every subcommand resolves its configuration (defaults, ``--config`` file,
``--set key.path=value`` overrides, ``--seed``), writes it to the output
directory as ``config.yaml`` next to ``run.json`` and finishes by writing
``manifest.json`` with the checksum of every produced file.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import bench
from .codec import TinyCodec
from .config import ConfigError, RunConfig, dump_config, load_config
from .dataprep import load_pair_dataset, save_pair_dataset
from .images import save_png
from .lsr.model import load_lsr, save_lsr
from .lsr.train import train_lsr
from .manifest import check_manifest, write_manifest
from .metrics import dump_coordinates, evaluate_set, load_image_dir, patch_coordinates
from .refgen import DenoiserModel, PipelineParts, UPSAMPLE_MODES
from .rna import canny_edges, edge_density_for, noise_scale_map

log = logging.getLogger("lsrna")

COMMANDS = ("prep", "train-codec", "train-lsr", "train-denoiser", "generate", "sweep-rna",
            "sweep-steps", "edge-viz", "eval", "report")


# -- run directory plumbing -------------------------------------------------

def _start(cfg: RunConfig, command: str, out: str | None, extra: dict | None = None) -> Path:
    directory = Path(out) if out else cfg.resolved_workdir() / command
    directory.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, directory / "config.yaml")
    run = {"command": command, "seed": cfg.seed, "config_hash": cfg.hash(),
           "source_hash": bench.source_hash(), **(extra or {})}
    (directory / "run.json").write_text(json.dumps(run, indent=1, sort_keys=True))
    return directory


def _finish(directory: Path) -> None:
    write_manifest(directory)
    problems = check_manifest(directory)
    if problems:
        raise RuntimeError(f"manifest check failed for {directory}: {problems}")
    log.info("wrote %s", directory)


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True))
    return path


def _write_csv(path: Path, rows: list[dict]) -> Path:
    with path.open("w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=list(rows[0]))
        wr.writeheader()
        wr.writerows(rows)
    return path


def _plot_curve(path: Path, ys, title: str, xlabel: str = "log step", ylabel: str = "loss") -> Path:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(np.arange(len(ys)), ys)
    ax.set(title=title, xlabel=xlabel, ylabel=ylabel)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return path


def _artifact(cfg: RunConfig, name: str) -> Path:
    explicit = getattr(cfg.artifacts, name.replace("-", "_"))
    if explicit:
        return Path(explicit)
    default = {"codec": ("train-codec", "codec.lsta"), "lsr": ("train-lsr", "lsr.lsta"),
               "rgb-sr": ("train-lsr", "rgb_sr.lsta"), "denoiser": ("train-denoiser", "denoiser.lsta"),
               "pairs": ("prep", "pairs_train")}[name]
    return cfg.resolved_workdir() / default[0] / default[1]


def _need(path: Path, hint: str) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; run `lsrna {hint}` first or set artifacts.* in the config")
    return path


def _load_parts(cfg: RunConfig, need_rgb: bool = False) -> PipelineParts:
    codec = TinyCodec.load(_need(_artifact(cfg, "codec"), "train-codec"))
    lsr, _ = load_lsr(_need(_artifact(cfg, "lsr"), "train-lsr"))
    den = DenoiserModel.load(_need(_artifact(cfg, "denoiser"), "train-denoiser"))
    rgb = None
    if need_rgb or _artifact(cfg, "rgb-sr").exists():
        rgb, _ = load_lsr(_need(_artifact(cfg, "rgb-sr"), "train-lsr"))
    return PipelineParts(codec, den, bench.schedule_for(cfg), lsr, rgb)


# -- subcommands ------------------------------------------------------------

def cmd_train_codec(cfg, args) -> None:
    """Train the tiny image autoencoder."""
    out = _start(cfg, "train-codec", args.out)
    codec = bench.fit_codec(cfg)
    codec.save(out / "codec.lsta")
    _write_json(out / "record.json", {"val_mae": codec.val_mae, "latent_scale": codec.latent_scale,
                                      "params": codec.parameter_count(), "log": codec.log})
    _plot_curve(out / "loss.png", [r["loss"] for r in codec.log], "codec training loss")
    _finish(out)


def cmd_prep(cfg, args) -> None:
    """Build LR/HR latent pair datasets."""
    out = _start(cfg, "prep", args.out)
    codec = TinyCodec.load(_need(_artifact(cfg, "codec"), "train-codec"))
    train, val = bench.build_pairs(cfg, codec)
    save_pair_dataset(train, out / "pairs_train")
    save_pair_dataset(val, out / "pairs_val")
    _write_json(out / "summary.json", {"train": len(train), "val": len(val),
                                       "factors": {str(k): v for k, v in train.factor_counts().items()}})
    _finish(out)


def cmd_train_lsr(cfg, args) -> None:
    """Train the latent (and optional RGB) super-resolution model."""
    out = _start(cfg, "train-lsr", args.out)
    codec = TinyCodec.load(_need(_artifact(cfg, "codec"), "train-codec"))
    pairs_dir = _artifact(cfg, "pairs")
    if pairs_dir.exists():
        train = load_pair_dataset(pairs_dir)
        val = load_pair_dataset(pairs_dir.parent / "pairs_val")
        tcfg = replace(cfg.lsr.train, seed=bench._seed(cfg, "lsr", cfg.lsr.train.seed))
        model, record = train_lsr(train, cfg.lsr.model, tcfg, val_pairs=val, rng=tcfg.seed)
    else:
        model, record = bench.fit_lsr(cfg, codec)
    save_lsr(model, out / "lsr.lsta", {"record": {k: v for k, v in record.items() if k != "loss_curve"}})
    _write_json(out / "record.json", record)
    _plot_curve(out / "loss.png", record["loss_curve"], "LSR training loss (L1)")
    if cfg.lsr.rgb_sr:
        rgb, rgb_record = bench.fit_lsr(cfg, codec, rgb=True)
        save_lsr(rgb, out / "rgb_sr.lsta")
        _write_json(out / "rgb_sr_record.json", rgb_record)
    _finish(out)


def cmd_train_denoiser(cfg, args) -> None:
    """Train the toy conditional denoiser."""
    out = _start(cfg, "train-denoiser", args.out)
    codec = TinyCodec.load(_need(_artifact(cfg, "codec"), "train-codec"))
    den = bench.fit_denoiser(cfg, codec)
    den.save(out / "denoiser.lsta")
    _write_json(out / "record.json", {"loss_curve": den.loss_curve, "params": den.parameter_count()})
    _plot_curve(out / "loss.png", den.loss_curve, "denoiser training loss (MSE)")
    _finish(out)


def cmd_generate(cfg, args) -> None:
    """Generate high-resolution images from fresh references."""
    if args.upsample_mode:
        cfg = replace(cfg, guidance=replace(cfg.guidance, upsample_mode=args.upsample_mode))
    parts = _load_parts(cfg, need_rgb=cfg.guidance.upsample_mode == "rgb-sr")
    out = _start(cfg, "generate", args.out)
    refs = bench.references(cfg, parts)
    images = bench.generate_images(cfg, parts, refs)
    conds = bench.conditions(cfg, parts.denoiser.cfg.n_classes)
    (out / "images").mkdir(exist_ok=True)
    (out / "references").mkdir(exist_ok=True)
    rows = []
    for i, (im, ref) in enumerate(zip(images, refs)):
        save_png(out / "images" / f"{i:04d}.png", im)
        save_png(out / "references" / f"{i:04d}.png", parts.codec.decode(ref))
        rows.append({"index": i, "class": conds[i], "seed": bench.image_seed(cfg, i)})
    _write_json(out / "generation.json", {"images": rows, "scale": cfg.data.scale,
                                          "guidance": asdict(cfg.guidance), "rna": asdict(cfg.rna)})
    _finish(out)


def _sweep_plot(path: Path, rows: list[dict], x: str, group: str | None, metric: str = "pfid") -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(5, 3.2))
    groups = sorted({r[group] for r in rows}) if group else [None]
    for g in groups:
        sel = [r for r in rows if group is None or r[group] == g]
        ax.plot([r[x] for r in sel], [r[metric] for r in sel], marker="o", label=g)
    ax.set(xlabel=x, ylabel=metric)
    if group:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)


def cmd_sweep_rna(cfg, args) -> None:
    """Sweep RNA strength and score each setting."""
    parts = _load_parts(cfg)
    out = _start(cfg, "sweep-rna", args.out)
    refs = bench.references(cfg, parts)
    rows = bench.sweep_rna(cfg, parts, refs, bench.reference_images(cfg))
    _write_json(out / "results.json", rows)
    _write_csv(out / "results.csv", rows)
    _sweep_plot(out / "pfid.png", rows, "e_max", None)
    _finish(out)


def cmd_sweep_steps(cfg, args) -> None:
    """Sweep denoising step counts per upsampling mode."""
    parts = _load_parts(cfg)
    out = _start(cfg, "sweep-steps", args.out)
    refs = bench.references(cfg, parts)
    rows = bench.sweep_steps(cfg, parts, refs, bench.reference_images(cfg))
    _write_json(out / "results.json", rows)
    _write_csv(out / "results.csv", rows)
    _sweep_plot(out / "pfid.png", rows, "steps", "upsample_mode")
    _sweep_plot(out / "fid.png", rows, "steps", "upsample_mode", "fid")
    _finish(out)


def cmd_edge_viz(cfg, args) -> None:
    """Save edge, density and noise-scale maps plus RNA/UNA region differences."""
    parts = _load_parts(cfg)
    out = _start(cfg, "edge-viz", args.out)
    refs = bench.references(cfg, parts)[:args.count]
    rows = []
    for i, ref in enumerate(refs):
        image = parts.codec.decode(ref)
        th = int(round(ref.shape[0] * cfg.data.scale))
        tw = int(round(ref.shape[1] * cfg.data.scale))
        edges, density = edge_density_for(image, th, tw, cfg.rna)
        scales = noise_scale_map(density, cfg.rna)
        save_png(out / f"{i:04d}_reference.png", image)
        save_png(out / f"{i:04d}_edges.png", edges.astype(float))
        save_png(out / f"{i:04d}_density.png", density)
        peak = cfg.rna.e_max if cfg.rna.e_max > 0 else 1.0
        save_png(out / f"{i:04d}_noise_scale.png", scales / peak)
        rows.append({"index": i, "edge_fraction": float(edges.mean()), "mean_scale": float(scales.mean())})
    _write_json(out / "edges.json", rows)
    gaps = []
    for e in cfg.sweep.edge_values:
        diff = bench.edge_difference(cfg, parts, refs, float(e))
        gaps += [{"e": float(e), "variant": k, **v} for k, v in diff.items()]
    _write_json(out / "region_difference.json", gaps)
    _finish(out)


def cmd_eval(cfg, args) -> None:
    """FID/KID/pFID/pKID of an image directory."""
    out = _start(cfg, "eval", args.out, {"generated": str(args.generated),
                                        "reference": None if args.reference is None else str(args.reference)})
    ref_dir = args.reference
    if ref_dir is None:
        ref_dir = out / "reference"
        ref_dir.mkdir(exist_ok=True)
        for i, im in enumerate(bench.reference_images(cfg)):
            save_png(ref_dir / f"{i:04d}.png", im)
    report = evaluate_set(args.generated, ref_dir, bench.embedder_for(cfg), bench.protocol_for(cfg),
                          cfg.eval.kid_block_size)
    report.save(out / "report.json")
    _, sample = load_image_dir(args.generated)
    h, w = sample[0].shape[:2]
    dump_coordinates(out / "patch_coordinates.csv",
                     patch_coordinates(len(sample), h, w, bench.protocol_for(cfg)))
    _finish(out)


def cmd_report(cfg, args) -> None:
    """Summarise finished run directories as markdown."""
    out = _start(cfg, "report", args.out, {"runs": [str(r) for r in args.runs]})
    lines = ["# lsrna report", ""]
    for run in args.runs:
        run = Path(run)
        problems = check_manifest(run)
        meta = json.loads((run / "run.json").read_text()) if (run / "run.json").is_file() else {}
        lines.append(f"## {run.name} ({meta.get('command', '?')}, seed {meta.get('seed', '?')})")
        lines.append("")
        lines.append("manifest: " + ("ok" if not problems else "; ".join(problems)))
        for name in ("results.json", "report.json", "record.json"):
            path = run / name
            if path.is_file():
                data = json.loads(path.read_text())
                lines.append("")
                lines.append(f"{name}:")
                lines.append("")
                lines.extend(_summarise(data))
        lines.append("")
    (out / "report.md").write_text("\n".join(lines) + "\n")
    _finish(out)


def _summarise(data) -> list[str]:
    if isinstance(data, list) and data and isinstance(data[0], dict):
        keys = list(data[0])
        rows = ["| " + " | ".join(keys) + " |", "|" + "---|" * len(keys)]
        rows += ["| " + " | ".join(_fmt(r[k]) for k in keys) + " |" for r in data]
        return rows
    if isinstance(data, dict):
        return [f"- {k}: {_fmt(v)}" for k, v in sorted(data.items()) if not isinstance(v, (list, dict))]
    return [str(data)]


def _fmt(v) -> str:
    return f"{v:.4f}" if isinstance(v, float) else str(v)


HANDLERS = {
    "prep": cmd_prep, "train-codec": cmd_train_codec, "train-lsr": cmd_train_lsr,
    "train-denoiser": cmd_train_denoiser, "generate": cmd_generate, "sweep-rna": cmd_sweep_rna,
    "sweep-steps": cmd_sweep_steps, "edge-viz": cmd_edge_viz, "eval": cmd_eval, "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lsrna", description="Latent super-resolution with region-wise noise.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML run configuration")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted-path override, e.g. --set rna.e_max=0.8 (repeatable)")
    common.add_argument("--seed", type=int, help="global seed (overrides the config)")
    common.add_argument("--workdir", help="root for default output and artifact locations")
    common.add_argument("--out", help="output directory (default: <workdir>/<command>)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common], help=HANDLERS[name].__doc__)
        if name == "generate":
            p.add_argument("--upsample-mode", choices=UPSAMPLE_MODES)
        if name == "edge-viz":
            p.add_argument("--count", type=int, default=4)
        if name == "eval":
            p.add_argument("--generated", type=Path, required=True)
            p.add_argument("--reference", type=Path, help="ground-truth image directory (default: desk test renders)")
        if name == "report":
            p.add_argument("runs", nargs="+", type=Path, help="run directories to summarise")
    return parser


def resolve(args) -> RunConfig:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.workdir is not None:
        overrides.append(f"workdir={args.workdir}")
    return load_config(args.config, overrides)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
        HANDLERS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"lsrna: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError, RuntimeError) as exc:
        print(f"lsrna {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
