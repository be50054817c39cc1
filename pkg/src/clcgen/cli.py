"""Command-line entry point: ``clcgen <command> --config run.yaml``.

Every command is a pure function of (config, seed, input files); outputs are
rewritten in full on each run so repeated runs leave byte-identical files.

Exit codes: 0 ok, 1 incomplete report, 2 missing input, 3 config error,
4 numeric divergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import shutil
import sys
from collections import defaultdict
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import __version__
from .config import ExperimentConfig, load_config, parse_override
from .errors import (
    ConfigError, NumericDivergenceError, ParameterError, ShapeError, TrainingDivergenceError, UnsupportedMetricError,
)
from .metrics import (
    MetricRow, akd, akd_adjust, clip_mean, external_score, joint_validity, psnr_float, psnr_int,
    read_csv_rows, rows_to_csv, ssim, tje, toy_keypoints,
)
from .video import VideoClip, read_clip, write_clip, write_frame

log = logging.getLogger("clcgen")

EXIT_OK = 0
EXIT_INCOMPLETE = 1
EXIT_MISSING = 2
EXIT_CONFIG = 3
EXIT_DIVERGED = 4

AGGREGATE_ID = "__mean__"
MANIFEST = "manifest.jsonl"


class MissingInput(Exception):
    """A required input file or directory does not exist."""


# --------------------------------------------------------------------------- helpers

def _dump_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise MissingInput(f"{what} not found: {path}")
    return path


def _fresh_dir(path: Path) -> Path:
    if path.exists():
        shutil.rmtree(path)
    path.mkdir(parents=True)
    return path


def _torch_setup():
    import torch

    torch.set_num_threads(1)
    torch.use_deterministic_algorithms(True)


def _dataset(cfg: ExperimentConfig) -> list[dict]:
    from .curation import read_jsonl

    root = cfg.path("data_dir")
    return read_jsonl(_require(root / MANIFEST, "dataset manifest (run make-synth first)"))


def _clips_for(cfg: ExperimentConfig, selector: str) -> list[tuple[str, Path]]:
    """(video_id, frame dir) pairs for a split name, a video id, or a frame directory."""
    root = cfg.path("data_dir")
    if "/" in selector:
        path = _require(Path(selector), "driving clip")
        return [(path.name, path)]
    records = _dataset(cfg)
    if selector in ("train", "val"):
        picked = [r for r in records if r["split"] == selector]
    else:
        picked = [r for r in records if r["video_id"] == selector]
    if not picked:
        raise MissingInput(f"no clips match {selector!r} in {root / MANIFEST}")
    return [(r["video_id"], _require(root / r["path"], "clip frames")) for r in picked]


def _load_denoiser(cfg: ExperimentConfig):
    from .toy.model import TorchDenoiser, load_checkpoint

    ckpt = cfg.path("checkpoint")
    _require(ckpt, "checkpoint")
    _require(ckpt.with_suffix(".json"), "checkpoint manifest")
    net, manifest = load_checkpoint(ckpt)
    sched = cfg.schedule()
    stored = manifest.get("schedule_fingerprint")
    if stored is not None and stored != sched.training_fingerprint():
        raise ConfigError("config noise schedule differs from the one the checkpoint was trained with")
    return TorchDenoiser(net), sched


def _pingpong(n: int, length: int) -> Iterator[int]:
    """Frame indices bouncing back and forth over a clip of ``length`` frames."""
    period = max(1, 2 * (length - 1))
    for k in range(n):
        j = k % period
        yield j if j < length else period - j


# --------------------------------------------------------------------------- make-synth

def cmd_make_synth(cfg: ExperimentConfig) -> int:
    from .toy.scene import render_clip
    from .toy.suite import VALIDATION_SEED_BASE, training_scenes, validation_scenes
    from .curation import write_jsonl

    root = cfg.path("data_dir")
    root.mkdir(parents=True, exist_ok=True)
    splits = {
        "train": training_scenes(cfg.n_train_clips, cfg.n_frames, seed=cfg.seed),
        "val": validation_scenes(cfg.n_val_clips, cfg.n_frames, seed_base=VALIDATION_SEED_BASE + cfg.seed),
    }
    records = []
    for split, scenes in splits.items():
        _fresh_dir(root / split)
        for i, spec in enumerate(scenes):
            vid = f"{split}_{i:04d}"
            clip = render_clip(spec, cfg.n_frames)
            write_clip(root / split / vid, clip)
            records.append({"video_id": vid, "split": split, "path": f"{split}/{vid}", "seed": cfg.seed,
                            "n_frames": cfg.n_frames, "fps": clip.fps, "scene": spec.to_dict()})
    write_jsonl(root / MANIFEST, records)
    log.info("wrote %d clips to %s", len(records), root)
    return EXIT_OK


# --------------------------------------------------------------------------- train

def cmd_train(cfg: ExperimentConfig) -> int:
    from .toy.model import save_checkpoint
    from .toy.train import TrainHyper, hyper_dict, train_toy

    _torch_setup()
    train = [read_clip(p) for _, p in _clips_for(cfg, "train")]
    val = [read_clip(p) for _, p in _clips_for(cfg, "val")]
    sched = cfg.schedule()
    hyper = TrainHyper(steps=cfg.train_steps, batch_size=cfg.batch_size, lr=cfg.lr, p_drop=cfg.p_drop,
                       target=cfg.loss_target, seed=cfg.seed, width=cfg.width)
    net, hist = train_toy(train, sched, hyper, val_clips=val)
    ckpt = cfg.path("checkpoint")
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    dataset_seed = _dataset(cfg)[0]["seed"]
    save_checkpoint(net, ckpt, {
        "version": __version__,
        "dataset_seed": dataset_seed,
        "schedule": sched.to_config(),
        "schedule_fingerprint": sched.training_fingerprint(),
        "hyper": hyper_dict(hyper),
        "n_train_clips": len(train),
        "validation": {"steps": hist.val_steps, "l1": hist.val_loss},
    })
    log.info("final validation L1 %.4f; checkpoint %s", hist.val_loss[-1], ckpt)
    return EXIT_OK


# --------------------------------------------------------------------------- animate

def cmd_animate(cfg: ExperimentConfig) -> int:
    from .sampler import generate_unbounded
    from .toy.codec import BlockCodec, MotionEncoder
    from .toy.suite import conditioning_for

    _torch_setup()
    denoiser, sched = _load_denoiser(cfg)
    clips = _clips_for(cfg, cfg.driving)
    fb = cfg.feedback()
    codec = BlockCodec()
    motion_enc = MotionEncoder(codec)
    out_root = cfg.path("output_dir") / cfg.method
    out_root.mkdir(parents=True, exist_ok=True)
    for vid, path in clips:
        driving = read_clip(path)
        n = cfg.frames or len(driving)
        cond = conditioning_for(driving.frames[0], driving, motion_enc)
        stream = (cond.motion[j] for j in _pingpong(n, len(driving)))
        frame_dir = _fresh_dir(out_root / vid)
        z0_dump = np.lib.format.open_memmap(out_root / f"{vid}.z0.npy", mode="w+", dtype=np.float32,
                                            shape=(n,) + codec.latent_shape(driving.resolution))
        z_T = None

        def keep_anchor(sampler):
            nonlocal z_T
            if z_T is None:
                z_T = np.array(sampler.z_T if sampler.z_T is not None else np.nan, dtype=np.float32)

        for k, z0 in enumerate(generate_unbounded(denoiser, stream, sched, fb, cond.appearance, probe=keep_anchor)):
            z0_dump[k] = z0
            write_frame(frame_dir, k, codec.decode(z0))
        z0_dump.flush()
        del z0_dump
        np.save(out_root / f"{vid}.zT.npy", z_T)
        _dump_json(out_root / f"{vid}.run.json", {
            "video_id": vid, "driving": str(path), "checkpoint": str(cfg.checkpoint), "seed": fb.seed,
            "beta": fb.beta, "noise_mode": fb.noise_mode.value, "cfg_scale": fb.cfg_scale,
            "ddim_steps": sched.ddim_count, "schedule_fingerprint": sched.fingerprint(), "n_frames": n,
            "version": __version__,
        })
        log.info("%s: %d frames -> %s", vid, n, frame_dir)
    return EXIT_OK


# --------------------------------------------------------------------------- evaluate

BUILTIN = ("tje", "psnr_float", "psnr_int", "ssim")


def _mean(values: Sequence[float]) -> float:
    vals = list(values)
    if any(math.isinf(v) for v in vals):
        return math.inf
    return float(np.mean(vals))


def _aggregate(rows: list[MetricRow]) -> list[MetricRow]:
    groups: dict = defaultdict(list)
    for r in rows:
        if isinstance(r.value, str):
            continue
        groups[(r.method, r.metric, r.delta)].append(r)
    out = []
    for (method, metric, delta), rs in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2] or 0)):
        fracs = [r.detection_fraction for r in rs if r.detection_fraction is not None]
        out.append(MetricRow(AGGREGATE_ID, method, metric, _mean(r.value for r in rs), delta,
                             float(np.mean(fracs)) if fracs else None))
    return out


def evaluate_dirs(real_dirs: dict[str, Path], gen_root: Path, metrics: Sequence[str], deltas: Sequence[int]
                  ) -> tuple[list[MetricRow], list[str]]:
    """Per-video rows for every method directory under ``gen_root`` plus aggregates, and an error list."""
    methods = sorted(p.name for p in gen_root.iterdir() if p.is_dir()) if gen_root.is_dir() else []
    errors = [] if methods else [f"no method directories under {gen_root}"]
    rows: list[MetricRow] = []
    for vid in sorted(real_dirs):
        real = read_clip(real_dirs[vid])
        gens = {}
        for m in methods:
            d = gen_root / m / vid
            if not d.is_dir():
                errors.append(f"missing generated video: {m}/{vid}")
                continue
            gens[m] = read_clip(d)
        if not gens:
            continue
        n = min([len(real)] + [len(g) for g in gens.values()])
        real = VideoClip(real.frames[:n], real.fps)
        gens = {m: VideoClip(g.frames[:n], g.fps) for m, g in gens.items()}
        regions = [name[4:] for name in metrics if name.startswith("akd_")]
        kps = {m: toy_keypoints(g) for m, g in gens.items()}
        real_kp = toy_keypoints(real)
        masks = {reg: joint_validity([real_kp, *kps.values()], reg) for reg in regions if reg == "torso"}
        for m, gen in gens.items():
            for name in metrics:
                if name == "tje":
                    rows += [MetricRow(vid, m, "tje", tje(real, gen, d).mean_error, int(d)) for d in deltas if d < n]
                elif name == "psnr_float":
                    rows.append(MetricRow(vid, m, name, clip_mean(psnr_float, real, gen)))
                elif name == "psnr_int":
                    rows.append(MetricRow(vid, m, name, clip_mean(psnr_int, real, gen)))
                elif name == "ssim":
                    rows.append(MetricRow(vid, m, name, clip_mean(ssim, real, gen)))
                elif name.startswith("akd_"):
                    region = name[4:]
                    if region not in masks:
                        continue  # reported as unsupported below
                    raw, frac = akd(real_kp, kps[m], region, masks[region])
                    rows.append(MetricRow(vid, m, name, raw, None, frac))
                    rows.append(MetricRow(vid, m, name + "_adjusted", akd_adjust(raw, frac), None, frac))
    rows += _aggregate(rows)
    for m in methods:
        for name in metrics:
            if name in BUILTIN or name == "akd_torso":
                continue
            if name.startswith("akd_"):
                rows.append(MetricRow(AGGREGATE_ID, m, name, "unsupported"))
                errors.append(f"{name}: the toy keypoint extractor only provides the torso region")
                continue
            try:
                vals = [external_score(name, real_dirs[v], gen_root / m / v) for v in sorted(real_dirs)
                        if (gen_root / m / v).is_dir()]
                rows.append(MetricRow(AGGREGATE_ID, m, name, float(np.mean(vals))))
            except UnsupportedMetricError as exc:
                rows.append(MetricRow(AGGREGATE_ID, m, name, "unsupported"))
                errors.append(str(exc))
            except ValueError as exc:
                rows.append(MetricRow(AGGREGATE_ID, m, name, "error"))
                errors.append(str(exc))
    return rows, errors


def cmd_evaluate(cfg: ExperimentConfig, report: Path | None = None, plot: bool = False) -> int:
    real_dirs = dict(_clips_for(cfg, cfg.driving))
    gen_root = cfg.path("output_dir")
    rows, errors = evaluate_dirs(real_dirs, gen_root, cfg.metrics, [int(d) for d in cfg.deltas])
    report = report or gen_root.parent / f"{gen_root.name}_report.csv"
    report.parent.mkdir(parents=True, exist_ok=True)
    report.write_text(rows_to_csv(rows))
    err_path = report.with_suffix(".errors.txt")
    if errors:
        err_path.write_text("".join(f"{e}\n" for e in errors))
        for e in errors:
            log.error("%s", e)
    elif err_path.exists():
        err_path.unlink()
    if plot:
        plot_report(report, report.with_suffix(".png"))
    log.info("report: %s (%d rows)", report, len(rows))
    if any(e.startswith("missing generated") or e.startswith("no method") for e in errors):
        return EXIT_MISSING
    return EXIT_INCOMPLETE if errors else EXIT_OK


# --------------------------------------------------------------------------- plot

def plot_report(report: Path, out: Path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    curves: dict = defaultdict(list)
    for r in read_csv_rows(report):
        if r["metric"] == "tje" and r["video_id"] == AGGREGATE_ID:
            curves[r["method"]].append((int(r["delta"]), float(r["value"])))
    if not curves:
        raise MissingInput(f"no aggregate TJE rows in {report}")
    fig, ax = plt.subplots(figsize=(4.5, 3.2), dpi=120)
    for method in sorted(curves):
        pts = sorted(curves[method])
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=method)
    ax.set_xlabel("frame offset Δ")
    ax.set_ylabel("TJE (0-255 scale)")
    ax.set_xticks(sorted({p[0] for c in curves.values() for p in c}))
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, format="png", metadata={"Software": None})
    plt.close(fig)
    return out


def cmd_plot(cfg: ExperimentConfig, report: Path | None = None, out: Path | None = None) -> int:
    gen_root = cfg.path("output_dir")
    report = _require(report or gen_root.parent / f"{gen_root.name}_report.csv", "report CSV")
    out = out or report.with_suffix(".png")
    plot_report(report, out)
    log.info("plot: %s", out)
    return EXIT_OK


# --------------------------------------------------------------------------- sweep-beta

def select_beta(table: Sequence[tuple[float, float]]) -> float:
    """Argmin of the objective; exact ties go to the smaller β."""
    if not table:
        raise ConfigError("beta grid is empty")
    return min(table, key=lambda row: (row[1], row[0]))[0]


def _objective(name: str, real: Sequence[VideoClip], gen: Sequence[VideoClip], deltas: Sequence[int]) -> float:
    if name == "tje":
        return float(np.mean([[tje(r, g, d).mean_error for d in deltas] for r, g in zip(real, gen)]))
    fn = {"psnr_float": psnr_float, "ssim": ssim}[name]
    # higher is better for these, so minimize the negative
    return -_mean(clip_mean(fn, r, g) for r, g in zip(real, gen))


def cmd_sweep_beta(cfg: ExperimentConfig) -> int:
    from .toy.suite import animate_batch

    _torch_setup()
    if not cfg.beta_grid:
        raise ConfigError("beta grid is empty")
    denoiser, sched = _load_denoiser(cfg)
    real = [read_clip(p) for _, p in _clips_for(cfg, "val")]
    if len(real) < 2:
        raise MissingInput("the sweep needs at least 2 validation clips")
    deltas = [int(d) for d in cfg.deltas]
    lines = ["beta,objective," + ",".join(f"tje_d{d}" for d in deltas)]
    table = []
    for beta in sorted(float(b) for b in cfg.beta_grid):
        gen = animate_batch(denoiser, real, sched, cfg.feedback(beta))
        obj = _objective(cfg.sweep_objective, real, gen, deltas)
        curve = [float(np.mean([tje(r, g, d).mean_error for r, g in zip(real, gen)])) for d in deltas]
        table.append((beta, obj))
        lines.append(",".join([repr(beta), repr(obj)] + [repr(c) for c in curve]))
        log.info("beta=%g objective=%.4f", beta, obj)
    chosen = select_beta(table)
    out = cfg.path("output_dir")
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text("\n".join(lines) + "\n")
    _dump_json(out / "sweep.json", {"objective": cfg.sweep_objective, "deltas": deltas,
                                   "grid": [b for b, _ in table], "selected_beta": chosen,
                                   "noise_mode": cfg.noise_mode, "seed": cfg.seed,
                                   "n_videos": len(real)})
    print(f"selected beta {chosen:g}")
    return EXIT_OK


# --------------------------------------------------------------------------- curate

class StageError(Exception):
    def __init__(self, stage: str, exc: Exception):
        self.stage = stage
        super().__init__(f"curation stage '{stage}' failed: {exc}")


def synthetic_corpus(cfg: ExperimentConfig) -> list:
    """Seeded fixture corpus: several videos per identity, some unusable by construction."""
    from .curation import SyntheticVideo

    rng = np.random.default_rng(cfg.seed)
    genders = ("female", "male")
    ages = ("18-24", "25-34", "35-44", "45-54", "55+")
    expressions = ("neutral", "smiling", "talking")
    videos = []
    for ident in range(cfg.curate_identities):
        gender, age = genders[ident % 2], ages[int(rng.integers(len(ages)))]
        for j in range(int(rng.integers(1, cfg.curate_max_videos + 1))):
            n = int(rng.integers(60, 400))
            side = float(rng.choice([300.0, 700.0, 900.0], p=[0.15, 0.7, 0.15]))
            x0, y0 = float(rng.uniform(0, 1920 - side)), float(rng.uniform(0, 1080 - min(side, 1080)))
            fails = sorted(int(i) for i in rng.choice(n, size=int(rng.integers(0, 4)), replace=False))
            videos.append(SyntheticVideo(
                video_id=f"vid_{ident:03d}_{j}", identity=ident, n_frames=n,
                yaw_deg=float(rng.normal(0, 20)), frame_size=(1920, 1080),
                body_box=(x0, y0, x0 + side, y0 + min(side, 1080.0)), pose_fail=fails,
                gender=gender, age=age, expression=str(rng.choice(expressions)),
            ))
    return videos


def cmd_curate(cfg: ExperimentConfig) -> int:
    from .curation import (
        IdentityRecord, SyntheticEmbedder, YawFilter, assign_clips, cluster_identities, demographic_report,
        segment_clips, split_identities, validate_crop, write_jsonl,
    )

    def stage(name, fn, *args, **kw):
        try:
            return fn(*args, **kw)
        except Exception as exc:  # noqa: BLE001 - relabel with the stage name
            raise StageError(name, exc) from exc

    out = _fresh_dir(cfg.path("output_dir") / "curation")
    videos = synthetic_corpus(cfg)
    yaw = YawFilter(cfg.curate_max_yaw)
    status = {}
    kept = []
    for v in videos:
        if not yaw.front_facing(v):
            status[v.video_id] = "rejected:not_front_facing"
            continue
        dec = stage("crop", validate_crop, v.frame_size, v.body_box, cfg.curate_crop)
        if not dec.accept:
            status[v.video_id] = f"rejected:{dec.reason}"
            continue
        kept.append(v)
    embedder = SyntheticEmbedder(seed=cfg.seed)
    records = [IdentityRecord(v.video_id, embedder.embed_video(v)) for v in kept]
    np.savez(out / "embeddings.npz", video_ids=np.array([r.video_id for r in records]),
             embeddings=np.stack([r.embedding for r in records]) if records else np.zeros((0, embedder.dim)))
    clustering = stage("cluster", cluster_identities, records, cfg.curate_threshold, cfg.curate_spectral)
    by_id = {v.video_id: v for v in kept}
    reps = set(clustering.representatives.values())
    for v in kept:
        status[v.video_id] = "kept" if v.video_id in reps else "rejected:duplicate_identity"
    clips = []
    for vid in sorted(reps):
        v = by_id[vid]
        clips += stage("segment", segment_clips, v.n_frames, cfg.curate_clip_len, v.pose_valid(), vid)
    split = stage("split", split_identities, clustering.representatives.keys(), cfg.curate_train_frac, cfg.seed)
    train, test = assign_clips(clips, clustering, split)
    retained = [by_id[v] for v in sorted(reps)]
    demo = {attr: stage("demographics", demographic_report, [getattr(v, attr) for v in retained])
            for attr in ("gender", "age", "expression")}

    write_jsonl(out / "videos.jsonl", [{"video_id": v.video_id, "status": status[v.video_id],
                                        "cluster_id": clustering.assignment.get(v.video_id)} for v in videos])
    write_jsonl(out / "clusters.jsonl", [{"cluster_id": c, "representative": rep,
                                          "members": sorted(k for k, a in clustering.assignment.items() if a == c),
                                          "split": split.side(c)}
                                         for c, rep in sorted(clustering.representatives.items())])
    write_jsonl(out / "clips.jsonl", [{**_clip_dict(c), "split": "train"} for c in train]
                + [{**_clip_dict(c), "split": "test"} for c in test])
    _dump_json(out / "split.json", {"train": split.train, "test": split.test, "seed": cfg.seed,
                                    "train_clips": len(train), "test_clips": len(test)})
    lines = ["attribute,label,fraction"]
    for attr, hist in demo.items():
        lines += [f"{attr},{label},{frac!r}" for label, frac in hist.items()]
    (out / "demographics.csv").write_text("\n".join(lines) + "\n")
    log.info("curation: %d videos, %d identities, %d train / %d test clips", len(videos),
             len(clustering.representatives), len(train), len(test))
    return EXIT_OK


def _clip_dict(c) -> dict:
    return {"video_id": c.video_id, "start_frame": c.start_frame, "length": c.length}


# --------------------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="clcgen", description="Closed-loop controlled diffusion animation toolkit.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", "-c", type=Path, help="YAML config file")
        sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("-v", "--verbose", action="store_true")
        return sp

    add("make-synth", "render the seeded synthetic dataset")
    add("train", "train the toy denoiser")
    sp = add("animate", "generate videos with closed-loop feedback")
    sp.add_argument("--beta", type=float)
    sp.add_argument("--frames", type=int, help="frames to generate; the driving motion loops when longer")
    sp.add_argument("--driving", help="split name (val/train), video id, or frame directory")
    sp = add("evaluate", "compute the metrics report")
    sp.add_argument("--report", type=Path)
    sp.add_argument("--plot", action="store_true")
    add("sweep-beta", "grid-search the feedback gain on the validation clips")
    add("curate", "run the curation pipeline on a synthetic fixture corpus")
    sp = add("plot", "render TJE-vs-offset curves from a report")
    sp.add_argument("--report", type=Path)
    sp.add_argument("--out", type=Path)
    return p


def _overrides(args) -> dict:
    ov = dict(parse_override(s) for s in args.overrides)
    for key in ("seed", "beta", "frames", "driving"):
        val = getattr(args, key, None)
        if val is not None:
            ov[key] = val
    return ov


def run(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args))
        cmd = args.command
        if cmd == "make-synth":
            return cmd_make_synth(cfg)
        if cmd == "train":
            return cmd_train(cfg)
        if cmd == "animate":
            return cmd_animate(cfg)
        if cmd == "evaluate":
            return cmd_evaluate(cfg, args.report, args.plot)
        if cmd == "sweep-beta":
            return cmd_sweep_beta(cfg)
        if cmd == "curate":
            return cmd_curate(cfg)
        return cmd_plot(cfg, args.report, args.out)
    except (MissingInput, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (ConfigError, ParameterError, ShapeError) as exc:
        # library argument errors here come from config values (deltas, frame counts, sizes)
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericDivergenceError, TrainingDivergenceError) as exc:
        print(f"numeric divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INCOMPLETE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
