"""``shallownet`` command line: train, eval, predict, gradcam, bench."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, fields

import numpy as np
from threadpoolctl import threadpool_limits

from . import data, gradcam, metrics, nn
from ._accel import backend
from .errors import DataError, ShallowNetError
from .train import TrainConfig, benchmark_single_image, train, write_history_csv

log = logging.getLogger("shallownet")


@dataclass
class RunConfig:
    data: str = ""
    arch: str = "cnn3"
    epochs: int = 60
    batch: int = 32
    lr: float = 1e-3
    augment: bool = False
    seed: int = 0
    split: float = 0.8
    out: str = "run"
    threads: int = 1
    deterministic: bool = False
    rotation_max_deg: float = 20.0
    zoom_min: float = 0.9
    zoom_max: float = 1.1
    hflip_prob: float = 0.5
    vflip_prob: float = 0.5

    def augment_params(self):
        return data.AugmentParams(self.rotation_max_deg, (self.zoom_min, self.zoom_max),
                                  self.hflip_prob, self.vflip_prob)

    def train_config(self):
        return TrainConfig(epochs=self.epochs, batch_size=self.batch, learning_rate=self.lr,
                           augment=self.augment, augment_params=self.augment_params(),
                           seed=self.seed, threads=1 if self.deterministic else self.threads)


def _parse_bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def read_config(path) -> dict:
    """Parse a ``key = value`` file (``#`` comments, blank lines ignored)."""
    types = {f.name: f.type for f in fields(RunConfig)}
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in types:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            conv = {"bool": _parse_bool, "int": int, "float": float, "str": str}[types[key]]
            out[key] = conv(value)
    return out


def resolve_config(args) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(read_config(args.config))
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    return RunConfig(**values)


class Outputs:
    """Tracks written files so a failed command leaves nothing half-written."""

    def __init__(self, out_dir):
        self.dir = out_dir
        self.paths = []

    def path(self, name):
        p = os.path.join(self.dir, name)
        self.paths.append(p)
        return p

    def __enter__(self):
        os.makedirs(self.dir, exist_ok=True)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            for p in self.paths:
                if os.path.exists(p):
                    os.remove(p)
        return False


def _dump_json(obj, path):
    with open(path, "w") as fh:
        fh.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ------------------------------------------------------------------ commands

def cmd_train(cfg: RunConfig) -> int:
    manifest = data.split(data.ingest(cfg.data), cfg.split, cfg.seed)
    model = nn.build_model(cfg.arch, cfg.seed)
    tc = cfg.train_config()
    t0 = time.perf_counter()
    with threadpool_limits(limits=1 if cfg.deterministic else cfg.threads):
        model, history = train(manifest.train, model, tc)
    elapsed = time.perf_counter() - t0
    with Outputs(cfg.out) as out:
        nn.save_model(model, out.path("model.snet"))
        data.write_manifest_csv(manifest, out.path("manifest.csv"))
        write_history_csv(history, out.path("history.csv"), include_time=not cfg.deterministic)
        counts = {f"{k[0]}_{k[1]}": v for k, v in sorted(manifest.counts().items())}
        summary = {
            "config": asdict(cfg),
            "arch": cfg.arch,
            "seed": cfg.seed,
            "augment": cfg.augment,
            "counts": counts,
            "final_loss": history[-1].loss,
            "final_train_acc": history[-1].accuracy,
            "training_time_s": None if cfg.deterministic else elapsed,
        }
        _dump_json(summary, out.path("summary.json"))
    if cfg.deterministic:
        print(f"training time {elapsed:.2f}s (not recorded in deterministic mode)", file=sys.stderr)
    print(f"trained {cfg.arch} on {len(manifest.train)} images; artifacts in {cfg.out}")
    return 0


def evaluate_scores(scores, labels, out_dir, training_time_s=None, per_image_s=None, threshold=0.5):
    """Write metrics.json, table.csv, roc.csv and roc.svg for scored samples."""
    rep = metrics.report(metrics.confusion(scores, labels, threshold))
    labels = np.asarray(labels)
    curve = metrics.roc_curve(scores, labels) if 0 < labels.sum() < labels.size else None
    with Outputs(out_dir) as out:
        payload = rep.to_dict()
        payload["auc"] = curve.auc if curve is not None else None
        payload["threshold"] = threshold
        _dump_json(payload, out.path("metrics.json"))
        metrics.write_table_csv(out.path("table.csv"), [metrics.table_row(rep, training_time_s, per_image_s)])
        if curve is not None:
            metrics.write_roc_csv(curve, out.path("roc.csv"))
            metrics.write_roc_svg(curve, out.path("roc.svg"))
    return rep, curve


def cmd_eval(args, cfg: RunConfig) -> int:
    model = nn.load_model(args.checkpoint)
    manifest = data.read_manifest_csv(args.manifest)
    test = manifest.test
    if not test:
        raise DataError(f"{args.manifest} has no test-split samples")
    with threadpool_limits(limits=1 if cfg.deterministic else cfg.threads):
        images = data.load_images([s.path for s in test], threads=1 if cfg.deterministic else cfg.threads)
        scores = np.concatenate([nn.forward(model, images[i:i + 256])[0] for i in range(0, len(test), 256)])
    labels = np.array([s.label for s in test])
    training_time = per_image = None
    if not cfg.deterministic:
        summary = os.path.join(os.path.dirname(os.path.abspath(args.checkpoint)), "summary.json")
        if os.path.exists(summary):
            with open(summary) as fh:
                training_time = json.load(fh).get("training_time_s")
        with threadpool_limits(limits=1):
            per_image = benchmark_single_image(model, images[:1], warmup=5, iters=30).mean
    rep, curve = evaluate_scores(scores, labels, cfg.out, training_time, per_image)
    auc_text = f", AUC {curve.auc:.4f}" if curve is not None else ""
    print(f"accuracy {100 * rep.accuracy:.2f}% on {len(test)} test images{auc_text}")
    return 0


def cmd_predict(args) -> int:
    model = nn.load_model(args.checkpoint)
    for path in args.images:
        score = float(nn.forward(model, data.load_image(path))[0][0])
        label = "parasitized" if score >= 0.5 else "uninfected"
        print(json.dumps({"path": path, "label": label, "probability": score}, sort_keys=True))
    return 0


def cmd_gradcam(args, cfg: RunConfig) -> int:
    model = nn.load_model(args.checkpoint)
    with Outputs(cfg.out) as out:
        for path in args.images:
            image = data.load_image(path)
            heat = gradcam.gradcam(model, image, target=args.target)
            stem = os.path.splitext(os.path.basename(path))[0]
            out.path(f"{stem}_cam.png")
            out.path(f"{stem}_cam.csv")
            gradcam.write_outputs(heat, image, out.dir, stem, alpha=args.alpha)
            if heat.degenerate:
                log.warning("%s: all-zero class activation map", path)
    print(f"wrote {2 * len(args.images)} files to {cfg.out}")
    return 0


def cmd_bench(args, cfg: RunConfig) -> int:
    model = nn.load_model(args.checkpoint)
    if args.image:
        image = data.load_image(args.image)
    else:
        image = np.random.default_rng(cfg.seed).random((1,) + nn.INPUT_SHAPE).astype(np.float32)
    with threadpool_limits(limits=1):
        stats = benchmark_single_image(model, image, warmup=args.warmup, iters=args.iters)
    d = stats.to_dict()
    d["arch"] = model.spec.arch_id
    d["backend"] = backend()
    print(json.dumps(d, sort_keys=True))
    return 0


# -------------------------------------------------------------------- parser

def _add_common(p):
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--threads", type=int)
    p.add_argument("--deterministic", action="store_true", default=None,
                   help="single-threaded numerics and no wall-clock values in artifacts")


def build_parser():
    parser = argparse.ArgumentParser(prog="shallownet", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on a Parasitized/Uninfected directory")
    _add_common(p)
    p.add_argument("--data")
    p.add_argument("--arch", choices=sorted(nn.ARCHITECTURES))
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--augment", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--split", type=float)

    p = sub.add_parser("eval", help="score the test split and write metric reports")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)

    p = sub.add_parser("predict", help="classify images, one JSON line each")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("images", nargs="+")

    p = sub.add_parser("gradcam", help="write Grad-CAM overlays and raw maps")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--target", choices=["parasitized", "uninfected"], default="parasitized")
    p.add_argument("--alpha", type=float, default=0.4)
    p.add_argument("images", nargs="+")

    p = sub.add_parser("bench", help="single-image forward latency")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image")
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--warmup", type=int, default=20)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "predict":
            return cmd_predict(args)
        cfg = resolve_config(args)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval":
            return cmd_eval(args, cfg)
        if args.command == "gradcam":
            return cmd_gradcam(args, cfg)
        return cmd_bench(args, cfg)
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ShallowNetError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
