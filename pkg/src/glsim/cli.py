"""Command-line interface.

Exit codes: 0 success, 1 usage/config error, 2 data or decode error,
3 numeric error.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from glsim import cost_model, weights_io
from glsim.aggregator import confidence_select, glsim_forward, select_crop
from glsim.config import PRESETS, ArchConfig, preset
from glsim.cropper import crop_resize, PixelRect
from glsim.dfsm import SALIENCY_METHODS, saliency
from glsim.encoder import WeightSet, encode, init_weights
from glsim.errors import GLSimError, InvalidConfigError
from glsim.imageio import denormalize, encode_pgm, encode_ppm, heatmap_pixels, read_image

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
SIG_DIGITS = 9


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass(frozen=True)
class RunConfig:
    arch: ArchConfig
    weights_path: str | None
    init_seed: int | None
    metric: str
    top_o: int

    def __post_init__(self):
        if (self.weights_path is None) == (self.init_seed is None):
            raise InvalidConfigError("give exactly one of --weights or --init-seed")
        if self.top_o < 1:
            raise InvalidConfigError(f"--top-o must be >= 1, got {self.top_o}")

    def load_weights(self) -> WeightSet:
        if self.weights_path is not None:
            return weights_io.load(self.weights_path)
        return init_weights(self.init_seed, self.arch)


def _num(x) -> float:
    return float(f"{float(x):.{SIG_DIGITS}g}")


def _nums(values) -> list[float]:
    return [_num(v) for v in np.asarray(values).ravel()]


# --- argument groups --------------------------------------------------------

def _add_arch_args(p: argparse.ArgumentParser):
    g = p.add_argument_group("architecture")
    g.add_argument("--arch", default="B-16", help=f"preset ({', '.join(PRESETS)}) or 'custom'")
    g.add_argument("--config", help="JSON file with ArchConfig fields (overrides --arch)")
    g.add_argument("--image-size", type=int, help="square input side in pixels")
    g.add_argument("--patch", type=int)
    g.add_argument("--stride", type=int)
    g.add_argument("--depth", type=int)
    g.add_argument("--heads", type=int)
    g.add_argument("--width", type=int)
    g.add_argument("--num-classes", type=int)
    g.add_argument("--top-o", type=int, help="tokens enclosed by the crop (default: preset value, scaled with image size)")


def _add_model_args(p: argparse.ArgumentParser):
    _add_arch_args(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--weights", help="weight container file")
    src.add_argument("--init-seed", type=int, help="initialise weights from this seed")


def arch_from_args(args) -> ArchConfig:
    overrides = {
        "patch_size": args.patch, "stride": args.stride, "depth": args.depth,
        "heads": args.heads, "width": args.width, "num_classes": args.num_classes,
    }
    if args.config:
        base = ArchConfig.from_dict(json.loads(Path(args.config).read_text()))
        if args.image_size:
            base = base.replace(image_w=args.image_size, image_h=args.image_size)
    elif args.arch == "custom":
        missing = [k for k in ("patch", "depth", "heads", "width") if getattr(args, k) is None]
        if missing:
            raise InvalidConfigError(f"--arch custom needs --{' --'.join(missing)}")
        size = args.image_size or 224
        base = ArchConfig(
            patch_size=args.patch, depth=args.depth, heads=args.heads, width=args.width,
            image_w=size, image_h=size, num_classes=args.num_classes or 1000,
            top_o=args.top_o or 1, stride=args.stride,
        )
    else:
        base = preset(args.arch, args.image_size)
    changes = {k: v for k, v in overrides.items() if v is not None}
    if changes.get("patch_size") is not None and changes.get("stride") is None:
        changes["stride"] = changes["patch_size"]
    if args.top_o is not None:
        changes["top_o"] = args.top_o
    return base.replace(**changes) if changes else base


def run_config_from_args(args) -> RunConfig:
    arch = arch_from_args(args) if args.weights is None else None
    if arch is None:
        arch = weights_io.load(args.weights).config
        if args.top_o is not None:
            arch = arch.replace(top_o=args.top_o)
    return RunConfig(
        arch=arch,
        weights_path=args.weights,
        init_seed=args.init_seed,
        metric=getattr(args, "metric", "cosine"),
        top_o=arch.top_o,
    )


def _load_input(path, config: ArchConfig) -> np.ndarray:
    img = read_image(path)
    h, w = img.shape[:2]
    if (w, h) != (config.image_w, config.image_h):
        img = crop_resize(img, PixelRect(0, 0, w, h), config.image_w, config.image_h)
    return img


def _write_or_print(text: str, path: str | None):
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


# --- commands ---------------------------------------------------------------

def cmd_init_weights(args) -> int:
    config = arch_from_args(args)
    weights_io.save(init_weights(args.seed, config), args.output)
    print(json.dumps({"output": args.output, "config": config.to_dict()}))
    return EXIT_OK


def cmd_saliency(args) -> int:
    rc = run_config_from_args(args)
    weights = rc.load_weights()
    img = _load_input(args.input, rc.arch)
    feats, attn = encode(img, rc.arch, weights, cls_variant=0)
    sal = saliency(args.metric, feats, attn)
    upsample = (rc.arch.image_w, rc.arch.image_h) if args.upsample else None
    px = heatmap_pixels(sal.scores, rc.arch.grid, upsample)
    Path(args.heatmap).write_bytes(encode_pgm(px))
    payload = json.dumps(_nums(sal.scores)) + "\n"
    _write_or_print(payload, args.scores)
    return EXIT_OK


def classify_one(path, rc: RunConfig, weights: WeightSet, mode: str, crop_mode: str, seed: int) -> dict:
    img = _load_input(path, rc.arch)
    res = glsim_forward(img, weights, rc.metric, rc.top_o, crop_mode=crop_mode, seed=seed)
    if mode == "confidence-select":
        cls, source, prob = confidence_select(res.logits_orig, res.logits_crop)
        branch = "original" if source == "a" else "crop"
    else:
        z = res.logits - res.logits.max()
        p = np.exp(z) / np.exp(z).sum()
        cls, prob, branch = int(np.argmax(p)), float(p.max()), "aggregate"
    return {
        "input": str(path),
        "class": cls,
        "prob": _num(prob),
        "branch": branch,
        "branch_logits": {
            "aggregate": _nums(res.logits),
            "original": _nums(res.logits_orig),
            "crop": _nums(res.logits_crop),
        },
        "crop_rect": res.rect.as_list(),
        "saliency_top_o": [int(i) for i in res.indices],
    }


def cmd_classify(args) -> int:
    rc = run_config_from_args(args)
    weights = rc.load_weights()

    def job(path):
        return classify_one(path, rc, weights, args.mode, args.crop_mode, args.seed)

    if args.jobs > 1 and len(args.input) > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(job, args.input))
    else:
        results = [job(p) for p in args.input]
    out = results[0] if len(results) == 1 else results
    _write_or_print(json.dumps(out, indent=2) + "\n", args.output)
    return EXIT_OK


def cmd_crop(args) -> int:
    rc = run_config_from_args(args)
    weights = rc.load_weights()
    img = _load_input(args.input, rc.arch)
    feats, attn = encode(img, rc.arch, weights, cls_variant=0)
    sal = saliency(rc.metric, feats, attn)
    idx, rect = select_crop(sal, rc.arch, rc.top_o, args.crop_mode, args.seed)
    crop = crop_resize(img, rect, rc.arch.image_w, rc.arch.image_h)
    Path(args.output).write_bytes(encode_ppm(denormalize(crop)))
    print(json.dumps({"crop_rect": rect.as_list(), "saliency_top_o": [int(i) for i in idx]}))
    return EXIT_OK


def cmd_cost_table(args) -> int:
    archs = []
    for name in args.arch or list(cost_model.PAPER_ARCHS):
        if name == "custom":
            missing = [k for k in ("patch", "depth", "heads", "width") if getattr(args, k) is None]
            if missing:
                raise InvalidConfigError(f"--arch custom needs --{' --'.join(missing)}")
            archs.append(cost_model.Arch("custom", args.patch, args.depth, args.heads, args.width))
        else:
            archs.append(cost_model.get_arch(name))
    sizes = args.image_size or list(cost_model.PAPER_SIZES)
    report = cost_model.cost_table(archs, sizes)
    if args.format == "csv":
        text = report.to_csv()
    elif args.format == "json":
        text = report.to_json() + "\n"
    else:
        text = report.to_text()
    _write_or_print(text, None)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="glsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("init-weights", help="write a seeded weight container")
    _add_arch_args(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_init_weights)

    p = sub.add_parser("saliency", help="PGM heatmap and JSON scores for one image")
    _add_model_args(p)
    p.add_argument("--input", required=True, help="PPM (P6) image")
    p.add_argument("--metric", choices=SALIENCY_METHODS, default="cosine")
    p.add_argument("--heatmap", required=True, help="output PGM path")
    p.add_argument("--scores", help="output JSON path (default: stdout)")
    p.add_argument("--upsample", action="store_true", help="heatmap at image resolution")
    p.set_defaults(func=cmd_saliency)

    p = sub.add_parser("classify", help="run the full two-pass model")
    _add_model_args(p)
    p.add_argument("--input", required=True, nargs="+", help="PPM (P6) images")
    p.add_argument("--metric", choices=SALIENCY_METHODS, default="cosine")
    p.add_argument("--mode", choices=("aggregate", "confidence-select"), default="aggregate")
    p.add_argument("--crop-mode", choices=("gls", "random"), default="gls")
    p.add_argument("--seed", type=int, default=0, help="seed for --crop-mode random")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--output", help="JSON path (default: stdout)")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("crop", help="write the selected crop as PPM")
    _add_model_args(p)
    p.add_argument("--input", required=True)
    p.add_argument("--metric", choices=SALIENCY_METHODS, default="cosine")
    p.add_argument("--crop-mode", choices=("gls", "random"), default="gls")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_crop)

    p = sub.add_parser("cost-table", help="FLOPs of selection mechanisms vs. the backbone")
    p.add_argument("--arch", action="append", help="B-16, B-14, T-16 or custom (repeatable)")
    p.add_argument("--image-size", type=int, action="append", help="repeatable")
    p.add_argument("--patch", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--heads", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--format", choices=("text", "csv", "json"), default="text")
    p.set_defaults(func=cmd_cost_table)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "jobs", 1) < 1:
            parser.error("--jobs must be >= 1")
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except GLSimError as exc:
        print(f"glsim: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"glsim: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
