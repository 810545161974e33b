"""``projsynth`` command line interface."""

import argparse
import json
import sys

from . import pipeline
from .datasets import export_downstream
from .errors import ProjSynthError
from .pipeline import RunConfig, load_image_dir


class _Parser(argparse.ArgumentParser):
    """Usage errors are reported on one line like every other failure."""

    def error(self, message):
        print(f"error[usage]: {' '.join(message.split())}", file=sys.stderr)
        sys.exit(2)


def _config(args):
    cfg = RunConfig.from_json(args.config) if getattr(args, "config", None) else RunConfig()
    keys = ["seed", "factor", "detectors", "steps", "eta"]
    if args.command != "export":
        keys.append("views")
    flags = {k: getattr(args, k, None) for k in keys}
    if getattr(args, "out", None) and args.command in ("train", "sample"):
        flags["out"] = args.out
    if getattr(args, "prompt", None) and args.command == "build-dataset":
        flags["prompts"] = args.prompt
    return cfg.override(**flags)


def _parser():
    p = _Parser(prog="projsynth", description="Prompt-conditioned sinogram synthesis toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help, config=True):
        sp = sub.add_parser(name, help=help)
        if config:
            sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        return sp

    sp = add("phantoms", "render procedural phantoms", config=False)
    sp.add_argument("--prompt", default="disks")
    sp.add_argument("--n", type=int, default=16)
    sp.add_argument("--size", type=int, default=64)

    sp = add("build-dataset", "project phantoms into a sinogram dataset")
    sp.add_argument("--prompt", action="append", help="phantom class (repeatable)")
    sp.add_argument("--views", type=int)
    sp.add_argument("--detectors", type=int)

    sp = add("train", "train autoencoder, diffusion model and SharpNet")
    sp.add_argument("--factor", type=int, choices=(4, 8))
    sp.add_argument("--views", type=int)
    sp.add_argument("--detectors", type=int)

    sp = add("sample", "generate sinograms and reconstructions for a prompt")
    sp.add_argument("--prompt", required=True)
    sp.add_argument("--n", type=int)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--eta", type=float)
    sp.add_argument("--skip-refine", action="store_true")
    sp.add_argument("--factor", type=int, choices=(4, 8))
    sp.add_argument("--views", type=int)
    sp.add_argument("--detectors", type=int)
    sp.add_argument("--samples-dir", help="output directory (default <out>/samples/<prompt>)")

    for name, a, b in (("evaluate", "--gen", "--ref"), ("metrics", "--real", "--gen")):
        sp = add(name, "compute FID / IS / KID and write a JSON report", config=False)
        sp.add_argument(a, required=True)
        sp.add_argument(b, required=True)
        sp.add_argument("--extractor", default="frozen-random-conv",
                        choices=("frozen-random-conv", "identity-flatten"))
        sp.add_argument("--kernel", default="polynomial", choices=("polynomial", "linear", "rbf"))
        sp.add_argument("--standard-mmd", action="store_true", help="also report the unbiased MMD^2")

    sp = add("export", "write degraded/clean pairs for downstream reconstruction")
    sp.add_argument("--input", required=True, help="directory of sinogram PROT files")
    sp.add_argument("--mode", required=True, choices=("sparse-view", "low-dose"))
    sp.add_argument("--views", type=int, help="views kept in sparse-view mode")
    sp.add_argument("--photons", type=float, default=5e4)
    sp.add_argument("--attenuation-scale", type=float, default=0.1)
    sp.add_argument("--detectors", type=int)
    return p


def _print_report(report):
    print(json.dumps(report, indent=2))


def run(args):
    cmd = args.command
    if cmd == "phantoms":
        images = pipeline.cmd_phantoms(args.prompt, args.n, args.out or "phantoms", args.size, args.seed or 0)
        print(f"wrote {len(images)} phantoms to {args.out or 'phantoms'}")
    elif cmd == "build-dataset":
        cfg = _config(args)
        index = pipeline.cmd_build_dataset(cfg, args.out)
        print(f"wrote {len(index['items'])} sinograms to {args.out or cfg.dataset}")
    elif cmd == "train":
        paths = pipeline.cmd_train(_config(args))
        for stage, path in paths.items():
            print(f"{stage}: {path}")
    elif cmd == "sample":
        out = pipeline.cmd_sample(_config(args), args.prompt, args.n, skip_refine=args.skip_refine,
                                  out_dir=args.samples_dir)
        print(f"wrote samples to {out}")
    elif cmd == "evaluate":
        _print_report(pipeline.cmd_evaluate(args.gen, args.ref, args.extractor, args.kernel, args.seed or 0,
                                            args.out, args.standard_mmd))
    elif cmd == "metrics":
        _print_report(pipeline.cmd_metrics(args.real, args.gen, args.extractor, args.kernel, args.seed or 0,
                                           args.out, args.standard_mmd))
    elif cmd == "export":
        cfg = _config(args)
        sinos = load_image_dir(args.input)
        index = export_downstream(sinos, cfg.geometry_obj(), args.out or "export", args.mode, views=args.views,
                                  photons=args.photons, seed=cfg.seed, attenuation_scale=args.attenuation_scale,
                                  image_shape=cfg.image_shape(), half_extent=cfg.half_extent)
        print(f"wrote {len(index['items'])} {args.mode} pairs to {args.out or 'export'}")
    return 0


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        return run(args)
    except ProjSynthError as exc:
        msg = exc
        code = exc.code
    except OSError as exc:
        msg, code = exc, "io"
    print(f"error[{code}]: {' '.join(str(msg).split())}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
