"""Command-line entry point.

Every command is a pure function of (config file, seed, input files).
Latent files end in ``.lat``; anything else is treated as an image (PPM, or
PNG when Pillow is installed). Failures print ``error: <category>: <message>``
on one line and exit 1; usage errors exit 2.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from . import metrics
from .config import RunConfig, load_config
from .errors import ConfigError, MorphLabError
from .generator import Generator
from .io import (load_checkpoint, load_latent, read_demorph_trials, read_image,
                 read_morph_trials, read_scores, save_checkpoint, save_latent, write_image)
from .morph import demorph_latents, morph_latents

LATENT_SUFFIX = ".lat"


def _is_latent(path: str) -> bool:
    return path.lower().endswith(LATENT_SUFFIX)


def _generator(cfg: RunConfig) -> Generator:
    gcfg = cfg.generator_config()
    if not cfg.checkpoint:
        return Generator(gcfg)
    params = load_checkpoint(cfg.checkpoint)
    # smoke-train archives also carry the discriminator
    return Generator(gcfg, {k: v for k, v in params.items() if not k.startswith("d.")})


def _render_noise(cfg: RunConfig, gen: Generator):
    return gen.noise(cfg.seed if cfg.morph_noise_seed is None else cfg.morph_noise_seed)


def _write_output(latent, path: str, cfg: RunConfig, gen: Generator) -> None:
    if _is_latent(path):
        save_latent(latent, path)
    else:
        write_image(gen.generate(latent, _render_noise(cfg, gen), cfg.space), path)


def _embed(path: str, cfg: RunConfig, gen: Generator):
    """Latent for ``path``: read directly, or invert the image."""
    from .embedding import embed_image

    if _is_latent(path):
        return load_latent(path), None
    image = read_image(path, cfg.target_resolution)
    result = embed_image(image, gen, cfg.optimization(), cfg.face_loss())
    return result.latent, result


def cmd_gen(args, cfg: RunConfig) -> None:
    gen = _generator(cfg)
    latent = load_latent(args.latent) if args.latent else gen.random_latent(cfg.seed)
    _write_output(latent, args.out, cfg, gen)


def cmd_embed(args, cfg: RunConfig) -> None:
    gen = _generator(cfg)
    latent, result = _embed(args.image, cfg, gen)
    save_latent(latent, args.out)
    if args.trace:
        with open(args.trace, "w", encoding="ascii", newline="\n") as fh:
            fh.write(result.trace_table())
    print(f"best_loss {result.best_loss!r} best_step {result.best_step}")


def cmd_morph(args, cfg: RunConfig) -> None:
    gen = _generator(cfg)
    z1, _ = _embed(args.first, cfg, gen)
    z2 = z1 if args.second == args.first else _embed(args.second, cfg, gen)[0]
    _write_output(morph_latents(z1, z2, cfg.lam), args.out, cfg, gen)


def cmd_demorph(args, cfg: RunConfig) -> None:
    gen = _generator(cfg)
    zm, _ = _embed(args.morph, cfg, gen)
    z1, _ = _embed(args.reference, cfg, gen)
    _write_output(demorph_latents(zm, z1, cfg.lam), args.out, cfg, gen)


def _threshold(args, cfg: RunConfig) -> float:
    if args.threshold is not None:
        return args.threshold
    if args.non_mated:
        return metrics.fmr_threshold([s for _, s in read_scores(args.non_mated)], cfg.target_fmr)
    raise ConfigError("either --threshold or --non-mated is required")


def _emit(lines, out: str | None) -> None:
    text = "".join(line + "\n" for line in lines)
    if out:
        with open(out, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
    sys.stdout.write(text)


def cmd_eval_mmpmr(args, cfg: RunConfig) -> None:
    tau = _threshold(args, cfg)
    rate = metrics.mmpmr(read_morph_trials(args.trials), tau)
    _emit([f"threshold {tau!r}", f"mmpmr {metrics.format_percent(rate)}"], args.out)


def cmd_eval_mad(args, cfg: RunConfig) -> None:
    attack = [s for _, s in read_scores(args.attack)]
    bonafide = [s for _, s in read_scores(args.bonafide)]
    r = metrics.detection_report(attack, bonafide, args.threshold)
    pct = metrics.format_percent
    _emit([f"threshold {r.threshold!r}", f"apcer {pct(r.apcer)}", f"bpcer {pct(r.bpcer)}",
           f"acer {pct(r.acer)}", f"accuracy {pct(r.accuracy)}", f"d_eer {pct(r.d_eer)}",
           f"d_eer_threshold {r.d_eer_threshold!r}"], args.out)


def cmd_eval_demorph(args, cfg: RunConfig) -> None:
    tau = _threshold(args, cfg)
    rate = metrics.demorph_accuracy(read_demorph_trials(args.trials), tau)
    _emit([f"threshold {tau!r}", f"demorph_accuracy {metrics.format_percent(rate)}"], args.out)


def cmd_smoke_train(args, cfg: RunConfig) -> None:
    from .training import gan_smoke_train, procedural_faces

    gcfg = cfg.generator_config()
    dataset = procedural_faces(64, gcfg.target_resolution, seed=cfg.seed)
    steps = 50 if args.steps is None else args.steps
    result = gan_smoke_train(gcfg, dataset, steps, batch=cfg.train_batch, lr=cfg.train_lr,
                             seed=cfg.seed)
    if args.out:
        save_checkpoint({**result.generator_params, **result.discriminator_params}, args.out)
    if args.trace:
        with open(args.trace, "w", encoding="ascii", newline="\n") as fh:
            fh.write(result.trace_table())
    print(f"final_real {result.final_real!r} final_fake {result.final_fake!r}")


def cmd_selftest(args, cfg: RunConfig) -> int:
    from .selftest import run_selftest

    failed = 0
    for name, ok, detail in run_selftest():
        print(f"{'ok' if ok else 'FAIL'} {name}: {detail}")
        failed += not ok
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value run configuration")
    common.add_argument("--seed", type=int, help="overrides the config and MORPHLAB_SEED")
    common.add_argument("--lambda", dest="lam", type=float, help="morph weight (default 0.5)")
    common.add_argument("--steps", type=int, help="optimization or training steps")
    common.add_argument("--out", help="output path")

    parser = argparse.ArgumentParser(prog="morphlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, func, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(func=func)
        return p

    p = add("gen", cmd_gen, "render a latent (or a seeded random one)")
    p.add_argument("latent", nargs="?")
    p = add("embed", cmd_embed, "invert an image to a latent")
    p.add_argument("image")
    p.add_argument("--trace", help="write the per-step loss trace as CSV")
    p = add("morph", cmd_morph, "morph two images or latents")
    p.add_argument("first")
    p.add_argument("second")
    p = add("demorph", cmd_demorph, "restore the second contributor of a morph")
    p.add_argument("morph")
    p.add_argument("reference")
    for name, func, help_text in (("eval-mmpmr", cmd_eval_mmpmr, "MMPMR of morph trials"),
                                  ("eval-demorph", cmd_eval_demorph, "demorphing accuracy")):
        p = add(name, func, help_text)
        p.add_argument("trials")
        p.add_argument("--threshold", type=float)
        p.add_argument("--non-mated", help="derive the threshold at the target FMR")
    p = add("eval-mad", cmd_eval_mad, "morph attack detection error rates")
    p.add_argument("attack")
    p.add_argument("bonafide")
    p.add_argument("--threshold", type=float, default=0.5)
    p = add("smoke-train", cmd_smoke_train, "short adversarial run on procedural faces")
    p.add_argument("--trace", help="write the per-step loss trace as CSV")
    add("selftest", cmd_selftest, "quick gradient and oracle checks")
    return parser


def _fail(category: str, exc: Exception) -> int:
    message = " ".join(str(exc).split())
    print(f"error: {category}: {message}", file=sys.stderr)
    return 1


_REQUIRES_OUT = {"gen", "embed", "morph", "demorph"}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command in _REQUIRES_OUT and not args.out:
        parser.error(f"{args.command} requires --out")
    try:
        cfg = load_config(args.config, args.seed)
        if args.lam is not None:
            cfg = replace(cfg, lam=args.lam)
        if args.steps is not None and args.command != "smoke-train":
            cfg = replace(cfg, steps=args.steps)
        cfg.morph_spec()  # validates lambda
        status = args.func(args, cfg)
    except MorphLabError as exc:
        return _fail(exc.category, exc)
    except OSError as exc:
        return _fail("io", exc)
    return status or 0


if __name__ == "__main__":
    sys.exit(main())
