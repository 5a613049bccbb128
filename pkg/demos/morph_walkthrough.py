"""Morph two synthetic faces, then recover the second from the morph.

Run: python demos/morph_walkthrough.py [--steps 300] [--out DIR]
"""

import argparse
from pathlib import Path

import numpy as np

from morphlab import FaceLoss, Generator, GeneratorConfig
from morphlab.embedding import OptimizationConfig
from morphlab.io import write_ppm
from morphlab.morph import MorphSpec, demorph_image, demorph_latents, morph_images, morph_latents


def mse(a, b):
    return float(((a - b) ** 2).mean())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=300)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()

    gen = Generator(GeneratorConfig.small(16))
    loss = FaceLoss()
    noise = gen.noise(1000 + args.seed)
    z1 = gen.random_latent(2 * args.seed + 1)
    z2 = gen.random_latent(2 * args.seed + 2)
    x1, x2 = gen.generate(z1, noise), gen.generate(z2, noise)

    # In latent space the round trip is plain algebra.
    back = demorph_latents(morph_latents(z1, z2, 0.5), z1, 0.5)
    print(f"latent round trip max error   {np.abs(back - z2).max():.2e}")

    cfg = OptimizationConfig(steps=args.steps, seed=args.seed)
    spec = MorphSpec(0.5, noise_seed=1000 + args.seed)
    morph = morph_images(x1, x2, spec, gen, cfg, loss, noise)
    r1, r2 = morph.embeddings
    print(f"embedding loss, subject 1     {r1.trace[0, 0]:.4f} -> {r1.best_loss:.4f}")
    print(f"embedding loss, subject 2     {r2.trace[0, 0]:.4f} -> {r2.best_loss:.4f}")
    print(f"morph mse to subject 1 / 2    {mse(morph.image, x1):.4f} / {mse(morph.image, x2):.4f}")

    restored = demorph_image(morph.image, x1, spec, gen, cfg, loss, noise)
    print(f"restored mse to subject 1 / 2 {mse(restored.image, x1):.4f} / "
          f"{mse(restored.image, x2):.4f}")

    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        for name, img in (("subject1", x1), ("subject2", x2), ("morph", morph.image),
                          ("restored", restored.image)):
            write_ppm(img, args.out / f"{name}.ppm")
        print(f"images written to {args.out}")


if __name__ == "__main__":
    main()
