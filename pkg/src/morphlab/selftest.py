"""Quick gradient and oracle suites run by ``morphlab selftest``.

Each check returns ``(name, passed, detail)``. The suites are sized to finish
in seconds; the full-size versions live in the test suite.
"""

from __future__ import annotations

import math
import os
import tempfile
from fractions import Fraction

import numpy as np

from . import functional as F
from . import metrics, oracles
from .generator import Generator, GeneratorConfig, discriminator_forward, init_discriminator_params
from .io import load_checkpoint, save_checkpoint
from .losses import FaceLoss, mse_loss, wing_loss
from .morph import demorph_latents, morph_latents
from .tensor import Tensor, grad_check, mean, mul, tanh

GRAD_TOL = 1e-4


def _tiny_generator() -> Generator:
    return Generator(GeneratorConfig.small(8, k_local=2, d=4, attention_dim=4, seed=3))


def check_kernels():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 3, 4, 4))
    w = rng.standard_normal((3, 3, 3, 3)) * 0.3
    weights = rng.standard_normal(x.shape)
    probes = {
        "conv2d": lambda t: mean(mul(F.conv2d(t, w), F.conv2d(t, w))),
        "upsample": lambda t: mean(mul(F.bilinear_upsample2x(t), F.bilinear_upsample2x(t))),
        "softmax": lambda t: mean(mul(F.softmax(t), Tensor(weights))),
        "affine_warp": lambda t: mean(tanh(F.affine_warp(t, np.array([[0.9, 0.1, 0.05],
                                                                       [-0.1, 1.1, 0.0]])))),
    }
    worst = max(grad_check(f, x, indices=range(0, x.size, 5)) for f in probes.values())
    return "kernels", worst < GRAD_TOL, f"max rel err {worst:.2e}"


def check_generator():
    gen = _tiny_generator()
    z = gen.random_latent(1)
    noise = gen.noise(2)
    err = grad_check(lambda t: mean(gen.forward(t, noise)), z, indices=range(0, z.size, 2))
    return "generator", err < GRAD_TOL, f"max rel err {err:.2e}"


def check_discriminator():
    params = init_discriminator_params(8, channels=(4, 4), seed=0)
    image = np.random.default_rng(4).uniform(-1, 1, (3, 8, 8))
    err = grad_check(lambda t: discriminator_forward(t, params), image, indices=range(0, 192, 7))
    return "discriminator", err < GRAD_TOL, f"max rel err {err:.2e}"


def check_losses():
    rng = np.random.default_rng(5)
    target = rng.uniform(-0.8, 0.8, (3, 16, 16))
    image = rng.uniform(-0.8, 0.8, (3, 16, 16))
    loss = FaceLoss()
    prepared = loss.prepare(target)
    err = grad_check(lambda t: loss(t, prepared)[0], image, indices=range(0, image.size, 37))
    return "face loss", err < GRAD_TOL, f"max rel err {err:.2e}"


def check_wing():
    at_one = float(wing_loss(np.array([[1.0, 0.0]]), np.zeros((1, 2))).data) * 2
    lo = float(wing_loss(np.array([[10.0 - 1e-12]]), np.zeros((1, 1))).data)
    hi = float(wing_loss(np.array([[10.0 + 1e-12]]), np.zeros((1, 1))).data)
    ok = abs(at_one - 10 * math.log(1.5)) < 1e-6 and abs(lo - hi) < 1e-9
    return "wing closed form", ok, f"w(1) = {at_one:.6f}, jump {abs(lo - hi):.1e}"


def check_metrics(tables: int = 20):
    rng = np.random.default_rng(6)
    bad = 0
    for _ in range(tables):
        n = int(rng.integers(1, 30))
        a = list(np.round(rng.uniform(0, 1, n), 2))
        b = list(np.round(rng.uniform(0, 1, int(rng.integers(1, 30))), 2))
        tau = float(rng.choice(a + b))
        pairs = list(zip(a, a[::-1]))
        bad += metrics.apcer(a, tau, exact=True) != oracles.apcer(a, tau)
        bad += metrics.bpcer(b, tau, exact=True) != oracles.bpcer(b, tau)
        bad += metrics.accuracy(a, b, tau, exact=True) != oracles.accuracy(a, b, tau)
        bad += metrics.d_eer(a, b, exact=True) != oracles.d_eer(a, b)
        bad += metrics.mmpmr(pairs, tau, exact=True) != oracles.mmpmr(pairs, tau)
        bad += metrics.demorph_accuracy(pairs, tau, exact=True) != oracles.demorph_accuracy(pairs, tau)
        target = Fraction(int(rng.integers(1, 5)), 10)
        bad += metrics.fmr_threshold(b, float(target)) != oracles.fmr_threshold(b, float(target))
    return "metric oracles", bad == 0, f"{bad} mismatches over {tables} tables"


def check_morph_algebra(pairs: int = 100):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(pairs):
        z1, z2 = rng.uniform(-1, 1, (2, 17, 32))
        for lam in (0.1, 0.25, 0.5, 0.9):
            back = demorph_latents(morph_latents(z1, z2, lam), z1, lam)
            worst = max(worst, float(np.abs(back - z2).max()))
    return "morph algebra", worst < 1e-9, f"max abs err {worst:.1e}"


def check_checkpoint():
    params = _tiny_generator().params
    with tempfile.TemporaryDirectory() as tmp:
        first, second = os.path.join(tmp, "a.ckpt"), os.path.join(tmp, "b.ckpt")
        save_checkpoint(params, first)
        save_checkpoint(load_checkpoint(first), second)
        with open(first, "rb") as fa, open(second, "rb") as fb:
            ok = fa.read() == fb.read()
    return "checkpoint round trip", ok, "bitwise" if ok else "bytes differ"


def check_mse():
    a = np.zeros((2, 2, 3))
    b = np.full((2, 2, 3), math.sqrt(0.03))
    value = float(mse_loss(a, b).data)
    return "mse", abs(value - 0.03) < 1e-12, f"{value:.6f}"


CHECKS = (check_kernels, check_generator, check_discriminator, check_losses, check_wing,
          check_mse, check_metrics, check_morph_algebra, check_checkpoint)


def run_selftest() -> list:
    return [(name, bool(ok), detail) for name, ok, detail in (check() for check in CHECKS)]
