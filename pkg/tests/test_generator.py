import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from morphlab.errors import ConfigError, ShapeError
from morphlab.generator import (Generator, GeneratorConfig, NoiseBank, bipartite_attention,
                                discriminator_forward, generator_forward,
                                init_discriminator_params, init_generator_params,
                                mapping_forward, measure_attention_memory, record_attention,
                                synthesis_forward)
from morphlab.tensor import Tensor, grad_check, mean, mul, sub, tsum

TOL = 1e-4


def _attention_params(rng, c, d, a, duplex=False):
    p = {
        "pos": rng.standard_normal((1, c)) * 0.5,
        "wq": rng.standard_normal((c, a)) / np.sqrt(c),
        "wk": rng.standard_normal((d, a)) / np.sqrt(d),
        "wv": rng.standard_normal((d, a)) / np.sqrt(d),
        "wgamma": rng.standard_normal((a, c)) * 0.5 / np.sqrt(a),
        "bgamma": np.ones(c),
        "wbeta": rng.standard_normal((a, c)) / np.sqrt(a),
        "bbeta": np.zeros(c),
    }
    if duplex:
        p.update(uq=rng.standard_normal((d, a)), uk=rng.standard_normal((c, a)),
                 uv=rng.standard_normal((c, a)), uo=rng.standard_normal((a, d)) * 0.3)
    return p


# ---------------------------------------------------------------- config

def test_block_count_follows_resolution_ladder():
    cfg = GeneratorConfig()
    assert cfg.n_blocks == 4 and cfg.latent_shape == (17, 32)
    assert [cfg.resolution(b) for b in range(4)] == [4, 8, 16, 32]
    assert GeneratorConfig.small(16).n_blocks == 3


@pytest.mark.parametrize("kwargs", [
    {"target_resolution": 24},
    {"target_resolution": 2},
    {"channels": (8, 8)},
    {"attention": ("duplex", "duplex", "duplex", "duplex")},
    {"attention": ("triplex", "duplex", "duplex", "none")},
    {"k_local": 0},
    {"d": 0},
])
def test_invalid_configs_rejected(kwargs):
    with pytest.raises(ConfigError):
        GeneratorConfig(**kwargs)


def test_parameter_names_unique_and_shaped(small_generator):
    params = small_generator.params
    assert len(params) == len(set(params))
    cfg = small_generator.config
    assert params["b0.l0.wk"].shape == (cfg.d, cfg.attention_dim)
    assert params["b1.l0.pos"].shape == (64, cfg.channels[1])
    assert not any(k.startswith(f"b{cfg.n_blocks - 1}.l0.wq") for k in params)
    np.testing.assert_array_equal(params["b0.l0.theta"], np.eye(2, 3))


def test_generator_rejects_mismatched_params(small_generator):
    params = dict(small_generator.params)
    params["b0.l0.wq"] = np.zeros((3, 3))
    with pytest.raises(ShapeError):
        Generator(small_generator.config, params)


# ---------------------------------------------------------------- mapping

def test_identity_mapping_returns_input(rng):
    cfg = GeneratorConfig.small(16, mapping_depth=0)
    z = rng.uniform(-1, 1, cfg.latent_shape)
    np.testing.assert_array_equal(mapping_forward(z, init_generator_params(cfg), cfg).data, z)


def test_mapping_is_deterministic(small_generator):
    z = small_generator.random_latent(5)
    a = small_generator.mapping(z).data
    b = Generator(small_generator.config).mapping(z).data
    assert a.tobytes() == b.tobytes()


def test_mapping_gradient(small_generator):
    z = small_generator.random_latent(6)
    assert grad_check(lambda t: tsum(small_generator.mapping(t)), z,
                      indices=range(0, z.size, 7)) < TOL


def test_mapping_rejects_wrong_latent_shape(small_generator):
    with pytest.raises(ShapeError):
        small_generator.mapping(np.zeros((16, 32)))


# ---------------------------------------------------------------- attention

def test_single_latent_rows_are_one(rng):
    x = rng.standard_normal((1, 9, 6))
    z = rng.standard_normal((1, 1, 5))
    _, _, attn = bipartite_attention(x, z, "simplex", _attention_params(rng, 6, 5, 4))
    np.testing.assert_array_equal(attn.data, np.ones((1, 9, 1)))


def test_single_latent_simplex_equals_duplex_without_feedback(rng):
    x = rng.standard_normal((2, 16, 6))
    z = rng.standard_normal((2, 1, 5))
    p = _attention_params(rng, 6, 5, 4, duplex=True)
    p["uo"] = np.zeros_like(p["uo"])
    xs, zs, _ = bipartite_attention(x, z, "simplex", p)
    xd, zd, _ = bipartite_attention(x, z, "duplex", p)
    np.testing.assert_array_equal(xs.data, xd.data)
    np.testing.assert_array_equal(zs.data, zd.data)


@pytest.mark.parametrize("mode", ["simplex", "duplex"])
@pytest.mark.parametrize("seed", range(5))
def test_attention_rows_sum_to_one(mode, seed):
    rng = np.random.default_rng(seed)
    m, n = int(rng.integers(1, 40)), int(rng.integers(1, 20))
    x = rng.standard_normal((2, m, 6)) * 3
    z = rng.standard_normal((2, n, 5)) * 3
    _, z_new, attn = bipartite_attention(x, z, mode, _attention_params(rng, 6, 5, 4, True))
    assert attn.shape == (2, m, n)
    assert (attn.data >= 0).all()
    np.testing.assert_allclose(attn.data.sum(axis=-1), 1.0, atol=1e-6)
    assert z_new.shape == (2, n, 5)


def test_attention_rejects_unknown_mode_and_empty_grid(rng):
    p = _attention_params(rng, 6, 5, 4)
    with pytest.raises(ConfigError):
        bipartite_attention(np.ones((1, 4, 6)), np.ones((1, 2, 5)), "triplex", p)
    with pytest.raises(ShapeError):
        bipartite_attention(np.ones((1, 0, 6)), np.ones((1, 2, 5)), "simplex", p)


def test_attention_gradients_through_both_streams(rng):
    p = _attention_params(rng, 6, 5, 4, duplex=True)
    x = rng.standard_normal((1, 8, 6))
    z = rng.standard_normal((1, 3, 5))
    w = Tensor(rng.standard_normal((1, 8, 6)))

    def wrt_x(t):
        xn, zn, _ = bipartite_attention(t, z, "duplex", p)
        return tsum(mul(xn, w)) + tsum(zn)

    def wrt_z(t):
        xn, zn, _ = bipartite_attention(x, t, "duplex", p)
        return tsum(mul(xn, w)) + tsum(zn)

    assert grad_check(wrt_x, x) < TOL
    assert grad_check(wrt_z, z) < TOL


def test_forward_attention_is_positions_by_latents(small_generator):
    cfg = small_generator.config
    with record_attention() as log:
        small_generator.generate(small_generator.random_latent(0), small_generator.noise(0))
    shapes = [a.shape[-2:] for a in log]
    assert shapes == [(16, 17), (16, 17), (64, 17), (64, 17)]
    for a in log:
        np.testing.assert_allclose(a.sum(axis=-1), 1.0, atol=1e-6)
        assert a.shape[-1] == cfg.n_latents


def test_attention_memory_is_linear_in_positions():
    ms = np.array([16, 64, 256])
    peaks = np.array(measure_attention_memory(tuple(ms)), dtype=float)
    slope, intercept = np.polyfit(ms, peaks, 1)
    residual = np.abs(peaks - (slope * ms + intercept)) / peaks
    assert residual.max() < 0.05


# ---------------------------------------------------------------- synthesis

@given(st.sampled_from([4, 8, 16]), st.integers(1, 4), st.integers(1, 6), st.integers(0, 3))
def test_output_shape_and_range(target, k_local, d, seed):
    cfg = GeneratorConfig.small(target, k_local=k_local, d=d, attention_dim=4, seed=seed)
    gen = Generator(cfg)
    img = gen.generate(np.random.default_rng(seed).uniform(-3, 3, cfg.latent_shape), gen.noise(seed))
    assert img.shape == (3, target, target)
    assert np.abs(img).max() <= 1.0


def test_same_noise_seed_same_image(small_generator):
    z = small_generator.random_latent(1)
    a = small_generator.generate(z, small_generator.noise(4))
    b = small_generator.generate(z, small_generator.noise(4))
    assert a.tobytes() == b.tobytes()


def test_noise_changes_image_and_gradient_still_checks(small_generator):
    cfg, params = small_generator.config, small_generator.params
    zp = small_generator.mapping(small_generator.random_latent(2)).data
    a = synthesis_forward(zp, small_generator.noise(1), params, cfg).data
    b = synthesis_forward(zp, small_generator.noise(2), params, cfg).data
    assert np.abs(a - b).max() > 0
    for seed in (1, 2):
        noise = small_generator.noise(seed)
        err = grad_check(lambda t: tsum(synthesis_forward(t, noise, params, cfg)), zp,
                         indices=range(0, zp.size, 11))
        assert err < TOL


def test_noise_bank_mismatch_rejected(small_generator):
    z = small_generator.random_latent(0)
    with pytest.raises(ShapeError):
        small_generator.generate(z, NoiseBank(small_generator.noise(0).maps[:-1]))
    bad = NoiseBank([np.zeros((5, 5))] * small_generator.config.n_blocks)
    with pytest.raises(ShapeError):
        small_generator.generate(z, bad)


def test_batched_forward_matches_single(small_generator):
    zs = np.stack([small_generator.random_latent(s) for s in range(3)])
    noise = small_generator.noise(9)
    batched = small_generator.generate(zs, noise)
    for i in range(3):
        np.testing.assert_allclose(batched[i], small_generator.generate(zs[i], noise), atol=1e-12)


# ---------------------------------------------------------------- generator_forward

def test_identity_mapping_reduces_to_synthesis(rng):
    cfg = GeneratorConfig.small(16, mapping_depth=0)
    params = init_generator_params(cfg)
    z = rng.uniform(-1, 1, cfg.latent_shape)
    noise = NoiseBank.sample(cfg, 3)
    np.testing.assert_array_equal(generator_forward(z, noise, params, cfg).data,
                                  synthesis_forward(z, noise, params, cfg).data)


def test_distinct_latents_give_distinct_images(small_generator):
    noise = small_generator.noise(0)
    a = small_generator.generate(small_generator.random_latent(10), noise)
    b = small_generator.generate(small_generator.random_latent(11), noise)
    assert np.abs(a - b).max() > 1e-3


def test_end_to_end_mse_gradient(small_generator):
    noise = small_generator.noise(3)
    target = Tensor(small_generator.generate(small_generator.random_latent(20), noise))
    z0 = small_generator.random_latent(21)

    def loss(t):
        diff = sub(small_generator.forward(t, noise), target)
        return mean(mul(diff, diff))

    assert grad_check(loss, z0, indices=range(0, z0.size, 5)) < TOL


# ---------------------------------------------------------------- discriminator

@pytest.fixture(scope="module")
def disc():
    return init_discriminator_params(16, seed=0)


def test_discriminator_deterministic_scalar(disc, rng):
    img = rng.uniform(-1, 1, (3, 16, 16))
    a = discriminator_forward(img, disc)
    b = discriminator_forward(img, disc)
    assert a.shape == () and np.isfinite(a.data)
    assert a.data.tobytes() == b.data.tobytes()


def test_discriminator_gradient(disc, rng):
    img = rng.uniform(-1, 1, (3, 16, 16))
    assert grad_check(lambda t: discriminator_forward(t, disc), img,
                      indices=range(0, img.size, 13)) < TOL


def test_discriminator_sees_every_pixel(disc):
    rng = np.random.default_rng(8)
    img = rng.uniform(-0.5, 0.5, (3, 16, 16))
    base = float(discriminator_forward(img, disc).data)
    for _ in range(20):
        c, y, x = rng.integers(0, 3), rng.integers(0, 16), rng.integers(0, 16)
        probe = img.copy()
        probe[c, y, x] += 0.5
        assert float(discriminator_forward(probe, disc).data) != base


def test_discriminator_rejects_wrong_shape(disc):
    with pytest.raises(ShapeError):
        discriminator_forward(np.zeros((3, 8, 8)), disc)
