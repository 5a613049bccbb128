import subprocess
import sys

import numpy as np
import pytest

from morphlab.cli import main
from morphlab.generator import Generator, GeneratorConfig
from morphlab.io import load_checkpoint, load_latent, read_ppm, save_latent, write_ppm


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def inputs(tmp_path):
    gen = Generator(GeneratorConfig.small(16))
    noise = gen.noise(0)
    z1, z2 = gen.random_latent(1), gen.random_latent(2)
    save_latent(z1, tmp_path / "a.lat")
    save_latent(z2, tmp_path / "b.lat")
    write_ppm(gen.generate(z1, noise), tmp_path / "a.ppm")
    write_ppm(gen.generate(z2, noise), tmp_path / "b.ppm")
    (tmp_path / "trials.csv").write_text("morph_id,sim1,sim2\nm1,0.7,0.6\nm2,0.8,0.4\nm3,0.55,0.9\n")
    (tmp_path / "demorph.csv").write_text("t1,0.9,0.1\nt2,0.9,0.9\nt3,0.2,0.1\n")
    (tmp_path / "attack.csv").write_text("a1,0.2\na2,0.6\na3,0.9\n")
    (tmp_path / "bona.csv").write_text("b1,0.1\nb2,0.3\n")
    (tmp_path / "nonmated.csv").write_text("".join(f"n{i},{i / 10}\n" for i in range(1, 11)))
    (tmp_path / "fast.cfg").write_text("steps = 3\ninit_samples = 50\n")
    return tmp_path


def test_eval_mmpmr_prints_percent(capsys, inputs):
    code, out, _ = run(capsys, "eval-mmpmr", inputs / "trials.csv", "--threshold", "0.5")
    assert code == 0
    assert out == "threshold 0.5\nmmpmr 66.67%\n"


def test_eval_mmpmr_with_fmr_threshold(capsys, inputs):
    code, out, _ = run(capsys, "eval-mmpmr", inputs / "trials.csv", "--non-mated",
                       inputs / "nonmated.csv")
    # no finite threshold reaches 0.1% FMR on ten scores
    assert code == 0 and out.splitlines() == ["threshold inf", "mmpmr 0.00%"]


def test_eval_demorph_and_mad(capsys, inputs):
    code, out, _ = run(capsys, "eval-demorph", inputs / "demorph.csv", "--threshold", "0.5")
    assert code == 0 and out.splitlines()[1] == "demorph_accuracy 33.33%"
    code, out, _ = run(capsys, "eval-mad", inputs / "attack.csv", inputs / "bona.csv")
    lines = dict(line.split(" ", 1) for line in out.splitlines())
    assert code == 0
    assert (lines["apcer"], lines["bpcer"], lines["accuracy"]) == ("33.33%", "0.00%", "80.00%")


def test_morph_identical_latents_returns_input(capsys, inputs):
    out = inputs / "m.lat"
    code, _, _ = run(capsys, "morph", inputs / "a.lat", inputs / "a.lat", "--out", out)
    assert code == 0
    assert load_latent(out).tobytes() == load_latent(inputs / "a.lat").tobytes()


def test_latent_morph_then_demorph_recovers_second(capsys, inputs):
    m, back = inputs / "m.lat", inputs / "back.lat"
    run(capsys, "morph", inputs / "a.lat", inputs / "b.lat", "--lambda", "0.25", "--out", m)
    run(capsys, "demorph", m, inputs / "a.lat", "--lambda", "0.25", "--out", back)
    np.testing.assert_allclose(load_latent(back), load_latent(inputs / "b.lat"), atol=1e-12)


def test_gen_renders_latent(capsys, inputs):
    code, _, _ = run(capsys, "gen", inputs / "a.lat", "--out", inputs / "g.ppm")
    assert code == 0
    assert (inputs / "g.ppm").read_bytes() == (inputs / "a.ppm").read_bytes()


def test_selftest_passes(capsys):
    code, out, _ = run(capsys, "selftest")
    assert code == 0
    assert out and all(line.startswith("ok ") for line in out.splitlines())


def test_errors_have_category_and_exit_one(capsys, inputs):
    code, _, err = run(capsys, "gen", inputs / "missing.lat", "--out", inputs / "x.ppm")
    assert code == 1 and err.startswith("error: io: ")
    code, _, err = run(capsys, "morph", inputs / "a.lat", inputs / "b.lat", "--lambda", "1",
                       "--out", inputs / "x.lat")
    assert code == 1 and err.startswith("error: config: ")
    (inputs / "bad.csv").write_text("m1,0.5\n")
    code, _, err = run(capsys, "eval-mmpmr", inputs / "bad.csv", "--threshold", "0.5")
    assert code == 1 and err.startswith("error: format: ") and len(err.splitlines()) == 1
    (inputs / "empty.csv").write_text("")
    code, _, err = run(capsys, "eval-mmpmr", inputs / "empty.csv", "--threshold", "0.5")
    assert code == 1 and err.startswith("error: no-data: ")


@pytest.mark.parametrize("argv", [["frobnicate"], ["gen", "--bogus"], ["morph", "a.lat"], ["gen"]])
def test_usage_errors_exit_two(capsys, argv):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "morphlab.cli", "eval-mmpmr", "nope.csv",
                           "--threshold", "0.5"], capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 1 and proc.stderr.startswith("error: io: ")


def _snapshot(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.is_file()}


COMMANDS = {
    "gen": ["gen", "--seed", "4", "--out", "{o}/g.ppm"],
    "embed": ["embed", "{i}/a.ppm", "--config", "{i}/fast.cfg", "--out", "{o}/e.lat",
              "--trace", "{o}/trace.csv"],
    "morph": ["morph", "{i}/a.ppm", "{i}/b.ppm", "--config", "{i}/fast.cfg", "--out", "{o}/m.ppm"],
    "demorph": ["demorph", "{i}/a.ppm", "{i}/b.lat", "--config", "{i}/fast.cfg",
                "--out", "{o}/d.ppm"],
    "eval-mmpmr": ["eval-mmpmr", "{i}/trials.csv", "--non-mated", "{i}/nonmated.csv",
                   "--out", "{o}/r.txt"],
    "eval-mad": ["eval-mad", "{i}/attack.csv", "{i}/bona.csv", "--out", "{o}/r.txt"],
    "eval-demorph": ["eval-demorph", "{i}/demorph.csv", "--threshold", "0.5", "--out", "{o}/r.txt"],
    "smoke-train": ["smoke-train", "--steps", "2", "--out", "{o}/s.ckpt", "--trace", "{o}/t.csv"],
    "selftest": ["selftest"],
}


@pytest.mark.parametrize("name", list(COMMANDS))
def test_commands_are_byte_identical_across_runs(capsys, inputs, tmp_path_factory, name):
    results = []
    for _ in range(2):
        out_dir = tmp_path_factory.mktemp(name)
        argv = [a.format(i=inputs, o=out_dir) for a in COMMANDS[name]]
        code, out, err = run(capsys, *argv)
        assert code == 0, err
        results.append((out, _snapshot(out_dir)))
    assert results[0] == results[1]
    if name != "selftest":
        assert results[0][1]


def test_smoke_train_checkpoint_feeds_gen(capsys, tmp_path):
    ckpt = tmp_path / "s.ckpt"
    code, out, _ = run(capsys, "smoke-train", "--steps", "2", "--out", ckpt)
    assert code == 0 and out.startswith("final_real ")
    params = load_checkpoint(ckpt)
    assert any(k.startswith("d.") for k in params)
    cfg = tmp_path / "c.cfg"
    cfg.write_text(f"checkpoint = {ckpt}\n")
    code, _, _ = run(capsys, "gen", "--config", cfg, "--out", tmp_path / "g.ppm")
    assert code == 0 and read_ppm(tmp_path / "g.ppm").shape == (3, 16, 16)


def test_seed_environment_override(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("MORPHLAB_SEED", "4")
    run(capsys, "gen", "--out", tmp_path / "env.ppm")
    monkeypatch.delenv("MORPHLAB_SEED")
    run(capsys, "gen", "--seed", "4", "--out", tmp_path / "flag.ppm")
    run(capsys, "gen", "--out", tmp_path / "default.ppm")
    assert (tmp_path / "env.ppm").read_bytes() == (tmp_path / "flag.ppm").read_bytes()
    assert (tmp_path / "env.ppm").read_bytes() != (tmp_path / "default.ppm").read_bytes()
