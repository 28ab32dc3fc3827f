"""The eight acceptance criteria, each at its stated tolerance.

Criteria 4-6 need fully trained models on the synthetic 2-mode benchmark
(2,000 train / 500 test scenes, stage 1 for 100 epochs, stage 2 for 200).
Training happens once per session.  ``LEAPFROG_ACCEPTANCE_CACHE=<dir>``
keeps the checkpoints between sessions; ``LEAPFROG_ACCEPTANCE_EPOCHS=s1,s2``
shrinks training for a plumbing smoke run (the summary line then says so
and the quality criteria are not meaningful).
"""

import math
import os
import re
import time
from pathlib import Path

import numpy as np
import pytest

from leapfrog_diffusion import LeapfrogDiffusion
from leapfrog_diffusion.cli import run
from leapfrog_diffusion.data import GenConfig, generate_synthetic, split
from leapfrog_diffusion.data.rng import Generator
from leapfrog_diffusion.diffusion import diffuse, make_schedule
from leapfrog_diffusion.eval import benchmark, min_ade, min_fde, read_report, write_report
from leapfrog_diffusion.selftest import GRAD_TOL, check_posterior_identity, gradient_errors

pytestmark = pytest.mark.acceptance

STAGE1_EPOCHS, STAGE2_EPOCHS = 100, 200
if os.environ.get("LEAPFROG_ACCEPTANCE_EPOCHS"):
    STAGE1_EPOCHS, STAGE2_EPOCHS = (int(v) for v in os.environ["LEAPFROG_ACCEPTANCE_EPOCHS"].split(","))
REDUCED = (STAGE1_EPOCHS, STAGE2_EPOCHS) != (100, 200)
TAG = f" [reduced epochs {STAGE1_EPOCHS}/{STAGE2_EPOCHS}]" if REDUCED else ""


# ---------------------------------------------------------------- 1-3, 8: oracles


@pytest.mark.criterion(1)
def test_oracle_identity_suite(record_criterion):
    t0 = time.perf_counter()
    _, ok, detail = check_posterior_identity(n=1000, seed=0)
    elapsed = time.perf_counter() - t0
    ok = ok and elapsed < 5.0
    record_criterion(1, ok, f"{detail}; {elapsed:.2f}s (limit 5s)")
    assert ok


@pytest.mark.criterion(2)
def test_gradient_suite(record_criterion):
    t0 = time.perf_counter()
    errors = gradient_errors(seed=0)
    elapsed = time.perf_counter() - t0
    worst = max(errors, key=errors.get)
    groups = sorted({k.split("/")[0] for k in errors})
    ok = errors[worst] <= GRAD_TOL and elapsed < 60.0
    record_criterion(
        2, ok, f"{len(errors)} tensors over {', '.join(groups)}; worst {worst} {errors[worst]:.1e} (limit 1e-4); {elapsed:.1f}s (limit 60s)"
    )
    assert ok


@pytest.mark.criterion(3)
def test_forward_marginal_statistics(record_criterion):
    t0 = time.perf_counter()
    sched = make_schedule("linear", 1e-4, 5e-2, 100)
    # independent oracle: plain-python product of the interpolated betas
    betas = [1e-4 + i * (5e-2 - 1e-4) / 99 for i in range(100)]
    ab = 1.0
    for b in betas:
        ab *= 1.0 - b
    y0 = np.stack([np.linspace(-6.0, 6.0, 12), np.linspace(0.0, 0.55, 12)], axis=-1)
    n = 100_000
    eps = Generator(0, "marginal").normal((n, 12, 2))
    draws = diffuse(y0[None], sched.steps, eps, sched).y
    mean_target, std_target = math.sqrt(ab) * y0, math.sqrt(1.0 - ab)
    # 1% of the coordinate's own scale: |mean| when it dominates, else the marginal std
    mean_err = np.abs(draws.mean(axis=0) - mean_target) / np.maximum(np.abs(mean_target), std_target)
    std_err = np.abs(draws.std(axis=0) - std_target) / std_target
    elapsed = time.perf_counter() - t0
    ok = mean_err.max() <= 0.01 and std_err.max() <= 0.01 and elapsed < 10.0
    record_criterion(
        3, ok, f"max rel err mean {mean_err.max():.2e}, std {std_err.max():.2e} (limit 1e-2) over {n} draws; {elapsed:.2f}s"
    )
    assert ok


def _brute(p, y, h):
    ade, fde = math.inf, math.inf
    for k in range(len(p)):
        total = 0.0
        for t in range(h):
            total += math.hypot(p[k][t][0] - y[t][0], p[k][t][1] - y[t][1])
        ade = min(ade, total / h)
        fde = min(fde, math.hypot(p[k][h - 1][0] - y[h - 1][0], p[k][h - 1][1] - y[h - 1][1]))
    return ade, fde


@pytest.mark.criterion(8)
def test_metric_correctness(record_criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(10_000):
        K, T = int(rng.integers(1, 33)), int(rng.integers(1, 33))
        h = int(rng.integers(1, T + 1))
        p, y = rng.normal(size=(K, T, 2)) * 4, rng.normal(size=(T, 2)) * 4
        ade, fde = _brute(p.tolist(), y.tolist(), h)
        worst = max(worst, abs(min_ade(p, y, h) - ade), abs(min_fde(p, y, h) - fde))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 5.0
    record_criterion(8, ok, f"max deviation {worst:.1e} over 10^4 cases (limit 1e-12); {elapsed:.2f}s (limit 5s)")
    assert ok


# ---------------------------------------------------------------- 4-6: trained models


@pytest.fixture(scope="module")
def bench_data():
    scenes = generate_synthetic(GenConfig(n_scenes=2500, t_past=8, t_future=12, n_neighbors=4, n_modes=2, seed=0))
    train, test = split(scenes, 0.8, seed=0)
    assert (len(train), len(test)) == (2000, 500)
    return train, test


@pytest.fixture(scope="module")
def trained(bench_data, tmp_path_factory):
    train, _ = bench_data
    root = Path(os.environ.get("LEAPFROG_ACCEPTANCE_CACHE") or tmp_path_factory.mktemp("acceptance"))
    root.mkdir(parents=True, exist_ok=True)
    den_path = root / f"denoiser_seed0_e{STAGE1_EPOCHS}.ckpt"
    times = {}

    est = LeapfrogDiffusion(n_samples=20, tau=5, seed=0)
    if den_path.exists():
        est.load_denoiser(den_path)
    else:
        t0 = time.perf_counter()
        est.fit_denoiser(train, epochs=STAGE1_EPOCHS)
        times["stage1"] = time.perf_counter() - t0
        est.save_denoiser(den_path)

    models = {}
    for K in (20, 4):
        init_path = root / f"initializer_K{K}_tau5_seed0_e{STAGE1_EPOCHS}-{STAGE2_EPOCHS}.ckpt"
        m = LeapfrogDiffusion(n_samples=K, tau=5, seed=0).load_denoiser(den_path)
        if init_path.exists():
            m.load_initializer(init_path)
        else:
            t0 = time.perf_counter()
            m.fit_initializer(train, tau=5, epochs=STAGE2_EPOCHS)
            times[f"stage2_K{K}"] = time.perf_counter() - t0
            m.save_initializer(init_path)
        models[K] = m
    models["times"] = times
    return models


def _best_wall(fn, repeats=3):
    best, out = None, None
    for _ in range(repeats):
        out = fn()
        best = out.wall_clock_ns if best is None else min(best, out.wall_clock_ns)
    return out, best


@pytest.mark.criterion(4)
def test_leapfrog_matches_standard_at_a_fraction_of_the_cost(trained, bench_data, record_criterion):
    _, test = bench_data
    est = trained[20]
    future = np.stack([s.future for s in test])
    n_chunks = math.ceil(len(test) / est.chunk_size)

    before = est.denoiser_.forward_passes
    std, std_ns = _best_wall(lambda: est.sample(test, sampler="standard", K=20, seed=0))
    std_passes = (est.denoiser_.forward_passes - before) / (3 * n_chunks)
    before = est.denoiser_.forward_passes
    lf, lf_ns = _best_wall(lambda: est.sample(test, sampler="leapfrog", tau=5, seed=0))
    lf_passes = (est.denoiser_.forward_passes - before) / (3 * n_chunks)

    ade_std = float(np.mean(min_ade(std.trajectories, future)))
    ade_lf = float(np.mean(min_ade(lf.trajectories, future)))
    ratio, speedup = ade_lf / ade_std, std_ns / lf_ns
    calls_ok = (std.denoiser_calls, lf.denoiser_calls, std_passes, lf_passes) == (100, 5, 100, 5)
    ok = ratio <= 1.10 and calls_ok and speedup >= 10.0
    train_note = ", ".join(f"{k} {v / 60:.1f} min" for k, v in trained["times"].items()) or "cached checkpoints"
    record_criterion(
        4,
        ok,
        f"minADE20 leapfrog {ade_lf:.4f} vs standard {ade_std:.4f} (ratio {ratio:.3f}, limit 1.10); "
        f"passes/scene {lf_passes:g} vs {std_passes:g}; speedup {speedup:.1f}x (limit 10x); training: {train_note}{TAG}",
    )
    assert ok


@pytest.mark.criterion(5)
def test_step_count_ablation(trained, bench_data, record_criterion, tmp_path):
    _, test = bench_data
    est = trained[20]
    taus = [0, 3, 5, 10]
    # one initializer trained at tau=5 is swept over every tau
    reports = benchmark(est, test, [{"sampler": "leapfrog", "tau": t} for t in taus], K=20, seeds=(0,))
    write_report(reports, tmp_path / "sweep.csv")
    rows = [r for r in read_report(tmp_path / "sweep.csv") if r["horizon_frac"] == 1.0]
    calls = [r["calls"] for r in rows]
    ades = {t: r["min_ade"] for t, r in zip(taus, rows)}
    plateau = [ades[3], ades[5], ades[10]]
    spread = max(plateau) / min(plateau)
    ok = calls == taus and spread <= 1.15
    record_criterion(
        5,
        ok,
        f"calls {calls}; minADE20 " + ", ".join(f"tau={t}: {a:.4f}" for t, a in ades.items())
        + f"; spread over tau in {{3,5,10}} {100 * (spread - 1):.1f}% (limit 15%){TAG}",
    )
    assert ok


@pytest.mark.criterion(6)
def test_correlated_samples_cover_modes(trained, bench_data, record_criterion, tmp_path):
    _, test = bench_data
    est = trained[4]
    specs = [{"sampler": "leapfrog", "tau": 5}, {"sampler": "iid", "tau": 5}]
    reports = benchmark(est, test, specs, K=4, seeds=(0,), threshold=1.0)
    write_report(reports, tmp_path / "coverage.csv")
    rows = {r["sampler"]: r for r in read_report(tmp_path / "coverage.csv") if r["horizon_frac"] == 1.0}
    lf, iid = rows["leapfrog-tau5"]["coverage"], rows["iid-tau5"]["coverage"]
    ok = lf >= iid - 0.05
    record_criterion(6, ok, f"K=4 mode coverage leapfrog {lf:.3f} vs iid-init tau=5 {iid:.3f} (gate: >= iid - 0.05){TAG}")
    assert ok


# ---------------------------------------------------------------- 7: determinism

TINY_CFG = """\
seed = 11
data.n_scenes = 30
data.n_neighbors = 2
diffusion.steps = 20
model.n_samples = 3
model.embed_dim = 8
model.attn_ff_dim = 8
model.attn_layers = 1
model.conv_out = 4
model.gru_hidden = 8
model.fusion_hidden = 16
model.sigma_embed = 4
model.context_dim = 8
model.denoiser_hidden = 16
model.denoiser_layers = 2
model.step_embed = 8
train.stage1_epochs = 2
train.stage2_epochs = 2
train.batch_size = 8
"""


def _all_subcommands(root: Path, cfg: Path, capsys) -> dict[str, bytes]:
    root.mkdir()
    c = ["--config", str(cfg)]
    d, i = str(root / "den.ckpt"), str(root / "init.ckpt")
    train, test = str(root / "train.csv"), str(root / "test.csv")
    commands = {
        "gen-data": ["gen-data", *c, "--out", str(root / "all.csv"), "--train-out", train, "--test-out", test],
        "train-denoiser": ["train-denoiser", *c, "--data", train, "--out", d, "--report", str(root / "s1.jsonl")],
        "train-initializer": ["train-initializer", *c, "--data", train, "--denoiser-ckpt", d, "--out", i,
                              "--report", str(root / "s2.jsonl")],
        "predict": ["predict", *c, "--data", test, "--denoiser-ckpt", d, "--initializer-ckpt", i,
                    "--out", str(root / "pred.csv")],
        "eval": ["eval", *c, "--data", test, "--predictions", str(root / "pred.csv"), "--out", str(root / "eval.csv")],
        "bench": ["bench", *c, "--data", test, "--denoiser-ckpt", d, "--initializer-ckpt", i, "--out", str(root / "bench.csv")],
        "selftest": ["selftest", *c, "--quick"],
        "defaults": ["defaults"],
    }
    stdout = {}
    for name, argv in commands.items():
        capsys.readouterr()
        assert run(argv) == 0, name
        # messages name the run directory; bench and selftest also print timings
        text = capsys.readouterr().out.replace(str(root), "<run>")
        stdout[name] = re.sub(r"\[[0-9.]+s\]|[0-9.]+ ms/scene", "<time>", text)
    out = {f.name: f.read_bytes() for f in sorted(root.iterdir()) if f.name != "bench.csv"}
    bench = (root / "bench.csv").read_text().splitlines()
    # wall_ns_mean is the last column
    out["bench.csv"] = "\n".join(ln if ln.startswith("#") else ln.rsplit(",", 1)[0] for ln in bench).encode()
    out.update({f"{name} stdout": text.encode() for name, text in stdout.items()})
    return out


@pytest.mark.criterion(7)
def test_subcommands_are_deterministic(tmp_path, capsys, record_criterion):
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(TINY_CFG)
    first = _all_subcommands(tmp_path / "a", cfg, capsys)
    second = _all_subcommands(tmp_path / "b", cfg, capsys)
    differing = [k for k in first if first[k] != second.get(k)]
    ok = not differing and set(first) == set(second)
    record_criterion(
        7, ok, f"8 subcommands run twice, {len(first)} outputs compared bytewise (bench timing column excluded); "
        + ("all identical" if ok else f"differ: {differing}")
    )
    assert ok
