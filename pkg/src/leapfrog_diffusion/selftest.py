"""Built-in oracle and invariant checks behind ``leapfrog-diffusion selftest``.

Each check returns ``(name, ok, detail)``.  The gradient checks run on tiny
seeded networks so the whole suite finishes in well under a minute.
"""

from __future__ import annotations

import time

import numpy as np

from .data.rng import Generator, _mix64, mix64_int
from .diffusion import denoise_step, diffuse, make_schedule, posterior_mean_from_noise, posterior_mean_oracle
from .eval import min_ade, min_fde
from .models import Denoiser, EncoderConfig, LeapfrogInitializer
from .numerics import ParameterStore, Tensor, check_gradients, frobenius_norm, mean, reshape
from .training import leapfrog_loss, stage2_loss
from .data.scenes import SceneBatch

TINY = EncoderConfig(
    t_past=4,
    t_future=3,
    n_samples=2,
    embed_dim=4,
    attn_ff_dim=6,
    attn_heads=2,
    attn_layers=1,
    conv_kernel=3,
    conv_out=3,
    gru_hidden=5,
    fusion_hidden=6,
    sigma_embed=3,
    context_dim=5,
    denoiser_hidden=6,
    denoiser_layers=3,
    step_embed=4,
)
GRAD_TOL = 1e-4
DEFAULT_SCHEDULE = dict(kind="linear", beta1=1e-4, beta_end=5e-2, steps=100)


def tiny_batch(cfg: EncoderConfig = TINY, n: int = 2, n_neighbors: int = 2, seed: int = 0) -> SceneBatch:
    rng = Generator(seed, "tiny-batch")
    return SceneBatch(
        past=rng.normal((n, cfg.t_past, 2)),
        neighbors=rng.normal((n, n_neighbors, cfg.t_past, 2)),
        future=rng.normal((n, cfg.t_future, 2)),
        ids=np.arange(n),
    )


def tiny_models(cfg: EncoderConfig = TINY, seed: int = 0, steps: int = 10):
    d_store, i_store = ParameterStore(), ParameterStore()
    den = Denoiser(d_store, cfg, rng=Generator(seed, "tiny-den"), max_step=steps)
    ini = LeapfrogInitializer(i_store, cfg, rng=Generator(seed, "tiny-init"))
    return den, d_store, ini, i_store


def check_posterior_identity(n: int = 1000, seed: int = 0):
    sched = make_schedule(**DEFAULT_SCHEDULE)
    rng = Generator(seed, "selftest-posterior")
    worst_step, worst_forms = 0.0, 0.0
    for _ in range(n):
        y0 = rng.normal((12, 2))
        eps = rng.normal((12, 2))
        g = rng.integers(1, sched.steps + 1)
        yg = diffuse(y0, g, eps, sched).y
        oracle = posterior_mean_oracle(y0, yg, g, sched)
        worst_step = max(worst_step, float(np.max(np.abs(denoise_step(yg, eps, None, g - 1, sched) - oracle))))
        worst_forms = max(worst_forms, float(np.max(np.abs(posterior_mean_from_noise(yg, eps, g, sched) - oracle))))
    ok = worst_step <= 1e-10 and worst_forms <= 1e-12
    return "denoise/posterior identity", ok, f"max err {worst_step:.2e} (step), {worst_forms:.2e} (closed forms)"


def check_schedule_endpoints():
    errs = []
    for kind in ("linear", "quadratic", "sigmoid"):
        s = make_schedule(kind, 1e-4, 5e-2, 100)
        direct = np.prod(1.0 - s.beta)
        errs.append(float(abs(s.beta[0] - 1e-4) + abs(s.beta[-1] - 5e-2)))
        errs.append(float(abs(s.alpha_bar[-1] - direct) / direct))
    ok = errs[0::2] == [0.0, 0.0, 0.0] and max(errs[1::2]) < 1e-12
    return "schedule endpoints", ok, f"endpoint errors {errs[0::2]}, cumulative product rel err {max(errs[1::2]):.1e}"


def check_prng():
    keys = np.array([0, 1, 2**63 + 5, 2**64 - 1], dtype=np.uint64)
    vec = _mix64(keys)
    ref = [mix64_int(int(k)) for k in keys]
    g = Generator(7, "x")
    a = g.random((5,))
    b = Generator(7, "x").random((5,))
    ok = [int(v) for v in vec] == ref and np.array_equal(a, b)
    return "counter PRNG", ok, "vectorised mix matches integer reference" if ok else "mismatch"


def check_metrics(n: int = 2000, seed: int = 0):
    rng = Generator(seed, "selftest-metrics")
    worst = 0.0
    for _ in range(n):
        K = rng.integers(1, 9)
        T = rng.integers(1, 9)
        h = rng.integers(1, T + 1)
        p = rng.normal((K, T, 2))
        y = rng.normal((T, 2))
        ade = min(sum(np.hypot(*(p[k, t] - y[t])) for t in range(h)) / h for k in range(K))
        fde = min(np.hypot(*(p[k, h - 1] - y[h - 1])) for k in range(K))
        worst = max(worst, abs(min_ade(p, y, h) - ade), abs(min_fde(p, y, h) - fde))
    return "metric brute force", worst <= 1e-12, f"max deviation {worst:.1e} over {n} cases"


def gradient_errors(seed: int = 0) -> dict[str, float]:
    """Relative gradient errors for every network module and both losses."""
    batch = tiny_batch(seed=seed)
    den, d_store, ini, i_store = tiny_models(seed=seed)
    sched = make_schedule("linear", 1e-2, 0.2, 10)
    rng = Generator(seed, "grad-noise")
    errors = {}

    y_noisy = Tensor(rng.normal((2, TINY.n_samples, TINY.t_future, 2)))
    noise = rng.normal(y_noisy.shape)
    steps = np.array([3, 7])

    def ne_loss():
        ctx = den.context(batch.past, batch.neighbors)
        eps = den.estimate_noise(y_noisy, ctx, steps)
        return mean(frobenius_norm(eps - noise, axis=(2, 3)))

    leaves = list(d_store) + [y_noisy]
    for k, v in check_gradients(ne_loss, leaves, seed=seed).items():
        errors[f"denoiser/{'noisy_input' if k == f'leaf{len(leaves) - 1}' else k}"] = v

    def init_loss():
        out = ini(batch.past, batch.neighbors)
        return leapfrog_loss(batch.future, out.y_tau, out.sigma, 50.0)

    for k, v in check_gradients(init_loss, list(i_store), seed=seed).items():
        errors[f"initializer/{k}"] = v

    preds = Tensor(rng.normal((3, 4, TINY.t_future, 2)))
    sigma = Tensor(np.exp(rng.normal((3,)) * 0.3))
    fut = rng.normal((3, TINY.t_future, 2))
    errs = check_gradients(lambda: leapfrog_loss(fut, preds, sigma, 50.0), [preds, sigma])
    errors["leapfrog_loss/predictions"], errors["leapfrog_loss/sigma"] = errs["leaf0"], errs["leaf1"]

    est = Tensor(rng.normal((3, TINY.t_future, 2)))
    tgt = rng.normal((3, TINY.t_future, 2))
    errors["noise_loss/estimate"] = check_gradients(lambda: mean(frobenius_norm(est - tgt, axis=(1, 2))), [est])["leaf0"]

    # full stage-2 objective: 1 scene, K=2, tau=2, gradients through the frozen denoiser
    d_store.freeze()
    one = batch.take(np.array([0]))
    ctx = den.context(one.past, one.neighbors)

    def s2_loss():
        return stage2_loss(one, 2, sched, den, ini, 50.0, Generator(seed, "s2-noise"), ctx)

    for k, v in check_gradients(s2_loss, list(i_store), seed=seed).items():
        errors[f"stage2/{k}"] = v
    d_store.freeze(frozen=False)
    return errors


def check_gradient_suite(seed: int = 0):
    errors = gradient_errors(seed)
    worst = max(errors, key=errors.get)
    ok = errors[worst] <= GRAD_TOL
    return "gradient checks", ok, f"{len(errors)} tensors, worst {worst} rel err {errors[worst]:.1e}"


def run_selftest(quick: bool = False, seed: int = 0) -> list[tuple[str, bool, str]]:
    checks = [check_schedule_endpoints, check_prng, lambda: check_posterior_identity(seed=seed),
              lambda: check_metrics(seed=seed)]
    if not quick:
        checks.append(lambda: check_gradient_suite(seed))
    results = []
    for check in checks:
        t0 = time.perf_counter()
        name, ok, detail = check()
        results.append((name, bool(ok), f"{detail} [{time.perf_counter() - t0:.2f}s]"))
    return results
