import numpy as np
import pytest
from sklearn.base import clone

from leapfrog_diffusion import LeapfrogDiffusion
from leapfrog_diffusion.data import GenConfig, generate_synthetic
from leapfrog_diffusion.errors import ConfigError, DataError

MODEL = dict(embed_dim=8, attn_ff_dim=8, attn_layers=1, conv_out=4, gru_hidden=8, fusion_hidden=16, sigma_embed=4,
             context_dim=8, denoiser_hidden=16, denoiser_layers=2, step_embed=8)
TRAIN = dict(stage1_epochs=2, stage2_epochs=2, batch_size=8)


@pytest.fixture(scope="module")
def scenes():
    return generate_synthetic(GenConfig(n_scenes=16, n_neighbors=2, seed=1))


@pytest.fixture(scope="module")
def fitted(scenes):
    return LeapfrogDiffusion(n_samples=3, tau=4, diffusion_steps=12, model=MODEL, train=TRAIN, seed=2).fit(scenes)


def test_params_follow_sklearn_conventions():
    est = LeapfrogDiffusion(n_samples=4, model={"gru_hidden": 8})
    params = est.get_params()
    assert params["n_samples"] == 4 and params["model"] == {"gru_hidden": 8} and params["tau"] == 5
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    twin.set_params(tau=3)
    assert twin.tau == 3 and est.tau == 5


def test_bad_settings_are_config_errors(scenes):
    with pytest.raises(ConfigError):
        LeapfrogDiffusion(model={"gru_hiden": 8}).fit_denoiser(scenes, epochs=1)
    with pytest.raises(ConfigError):
        LeapfrogDiffusion(train={"lr": 1.0}).fit_denoiser(scenes, epochs=1)
    with pytest.raises(ConfigError):
        LeapfrogDiffusion(diffusion_steps=0).fit_denoiser(scenes, epochs=1)
    with pytest.raises(ConfigError):
        LeapfrogDiffusion(norm_scale=-1.0).fit_denoiser(scenes, epochs=1)


def test_unfitted_and_invalid_inputs(scenes, fitted):
    with pytest.raises(DataError):
        LeapfrogDiffusion().predict(scenes)
    with pytest.raises(DataError):
        LeapfrogDiffusion().fit_initializer(scenes)
    with pytest.raises(DataError):
        fitted.predict([])
    with pytest.raises(ConfigError):
        fitted.predict(scenes, sampler="ddim")
    with pytest.raises(ConfigError):
        fitted.sample(scenes, tau=13)
    short = generate_synthetic(GenConfig(n_scenes=2, t_past=4, seed=1))
    with pytest.raises(DataError):
        fitted.predict(short)


def test_fit_predict_and_score(scenes, fitted):
    assert len(fitted.stage1_report_.losses) == 2 and len(fitted.stage2_report_.losses) == 2
    assert fitted.trained_tau_ == 4
    pred = fitted.sample(scenes)
    assert pred.trajectories.shape == (16, 3, 12, 2) and pred.denoiser_calls == 4
    assert np.all(np.isfinite(pred.trajectories))
    std = fitted.sample(scenes, sampler="standard", K=5)
    assert std.trajectories.shape == (16, 5, 12, 2) and std.denoiser_calls == 12
    assert fitted.sample(scenes, sampler="iid", tau=2).denoiser_calls == 2
    assert np.array_equal(fitted.predict(scenes), pred.trajectories)
    assert fitted.score(scenes) <= 0.0


def test_predictions_are_in_the_world_frame(scenes, fitted):
    # translating a scene translates its samples by the same amount
    moved = []
    for s in scenes:
        t = type(s)(s.past + 5.0, s.neighbors + 5.0, s.future + 5.0, s.scene_id, s.meta)
        moved.append(t)
    np.testing.assert_allclose(fitted.predict(moved), fitted.predict(scenes) + 5.0, atol=1e-9)


def test_chunking_does_not_change_samples(scenes, fitted):
    small = clone(fitted).set_params(chunk_size=5)
    small.__dict__.update({k: v for k, v in fitted.__dict__.items() if k.endswith("_")})
    np.testing.assert_allclose(small.predict(scenes), fitted.predict(scenes), rtol=0, atol=1e-12)


def test_checkpoint_round_trip(tmp_path, scenes, fitted):
    fitted.save_denoiser(tmp_path / "d.ckpt")
    fitted.save_initializer(tmp_path / "i.ckpt")
    loaded = LeapfrogDiffusion(seed=2).load_denoiser(tmp_path / "d.ckpt").load_initializer(tmp_path / "i.ckpt")
    assert loaded.n_samples == 3 and loaded.trained_tau_ == 4 and loaded.diffusion_steps == 12
    assert np.array_equal(loaded.predict(scenes), fitted.predict(scenes))
    assert all(p.frozen for p in loaded.denoiser_store_)
    with pytest.raises(DataError):
        LeapfrogDiffusion().load_denoiser(tmp_path / "i.ckpt")


def test_warm_start_continues_the_current_initializer(scenes):
    est = LeapfrogDiffusion(n_samples=3, tau=4, diffusion_steps=12, model=MODEL, train=TRAIN, seed=2)
    est.fit(scenes)
    before = {p.name: p.data.copy() for p in est.init_store_}
    ini = est.initializer_
    est.set_params(warm_start=True).fit_initializer(scenes, tau=2, epochs=1)
    assert est.initializer_ is ini and est.trained_tau_ == 2
    changed = [n for n, v in before.items() if not np.array_equal(est.init_store_[n].data, v)]
    assert changed
    # a cold fit at tau=2 starts from the seeded init, so the two differ
    cold = clone(est).set_params(warm_start=False)
    cold.__dict__.update({k: v for k, v in est.__dict__.items() if k.startswith(("denoiser", "normalizer", "sched", "model_cfg"))})
    cold.fit_initializer(scenes, tau=2, epochs=1)
    assert not np.array_equal(cold.predict(scenes), est.predict(scenes))
