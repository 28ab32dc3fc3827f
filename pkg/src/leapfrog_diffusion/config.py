"""Flat ``key = value`` configuration files.

One setting per line, ``#`` starts a comment, values are unquoted.  Keys are
grouped by dotted prefix (``diffusion.``, ``model.``, ``train.``, ``data.``,
``eval.``).  Every key has a default in :data:`DEFAULTS`; unknown keys are
rejected.  Precedence, lowest first: defaults, config file, ``--set``
overrides, dedicated CLI flags such as ``--seed``.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

from .errors import ConfigError

# key -> (default, description)
DEFAULTS: dict[str, tuple[object, str]] = {
    "seed": (0, "master seed feeding every random stream"),
    "diffusion.kind": ("linear", "beta schedule: linear, quadratic or sigmoid"),
    "diffusion.steps": (100, "number of diffusion steps"),
    "diffusion.beta1": (1e-4, "first beta"),
    "diffusion.betaT": (5e-2, "last beta"),
    "diffusion.tau": (5, "leapfrog step: denoising steps left after the initializer"),
    "model.n_samples": (20, "K, samples per scene"),
    "model.embed_dim": (64, "attention width"),
    "model.attn_ff_dim": (256, "attention feed-forward width"),
    "model.attn_heads": (2, "attention heads"),
    "model.attn_layers": (2, "attention layers"),
    "model.conv_kernel": (3, "temporal conv kernel size (odd)"),
    "model.conv_out": (32, "temporal conv channels"),
    "model.gru_hidden": (256, "GRU state size"),
    "model.fusion_hidden": (256, "fusion MLP width"),
    "model.sigma_embed": (32, "sigma embedding width for the sample head"),
    "model.context_dim": (256, "denoiser context size"),
    "model.denoiser_hidden": (256, "noise estimator width"),
    "model.denoiser_layers": (4, "noise estimator linear layers"),
    "model.step_embed": (64, "sinusoidal step embedding size"),
    "model.rotate": (True, "rotate scenes so the last ego heading points along +x"),
    "model.norm_scale": (1.0, "length unit of the model frame (none fits the RMS ego coordinate)"),
    "train.stage1_epochs": (100, "denoiser epochs"),
    "train.stage1_lr": (1e-3, "denoiser learning rate"),
    "train.stage1_decay_every": (16, "epochs between denoiser lr decays"),
    "train.stage1_decay": (0.5, "denoiser lr decay factor"),
    "train.stage2_epochs": (200, "initializer epochs"),
    "train.stage2_lr": (1e-4, "initializer learning rate"),
    "train.stage2_decay_every": (32, "epochs between initializer lr decays"),
    "train.stage2_decay": (0.9, "initializer lr decay factor"),
    "train.distance_weight": (50.0, "weight of the best-of-K distance term"),
    "train.batch_size": (32, "scenes per optimizer step"),
    "data.n_scenes": (2500, "generated scenes"),
    "data.t_past": (8, "observed steps"),
    "data.t_future": (12, "predicted steps"),
    "data.n_neighbors": (4, "neighbours per scene"),
    "data.n_modes": (2, "ego intent modes"),
    "data.mode_weights": (None, "comma-separated mode probabilities (default uniform)"),
    "data.turn_angle": (0.8, "extreme turn in radians; modes spread over [-a, a]"),
    "data.mode_angles": (None, "comma-separated per-mode turn angles (overrides turn_angle)"),
    "data.speed_min": (0.4, "minimum initial speed"),
    "data.speed_max": (0.8, "maximum initial speed"),
    "data.accel_std": (0.02, "acceleration noise std"),
    "data.repulsion": (0.05, "repulsion gain"),
    "data.repulsion_cap": (0.1, "maximum repulsion force"),
    "data.spawn_radius": (4.0, "neighbour spawn radius"),
    "data.train_frac": (0.8, "train share for split"),
    "eval.threshold": (1.0, "mode coverage radius"),
    "eval.seeds": ("0", "comma-separated sampling seeds"),
    "eval.taus": ("0,3,5,10", "leapfrog steps swept by bench"),
    "eval.chunk_size": (500, "scenes per sampling batch"),
}

_LIST_KEYS = {"data.mode_weights", "data.mode_angles"}
_OPTIONAL_FLOAT_KEYS = {"model.norm_scale"}


def _parse_value(key: str, raw: str):
    default = DEFAULTS[key][0]
    raw = raw.strip()
    try:
        if key in _LIST_KEYS:
            if raw.lower() in ("", "none"):
                return None
            return tuple(float(v) for v in raw.split(","))
        if key in _OPTIONAL_FLOAT_KEYS:
            return None if raw.lower() in ("", "none") else float(raw)
        if isinstance(default, bool):
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw


def _render(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


class Config:
    def __init__(self, values: dict | None = None):
        self.values = {k: d for k, (d, _) in DEFAULTS.items()}
        for k, v in (values or {}).items():
            self.set(k, v)

    def set(self, key: str, value) -> None:
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        self.values[key] = _parse_value(key, value) if isinstance(value, str) else value

    def __getitem__(self, key: str):
        return self.values[key]

    def section(self, prefix: str) -> dict:
        p = prefix.rstrip(".") + "."
        return {k[len(p) :]: v for k, v in self.values.items() if k.startswith(p)}

    def int_list(self, key: str) -> list[int]:
        try:
            return [int(v) for v in str(self[key]).split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"{key} must be comma-separated integers") from None

    def lines(self) -> list[str]:
        return [f"{k} = {_render(v)}" for k, v in sorted(self.values.items())]

    def digest(self) -> str:
        return hashlib.sha256("\n".join(self.lines()).encode("utf-8")).hexdigest()[:16]

    @classmethod
    def parse(cls, text: str) -> "Config":
        cfg = cls()
        for lineno, line in enumerate(text.splitlines(), 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ConfigError(f"config line {lineno}: expected 'key = value'")
            key, value = (part.strip() for part in body.split("=", 1))
            if key not in DEFAULTS:
                raise ConfigError(f"config line {lineno}: unknown key {key!r}")
            cfg.set(key, value)
        return cfg

    @classmethod
    def load(cls, path) -> "Config":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.parse(text)

    def apply_overrides(self, pairs) -> None:
        for pair in pairs or []:
            if "=" not in pair:
                raise ConfigError(f"--set expects key=value, got {pair!r}")
            key, value = (part.strip() for part in pair.split("=", 1))
            self.set(key, value)

    # ------------------------------------------------------------ adapters

    def gen_config(self):
        from .data.synthetic import GenConfig

        d = self.section("data")
        d.pop("train_frac")
        return GenConfig(seed=self["seed"], **d)

    def estimator(self):
        from .estimator import LeapfrogDiffusion

        model = self.section("model")
        K = model.pop("n_samples")
        rotate = model.pop("rotate")
        norm_scale = model.pop("norm_scale")
        return LeapfrogDiffusion(
            n_samples=K,
            tau=self["diffusion.tau"],
            diffusion_steps=self["diffusion.steps"],
            beta_start=self["diffusion.beta1"],
            beta_end=self["diffusion.betaT"],
            schedule=self["diffusion.kind"],
            model=model,
            train=self.section("train"),
            rotate=rotate,
            norm_scale=norm_scale,
            seed=self["seed"],
            chunk_size=self["eval.chunk_size"],
        )


def documented_defaults() -> str:
    """The defaults as a commented config file."""
    out = []
    for key, (value, doc) in DEFAULTS.items():
        out.append(f"# {doc}")
        out.append(f"{key} = {_render(value)}")
    return "\n".join(out) + "\n"
