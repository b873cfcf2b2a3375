"""Flat ``key = value`` settings shared by every command-line entry point."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .adapt import AdapterConfig
from .backbone import MatcherConfig
from .generator import GeneratorConfig
from .tracker import TrackerConfig


class ConfigError(ValueError):
    pass


@dataclass
class Settings:
    seed: int = 0
    # tracker
    k: int = 4
    tau: float = 0.5
    alpha: float = 0.5
    context: float = 2.0
    template_side: int = 64
    search_side: int = 128
    residual: bool = False
    update_mode: str = "generative+blend+change"
    gamma: float = 0.1
    lam: float = 10.0
    window_influence: float = 0.0
    # matcher training
    matcher_epochs: int = 6
    matcher_pairs: int = 2048
    matcher_lr: float = 3e-3
    # generator training
    gen_epochs: int = 12
    gen_batch_size: int = 16
    lr_g: float = 1e-3
    lr_d: float = 2e-4
    adv_weight: float = 0.05
    clips_per_sequence: int = 40
    jitter: float = 1.5
    val_fraction: float = 0.1
    # calibration
    calib_jitter: float = 2.0
    calib_target_jitter: float = 3.0
    # adapter training
    adapt_epochs: int = 30
    adapt_batch_size: int = 32
    adapt_lr: float = 1e-3
    samples_per_sequence: int = 40

    def tracker(self) -> TrackerConfig:
        return TrackerConfig(
            k=self.k, tau=self.tau, alpha=self.alpha, context=self.context, template_side=self.template_side,
            search_side=self.search_side, residual=self.residual, update_mode=self.update_mode,
            gamma=self.gamma, lam=self.lam, window_influence=self.window_influence,
        )

    def matcher(self) -> MatcherConfig:
        return MatcherConfig(epochs=self.matcher_epochs, pairs_per_epoch=self.matcher_pairs, lr=self.matcher_lr,
                             context=self.context, template_side=self.template_side,
                             search_side=self.search_side, seed=self.seed)

    def generator(self) -> GeneratorConfig:
        return GeneratorConfig(k=self.k, epochs=self.gen_epochs, batch_size=self.gen_batch_size, lr_g=self.lr_g,
                               lr_d=self.lr_d, adv_weight=self.adv_weight,
                               clips_per_sequence=self.clips_per_sequence, jitter=self.jitter, seed=self.seed)

    def adapter(self) -> AdapterConfig:
        return AdapterConfig(epochs=self.adapt_epochs, batch_size=self.adapt_batch_size, lr=self.adapt_lr,
                             lam=self.lam, residual=self.residual, samples_per_sequence=self.samples_per_sequence,
                             seed=self.seed)


FIELDS = {f.name: f for f in fields(Settings)}


def parse_value(key: str, raw: str):
    if key not in FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    kind = type(getattr(Settings(), key))
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        return kind(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r} (expected {kind.__name__})") from None


def read_config(path: str | Path) -> dict:
    """Parse a config file into a ``{key: value}`` dict of typed overrides."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing config file: {path}")
    out = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            out[key] = parse_value(key, value)
        except ConfigError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from None
    return out


def build_settings(config_path=None, overrides: dict | None = None) -> Settings:
    values = read_config(config_path) if config_path else {}
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    settings = Settings(**values)
    try:
        settings.tracker()  # validates ranges and the update mode
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return settings


def dump_config(settings: Settings | None = None) -> str:
    settings = settings or Settings()
    lines = ["# adaptsiam settings; every key can also be passed as --key value"]
    for name in FIELDS:
        v = getattr(settings, name)
        lines.append(f"{name} = {str(v).lower() if isinstance(v, bool) else v}")
    return "\n".join(lines) + "\n"
