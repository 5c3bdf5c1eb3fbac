"""Run configuration: ``key = value`` lines, env overrides, ``--set`` overrides.

Precedence, lowest first: built-in defaults, config file, ``VEHCO2_*``
environment variables (``VEHCO2_FACTORS__PHI=40`` sets ``factors.phi``),
command-line ``--set key=value``.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from . import nn
from .dataset import SplitSpec
from .emissions import EmissionFactors
from .pipeline import Role, default_model_config, default_train_config
from .schema import Domain

ENV_PREFIX = "VEHCO2_"

DEFAULTS: dict[str, str] = {
    "seed": "0",
    "run_dir": "runs/default",
    "ev_vehicle": "i3",
    "icev_vehicle": "qx50",
    "window_len": "10",
    "factors.phi": "38.5",
    "factors.F_g": "2310",
    "factors.F_e": "1510",
    "factors.ethanol_share_P": "0",
    "factors.afr": "14.7",
    "factors.fuel_density": "740",
    "ingest.i3.current_sign": "1",
    "ingest.pacifica.co2_density": "1800",
    "ingest.pacifica.co2_dilution": "1.0",
    "split.train": "0.70",
    "split.val": "0.15",
    "split.test": "0.15",
    "pipeline.enable_icev_feature": "false",
}

# Keys that may appear besides DEFAULTS (prefix match).
OPEN_PREFIXES = ("raw.", "model.", "train.", "split.manifest")

MODEL_KEYS = ("hidden_units", "lstm_layers", "head_units", "forget_bias")
TRAIN_KEYS = ("epochs", "base_lr", "warmup_steps", "batch_size", "adam_beta1", "adam_beta2", "adam_eps")


class ConfigError(ValueError):
    pass


def parse_lines(text: str, source: str = "<config>") -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        out[key.strip()] = value.strip()
    return out


def _check_key(key: str) -> None:
    if key not in DEFAULTS and not key.startswith(OPEN_PREFIXES):
        raise ConfigError(f"unknown config key {key!r}")


@dataclass
class RunConfig:
    values: dict[str, str] = field(default_factory=lambda: dict(DEFAULTS))

    @classmethod
    def load(cls, path=None, overrides: Mapping[str, str] | None = None,
             environ: Mapping[str, str] | None = None) -> RunConfig:
        values = dict(DEFAULTS)
        if path is not None:
            values.update(parse_lines(Path(path).read_text(encoding="utf-8"), str(path)))
        environ = os.environ if environ is None else environ
        for name, value in sorted(environ.items()):
            if name.startswith(ENV_PREFIX):
                key = name[len(ENV_PREFIX):].replace("__", ".").lower()
                # keep the canonical spelling of case-sensitive factor keys
                key = {k.lower(): k for k in DEFAULTS}.get(key, key)
                values[key] = value
        values.update(overrides or {})
        for key in values:
            _check_key(key)
        return cls(values)

    # -- typed access -----------------------------------------------------
    def get(self, key: str, default: str | None = None) -> str | None:
        return self.values.get(key, default)

    def get_int(self, key: str) -> int:
        try:
            return int(self.values[key])
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"config key {key!r} must be an integer") from exc

    def get_float(self, key: str) -> float:
        try:
            return float(self.values[key])
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"config key {key!r} must be a number") from exc

    def get_bool(self, key: str) -> bool:
        return str(self.values.get(key, "false")).strip().lower() in ("1", "true", "yes", "on")

    @property
    def seed(self) -> int:
        return self.get_int("seed")

    @property
    def run_dir(self) -> Path:
        return Path(self.values["run_dir"])

    def factors(self) -> EmissionFactors:
        try:
            return EmissionFactors(**{k.split(".", 1)[1]: self.get_float(k)
                                      for k in DEFAULTS if k.startswith("factors.")})
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def split_spec(self) -> SplitSpec:
        return SplitSpec(self.get_float("split.train"), self.get_float("split.val"),
                         self.get_float("split.test"), seed=self.seed)

    def model_config(self, domain: Domain, role: Role) -> nn.ModelConfig:
        base = default_model_config(domain, role, seed=self.seed, window_len=self.get_int("window_len"))
        kw = base.as_dict()
        prefix = f"model.{Domain.parse(domain).value.lower()}.{Role(role).value}."
        for name in MODEL_KEYS:
            if prefix + name in self.values:
                kw[name] = float(self.values[prefix + name]) if name == "forget_bias" else int(self.values[prefix + name])
        if f"{prefix}hidden_units" in self.values and f"{prefix}head_units" not in self.values:
            kw["head_units"] = kw["hidden_units"]
        return nn.ModelConfig(**kw)

    def train_config(self, domain: Domain) -> nn.TrainConfig:
        base = default_train_config(domain)
        kw = {k: getattr(base, k) for k in TRAIN_KEYS}
        prefix = f"train.{Domain.parse(domain).value.lower()}."
        for name in TRAIN_KEYS:
            if prefix + name in self.values:
                raw = self.values[prefix + name]
                kw[name] = int(raw) if name in ("epochs", "warmup_steps", "batch_size") else float(raw)
        return nn.TrainConfig(**kw)

    # -- provenance ---------------------------------------------------------
    def canonical_text(self) -> str:
        return "".join(f"{k} = {self.values[k]}\n" for k in sorted(self.values))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode("utf-8")).hexdigest()[:12]

    def provenance(self) -> dict[str, str]:
        head = {"config_hash": self.hash, "seed": str(self.seed)}
        head.update({k: self.values[k] for k in sorted(self.values) if k.startswith("factors.")})
        return head
