"""Run configuration: a JSON document with strict keys and load-time validation.

Every section is optional; missing keys take the defaults below.  Unknown
keys anywhere are an error.  ``resolved()`` returns the full document with
defaults filled in, which is what a run directory records.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path

from wganc.curriculum import Schedule, blended_schedule, one_hot_schedule, schedule_from_stages
from wganc.families import CriticBank, build_seq_bank, derive_seed
from wganc.nn import AdamConfig, MlpParams, MlpSpec, init_mlp
from wganc.sinusoid import SineRanges
from wganc.trainer import TrainConfig

# one stage per family member: 8 x 1875 = 15000 iterations
STAGE_ITERS = 1875

DEFAULTS: dict = {
    "seed": 0,
    "train": {
        "batch_size": 64,
        "n_critic": 5,
        "penalty": 10.0,
        "penalty_style": "one_sided",
        "loss": "wasserstein_gp",
        "z_dim": 32,
        "iterations": 15000,
        "lr": 1e-3,
        "beta1": 0.5,
        "beta2": 0.9,
        "adam_eps": 1e-8,
        "wall_clock": False,
    },
    "generator": {"hidden": [128]},
    "family": {"kind": "prefix", "lengths": [8, 16, 24, 32, 40, 48, 56, 64], "hidden": [128]},
    "schedule": {"kind": "one_hot", "stage_iters": STAGE_ITERS},
    "dataset": {
        "size": 10000,
        "length": 64,
        "amplitude": [0.5, 1.5],
        "frequency": [math.pi / 64, math.pi / 16],
        "phase": [0.0, 2 * math.pi],
        "seed": 1234,
    },
    "eval": {"samples": 1000, "grid": 197},
}

_SCHEDULE_KEYS = {
    "one_hot": {"kind", "stage_iters"},
    "blended": {"kind", "stage_iters", "ramp"},
    "explicit": {"kind", "stages", "reinit"},
}

# seed-derivation keys
_GEN_INIT = 10
_BANK_INIT = 11
_EVAL_NOISE = 12


class ConfigError(ValueError):
    pass


def _merge(defaults: dict, given: dict, where: str) -> dict:
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {', '.join(sorted(unknown))}")
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        if isinstance(defaults[k], dict) and k != "schedule":
            if not isinstance(v, dict):
                raise ConfigError(f"{where}{k} must be an object")
            out[k] = _merge(defaults[k], v, f"{where}{k}.")
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass(frozen=True)
class RunConfig:
    raw: dict

    @classmethod
    def from_dict(cls, given: dict) -> RunConfig:
        if not isinstance(given, dict):
            raise ConfigError("config must be a JSON object")
        raw = _merge(DEFAULTS, given, "")
        sched = raw["schedule"]
        kind = sched.get("kind") if isinstance(sched, dict) else None
        if kind not in _SCHEDULE_KEYS:
            raise ConfigError(f"schedule.kind must be one of {sorted(_SCHEDULE_KEYS)}")
        unknown = set(sched) - _SCHEDULE_KEYS[kind]
        if unknown:
            raise ConfigError(f"unknown key(s) in schedule: {', '.join(sorted(unknown))}")
        if kind == "blended":
            sched.setdefault("stage_iters", STAGE_ITERS)
            sched.setdefault("ramp", 100)
        elif kind == "one_hot":
            sched.setdefault("stage_iters", STAGE_ITERS)
        elif kind == "explicit":
            sched.setdefault("reinit", None)
            if "stages" not in sched:
                raise ConfigError("explicit schedule needs 'stages'")
        cfg = cls(raw)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> RunConfig:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(data)

    def resolved(self) -> dict:
        return copy.deepcopy(self.raw)

    def dumps(self) -> str:
        return json.dumps(self.raw, indent=2, sort_keys=True) + "\n"

    def with_seed(self, seed: int) -> RunConfig:
        raw = self.resolved()
        raw["seed"] = int(seed)
        return RunConfig.from_dict(raw)

    def as_baseline(self) -> RunConfig:
        """Same budget and architectures, one full-length critic, no curriculum."""
        raw = self.resolved()
        raw["family"]["lengths"] = [raw["dataset"]["length"]]
        raw["schedule"] = {"kind": "one_hot", "stage_iters": max(1, raw["train"]["iterations"])}
        return RunConfig.from_dict(raw)

    def validate(self) -> None:
        try:
            self.train_config()
            self.ranges()
            T = self.raw["dataset"]["length"]
            bank = self.bank()
            sched = self.schedule()
            if sched.dim != len(bank):
                raise ConfigError(
                    f"schedule has {sched.dim} weights but family has {len(bank)} critics")
            if self.raw["family"]["lengths"][-1] != T:
                raise ConfigError("the last family length must equal dataset.length")
            if self.raw["dataset"]["size"] < 1:
                raise ConfigError("dataset.size must be >= 1")
            if self.raw["eval"]["samples"] < 2 or self.raw["eval"]["grid"] < 2:
                raise ConfigError("eval.samples and eval.grid must be >= 2")
            self.generator()
        except ConfigError:
            raise
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(f"invalid config: {exc}") from None

    # --- builders -------------------------------------------------------------

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def length(self) -> int:
        return int(self.raw["dataset"]["length"])

    @property
    def wall_clock(self) -> bool:
        return bool(self.raw["train"]["wall_clock"])

    def train_config(self) -> TrainConfig:
        t = self.raw["train"]
        return TrainConfig(
            batch_size=int(t["batch_size"]), n_critic=int(t["n_critic"]),
            penalty=float(t["penalty"]), penalty_style=t["penalty_style"], loss=t["loss"],
            z_dim=int(t["z_dim"]), iterations=int(t["iterations"]), seed=self.seed,
            adam=AdamConfig(float(t["lr"]), float(t["beta1"]), float(t["beta2"]),
                            float(t["adam_eps"])),
        )

    def ranges(self) -> SineRanges:
        d = self.raw["dataset"]
        return SineRanges(tuple(d["amplitude"]), tuple(d["frequency"]), tuple(d["phase"]))

    def schedule(self) -> Schedule:
        s = self.raw["schedule"]
        d = len(self.raw["family"]["lengths"])
        if s["kind"] == "one_hot":
            return one_hot_schedule(d, int(s["stage_iters"]))
        if s["kind"] == "blended":
            return blended_schedule(d, int(s["stage_iters"]), int(s["ramp"]))
        return schedule_from_stages([(w, n) for w, n in s["stages"]], s["reinit"])

    def bank(self) -> CriticBank:
        f = self.raw["family"]
        if f["kind"] != "prefix":
            raise ConfigError("only the 'prefix' family applies to sequence data")
        return build_seq_bank(self.length, f["lengths"], tuple(f["hidden"]),
                              derive_seed(self.seed, _BANK_INIT))

    def generator(self) -> MlpParams:
        spec = MlpSpec(int(self.raw["train"]["z_dim"]), tuple(self.raw["generator"]["hidden"]),
                       self.length, "tanh")
        return init_mlp(spec, derive_seed(self.seed, _GEN_INIT))

    def eval_noise_seed(self) -> int:
        return derive_seed(self.seed, _EVAL_NOISE)
