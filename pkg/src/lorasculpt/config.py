"""``key = value`` run configuration files.

One pair per line, ``#`` starts a comment. Bare keys are ``TrainConfig``
field names. Optional sections use dotted keys: ``theory.<SparsitySpec
field>``, ``theory.trials``, ``theory.delta``, ``sweep.param``,
``sweep.values``, plus ``out_dir``. Unknown keys are rejected.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigError
from .theory import SparsitySpec
from .trainer import TrainConfig

REQUIRED_KEYS = ("baseline", "seed")
SWEEP_PARAMS = {"s": "retained_density", "alpha": "alpha", "omega": "omega", "beta": "beta"}


def _bool(v: str) -> bool:
    low = v.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _opt_int(v: str):
    return None if v == "auto" else int(v)


def _opt_tags(v: str):
    return None if v == "auto" else [t.strip() for t in v.split(",") if t.strip()]


def _int_tuple(v: str):
    return tuple(int(t) for t in v.split(",") if t.strip())


def _float_list(v: str):
    return [float(t) for t in v.split(",") if t.strip()]


_TRAIN_PARSE = {
    "total_steps": int, "warmup_steps": _opt_int, "lr": float, "momentum": float,
    "batch_size": int, "retained_density": float, "omega": float, "epsilon": float,
    "alpha": float, "beta": float, "seed": int, "baseline": str, "reg_tags": _opt_tags,
    "prune_connector": _bool, "l2_lambda": float, "p_drop": float, "rank": int,
    "scaling": float, "hidden_dims": _int_tuple, "pretrain_steps": int, "pretrain_lr": float,
}
_THEORY_PARSE = {
    "p": int, "q": int, "r": int, "s_A": float, "s_B": float, "sampling": str,
    "heterogeneous": _bool, "band": float,
}
_TRAIN_DEFAULTS = {f.name: f.default for f in fields(TrainConfig)}
assert set(_TRAIN_PARSE) == set(_TRAIN_DEFAULTS)


def _fmt(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt(x) for x in v)
    return str(v)


@dataclass
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    theory: SparsitySpec | None = None
    theory_trials: int | None = None
    theory_delta: float | None = None
    sweep_param: str | None = None
    sweep_values: list[float] = field(default_factory=list)
    out_dir: str | None = None

    def to_text(self) -> str:
        lines = [f"{k} = {_fmt(v)}" for k, v in asdict(self.train).items()]
        if self.theory is not None:
            lines += [f"theory.{k} = {_fmt(v)}" for k, v in asdict(self.theory).items()]
        if self.theory_trials is not None:
            lines.append(f"theory.trials = {self.theory_trials}")
        if self.theory_delta is not None:
            lines.append(f"theory.delta = {self.theory_delta!r}")
        if self.sweep_param is not None:
            lines.append(f"sweep.param = {self.sweep_param}")
            lines.append(f"sweep.values = {_fmt(list(self.sweep_values))}")
        if self.out_dir is not None:
            lines.append(f"out_dir = {self.out_dir}")
        return "\n".join(lines) + "\n"


def parse_pairs(text: str) -> dict[str, str]:
    pairs: dict[str, str] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value', got {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if key in pairs:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        pairs[key] = val
    return pairs


def parse_config(text: str, required=REQUIRED_KEYS, overrides: dict[str, str] | None = None) -> RunConfig:
    """Parse a config file; raises ``ConfigError`` naming missing or unknown keys."""
    pairs = parse_pairs(text)
    pairs.update(overrides or {})
    known = set(_TRAIN_PARSE) | {f"theory.{k}" for k in _THEORY_PARSE} | {
        "theory.trials", "theory.delta", "sweep.param", "sweep.values", "out_dir"}
    unknown = sorted(set(pairs) - known)
    missing = [k for k in required if k not in pairs]
    if unknown or missing:
        parts = []
        if missing:
            parts.append("missing keys: " + ", ".join(missing))
        if unknown:
            parts.append("unknown keys: " + ", ".join(unknown))
        raise ConfigError("; ".join(parts))

    def conv(table, key, name):
        try:
            return table[name](pairs[key])
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from None

    train_kw = {k: conv(_TRAIN_PARSE, k, k) for k in _TRAIN_PARSE if k in pairs}
    train = TrainConfig(**train_kw)
    theory_kw = {k: conv(_THEORY_PARSE, f"theory.{k}", k)
                 for k in _THEORY_PARSE if f"theory.{k}" in pairs}
    theory = None
    if theory_kw:
        try:
            theory = SparsitySpec(**theory_kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad theory section: {exc}") from None
    sweep_param = pairs.get("sweep.param")
    if sweep_param is not None and sweep_param not in SWEEP_PARAMS:
        raise ConfigError(f"unknown sweep parameter {sweep_param!r}")
    return RunConfig(
        train=train,
        theory=theory,
        theory_trials=int(pairs["theory.trials"]) if "theory.trials" in pairs else None,
        theory_delta=float(pairs["theory.delta"]) if "theory.delta" in pairs else None,
        sweep_param=sweep_param,
        sweep_values=_float_list(pairs.get("sweep.values", "")),
        out_dir=pairs.get("out_dir"),
    )
