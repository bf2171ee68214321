"""Flat ``key = value`` experiment configuration files."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from amdl.errors import ConfigError

SOLVERS = ("odl", "odl+warmup", "cdl", "online")


def _bool(s: str) -> bool:
    low = s.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _choice(*options: str) -> Callable[[str], str]:
    def parse(s: str) -> str:
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return s

    return parse


def _optional_int(s: str) -> int | None:
    return None if s.lower() in ("none", "") else int(s)


KEYS: dict[str, Callable[[str], Any]] = {
    # generative model
    "seed": int,
    "n": int,
    "p": int,
    "theta": float,
    "gamma": float,
    "sigma": float,
    "kappa_hat": float,
    "dict_kind": _choice("orthogonal", "complete"),
    "value_dist": _choice("rademacher", "sign_halfnormal"),
    # data sources and outputs
    "output_dir": str,
    "signals": str,
    "truth_dir": str,
    "use_truth": _bool,
    "stream": str,
    "write_stream": _bool,
    "trace": str,
    "snapshot": str,
    # initialization
    "init": _choice("perturb", "identity", "file"),
    "init_delta": float,
    "init_path": str,
    # solver
    "solver": _choice(*SOLVERS),
    "zeta": float,
    "max_iters": int,
    "stop_tol": float,
    "zeta0": float,
    "beta": float,
    "max_warmup_iters": int,
    "batch_size": int,
    "scale": float,
    "sampling_seed": int,
    "p1": int,
    "p2": int,
    "theta_sigma2": float,
    "refresh_every": _optional_int,
}

SYNTH_REQUIRED = ("n", "p", "theta")
SOLVER_REQUIRED = {
    "odl": (),
    "odl+warmup": (),
    "cdl": ("batch_size",),
    "online": ("p1", "p2", "max_iters"),
}


@dataclass
class ExperimentConfig:
    values: dict[str, Any] = field(default_factory=dict)
    source: str = "<config>"

    def get(self, key: str, default: Any = None) -> Any:
        if key not in KEYS:
            raise KeyError(key)
        return self.values.get(key, default)

    def __contains__(self, key: str) -> bool:
        return key in self.values

    def require(self, *keys: str) -> None:
        missing = [k for k in keys if k not in self.values]
        if missing:
            raise ConfigError(f"{self.source}: missing required key(s): {', '.join(missing)}")


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse config text; unknown keys, duplicates and bad values are errors."""
    values: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        where = f"{source}:{lineno}"
        if not sep or not key:
            raise ConfigError(f"{where}: expected 'key = value'")
        if key not in KEYS:
            raise ConfigError(f"{where}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{where}: duplicate key {key!r}")
        try:
            values[key] = KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{where}: bad value for {key!r}: {exc}") from None
    return ExperimentConfig(values, source)


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_config(text, str(path))
