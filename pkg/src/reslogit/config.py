"""Flat ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored.  Unknown keys are an error.
Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .core import ModelKind, ModelTag
from .train import TrainConfig


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _list(text: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in _list(text))


def _opt_float(text: str):
    return None if text.strip().lower() in ("", "none") else float(text)


# key -> (parser, is_path)
_KEYS = {
    "dataset": (str, True),
    "choice": (str, False),
    "variables": (_list, False),
    "categorical": (_list, False),
    "alternatives": (_list, False),
    "reference": (str, False),
    "asc": (_bool, False),
    "model": (str, False),
    "depth": (int, False),
    "batch_size": (int, False),
    "learning_rate": (float, False),
    "rmsprop_decay": (float, False),
    "rmsprop_epsilon": (float, False),
    "max_iterations": (int, False),
    "patience": (int, False),
    "seed": (int, False),
    "split_fraction": (float, False),
    "standardize": (_bool, False),
    "mlp_init_scale": (_opt_float, False),
    "output_dir": (str, True),
    "evaluate_data": (str, True),
    "elasticity_variable": (str, False),
    "elasticity_grid": (_floats, False),
    "sensitivity_variable": (str, False),
    "sensitivity_dummies": (_list, False),
}

_TRAIN_FIELDS = {f.name for f in dataclasses.fields(TrainConfig)}


@dataclass(frozen=True)
class RunConfig:
    dataset: str
    choice: str
    model: ModelKind
    variables: tuple[str, ...] = ()
    categorical: tuple[str, ...] = ()
    alternatives: tuple[str, ...] = ()
    reference: str = "0"
    asc: bool = True
    train: TrainConfig = field(default_factory=TrainConfig)
    output_dir: str = "reslogit_out"
    evaluate_data: str | None = None
    elasticity_variable: str | None = None
    elasticity_grid: tuple[float, ...] = (-50.0, -40.0, -30.0, -20.0, -10.0, 10.0, 20.0, 30.0, 40.0, 50.0)
    sensitivity_variable: str | None = None
    sensitivity_dummies: tuple[str, ...] = ()

    def with_overrides(self, seed: int | None = None, output_dir: str | None = None) -> "RunConfig":
        out = self
        if seed is not None:
            out = dataclasses.replace(out, train=dataclasses.replace(out.train, seed=seed))
        if output_dir is not None:
            out = dataclasses.replace(out, output_dir=str(Path(output_dir).resolve()))
        return out

    def echo(self) -> list[tuple[str, str]]:
        """Effective settings as (key, value) pairs, parseable by :func:`parse_config`.

        The output directory is left out: it does not affect results.
        """
        def fmt(v):
            if isinstance(v, bool):
                return "true" if v else "false"
            if isinstance(v, tuple):
                return ", ".join(fmt(x) for x in v)
            if isinstance(v, float):
                return repr(v)
            return "none" if v is None else str(v)

        pairs = [
            ("dataset", self.dataset),
            ("choice", self.choice),
            ("variables", self.variables),
            ("categorical", self.categorical),
            ("alternatives", self.alternatives),
            ("reference", self.reference),
            ("asc", self.asc),
            ("model", self.model.tag.value),
            ("depth", self.model.depth),
        ]
        pairs += [(f.name, getattr(self.train, f.name)) for f in dataclasses.fields(TrainConfig)]
        optional = [
            ("evaluate_data", self.evaluate_data),
            ("elasticity_variable", self.elasticity_variable),
            ("elasticity_grid", self.elasticity_grid),
            ("sensitivity_variable", self.sensitivity_variable),
            ("sensitivity_dummies", self.sensitivity_dummies),
        ]
        pairs += [(k, v) for k, v in optional if v not in (None, ())]
        return [(k, fmt(v)) for k, v in pairs if v != ()]

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.echo())


def parse_config_text(text: str, base_dir: Path | None = None) -> RunConfig:
    base = Path(base_dir) if base_dir is not None else Path.cwd()
    raw: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, value = (s.strip() for s in stripped.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: key {key!r} given twice")
        parser, is_path = _KEYS[key]
        try:
            parsed = parser(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
        if is_path:
            parsed = str((base / parsed).resolve())
        raw[key] = parsed

    for required in ("dataset", "choice", "model"):
        if required not in raw:
            raise ConfigError(f"missing required key {required!r}")
    try:
        tag = ModelTag(str(raw.pop("model")).lower())
    except ValueError:
        raise ConfigError("model must be one of mnl, reslogit, mlp") from None
    depth = raw.pop("depth", None)
    if tag is ModelTag.MNL:
        if depth not in (None, 0):
            raise ConfigError("an mnl model has depth 0")
        depth = 0
    elif depth is None or depth < 1:
        raise ConfigError(f"model {tag.value} needs depth >= 1")

    train_kwargs = {k: raw.pop(k) for k in list(raw) if k in _TRAIN_FIELDS}
    try:
        train_cfg = TrainConfig(**train_kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(model=ModelKind(tag, depth), train=train_cfg, **raw)


def parse_config(path) -> RunConfig:
    path = Path(path)
    return parse_config_text(path.read_text(encoding="utf-8"), base_dir=path.parent)
