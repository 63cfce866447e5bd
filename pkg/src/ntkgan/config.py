"""Experiment configuration: a fully serializable description of a run.

Configs are stored as TOML (parsed with tomli/tomllib; a minimal emitter is
included since the toolkit only needs two-level tables of scalars) or JSON.
A config file alone reproduces a run bit-for-bit in deterministic mode."""
from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

from .kernels import ActivationKind, KernelSpec, NetworkConfig
from .sinkhorn import SinkhornConfig

__all__ = ["DatasetConfig", "KernelConfig", "FlowSection", "ExperimentConfig"]


@dataclass(frozen=True)
class DatasetConfig:
    name: str = "8gaussians"  # 8gaussians | image | mnist
    count: int = 200
    seed: int = 0
    path: str = ""  # raster or IDX file for image/mnist datasets

    def __post_init__(self):
        if self.name not in ("8gaussians", "image", "mnist"):
            raise ValueError(f"unknown dataset {self.name!r}")


@dataclass(frozen=True)
class KernelConfig:
    variant: str = "ntk"  # ntk | nngp | rbf
    activation: str = "relu"
    hidden_layers: int = 3
    weight_variance: float = 1.0
    bias_variance: float = 1.0
    quadrature_order: int = 64

    def network(self) -> NetworkConfig:
        return NetworkConfig(
            hidden_layers=self.hidden_layers,
            activation=ActivationKind(self.activation, self.quadrature_order),
            weight_variance=self.weight_variance,
            bias_variance=self.bias_variance,
        )

    def spec(self) -> KernelSpec:
        if self.variant == "rbf":
            return KernelSpec.rbf()
        return KernelSpec(self.variant, self.network())


@dataclass(frozen=True)
class FlowSection:
    loss: str = "ipm"
    regime: str = "infinite"
    eta: float = 1.0
    steps: int = 1000
    tau: float = 1.0
    inner_lr: float = 0.01
    inner_steps: int = 1
    snapshot_every: int = 0
    width: int = 128


@dataclass(frozen=True)
class SinkhornSection:
    blur: float = 0.001
    scaling: float = 0.95
    max_iters: int = 5000

    def config(self) -> SinkhornConfig:
        return SinkhornConfig(self.blur, self.scaling, self.max_iters)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    seed: int = 0
    repeats: int = 1
    deterministic: bool = True
    out_dir: str = "out"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    flow: FlowSection = field(default_factory=FlowSection)
    sinkhorn: SinkhornSection = field(default_factory=SinkhornSection)

    # -- serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "ExperimentConfig":
        d = dict(d)
        sections = {
            "dataset": DatasetConfig,
            "kernel": KernelConfig,
            "flow": FlowSection,
            "sinkhorn": SinkhornSection,
        }
        kwargs = {}
        for key, value in d.items():
            if key in sections:
                kwargs[key] = sections[key](**value)
            else:
                kwargs[key] = value
        return ExperimentConfig(**kwargs)

    def to_toml(self) -> str:
        return _emit_toml(self.to_dict())

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @staticmethod
    def load(path) -> "ExperimentConfig":
        path = Path(path)
        text = path.read_bytes()
        if path.suffix == ".json":
            return ExperimentConfig.from_dict(json.loads(text))
        return ExperimentConfig.from_dict(_toml.loads(text.decode()))

    @staticmethod
    def loads_toml(text: str) -> "ExperimentConfig":
        return ExperimentConfig.from_dict(_toml.loads(text))

    def save(self, path) -> None:
        path = Path(path)
        if path.suffix == ".json":
            path.write_text(self.to_json())
        else:
            path.write_text(self.to_toml())


def _toml_scalar(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        escaped = v.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    raise TypeError(f"cannot serialize {type(v).__name__} to TOML")


def _emit_toml(d: dict) -> str:
    """Two-level TOML emitter: scalar keys first, then one table per dict."""
    lines = []
    tables = []
    for key, value in d.items():
        if isinstance(value, dict):
            tables.append((key, value))
        else:
            lines.append(f"{key} = {_toml_scalar(value)}")
    for name, table in tables:
        lines.append("")
        lines.append(f"[{name}]")
        for key, value in table.items():
            lines.append(f"{key} = {_toml_scalar(value)}")
    return "\n".join(lines) + "\n"
