"""
Configuration models and the flat key=value experiment config format.
"""

from typing import Any, Dict, List, Type

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .exceptions import ConfigurationError


class ScheduleConfig(BaseModel):
    """Noise schedule parameters."""
    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="forbid")

    T: int = Field(256, ge=1)
    sr_min: float = Field(0.02, gt=0.0, lt=1.0)
    sr_max: float = Field(0.995, gt=0.0, lt=1.0)
    lambda_: float = Field(3.0, ge=1.0, alias="lambda")

    @model_validator(mode="after")
    def _clamps_ordered(self) -> "ScheduleConfig":
        if self.sr_min >= self.sr_max:
            raise ValueError("sr_min must be smaller than sr_max")
        return self


class TrainConfig(BaseModel):
    """Denoiser training hyperparameters and network dimensions."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    epochs: int = Field(300, ge=1)
    batch_size: int = Field(16, ge=1)
    learning_rate: float = Field(1e-3, gt=0.0)
    weight_decay: float = Field(1e-4, ge=0.0)
    seed: int = Field(0, ge=0)
    width: int = Field(32, ge=1)
    blocks: int = Field(3, ge=1)
    embedding_dims: int = Field(16, ge=2)
    pad_multiple: int = Field(1, ge=1)
    shared_standardizer: bool = False


class SamplerSettings(BaseModel):
    """Reverse-process settings."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    delta_t: int = Field(32, ge=1)
    members: int = Field(10, ge=1)
    seed: int = Field(0, ge=0)
    final_projection: bool = False


class PathsConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    data_dir: str = ""
    model: str = ""
    reference: str = ""


class ExperimentConfig(BaseModel):
    """Complete experiment description, serialized as sorted key=value lines."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    sampler: SamplerSettings = Field(default_factory=SamplerSettings)
    train: TrainConfig = Field(default_factory=TrainConfig)
    paths: PathsConfig = Field(default_factory=PathsConfig)

    def serialize(self) -> str:
        lines: List[str] = []
        for section in type(self).model_fields:
            values = getattr(self, section).model_dump(by_alias=True)
            for key, value in values.items():
                lines.append(f"{section}.{key}={_format_value(value)}")
        return "\n".join(sorted(lines)) + "\n"

    @classmethod
    def parse(cls, text: str) -> "ExperimentConfig":
        sections: Dict[str, Dict[str, str]] = {name: {} for name in cls.model_fields}
        for number, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigurationError(f"line {number}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            section, _, name = key.strip().partition(".")
            if section not in sections or not name:
                raise ConfigurationError(f"line {number}: unknown key {key.strip()!r}")
            sections[section][name] = value.strip()

        parts: Dict[str, BaseModel] = {}
        for name, values in sections.items():
            try:
                parts[name] = _section_model(name).model_validate(values)
            except ValidationError as exc:
                first = exc.errors()[0]
                location = ".".join(str(part) for part in (name, *first["loc"]))
                raise ConfigurationError(f"invalid config value {location}: {first['msg']}") from exc
        return cls(**parts)


class RuntimeSettings(BaseSettings):
    """Process-level settings read from ENSDIFF_* environment variables."""
    model_config = SettingsConfigDict(env_prefix="ENSDIFF_")

    log_level: str = "INFO"
    log_json: bool = False
    threads: int = Field(1, ge=1)


def _section_model(name: str) -> Type[BaseModel]:
    return ExperimentConfig.model_fields[name].annotation


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)
