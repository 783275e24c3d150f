import hashlib
import json
import os
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Dict, Optional, Union, get_args, get_origin

import yaml

from srrdoc.errors import ConfigError
from srrdoc.models.detection import NoiseConfig
from srrdoc.models.recognition import ErrorModel

DEFAULT_CONFIG_PATH = os.path.join(os.path.dirname(os.path.dirname(__file__)), "data", "default_config.yaml")

# Environment variable -> field
ENV_OVERRIDES = {
    "SRRDOC_API_BASE": "api_base",
    "SRRDOC_API_KEY": "api_key",
    "SRRDOC_MODEL": "remote_model",
    "SRRDOC_PARALLELISM": "parallelism",
    "SRRDOC_SEED": "seed",
}

# Never part of the config hash
UNHASHED_FIELDS = ("api_key", "output_dir")

DETECTORS = ("oracle", "xycut", "external")
RECOGNIZERS = ("mock", "remote")
ORDER_MODES = ("model", "gt")


def _is_instance(value: Any, expected: type) -> bool:
    # YAML integers are fine where a float is expected; booleans are never numbers
    if expected is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if expected is int:
        return isinstance(value, int) and not isinstance(value, bool)
    return isinstance(value, expected)


@dataclass
class PipelineConfig:
    """
    Settings of a parse run. Values come from a YAML file, then SRRDOC_*
    environment variables, then command-line flags.
    """
    # structure
    detector: str = "oracle"
    detections_path: Optional[str] = None
    gap_threshold: Optional[float] = None
    top_k: int = 100
    score_threshold: float = 0.3

    # recognition
    recognizer: str = "mock"
    char_error_rate: float = 0.0
    boundary_artifact: bool = False
    latency_per_request: float = 0.0
    latency_per_token: float = 0.0
    api_base: Optional[str] = None
    api_key: Optional[str] = None
    remote_model: str = "srr-recognizer"
    request_timeout: float = 60.0
    prompts_path: Optional[str] = None
    max_attempts: int = 3
    backoff_base: float = 0.2

    # relation
    order: str = "gt"
    model_path: Optional[str] = None

    # simulated fine-grained detection
    perturb: bool = False
    split_probability: float = 0.5
    boundary_jitter: int = 4

    parallelism: int = 1
    seed: int = 0
    output_dir: str = "output"

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data).check_types()

    def check_types(self) -> "PipelineConfig":
        """
        Raises:
            ConfigError: when a value does not have its field's type
        """
        for f in fields(self):
            value = getattr(self, f.name)
            allowed = get_args(f.type) if get_origin(f.type) is Union else (f.type,)
            if value is None and type(None) in allowed:
                continue
            if not any(_is_instance(value, t) for t in allowed if t is not type(None)):
                expected = " or ".join(t.__name__ for t in allowed)
                raise ConfigError(f"{f.name} must be {expected}, got {type(value).__name__} {value!r}")
        return self

    @classmethod
    def from_yaml(cls, path: str = DEFAULT_CONFIG_PATH) -> "PipelineConfig":
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = yaml.safe_load(f) or {}
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError(f"cannot read config {path}: {str(e)}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"{path} must hold a mapping")
        return cls.from_dict(data)

    def with_env(self, environ: Optional[Dict[str, str]] = None) -> "PipelineConfig":
        """Copy with SRRDOC_* environment overrides applied"""
        environ = os.environ if environ is None else environ
        types = {f.name: f.type for f in fields(self)}
        updates = {}
        for variable, name in ENV_OVERRIDES.items():
            value = environ.get(variable)
            if value is None or value == "":
                continue
            if types[name] in (int, "int"):
                try:
                    updates[name] = int(value)
                except ValueError as e:
                    raise ConfigError(f"{variable} must be an integer, got {value!r}") from e
            else:
                updates[name] = value
        return replace(self, **updates)

    def with_overrides(self, **overrides) -> "PipelineConfig":
        """Copy with the non-None overrides applied (command-line flags)"""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def validate(self) -> "PipelineConfig":
        """
        Check values and referenced files.

        Raises:
            ConfigError: on the first problem found
        """
        self.check_types()
        if self.detector not in DETECTORS:
            raise ConfigError(f"unknown detector {self.detector!r}, expected one of {DETECTORS}")
        if self.recognizer not in RECOGNIZERS:
            raise ConfigError(f"unknown recognizer {self.recognizer!r}, expected one of {RECOGNIZERS}")
        if self.order not in ORDER_MODES:
            raise ConfigError(f"unknown order mode {self.order!r}, expected one of {ORDER_MODES}")
        if self.parallelism < 1:
            raise ConfigError(f"parallelism must be >= 1, got {self.parallelism}")
        if self.max_attempts < 1:
            raise ConfigError(f"max_attempts must be >= 1, got {self.max_attempts}")
        if self.detector == "external" and not self.detections_path:
            raise ConfigError("the external detector needs detections_path")
        if self.recognizer == "remote" and not self.api_base:
            raise ConfigError("the remote recognizer needs api_base (or SRRDOC_API_BASE)")
        if self.order == "model" and not self.model_path:
            raise ConfigError("order mode 'model' needs model_path")

        for name in ("detections_path", "prompts_path", "model_path"):
            path = getattr(self, name)
            if name == "model_path" and self.order != "model":
                continue
            if path and not os.path.isfile(path):
                raise ConfigError(f"{name} does not exist: {path}")

        try:
            self.error_model()
            self.noise_config()
        except ValueError as e:
            raise ConfigError(str(e)) from e
        return self

    def error_model(self) -> ErrorModel:
        return ErrorModel(
            char_error_rate=self.char_error_rate,
            boundary_artifact=self.boundary_artifact or self.perturb,
            seed=self.seed,
        )

    def noise_config(self) -> NoiseConfig:
        if not self.perturb:
            return NoiseConfig(seed=self.seed)
        return NoiseConfig(split_probability=self.split_probability, boundary_jitter=self.boundary_jitter,
                           seed=self.seed)

    def to_dict(self, include_secrets: bool = False) -> dict:
        data = asdict(self)
        if not include_secrets:
            data["api_key"] = None
        return data

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON of the config without secrets and output location"""
        data = {k: v for k, v in asdict(self).items() if k not in UNHASHED_FIELDS}
        canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def load_config(path: Optional[str] = None, environ: Optional[Dict[str, str]] = None,
                **overrides) -> PipelineConfig:
    """File, then environment, then flags"""
    config = PipelineConfig.from_yaml(path or DEFAULT_CONFIG_PATH)
    return config.with_env(environ).with_overrides(**overrides)
