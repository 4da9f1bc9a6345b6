from pydantic_settings import BaseSettings
from pydantic import BaseModel, Field, ValidationError, validator
from typing import Any, Dict, Optional
import logging
import re

from app.core.errors import ConfigError

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    PROJECT_NAME: str = "Visual Programming Task Synthesizer"
    VERSION: str = "1.0.0"
    LOG_LEVEL: str = "INFO"

    # Mutation
    DELTA_SIZE: int = 2
    DELTA_ITER: int = 1

    # Scoring thresholds
    DELTA_DISS: float = 0.33
    DELTA_QUAL_LOOP: float = 0.2
    DELTA_QUAL_PLAIN: float = 0.05
    DELTA_MINI: int = 0

    # Search
    GRID_SIZE: int = 10
    MCTS_ITERATIONS: int = 2_000_000
    EXPLORATION_CONSTANT: float = 2.0
    UNROLL_CAP: Optional[int] = None
    RUNS_PER_CODE: int = 10
    SEED: int = 0
    SHORTCUT_STATE_CAP: int = Field(default=1_000_000)

    # Pipeline
    WORKERS: int = 1
    DISTRACTOR_BUDGET: int = 0
    PREINIT: str = "none"
    OUTPUT_DIR: str = "output"

    class Config:
        env_file = ".env"
        case_sensitive = True


# Initialize settings
settings = Settings()


class SynthesisParams(BaseModel):
    """Knobs shared by mutation, symbolic execution, scoring and search"""
    delta_size: int = Field(default=2, ge=0)
    delta_iter: int = Field(default=1, ge=0)
    delta_diss: float = Field(default=0.33, ge=0, le=1)
    # None picks the loop/plain threshold per code
    delta_qual: Optional[float] = Field(default=None, ge=0, le=1)
    delta_qual_loop: float = 0.2
    delta_qual_plain: float = 0.05
    delta_mini: int = Field(default=0, ge=0)
    n: int = Field(default=10, ge=2)
    mcts_iterations: int = Field(default=2_000_000, ge=0)
    exploration_constant: float = Field(default=2.0, ge=0)
    unroll_cap: Optional[int] = Field(default=None, ge=1)
    runs_per_code: int = Field(default=10, ge=1)
    seed: int = 0
    shortcut_state_cap: int = Field(default=1_000_000, ge=1)
    workers: int = Field(default=1, ge=1)
    distractor_budget: int = Field(default=0, ge=0)
    preinit: str = "none"

    @validator("preinit")
    def validate_preinit(cls, v):
        name = v.split(":", 1)[0].strip()
        if name not in ("none", "scatter", "border"):
            raise ValueError(f"Unknown pre-initialization pattern: {v}")
        return v.strip()

    @property
    def effective_unroll_cap(self) -> int:
        return self.unroll_cap if self.unroll_cap is not None else 2 * self.n

    def qual_threshold(self, has_loop: bool) -> float:
        """δ_qual for a code, 0.2 with While/RepeatUntil else 0.05 unless pinned"""
        if self.delta_qual is not None:
            return self.delta_qual
        return self.delta_qual_loop if has_loop else self.delta_qual_plain

    @classmethod
    def from_settings(cls, source: Settings = settings, **overrides: Any) -> "SynthesisParams":
        values = {
            "delta_size": source.DELTA_SIZE,
            "delta_iter": source.DELTA_ITER,
            "delta_diss": source.DELTA_DISS,
            "delta_qual_loop": source.DELTA_QUAL_LOOP,
            "delta_qual_plain": source.DELTA_QUAL_PLAIN,
            "delta_mini": source.DELTA_MINI,
            "n": source.GRID_SIZE,
            "mcts_iterations": source.MCTS_ITERATIONS,
            "exploration_constant": source.EXPLORATION_CONSTANT,
            "unroll_cap": source.UNROLL_CAP,
            "runs_per_code": source.RUNS_PER_CODE,
            "seed": source.SEED,
            "shortcut_state_cap": source.SHORTCUT_STATE_CAP,
            "workers": source.WORKERS,
            "distractor_budget": source.DISTRACTOR_BUDGET,
            "preinit": source.PREINIT,
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**values)
        except ValidationError as e:
            raise ConfigError(f"Invalid synthesis parameters: {e}") from e


_CAMEL = re.compile(r"(?<!^)(?=[A-Z])")


def _normalize_key(key: str) -> str:
    """deltaSize / delta-size / DELTA_SIZE -> delta_size"""
    key = key.strip().replace("-", "_")
    if key.isupper():
        return key.lower()
    return _CAMEL.sub("_", key).lower()


def load_config_file(path: str) -> Dict[str, Any]:
    """Read a plain-text `key = value` file into SynthesisParams field values"""
    values: Dict[str, Any] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            field = _normalize_key(key)
            if field not in SynthesisParams.model_fields:
                raise ConfigError(f"{path}:{lineno}: unknown parameter '{key}'")
            values[field] = None if value.lower() in ("none", "null") and field != "preinit" else value
    logger.info(f"Loaded {len(values)} parameters from {path}")
    return values
