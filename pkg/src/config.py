"""Runtime configuration: environment knobs and the training configuration schema"""

import hashlib
import json
import os
from pathlib import Path
from typing import Any

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

load_dotenv()

LOG_LEVEL = os.getenv("DIAGNOSIS_LOG_LEVEL", "INFO").upper()
DATA_DIR = Path(os.getenv("DIAGNOSIS_DATA_DIR", Path(__file__).resolve().parent.parent / "data"))
DEBUG_CHECKS = os.getenv("DIAGNOSIS_DEBUG_CHECKS", "false").lower() == "true"

DEFAULT_HIDDEN_SIZES = (256, 1024, 128)


class TrainConfig(BaseModel):
    """Optimizer, schedule and network-shape settings for one fit"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    lr0: float = Field(0.001, gt=0)
    decay: float = Field(0.8, gt=0, le=1)
    batch_size: int = Field(256, gt=0)
    max_epochs: int = Field(100, gt=0)
    patience: int = Field(2, gt=0)
    lr_floor: float = Field(1e-5, gt=0)
    min_delta: float = Field(1e-5, ge=0)
    seed: int = Field(0, ge=0, lt=2**64)
    adam_beta1: float = Field(0.9, ge=0, lt=1)
    adam_beta2: float = Field(0.999, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)
    hidden_sizes: tuple[int, ...] = DEFAULT_HIDDEN_SIZES
    debug_checks: bool = DEBUG_CHECKS

    @field_validator("hidden_sizes")
    @classmethod
    def _positive_layers(cls, sizes: tuple[int, ...]) -> tuple[int, ...]:
        if not sizes or any(h <= 0 for h in sizes):
            raise ValueError("hidden_sizes must be a non-empty list of positive integers")
        return tuple(sizes)

    @model_validator(mode="after")
    def _floor_below_start(self) -> "TrainConfig":
        if self.lr_floor > self.lr0:
            raise ValueError(f"lr_floor ({self.lr_floor}) exceeds lr0 ({self.lr0})")
        return self

    def with_seed(self, seed: int) -> "TrainConfig":
        return TrainConfig.model_validate({**self.model_dump(), "seed": seed})


def stable_dumps(obj: Any) -> str:
    """Compact JSON with sorted keys; identical input gives identical bytes"""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def config_hash(obj: Any) -> str:
    if isinstance(obj, BaseModel):
        obj = obj.model_dump(mode="json")
    return hashlib.sha256(stable_dumps(obj).encode("utf-8")).hexdigest()
