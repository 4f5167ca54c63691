"""
Application configuration management.
"""

import json
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Sequence

import yaml
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.core.errors import ConfigError


class Settings(BaseSettings):
    """Process-level settings read from the environment."""

    model_config = SettingsConfigDict(
        env_prefix="GUIDED_",
        env_file=".env",
        case_sensitive=True,
        extra="ignore",
    )

    # Application
    APP_NAME: str = "guided-fgovd"
    APP_VERSION: str = "1.0.0"

    # Artifacts
    OUTPUT_DIR: str = "outputs"

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: Literal["json", "console"] = "json"

    # Numerics
    TORCH_THREADS: int = 1


# Create settings instance
settings = Settings()


class EncoderConfig(BaseModel):
    """Text/image encoder backends and the synthetic world geometry."""

    backend: Literal["synthetic", "file"] = "synthetic"
    dim: int = Field(64, ge=2)
    seed: int = 0
    # synthetic image features
    noise_scale: float = Field(0.05, ge=0.0)
    subject_visual_weight: float = 1.0
    attribute_visual_weight: float = 0.5
    # synthetic text features
    subject_text_weight: float = 1.0
    attribute_text_weight: float = 1.5
    unknown_text_weight: float = 0.5
    attribute_alignment: float = Field(0.6, ge=0.0, le=1.0)
    subject_template: str = "{}"
    # file-based adapters
    text_embedding_file: Optional[str] = None
    image_feature_dir: Optional[str] = None
    image_stride: int = Field(16, ge=1)

    @field_validator("subject_template")
    def validate_template(cls, v):
        if "{}" not in v:
            raise ValueError("subject_template must contain '{}'")
        return v


class ModelConfig(BaseModel):
    """Detector hyperparameters (toy scale; real-scale k is 900)."""

    k: int = Field(16, ge=1)
    encoder_layers: int = Field(1, ge=0)
    decoder_layers: int = Field(2, ge=0)
    ffn_dim: int = Field(128, ge=1)
    m_coarse: float = Field(100.0, gt=0.0)
    aef_mode: Literal["subtract", "no_subtract", "addition", "concatenation", "none"] = "subtract"
    cgod_text: Literal["subject", "full", "refined_full"] = "subject"
    reference: Literal["extent", "fixed"] = "extent"
    reference_size: float = Field(0.3, gt=0.0, lt=1.0)
    extent_ratio: float = Field(0.5, gt=0.0, le=1.0)
    extent_floor: float = Field(0.05, ge=0.0)
    init_std: float = Field(0.02, gt=0.0)
    init_seed: int = 0


class FusionConfig(BaseModel):
    """Fine-grained scoring and score fusion."""

    alpha: float = Field(0.6, ge=0.0, le=1.0)
    m_fine: float = Field(100.0, gt=0.0)
    strategy: Literal["multiply", "weighted_average"] = "multiply"
    pooling: Literal["mean", "max"] = "mean"
    fgad_text: Literal["refined", "frozen"] = "refined"
    nms_iou: Optional[float] = Field(0.5, gt=0.0, le=1.0)
    scorer: Literal["clip", "generative"] = "clip"


class StageConfig(BaseModel):
    """One training stage."""

    stage: Literal[1, 2] = 1
    iterations: int = Field(500, ge=0)
    learning_rate: float = Field(5e-3, gt=0.0)
    projection_learning_rate: Optional[float] = Field(None, gt=0.0)
    weight_cls: float = Field(1.0, ge=0.0)
    weight_box: float = Field(5.0, ge=0.0)
    weight_fine: float = Field(0.0, ge=0.0)
    match_box_weight: float = Field(5.0, ge=0.0)
    alpha: float = Field(0.6, ge=0.0, le=1.0)
    grad_clip: Optional[float] = 1.0
    divergence_threshold: float = 1e4
    seed: int = 0
    co_train: bool = False
    train_projection: bool = False
    overlap_positive_iou: Optional[float] = Field(0.5, gt=0.0, le=1.0)
    log_every: int = Field(50, ge=1)

    @model_validator(mode="after")
    def check_stage(self):
        if self.stage == 1 and self.weight_fine != 0.0:
            raise ValueError("stage-1 config must have weight_fine = 0")
        if self.stage == 1 and self.train_projection:
            raise ValueError("the projection head stays frozen in stage 1")
        return self


class TrainConfig(BaseModel):
    """Two-stage schedule (real-scale: 85200 stage-1 and 2000 stage-2 iterations)."""

    stage1_iterations: int = Field(500, ge=0)
    stage2_iterations: int = Field(1000, ge=0)
    learning_rate: float = Field(5e-3, gt=0.0)
    projection_learning_rate: float = Field(0.02, gt=0.0)
    weight_cls: float = 1.0
    weight_box: float = 5.0
    weight_fine: float = 1.0
    match_box_weight: float = 5.0
    grad_clip: Optional[float] = 1.0
    divergence_threshold: float = 1e4
    co_train: bool = False
    train_projection: bool = True
    overlap_positive_iou: Optional[float] = Field(0.5, gt=0.0, le=1.0)
    stage1_images: int = Field(200, ge=1)
    stage2_negatives: int = Field(4, ge=0)
    log_every: int = Field(50, ge=1)

    def stage_config(self, stage: int, alpha: float, seed: int) -> StageConfig:
        """Resolve the settings of one stage."""
        return StageConfig(
            stage=stage,
            iterations=self.stage1_iterations if stage == 1 else self.stage2_iterations,
            learning_rate=self.learning_rate,
            projection_learning_rate=self.projection_learning_rate,
            weight_cls=self.weight_cls,
            weight_box=self.weight_box,
            weight_fine=0.0 if stage == 1 else self.weight_fine,
            match_box_weight=self.match_box_weight,
            alpha=alpha,
            grad_clip=self.grad_clip,
            divergence_threshold=self.divergence_threshold,
            seed=seed,
            co_train=self.co_train if stage == 2 else False,
            train_projection=self.train_projection if stage == 2 else False,
            overlap_positive_iou=self.overlap_positive_iou,
            log_every=self.log_every,
        )


DEFAULT_ATTRIBUTE_POOLS: Dict[str, List[str]] = {
    "color": ["red", "blue", "green"],
    "material": ["wooden", "metal", "plastic"],
    "pattern": ["striped", "dotted", "checkered"],
    "transparency": ["transparent", "opaque", "translucent"],
}


class BenchmarkConfig(BaseModel):
    """Synthetic benchmark world."""

    subjects: List[str] = Field(default_factory=lambda: ["cup", "chair", "lamp", "bag"])
    attribute_pools: Dict[str, List[str]] = Field(
        default_factory=lambda: {k: list(v) for k, v in DEFAULT_ATTRIBUTE_POOLS.items()}
    )
    images: int = Field(300, ge=1)
    objects_per_image: int = Field(2, ge=1)
    distractor_probability: float = Field(0.5, ge=0.0, le=1.0)
    min_box: float = Field(0.25, gt=0.0, le=1.0)
    max_box: float = Field(0.45, gt=0.0, le=1.0)
    grid: int = Field(8, ge=1)
    stride: int = Field(16, ge=1)
    train_fraction: float = Field(0.5, ge=0.0, le=1.0)
    negatives_per_annotation: int = Field(10, ge=1, le=10)
    placement_retries: int = Field(50, ge=1)
    tracks: List[str] = Field(
        default_factory=lambda: [
            "Hard", "Medium", "Easy", "Trivial", "Color", "Material", "Pattern", "Transparency",
        ]
    )

    @model_validator(mode="after")
    def check_world(self):
        if len(self.subjects) < 1:
            raise ValueError("at least one subject is required")
        for kind, values in self.attribute_pools.items():
            if len(values) < 1:
                raise ValueError(f"attribute pool '{kind}' is empty")
        if self.min_box > self.max_box:
            raise ValueError("min_box must not exceed max_box")
        return self


class EvalConfig(BaseModel):
    """Evaluation protocol."""

    iou_threshold: float = Field(0.5, gt=0.0, le=1.0)
    iou_sweep: bool = False
    plots: bool = False


class LLMConfig(BaseModel):
    """Subject-identification backend."""

    backend: Literal["rules", "llm"] = "rules"
    base_url: str = "http://localhost:8000/v1"
    api_key: Optional[str] = None
    model: str = "gpt-4o"
    timeout: float = Field(30.0, gt=0.0)
    retries: int = Field(2, ge=0)
    max_in_flight: int = Field(4, ge=1)
    transcript_path: Optional[str] = None
    record: bool = False


class GenerativeConfig(BaseModel):
    """Generative-VLM scorer backend (yes-probability per region and caption)."""

    backend: Literal["http", "replay"] = "replay"
    base_url: str = "http://localhost:8001"
    model: str = "llava-1.5-7b"
    timeout: float = Field(60.0, gt=0.0)
    retries: int = Field(2, ge=0)
    max_in_flight: int = Field(4, ge=1)
    transcript_path: Optional[str] = None
    record: bool = False


class PipelineConfig(BaseModel):
    """Resolved configuration for one CLI run."""

    encoder: EncoderConfig = Field(default_factory=EncoderConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    fusion: FusionConfig = Field(default_factory=FusionConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    benchmark: BenchmarkConfig = Field(default_factory=BenchmarkConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    llm: LLMConfig = Field(default_factory=LLMConfig)
    generative: GenerativeConfig = Field(default_factory=GenerativeConfig)
    seed: int = 0
    workers: int = Field(1, ge=1)
    output_dir: str = Field(default_factory=lambda: settings.OUTPUT_DIR)


def deep_merge(base: Dict[str, Any], overrides: Mapping[str, Any]) -> Dict[str, Any]:
    """Recursively merge overrides into a copy of base."""
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = deep_merge(dict(merged[key]), value)
        else:
            merged[key] = value
    return merged


def parse_assignments(assignments: Sequence[str]) -> Dict[str, Any]:
    """Turn ``a.b=value`` strings into a nested mapping (values parsed as YAML)."""
    result: Dict[str, Any] = {}
    for item in assignments:
        if "=" not in item:
            raise ConfigError(f"Override must look like key=value: {item!r}")
        dotted, raw = item.split("=", 1)
        keys = [k for k in dotted.strip().split(".") if k]
        if not keys:
            raise ConfigError(f"Empty override key: {item!r}")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as e:
            raise ConfigError(f"Cannot parse override value {raw!r}", error=str(e))
        node = result
        for key in keys[:-1]:
            node = node.setdefault(key, {})
        node[keys[-1]] = value
    return result


def read_config_file(path: Optional[str]) -> Dict[str, Any]:
    """Read a YAML or JSON config file; a missing path yields an empty mapping."""
    if not path:
        return {}
    if not os.path.exists(path):
        raise ConfigError(f"Config file not found: {path}")
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ConfigError(f"Config file is not valid YAML/JSON: {path}", error=str(e))
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"Config file must hold a mapping: {path}")
    return data


def load_config(
    path: Optional[str] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> PipelineConfig:
    """Resolve a PipelineConfig: overrides > file > environment > defaults."""
    data = deep_merge(read_config_file(path), overrides or {})
    try:
        return PipelineConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError("Invalid configuration", error=str(e))


def dump_config(config: PipelineConfig) -> str:
    """Stable JSON rendering of a resolved config."""
    return json.dumps(config.model_dump(mode="json"), indent=2, sort_keys=True)
