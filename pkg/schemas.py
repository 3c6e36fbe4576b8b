# Configuration and Response Data Models for Deptrail
# These Pydantic models validate every parameter that reaches the pipeline,
# the flat run configuration file, and the recognition service responses.

import os
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from errors import ConfigError

# ============================================================================
# Shared Literals
# ============================================================================

GradientOperator = Literal["roberts", "sobel", "central"]
FeatureSet = Literal["fused", "gmhi", "gshi"]
ProtocolName = Literal[
    "msr_subset_test1",
    "msr_subset_test2",
    "msr_subset_cross",
    "msr_all_cross",
    "dha_cross",
    "utd_cross",
    "custom",
]
ActionSet = Literal["AS1", "AS2", "AS3"]

SYNTH_PROGRAMS = (
    "translate_right",
    "translate_left",
    "oscillate",
    "grow",
    "arm_raise",
    "static",
)


def _parse_int_list(value):
    """Accept "1,3,5", "1 3 5", a list, or None."""
    if value is None or isinstance(value, (list, tuple)):
        return value
    text = str(value).replace(",", " ").split()
    return [int(item) for item in text] if text else None


def _parse_str_list(value):
    if value is None or isinstance(value, (list, tuple)):
        return value
    items = [item.strip() for item in str(value).replace(";", ",").split(",")]
    items = [item for item in items if item]
    return items or None


def manifest_value(key: str, value) -> str:
    """Text form of one resolved setting, as written to manifest.txt."""
    if isinstance(value, tuple):
        if key == "spatial_bins":
            return f"{value[0]}x{value[1]}"
        return ", ".join(str(item) for item in value)
    return "" if value is None else str(value)


def manifest_lines(values: Dict[str, object]) -> List[str]:
    """"key = value" lines sorted by key."""
    return [f"{key} = {manifest_value(key, values[key])}" for key in sorted(values)]


def parse_grid_shape(value):
    """Parse a spatial grid written as "RxC" (e.g. "1x2") into (rows, cols)."""
    if isinstance(value, (list, tuple)):
        return tuple(int(v) for v in value)
    parts = str(value).lower().replace("×", "x").split("x")
    if len(parts) != 2:
        raise ValueError(f"spatial grid must look like RxC, got {value!r}")
    return int(parts[0]), int(parts[1])


# ============================================================================
# Pipeline Parameter Models
# ============================================================================

class MtmConfig(BaseModel):
    """
    Thresholds and depth quantization for the 3D motion trail model.

    zeta_m / zeta_s apply to the front (xOy) plane in raw sensor units.
    The side and top planes hold binary occupancy, so they get their own
    thresholds (zeta_m_occupancy / zeta_s_occupancy).
    z_range = None means auto: [min, max] of the nonzero depths of the
    whole sequence.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    zeta_m: float = Field(10.0, gt=0, description="Motion threshold on the front plane")
    zeta_s: float = Field(10.0, gt=0, description="Static threshold on the front plane")
    zeta_m_occupancy: float = Field(0.5, gt=0, description="Motion threshold on side/top occupancy")
    zeta_s_occupancy: float = Field(0.5, gt=0, description="Static threshold on side/top occupancy")
    z_bins: int = Field(64, ge=1, description="Depth quantization bins for side/top views")
    z_range: Optional[Tuple[int, int]] = Field(None, description="(min_depth, max_depth) or None for auto")

    @field_validator("z_range")
    @classmethod
    def check_z_range(cls, value):
        if value is not None and value[0] >= value[1]:
            raise ValueError(f"z_range min must be below max, got {value}")
        return value


class TemplateConfig(BaseModel):
    """Crop-and-resize policy applied to every history image before GLAC."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    crop: bool = True
    height: int = Field(64, ge=2)
    width: int = Field(64, ge=2)

    @property
    def size(self) -> Tuple[int, int]:
        return self.height, self.width


class GlacConfig(BaseModel):
    """
    Gradient Local Auto-Correlation parameters.

    Attributes:
        orientation_bins: D, number of orientation bins (>= 2)
        delta_r: shift distance of the first-order mask patterns (>= 1)
        spatial_bins: (rows, cols) grid of descriptor cells
        gradient_operator: roberts, sobel or central ([-1, 0, 1])
        signed_orientation: True for [0, 2pi), False for [0, pi)
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    orientation_bins: int = Field(8, ge=2)
    delta_r: int = Field(1, ge=1)
    spatial_bins: Tuple[int, int] = (1, 2)
    gradient_operator: GradientOperator = "roberts"
    signed_orientation: bool = True

    @field_validator("spatial_bins", mode="before")
    @classmethod
    def parse_spatial_bins(cls, value):
        rows, cols = parse_grid_shape(value)
        if rows < 1 or cols < 1:
            raise ValueError(f"spatial_bins must be positive, got {value!r}")
        return rows, cols

    @property
    def cell_length(self) -> int:
        """Per-cell descriptor length d = D + 4*D^2."""
        d = self.orientation_bins
        return d + 4 * d * d

    @property
    def descriptor_length(self) -> int:
        rows, cols = self.spatial_bins
        return rows * cols * self.cell_length


class PipelineSettings(BaseModel):
    """Everything the feature pipeline and the classifier need for one run."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    mtm: MtmConfig = MtmConfig()
    glac: GlacConfig = GlacConfig()
    template: TemplateConfig = TemplateConfig()
    mu: float = Field(1e-4, gt=0, description="l2-CRC regularization weight")
    retention: float = Field(0.99, gt=0, le=1, description="PCA variance retention")
    feature_set: FeatureSet = "fused"
    workers: Optional[int] = Field(None, description="Worker pool size, None = logical cores")
    seed: int = 0
    cv_folds: int = Field(5, ge=2)

    def flat_items(self) -> Dict[str, object]:
        """Settings under the flat run-configuration key names."""
        z_min, z_max = self.mtm.z_range or (None, None)
        return {
            "zeta_m": self.mtm.zeta_m,
            "zeta_s": self.mtm.zeta_s,
            "zeta_m_occupancy": self.mtm.zeta_m_occupancy,
            "zeta_s_occupancy": self.mtm.zeta_s_occupancy,
            "z_bins": self.mtm.z_bins,
            "z_min": z_min,
            "z_max": z_max,
            "crop_templates": self.template.crop,
            "template_height": self.template.height,
            "template_width": self.template.width,
            "orientation_bins": self.glac.orientation_bins,
            "delta_r": self.glac.delta_r,
            "spatial_bins": self.glac.spatial_bins,
            "gradient_operator": self.glac.gradient_operator,
            "signed_orientation": self.glac.signed_orientation,
            "mu": self.mu,
            "retention": self.retention,
            "feature_set": self.feature_set,
            "workers": self.workers,
            "seed": self.seed,
            "cv_folds": self.cv_folds,
        }


class Protocol(BaseModel):
    """
    A train/test split protocol plus the parameters it runs with.

    A subset (AS1/AS2/AS3) is required exactly when the protocol name starts
    with "msr_subset". The custom protocol is defined either by
    train_subjects or by explicit train_ids/test_ids lists.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: ProtocolName
    subset: Optional[ActionSet] = None
    train_subjects: Optional[Tuple[int, ...]] = None
    train_ids: Optional[Tuple[str, ...]] = None
    test_ids: Optional[Tuple[str, ...]] = None
    params: PipelineSettings = PipelineSettings()

    @model_validator(mode="after")
    def check_subset(self):
        needs_subset = self.name.startswith("msr_subset")
        if needs_subset and self.subset is None:
            raise ValueError(f"protocol {self.name} requires a subset (AS1, AS2 or AS3)")
        if not needs_subset and self.subset is not None:
            raise ValueError(f"protocol {self.name} does not take a subset")
        if self.name == "custom":
            has_ids = self.train_ids is not None and self.test_ids is not None
            if self.train_subjects is None and not has_ids:
                raise ValueError("custom protocol needs train_subjects or train_ids + test_ids")
        return self

    def manifest_items(self) -> Dict[str, object]:
        """Split description plus parameters, keyed like the run configuration."""
        items = {
            "protocol": self.name,
            "subset": self.subset,
            "train_subjects": self.train_subjects,
            "train_ids": self.train_ids,
            "test_ids": self.test_ids,
        }
        items.update(self.params.flat_items())
        return items


class SynthSpec(BaseModel):
    """Recipe for a deterministic synthetic depth-action dataset."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    classes: Tuple[str, ...] = ("translate_right", "translate_left", "oscillate")
    subjects: int = Field(4, ge=1)
    trials: int = Field(5, ge=1)
    width: int = Field(32, ge=8)
    height: int = Field(32, ge=8)
    frames: int = Field(16, ge=2)
    noise: int = Field(0, ge=0, description="Uniform noise amplitude on foreground pixels")
    seed: int = 0

    @field_validator("classes")
    @classmethod
    def check_programs(cls, value):
        if not value:
            raise ValueError("at least one class program is required")
        unknown = [name for name in value if name not in SYNTH_PROGRAMS]
        if unknown:
            raise ValueError(f"unknown motion programs {unknown}; known: {list(SYNTH_PROGRAMS)}")
        return value


# ============================================================================
# Flat Run Configuration (config file + CLI overrides)
# ============================================================================

class RunConfig(BaseModel):
    """
    Flat key-value run configuration.

    The file format is UTF-8 "key = value" lines; '#' starts a comment and
    an empty value means "unset". Unknown keys are rejected.

    Example:
        dataset = synth
        protocol = custom
        train_subjects = 1, 3
        spatial_bins = 1x2
        mu = 0.0001
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    # Dataset and output
    dataset: Literal["directory", "synth"] = "directory"
    data_dir: Optional[str] = None
    out_dir: str = "runs/latest"
    run_name: str = "run"

    # Protocol
    protocol: ProtocolName = "msr_all_cross"
    subset: Optional[ActionSet] = None
    train_subjects: Optional[Tuple[int, ...]] = None
    train_ids: Optional[Tuple[str, ...]] = None
    test_ids: Optional[Tuple[str, ...]] = None
    feature_set: FeatureSet = "fused"

    # 3D motion trail model
    zeta_m: float = 10.0
    zeta_s: float = 10.0
    zeta_m_occupancy: float = 0.5
    zeta_s_occupancy: float = 0.5
    z_bins: int = 64
    z_min: Optional[int] = None
    z_max: Optional[int] = None

    # Template post-processing
    crop_templates: bool = True
    template_height: int = 64
    template_width: int = 64

    # GLAC
    orientation_bins: int = 8
    delta_r: int = 1
    spatial_bins: Tuple[int, int] = (1, 2)
    gradient_operator: GradientOperator = "roberts"
    signed_orientation: bool = True

    # Classifier / PCA / execution
    mu: float = 1e-4
    retention: float = 0.99
    workers: Optional[int] = None
    seed: int = 0
    cv_folds: int = 5
    save_model: bool = False
    database_url: Optional[str] = None

    # Synthetic dataset
    synth_classes: Tuple[str, ...] = ("translate_right", "translate_left", "oscillate")
    synth_subjects: int = 4
    synth_trials: int = 5
    synth_width: int = 32
    synth_height: int = 32
    synth_frames: int = 16
    synth_noise: int = 0

    @field_validator("train_subjects", mode="before")
    @classmethod
    def parse_subject_list(cls, value):
        return _parse_int_list(value)

    @field_validator("train_ids", "test_ids", "synth_classes", mode="before")
    @classmethod
    def parse_name_list(cls, value):
        return _parse_str_list(value)

    @field_validator("spatial_bins", mode="before")
    @classmethod
    def parse_spatial_bins(cls, value):
        return parse_grid_shape(value)

    @model_validator(mode="after")
    def check_z_bounds(self):
        if (self.z_min is None) != (self.z_max is None):
            raise ValueError("z_min and z_max must be set together")
        return self

    # ------------------------------------------------------------------------
    # Loading
    # ------------------------------------------------------------------------

    @classmethod
    def keys(cls) -> List[str]:
        return sorted(cls.model_fields)

    @classmethod
    def from_mapping(cls, values: Dict[str, object]) -> "RunConfig":
        """Validate a flat mapping, turning every failure into ConfigError."""
        unknown = sorted(set(values) - set(cls.model_fields))
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        cleaned = {key: value for key, value in values.items() if value not in ("", None)}
        try:
            return cls(**cleaned)
        except ValidationError as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc

    @classmethod
    def from_file(
        cls,
        path: Optional[os.PathLike] = None,
        overrides: Optional[Dict[str, str]] = None,
    ) -> "RunConfig":
        """
        Load a config file, apply DEPTRAIL_DATA, then apply CLI overrides.

        Args:
            path: "key = value" file, or None for defaults only
            overrides: values from `--set key=value` flags (highest precedence)

        Returns:
            RunConfig: the resolved configuration
        """
        values: Dict[str, object] = {}
        if path is not None:
            values.update(parse_config_text(Path(path).read_text(encoding="utf-8")))
        env_data = os.getenv("DEPTRAIL_DATA")
        if env_data:
            values["data_dir"] = env_data
        values.update(overrides or {})
        return cls.from_mapping(values)

    # ------------------------------------------------------------------------
    # Conversion to pipeline models
    # ------------------------------------------------------------------------

    def to_settings(self) -> PipelineSettings:
        z_range = None if self.z_min is None else (self.z_min, self.z_max)
        try:
            return PipelineSettings(
                mtm=MtmConfig(
                    zeta_m=self.zeta_m,
                    zeta_s=self.zeta_s,
                    zeta_m_occupancy=self.zeta_m_occupancy,
                    zeta_s_occupancy=self.zeta_s_occupancy,
                    z_bins=self.z_bins,
                    z_range=z_range,
                ),
                glac=GlacConfig(
                    orientation_bins=self.orientation_bins,
                    delta_r=self.delta_r,
                    spatial_bins=self.spatial_bins,
                    gradient_operator=self.gradient_operator,
                    signed_orientation=self.signed_orientation,
                ),
                template=TemplateConfig(
                    crop=self.crop_templates,
                    height=self.template_height,
                    width=self.template_width,
                ),
                mu=self.mu,
                retention=self.retention,
                feature_set=self.feature_set,
                workers=self.workers,
                seed=self.seed,
                cv_folds=self.cv_folds,
            )
        except ValidationError as exc:
            raise ConfigError(f"invalid pipeline parameters: {exc}") from exc

    def to_protocol(self) -> Protocol:
        try:
            return Protocol(
                name=self.protocol,
                subset=self.subset,
                train_subjects=self.train_subjects,
                train_ids=self.train_ids,
                test_ids=self.test_ids,
                params=self.to_settings(),
            )
        except ValidationError as exc:
            raise ConfigError(f"invalid protocol: {exc}") from exc

    def to_synth_spec(self) -> SynthSpec:
        try:
            return SynthSpec(
                classes=self.synth_classes,
                subjects=self.synth_subjects,
                trials=self.synth_trials,
                width=self.synth_width,
                height=self.synth_height,
                frames=self.synth_frames,
                noise=self.synth_noise,
                seed=self.seed,
            )
        except ValidationError as exc:
            raise ConfigError(f"invalid synth parameters: {exc}") from exc

    def manifest_lines(self) -> List[str]:
        """Every resolved key as "key = value", sorted by key."""
        return manifest_lines({key: getattr(self, key) for key in self.keys()})


def parse_config_text(text: str) -> Dict[str, str]:
    """
    Parse "key = value" lines into a dict of raw strings.

    Raises:
        ConfigError: on a line without '=' or a repeated key
    """
    values: Dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {number}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in values:
            raise ConfigError(f"line {number}: duplicate key {key!r}")
        values[key] = value
    return values


# ============================================================================
# Response Data Models (Recognition Service)
# ============================================================================

class RecognitionResponse(BaseModel):
    """Response model for a classified depth sequence."""

    seq_id: str = Field(description="Sequence identifier from the canonical header")
    predicted_class: int = Field(description="Predicted action id")
    residuals: Dict[int, float] = Field(description="Per-class reconstruction residual q_j")
    ridge: float = Field(description="Fallback ridge added to the system (0 when none)")
    reduced_dim: int = Field(description="PCA dimension of the query vector")


class ModelInfoResponse(BaseModel):
    """Summary of the loaded recognizer bundle."""

    classes: List[int]
    dictionary_size: int
    reduced_dim: int
    input_dim: int
    feature_set: FeatureSet
    mu: float


class ErrorResponse(BaseModel):
    """Body of every 4xx/5xx answer raised through HTTPException."""

    detail: str = Field(description="Error description")
