from enum import Enum
from typing import Any, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Seed = int
U64 = 2**64


def _as_array(value: Any, ndim: int, name: str) -> np.ndarray:
    arr = np.array(value, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


class Activation(str, Enum):
    INDICATOR = "indicator"
    RELU = "relu"
    IDENTITY = "identity"


class OutputRule(str, Enum):
    ARGMAX = "argmax"
    IDENTITY = "identity"


class LayerSpec(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    weight: np.ndarray
    bias: np.ndarray
    activation: Activation = Activation.RELU

    @model_validator(mode="before")
    @classmethod
    def coerce_arrays(cls, data: Any) -> Any:
        if isinstance(data, dict):
            data = dict(data)
            data["weight"] = _as_array(data.get("weight"), 2, "weight")
            data["bias"] = _as_array(data.get("bias"), 1, "bias")
            if data["weight"].shape[0] != data["bias"].shape[0]:
                raise ValueError(
                    f"bias length {data['bias'].shape[0]} does not match weight rows {data['weight'].shape[0]}"
                )
        return data

    @property
    def rows(self) -> int:
        return self.weight.shape[0]

    @property
    def cols(self) -> int:
        return self.weight.shape[1]


class NetworkSpec(BaseModel):
    """Feedforward network description.

    With ``output_rule=argmax`` the last layer is the scoring layer and every
    layer before it is hidden. With ``output_rule=identity`` all layers are hidden
    and the prediction is the argmax of the last layer's activations.
    """

    model_config = ConfigDict(frozen=True)

    layers: List[LayerSpec]
    output_rule: OutputRule = OutputRule.ARGMAX

    @model_validator(mode="after")
    def check_chain(self) -> "NetworkSpec":
        if not self.layers:
            raise ValueError("network needs at least one layer")
        for k in range(1, len(self.layers)):
            if self.layers[k].cols != self.layers[k - 1].rows:
                raise ValueError(
                    f"layer {k} expects {self.layers[k].cols} inputs but layer {k - 1} has {self.layers[k - 1].rows} outputs"
                )
        if self.output_rule == OutputRule.ARGMAX and len(self.layers) < 2:
            raise ValueError("argmax networks need at least one hidden layer and an output layer")
        return self

    @property
    def input_dim(self) -> int:
        return self.layers[0].cols

    @property
    def hidden_layers(self) -> List[LayerSpec]:
        if self.output_rule == OutputRule.ARGMAX:
            return self.layers[:-1]
        return list(self.layers)

    @property
    def layer_of(self) -> np.ndarray:
        return np.concatenate(
            [np.full(layer.rows, k, dtype=np.int64) for k, layer in enumerate(self.hidden_layers)]
        )

    @property
    def hidden_size(self) -> int:
        return int(sum(layer.rows for layer in self.hidden_layers))


class GaussianPairConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    sigma: float = Field(1.0, gt=0)
    eta: float = Field(0.05, gt=0, lt=1)
    input_dim: int = Field(2, ge=2)
    which: Literal["D1", "D2", "D3"] = "D1"
    sample_count: int = Field(1000, ge=1)
    seed: Seed = Field(0, ge=0, lt=U64)

    @property
    def scale(self) -> float:
        return 2.0 * self.sigma * float(np.sqrt(np.log(1.0 / self.eta)))

    def means(self) -> np.ndarray:
        """Rows are mu_1..mu_4 = 2(+-e2 +- e1) sigma sqrt(log(1/eta))."""
        signs = np.array([[-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0], [1.0, 1.0]])
        mu = np.zeros((4, self.input_dim))
        mu[:, :2] = signs * self.scale
        return mu


class TriggerSpec(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    mask: np.ndarray
    pattern: np.ndarray
    target_label: int = 0

    @model_validator(mode="before")
    @classmethod
    def coerce_arrays(cls, data: Any) -> Any:
        if isinstance(data, dict):
            data = dict(data)
            data["mask"] = _as_array(data.get("mask"), 1, "mask")
            data["pattern"] = _as_array(data.get("pattern"), 1, "pattern")
            if data["mask"].shape != data["pattern"].shape:
                raise ValueError("mask and pattern must have the same dimension")
            if np.any(data["mask"] < 0) or np.any(data["mask"] > 1):
                raise ValueError("mask entries must lie in [0, 1]")
        return data

    @property
    def dim(self) -> int:
        return self.mask.shape[0]


class PerturbConfig(BaseModel):
    """Pixel-wise perturbation settings.

    ``ranges`` holds one (lower, upper) pair per image; a single pair is reused for
    every image, and scalar bounds are broadcast over all coordinates.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    trials_per_image: int = Field(200, ge=1)
    ranges: List[Tuple[Any, Any]] = Field(default_factory=lambda: [(0.0, 1.0)], validate_default=True)
    patch_size: int = Field(1, ge=1)
    seed: Seed = Field(0, ge=0, lt=U64)

    @field_validator("ranges")
    @classmethod
    def check_ranges(cls, ranges: List[Tuple[Any, Any]]) -> List[Tuple[Any, Any]]:
        if not ranges:
            raise ValueError("at least one (lower, upper) range is required")
        checked = []
        for i, (lower, upper) in enumerate(ranges):
            lo = np.atleast_1d(np.array(lower, dtype=np.float64))
            hi = np.atleast_1d(np.array(upper, dtype=np.float64))
            if np.any(lo > hi):
                raise ValueError(f"range {i}: lower exceeds upper")
            checked.append((lo, hi))
        return checked

    def range_for(self, image_index: int, dim: int) -> Tuple[np.ndarray, np.ndarray]:
        lo, hi = self.ranges[image_index if len(self.ranges) > 1 else 0]
        return np.broadcast_to(lo, (dim,)), np.broadcast_to(hi, (dim,))

    def with_seed(self, seed: Seed) -> "PerturbConfig":
        return self.model_copy(update={"seed": seed % U64})


class TrainConfig(BaseModel):
    """Training settings for the tiny ReLU networks of the model zoo."""

    model_config = ConfigDict(frozen=True)

    hidden: Tuple[int, ...] = (8, 8)
    epochs: int = Field(400, ge=1)
    learning_rate: float = Field(0.1, gt=0)
    seed: Seed = Field(0, ge=0, lt=U64)


class ZooConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_clean: int = Field(40, ge=1)
    n_trojan: int = Field(40, ge=1)
    samples_per_model: int = Field(400, ge=2)
    sigma: float = Field(1.0, gt=0)
    eta: float = Field(0.05, gt=0, lt=1)
    input_dim: int = Field(2, ge=2)
    train: TrainConfig = Field(default_factory=TrainConfig)
    seed: Seed = Field(0, ge=0, lt=U64)


class DetectorConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    hidden_size: int = Field(32, gt=0)
    epochs: int = Field(500, gt=0)
    learning_rate: float = Field(0.01, gt=0)
    l2: float = Field(1e-4, gt=0)
    seed: Seed = Field(0, ge=0, lt=U64)
    train_fraction: float = Field(0.8, gt=0, lt=1)


class ModelEntry(BaseModel):
    """One row of a model zoo: an identifier, the network and its label."""

    model_config = ConfigDict(frozen=True)

    model_id: str
    network: NetworkSpec
    label: Optional[int] = None
