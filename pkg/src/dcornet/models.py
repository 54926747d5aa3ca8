"""
Domain types shared across the package.

Matrices are float64 numpy arrays; the dataclasses carry the array plus the
size metadata the statistics need, and validate their invariants on
construction where that is cheap.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from dcornet.utils import DumpError, InvalidInputError, as_matrix

# =========================================================
# SAMPLE BATCHES AND DISTANCE MATRICES
# =========================================================


@dataclass(frozen=True, eq=False)
class SampleBatch:
    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", as_matrix(self.data))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def p(self) -> int:
        return self.data.shape[1]

    @classmethod
    def of(cls, values) -> "SampleBatch":
        if isinstance(values, SampleBatch):
            return values
        return cls(values)


def as_batch(values, name="batch") -> np.ndarray:
    """Raw float64 n×p array for a SampleBatch or any array-like."""
    if isinstance(values, SampleBatch):
        return values.data
    return as_matrix(values, name)


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    d: np.ndarray

    @property
    def n(self) -> int:
        return self.d.shape[0]


@dataclass(frozen=True, eq=False)
class CenteredDistanceMatrix:
    A: np.ndarray

    @property
    def n(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True, eq=False)
class UCenteredMatrix:
    At: np.ndarray
    # set by project_orthogonal when the conditioning matrix had no energy
    degenerate: bool = False

    @property
    def n(self) -> int:
        return self.At.shape[0]


# =========================================================
# REPORTS
# =========================================================


@dataclass(frozen=True)
class DCorReport:
    dcor: float
    dcov2: float
    dvar2_x: float
    dvar2_y: float
    degenerate: bool

    def to_dict(self):
        return {
            "dcor": self.dcor,
            "dcov2": self.dcov2,
            "dvar2_x": self.dvar2_x,
            "dvar2_y": self.dvar2_y,
            "degenerate": self.degenerate,
        }


@dataclass(frozen=True)
class PDCorReport:
    pdcor2: float
    pdcov: float
    proj_x_norm: float
    proj_y_norm: float
    beta_xz: float
    beta_yz: float
    degenerate: bool

    def to_dict(self):
        return {
            "pdcor2": self.pdcor2,
            "pdcov": self.pdcov,
            "proj_x_norm": self.proj_x_norm,
            "proj_y_norm": self.proj_y_norm,
            "beta_xz": self.beta_xz,
            "beta_yz": self.beta_yz,
            "degenerate": self.degenerate,
        }


@dataclass(frozen=True, eq=False)
class GradResult:
    value: float
    grad: np.ndarray


# =========================================================
# MODELS AND OPTIMIZER SETTINGS
# =========================================================

Layer = Tuple[np.ndarray, np.ndarray]


@dataclass(eq=False)
class MLPParams:
    """Weights are stored (fan_in, fan_out) so a layer computes h @ W + b."""
    layers: List[Layer]
    feature_tap: int
    activation: str = "relu"

    def __post_init__(self):
        if not self.layers:
            raise InvalidInputError("an MLP needs at least one layer")
        if self.activation != "relu":
            raise InvalidInputError(f"unsupported activation {self.activation!r}")
        for i, (w, b) in enumerate(self.layers):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise InvalidInputError(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if i and self.layers[i - 1][0].shape[1] != w.shape[0]:
                raise InvalidInputError(f"layer {i} does not chain onto layer {i - 1}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise InvalidInputError(f"layer {i} has non-finite parameters")
        if not 0 <= self.feature_tap < len(self.layers):
            raise InvalidInputError(
                f"feature_tap {self.feature_tap} outside 0..{len(self.layers) - 1}")

    @property
    def sizes(self) -> List[int]:
        return [self.layers[0][0].shape[0]] + [w.shape[1] for w, _ in self.layers]

    def copy(self) -> "MLPParams":
        return MLPParams([(w.copy(), b.copy()) for w, b in self.layers],
                         self.feature_tap, self.activation)

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in self.layers])


@dataclass(frozen=True)
class BSGConfig:
    eta: float
    T: int
    m: int
    constraint_mode: str = "penalty"
    penalty_weight: float = 1.0
    schedule: str = "sqrt_t"
    objective: str = "ratio"
    trace_every: int = 1
    keep_iterates: bool = False

    def __post_init__(self):
        if not self.eta > 0:
            raise InvalidInputError("eta must be positive")
        if self.T < 1:
            raise InvalidInputError("T must be >= 1")
        if self.m < 2:
            raise InvalidInputError("batch size m must be >= 2")
        if self.constraint_mode not in ("penalty", "none"):
            raise InvalidInputError(f"unknown constraint_mode {self.constraint_mode!r}")
        if self.penalty_weight < 0:
            raise InvalidInputError("penalty_weight must be >= 0")
        if self.schedule not in ("sqrt_t", "constant"):
            raise InvalidInputError(f"unknown schedule {self.schedule!r}")
        if self.objective not in ("ratio", "inner"):
            raise InvalidInputError(f"unknown objective {self.objective!r}")
        if self.trace_every < 1:
            raise InvalidInputError("trace_every must be >= 1")

    @property
    def step_size(self) -> float:
        if self.schedule == "sqrt_t":
            return self.eta / np.sqrt(self.T)
        return self.eta


@dataclass(frozen=True)
class AttackConfig:
    kind: str
    epsilon: float
    pgd_iters: int = 40
    pgd_step: Optional[float] = None
    domain: Optional[Tuple[float, float]] = (0.0, 1.0)

    def __post_init__(self):
        if self.kind not in ("FGM", "PGD"):
            raise InvalidInputError(f"unknown attack kind {self.kind!r}")
        if self.epsilon < 0:
            raise InvalidInputError("epsilon must be >= 0")
        if self.pgd_iters < 1:
            raise InvalidInputError("pgd_iters must be >= 1")
        if self.pgd_step is not None and self.pgd_step < 0:
            raise InvalidInputError("pgd_step must be >= 0")

    @property
    def step(self) -> float:
        return self.epsilon / 10.0 if self.pgd_step is None else self.pgd_step


@dataclass(eq=False)
class BSGTrace:
    """Per-step records of a block stochastic gradient run plus its final iterates.

    Each record holds `step`, `objective` (the coupling value at the X-step),
    `grad_norm_x`, `grad_norm_y` and `skipped` (a degenerate batch).
    """
    records: List[dict] = field(default_factory=list)
    final_x: Optional[MLPParams] = None
    final_y: Optional[MLPParams] = None
    iterates: Optional[List[Tuple[MLPParams, MLPParams]]] = None
    skipped_steps: int = 0

    @property
    def objectives(self) -> List[float]:
        return [r["objective"] for r in self.records if r["objective"] is not None]


# =========================================================
# EXPERIMENT SETTINGS AND RESULTS
# =========================================================


@dataclass(frozen=True)
class PairTrainConfig:
    """With `dc_scale="batch"` the DC term on an m-row minibatch is alpha * m * dCor;
    `"none"` gives alpha * dCor."""
    alpha: float = 0.05
    epochs: int = 20
    schedule: str = "alternating_epochs"
    lr: float = 0.05
    momentum: float = 0.9
    batch_size: int = 128
    seed: int = 0
    dc_scale: str = "batch"

    def __post_init__(self):
        if not np.isfinite(self.alpha) or self.alpha < 0:
            raise InvalidInputError("alpha must be finite and >= 0")
        if self.epochs < 1:
            raise InvalidInputError("epochs must be >= 1")
        if self.schedule != "alternating_epochs":
            raise InvalidInputError(f"unknown schedule {self.schedule!r}")
        if self.batch_size < 2:
            raise InvalidInputError("batch_size must be >= 2")
        if self.dc_scale not in ("batch", "none"):
            raise InvalidInputError(f"unknown dc_scale {self.dc_scale!r}")

    def dc_weight(self, batch_rows: int) -> float:
        return self.alpha * batch_rows if self.dc_scale == "batch" else self.alpha


@dataclass(frozen=True)
class DisentangleWeights:
    lambda_cls: float = 0.1
    lambda_ent: float = 0.01
    lambda_res: float = 1e-5

    def __post_init__(self):
        if min(self.lambda_cls, self.lambda_ent, self.lambda_res) < 0:
            raise InvalidInputError("loss weights must be >= 0")


@dataclass(frozen=True)
class FinetuneConfig:
    alpha: float = 1.0
    lr: float = 1e-5
    epochs: int = 1
    momentum: float = 0.9
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.alpha) or self.alpha < 0:
            raise InvalidInputError("alpha must be finite and >= 0")
        if self.epochs < 1:
            raise InvalidInputError("epochs must be >= 1")
        if self.batch_size < 4:
            raise InvalidInputError("partial distance correlation needs batch_size >= 4")


@dataclass(frozen=True)
class DatasetConfig:
    n_classes: int = 10
    dim: int = 64
    n_train: int = 5000
    n_test: int = 1000
    center_scale: float = 1.0
    spread: float = 2.5

    def __post_init__(self):
        if self.n_classes < 2:
            raise InvalidInputError("need at least two classes")
        if self.dim < 1 or self.n_train < 1 or self.n_test < 1:
            raise InvalidInputError("dim, n_train and n_test must be positive")
        if self.spread <= 0:
            raise InvalidInputError("spread must be positive")


@dataclass(eq=False)
class Dataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray

    @property
    def n_classes(self) -> int:
        return int(max(self.y_train.max(), self.y_test.max())) + 1

    @property
    def dim(self) -> int:
        return self.x_train.shape[1]


@dataclass(eq=False)
class HeatmapResult:
    values: np.ndarray
    row_labels: List[str]
    col_labels: List[str]
    n_samples: int


# =========================================================
# FEATURE DUMPS
# =========================================================

NUMPY_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}


@dataclass(frozen=True)
class LayerEntry:
    name: str
    n: int
    p: int
    dtype: str
    offset: int

    @property
    def nbytes(self) -> int:
        return self.n * self.p * NUMPY_DTYPES[self.dtype].itemsize


@dataclass(eq=False)
class FeatureDump:
    model_name: str
    layers: List[LayerEntry]
    sample_ids: List[str]
    arrays: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    format_version: int = 1

    @property
    def layer_names(self) -> List[str]:
        return [entry.name for entry in self.layers]

    def features(self, name: str) -> np.ndarray:
        """Layer features promoted to float64 for computation."""
        if name not in self.arrays:
            raise DumpError(f"layer {name!r} not in dump {self.model_name!r}", code="missing_layer")
        return np.asarray(self.arrays[name], dtype=np.float64)


# =========================================================
# RUN CONFIGURATION
# =========================================================


@dataclass(frozen=True)
class ModelConfig:
    hidden: Tuple[int, ...] = (128, 128)
    feature_tap: Optional[int] = None

    def sizes(self, dim: int, n_classes: int) -> List[int]:
        return [dim, *self.hidden, n_classes]


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    output_dir: str = "runs"
    dataset: DatasetConfig = DatasetConfig()
    model: ModelConfig = ModelConfig()
    pair: PairTrainConfig = PairTrainConfig()
    attacks: Tuple[AttackConfig, ...] = ()
    bsg: Optional[BSGConfig] = None
