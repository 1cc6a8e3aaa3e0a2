"""Regressors mapping feature vectors to predicted human quality.

Two aggregator kinds: ordinary least squares with intercept, and a tanh
feedforward network (default: one hidden layer of width 10, linear output
head) trained with mini-batch Adam on half squared error.  Training is
fully deterministic given the seed; trained models serialize to JSON and
round-trip exactly.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    GROUP_WIDTH,
    FeatureGroup,
    FeatureMask,
    FeatureVector,
    project,
    validate_features,
)
from .errors import (
    DataError,
    DivergenceError,
    FeatureValidationError,
    ShapeError,
    SingularSystemError,
)

STDDEV_FLOOR = 1e-8
MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for aggregator training.

    ``hidden_layers`` > 1 stacks additional width-``hidden_width`` tanh
    layers; ``output_activation`` may be ``"linear"`` or ``"tanh"``.
    ``log_perplexity`` feeds ln(perplexity) to the regressor instead of the
    raw value.
    """

    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    loss: str = "mse"
    hidden_width: int = 10
    hidden_layers: int = 1
    output_activation: str = "linear"
    log_perplexity: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("adam betas must lie in [0, 1)")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.loss != "mse":
            raise ValueError(f"unsupported loss: {self.loss}")
        if self.hidden_width < 1 or self.hidden_layers < 1:
            raise ValueError("hidden_width and hidden_layers must be >= 1")
        if self.output_activation not in ("linear", "tanh"):
            raise ValueError(f"unsupported output activation: {self.output_activation}")

    def digest(self) -> str:
        payload = {f.name: getattr(self, f.name) for f in fields(self)}
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class StandardizationStats:
    """Per-dimension mean and stddev used to condition regressor inputs."""

    mean: np.ndarray
    stddev: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        stddev = np.asarray(self.stddev, dtype=np.float64)
        if mean.shape != stddev.shape or mean.ndim != 1:
            raise ShapeError("standardization stats: mean/stddev shape mismatch")
        if np.any(stddev < STDDEV_FLOOR):
            raise ShapeError(f"standardization stddev below floor {STDDEV_FLOOR}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "stddev", stddev)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def apply(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.float64)
        if rows.shape[-1] != self.dim:
            raise ShapeError(
                f"standardize: expected dim {self.dim}, got {rows.shape[-1]}"
            )
        return (rows - self.mean) / self.stddev


def fit_standardization(rows: Sequence[Sequence[float]]) -> StandardizationStats:
    """Per-dimension sample mean/stddev (ddof=1) with an epsilon floor."""
    arr = np.asarray(rows, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError("fit_standardization: rows must share one dimension")
    if arr.shape[0] < 2:
        raise ShapeError("fit_standardization: need at least 2 rows")
    mean = arr.mean(axis=0)
    stddev = arr.std(axis=0, ddof=1)
    stddev = np.maximum(stddev, STDDEV_FLOOR)
    return StandardizationStats(mean=mean, stddev=stddev)


@dataclass(frozen=True)
class LinearParams:
    """Least-squares coefficients: prediction = w.x + b."""

    w: np.ndarray
    b: float

    def __post_init__(self):
        object.__setattr__(self, "w", np.asarray(self.w, dtype=np.float64))

    @property
    def input_dim(self) -> int:
        return self.w.shape[0]


def linreg_fit(X: Sequence[Sequence[float]], y: Sequence[float]) -> LinearParams:
    """Least squares with intercept via the normal equations.

    Singular systems get one ridge rescue (lambda = 1e-8 on the Gram
    diagonal); if that still fails a :class:`SingularSystemError` is raised.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ShapeError("linreg_fit: X must be 2-D with one y per row")
    n, dim = X.shape
    if n < dim + 1:
        raise ShapeError(f"linreg_fit: need at least {dim + 1} rows, got {n}")
    A = np.hstack([X, np.ones((n, 1))])
    gram = A.T @ A
    rhs = A.T @ y
    try:
        coef = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        try:
            coef = np.linalg.solve(gram + 1e-8 * np.eye(dim + 1), rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularSystemError(f"linreg_fit: {exc}") from None
    if not np.all(np.isfinite(coef)):
        raise SingularSystemError("linreg_fit: non-finite solution")
    return LinearParams(w=coef[:-1], b=float(coef[-1]))


@dataclass(frozen=True)
class MlpParams:
    """Tanh feedforward network parameters.

    Layers: input -> w1/b1 -> tanh -> [extra hidden layers] -> w2/b2 ->
    output activation.  ``extra`` holds (weight, bias) pairs for hidden
    layers beyond the first; it is empty for the default depth-1 network.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float
    extra: tuple[tuple[np.ndarray, np.ndarray], ...] = ()
    output_activation: str = "linear"

    def __post_init__(self):
        w1 = np.asarray(self.w1, dtype=np.float64)
        b1 = np.asarray(self.b1, dtype=np.float64)
        w2 = np.asarray(self.w2, dtype=np.float64)
        extra = tuple(
            (np.asarray(w, dtype=np.float64), np.asarray(b, dtype=np.float64))
            for w, b in self.extra
        )
        if w1.ndim != 2 or b1.shape != (w1.shape[0],):
            raise ShapeError("mlp params: w1/b1 shapes inconsistent")
        width = w1.shape[0]
        for w, b in extra:
            if w.shape != (width, width) or b.shape != (width,):
                raise ShapeError("mlp params: extra layer shapes inconsistent")
        if w2.shape != (width,):
            raise ShapeError("mlp params: w2 shape inconsistent")
        arrays = [w1, b1, w2, np.asarray([self.b2])]
        arrays.extend(a for pair in extra for a in pair)
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise ShapeError("mlp params: non-finite values")
        if self.output_activation not in ("linear", "tanh"):
            raise ShapeError(f"mlp params: bad output activation {self.output_activation}")
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "w2", w2)
        object.__setattr__(self, "extra", extra)

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_width(self) -> int:
        return self.w1.shape[0]

    def to_flat(self) -> np.ndarray:
        parts = [self.w1.ravel(), self.b1]
        for w, b in self.extra:
            parts.append(w.ravel())
            parts.append(b)
        parts.append(self.w2)
        parts.append(np.asarray([self.b2]))
        return np.concatenate(parts)

    def from_flat(self, flat: np.ndarray) -> "MlpParams":
        """Rebuild params of this shape from a flat vector (pack order fixed)."""
        flat = np.asarray(flat, dtype=np.float64)
        width, dim = self.w1.shape
        pos = 0

        def take(n):
            nonlocal pos
            out = flat[pos : pos + n]
            pos += n
            return out

        w1 = take(width * dim).reshape(width, dim)
        b1 = take(width)
        extra = []
        for _ in self.extra:
            extra.append((take(width * width).reshape(width, width), take(width)))
        w2 = take(width)
        b2 = float(take(1)[0])
        if pos != flat.shape[0]:
            raise ShapeError("from_flat: length mismatch")
        return MlpParams(
            w1=w1, b1=b1, w2=w2, b2=b2, extra=tuple(extra),
            output_activation=self.output_activation,
        )


def _hidden_activations(params: MlpParams, x: np.ndarray) -> list[np.ndarray]:
    """Per-layer tanh activations for one input (1-D) or a batch (2-D)."""
    hs = [np.tanh(x @ params.w1.T + params.b1)]
    for w, b in params.extra:
        hs.append(np.tanh(hs[-1] @ w.T + b))
    return hs


def mlp_forward(params: MlpParams, x: Sequence[float]) -> float:
    """Network output for one input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.input_dim,):
        raise ShapeError(
            f"mlp_forward: expected input dim {params.input_dim}, got {x.shape}"
        )
    h = _hidden_activations(params, x)[-1]
    u = float(h @ params.w2 + params.b2)
    return math.tanh(u) if params.output_activation == "tanh" else u


@dataclass(frozen=True)
class MlpGrads:
    """Gradients of 0.5*(forward(x) - target)^2, same shapes as MlpParams."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float
    extra: tuple[tuple[np.ndarray, np.ndarray], ...] = ()

    def to_flat(self) -> np.ndarray:
        parts = [self.w1.ravel(), self.b1]
        for w, b in self.extra:
            parts.append(w.ravel())
            parts.append(b)
        parts.append(self.w2)
        parts.append(np.asarray([self.b2]))
        return np.concatenate(parts)


def mlp_backward(params: MlpParams, x: Sequence[float], target: float) -> MlpGrads:
    """Analytic gradients of the half squared error at one sample."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.input_dim,):
        raise ShapeError(
            f"mlp_backward: expected input dim {params.input_dim}, got {x.shape}"
        )
    hs = _hidden_activations(params, x)
    u = float(hs[-1] @ params.w2 + params.b2)
    if params.output_activation == "tanh":
        f = math.tanh(u)
        g_u = (f - target) * (1.0 - f * f)
    else:
        g_u = u - target

    grad_w2 = g_u * hs[-1]
    grad_b2 = g_u
    delta = g_u * params.w2 * (1.0 - hs[-1] ** 2)

    grad_extra: list[tuple[np.ndarray, np.ndarray]] = []
    for idx in range(len(params.extra) - 1, -1, -1):
        w, _ = params.extra[idx]
        below = hs[idx]  # activation feeding this layer
        grad_extra.append((np.outer(delta, below), delta))
        delta = (w.T @ delta) * (1.0 - below ** 2)
    grad_extra.reverse()

    grad_w1 = np.outer(delta, x)
    grad_b1 = delta
    return MlpGrads(
        w1=grad_w1, b1=grad_b1, w2=grad_w2, b2=grad_b2, extra=tuple(grad_extra)
    )


def _batch_forward(params: MlpParams, X: np.ndarray) -> np.ndarray:
    h = _hidden_activations(params, X)[-1]
    u = h @ params.w2 + params.b2
    return np.tanh(u) if params.output_activation == "tanh" else u


def _batch_gradient(params: MlpParams, X: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Flat gradient of mean_i 0.5*(f_i - t_i)^2 over the batch."""
    n = X.shape[0]
    hs = _hidden_activations(params, X)
    u = hs[-1] @ params.w2 + params.b2
    if params.output_activation == "tanh":
        f = np.tanh(u)
        g_u = (f - t) * (1.0 - f * f)
    else:
        g_u = u - t

    grad_w2 = hs[-1].T @ g_u / n
    grad_b2 = float(g_u.mean())
    delta = (g_u[:, None] * params.w2[None, :]) * (1.0 - hs[-1] ** 2)

    grad_extra: list[tuple[np.ndarray, np.ndarray]] = []
    for idx in range(len(params.extra) - 1, -1, -1):
        w, _ = params.extra[idx]
        below = hs[idx]
        grad_extra.append((delta.T @ below / n, delta.mean(axis=0)))
        delta = (delta @ w) * (1.0 - below ** 2)
    grad_extra.reverse()

    grad_w1 = delta.T @ X / n
    grad_b1 = delta.mean(axis=0)
    return MlpGrads(
        w1=grad_w1, b1=grad_b1, w2=grad_w2, b2=grad_b2, extra=tuple(grad_extra)
    ).to_flat()


@dataclass(frozen=True)
class AdamState:
    """First/second moment accumulators, elementwise over a parameter array."""

    m: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros(cls, shape) -> "AdamState":
        return cls(m=np.zeros(shape), v=np.zeros(shape))


def adam_step(
    state: AdamState,
    params: np.ndarray,
    grads: np.ndarray,
    config: TrainConfig,
    t: int,
) -> tuple[np.ndarray, AdamState]:
    """One Adam update with bias-corrected moments; ``t`` is 1-based."""
    if t < 1:
        raise ValueError(f"adam_step: step index must be >= 1, got {t}")
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ShapeError("adam_step: shape mismatch")
    b1, b2 = config.adam_beta1, config.adam_beta2
    m = b1 * state.m + (1.0 - b1) * grads
    v = b2 * state.v + (1.0 - b2) * grads**2
    m_hat = m / (1.0 - b1**t)
    v_hat = v / (1.0 - b2**t)
    updated = params - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_epsilon)
    return updated, AdamState(m=m, v=v)


@dataclass(frozen=True)
class TrainedAggregator:
    """A fitted regressor plus the input conditioning it was trained with."""

    kind: str
    mask: FeatureMask
    stats: StandardizationStats
    params: LinearParams | MlpParams
    log_perplexity: bool
    config_digest: str

    def __post_init__(self):
        if self.kind not in ("linreg", "mlp"):
            raise ValueError(f"unknown aggregator kind: {self.kind}")
        if self.mask.dim != self.params.input_dim or self.mask.dim != self.stats.dim:
            raise ShapeError(
                "trained aggregator: mask dimensionality does not match parameters"
            )

    def digest(self) -> str:
        """Content hash of the serialized model."""
        return hashlib.sha256(
            json.dumps(model_to_dict(self), sort_keys=True).encode()
        ).hexdigest()


def _ppl_slice(mask: FeatureMask) -> slice | None:
    """Positions of the perplexity coordinates within the projected vector."""
    if FeatureGroup.SI not in mask.groups:
        return None
    offset = 0
    for group in mask.ordered_groups:
        if group is FeatureGroup.SI:
            return slice(offset, offset + 2)
        offset += GROUP_WIDTH[group]
    return None


def transform_rows(
    rows: np.ndarray, mask: FeatureMask, log_perplexity: bool
) -> np.ndarray:
    """Apply the model's input transform (currently: ln of perplexities)."""
    rows = np.asarray(rows, dtype=np.float64)
    if not log_perplexity:
        return rows
    sl = _ppl_slice(mask)
    if sl is None:
        return rows
    out = rows.copy()
    out[..., sl] = np.log(out[..., sl])
    return out


def _init_mlp(dim: int, config: TrainConfig, rng: np.random.Generator) -> MlpParams:
    width = config.hidden_width
    w1 = rng.normal(0.0, 1.0 / math.sqrt(dim), size=(width, dim))
    extra = tuple(
        (rng.normal(0.0, 1.0 / math.sqrt(width), size=(width, width)), np.zeros(width))
        for _ in range(config.hidden_layers - 1)
    )
    w2 = rng.normal(0.0, 1.0 / math.sqrt(width), size=width)
    return MlpParams(
        w1=w1,
        b1=np.zeros(width),
        w2=w2,
        b2=0.0,
        extra=extra,
        output_activation=config.output_activation,
    )


def train(
    dataset: Sequence[tuple[FeatureVector, float]],
    mask: FeatureMask,
    kind: str,
    config: TrainConfig,
) -> TrainedAggregator:
    """Fit an aggregator on (feature vector, human score) pairs.

    Standardization is fit on the training rows after the perplexity log
    transform.  MLP training shuffles mini-batches with a seeded RNG each
    epoch and returns the final-epoch parameters; a non-finite epoch loss
    raises :class:`DivergenceError`.
    """
    if kind not in ("linreg", "mlp"):
        raise ValueError(f"unknown aggregator kind: {kind}")
    if len(dataset) < 10:
        raise DataError(f"train: need at least 10 samples, got {len(dataset)}")
    for fv, score in dataset:
        if not 0.0 <= score <= 1.0:
            raise DataError(f"train: target {score} outside [0,1]")
        violations = validate_features(fv)
        if violations:
            raise FeatureValidationError(violations)

    raw = np.asarray([project(fv, mask) for fv, _ in dataset], dtype=np.float64)
    y = np.asarray([score for _, score in dataset], dtype=np.float64)
    rows = transform_rows(raw, mask, config.log_perplexity)
    stats = fit_standardization(rows)
    X = stats.apply(rows)

    if kind == "linreg":
        params: LinearParams | MlpParams = linreg_fit(X, y)
    else:
        params = _fit_mlp(X, y, config)

    return TrainedAggregator(
        kind=kind,
        mask=mask,
        stats=stats,
        params=params,
        log_perplexity=config.log_perplexity,
        config_digest=config.digest(),
    )


def _fit_mlp(X: np.ndarray, y: np.ndarray, config: TrainConfig) -> MlpParams:
    rng = np.random.default_rng(config.seed)
    params = _init_mlp(X.shape[1], config, rng)
    flat = params.to_flat()
    state = AdamState.zeros(flat.shape)
    n = X.shape[0]
    t = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            grads = _batch_gradient(params, X[idx], y[idx])
            t += 1
            flat, state = adam_step(state, flat, grads, config, t)
            if not np.all(np.isfinite(flat)):
                raise DivergenceError(epoch)
            params = params.from_flat(flat)
        residual = _batch_forward(params, X) - y
        epoch_mse = float(np.mean(residual**2))
        if not math.isfinite(epoch_mse):
            raise DivergenceError(epoch)
    return params


def training_mse(model: TrainedAggregator, dataset: Sequence[tuple[FeatureVector, float]]) -> float:
    """Mean squared error of the model over a dataset."""
    preds = np.asarray([predict_raw(model, fv) for fv, _ in dataset])
    targets = np.asarray([score for _, score in dataset])
    return float(np.mean((preds - targets) ** 2))


def predict_raw(model: TrainedAggregator, fv: FeatureVector) -> float:
    """Unbounded regressor output for one feature vector (no calibration)."""
    violations = validate_features(fv)
    if violations:
        raise FeatureValidationError(violations)
    row = np.asarray(project(fv, model.mask), dtype=np.float64)
    row = transform_rows(row, model.mask, model.log_perplexity)
    x = model.stats.apply(row)
    if model.kind == "linreg":
        assert isinstance(model.params, LinearParams)
        return float(x @ model.params.w + model.params.b)
    assert isinstance(model.params, MlpParams)
    return mlp_forward(model.params, x)


def model_to_dict(model: TrainedAggregator) -> dict:
    """JSON-ready representation; floats keep full precision via repr."""
    if isinstance(model.params, LinearParams):
        params_doc: dict = {"w": model.params.w.tolist(), "b": model.params.b}
    else:
        params_doc = {
            "w1": model.params.w1.tolist(),
            "b1": model.params.b1.tolist(),
            "w2": model.params.w2.tolist(),
            "b2": model.params.b2,
            "extra": [[w.tolist(), b.tolist()] for w, b in model.params.extra],
            "output_activation": model.params.output_activation,
        }
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": model.kind,
        "mask": [g.value for g in model.mask.ordered_groups],
        "stats": {
            "mean": model.stats.mean.tolist(),
            "stddev": model.stats.stddev.tolist(),
        },
        "params": params_doc,
        "log_perplexity": model.log_perplexity,
        "config_digest": model.config_digest,
    }


def model_from_dict(doc: dict) -> TrainedAggregator:
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version: {version}")
    mask = FeatureMask.of(*doc["mask"])
    stats = StandardizationStats(
        mean=np.asarray(doc["stats"]["mean"]),
        stddev=np.asarray(doc["stats"]["stddev"]),
    )
    p = doc["params"]
    params: LinearParams | MlpParams
    if doc["kind"] == "linreg":
        params = LinearParams(w=np.asarray(p["w"]), b=float(p["b"]))
    else:
        params = MlpParams(
            w1=np.asarray(p["w1"]),
            b1=np.asarray(p["b1"]),
            w2=np.asarray(p["w2"]),
            b2=float(p["b2"]),
            extra=tuple(
                (np.asarray(w), np.asarray(b)) for w, b in p.get("extra", [])
            ),
            output_activation=p.get("output_activation", "linear"),
        )
    return TrainedAggregator(
        kind=doc["kind"],
        mask=mask,
        stats=stats,
        params=params,
        log_perplexity=bool(doc["log_perplexity"]),
        config_digest=doc["config_digest"],
    )


def save_model(model: TrainedAggregator, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(model_to_dict(model), sort_keys=True, indent=1) + "\n",
        encoding="utf-8",
    )


def load_model(path: str | Path) -> TrainedAggregator:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
