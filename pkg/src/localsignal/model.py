"""Core domain types: time series, signal shapes, nuisance model and analysis config."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .errors import InputError

_SQRT_NORMAL_CONST = (2.0 * np.pi) ** -0.25


class ShapeKind(str, Enum):
    JUMP = "jump"
    BROKEN_LINE = "broken-line"
    PAIRED_JUMP = "paired"
    BUMP = "bump"


class BumpProfile(str, Enum):
    SQRT_NORMAL = "sqrt-normal-density"
    TRIANGULAR = "triangular"
    DOUBLE_EXPONENTIAL = "double-exponential"
    UNIFORM = "uniform"


class Regression(str, Enum):
    CONSTANT = "constant"
    LINEAR = "linear"

    @property
    def n_params(self) -> int:
        return 1 if self is Regression.CONSTANT else 2


def _profile_value(profile: BumpProfile, x: np.ndarray) -> np.ndarray:
    if profile is BumpProfile.SQRT_NORMAL:
        # square root of the standard normal density
        return _SQRT_NORMAL_CONST * np.exp(-0.25 * x * x)
    if profile is BumpProfile.TRIANGULAR:
        return np.maximum(1.0 - np.abs(x), 0.0)
    if profile is BumpProfile.DOUBLE_EXPONENTIAL:
        return 0.5 * np.exp(-np.abs(x))
    return (np.abs(x) <= 0.5).astype(float)


def _profile_derivative(profile: BumpProfile, x: np.ndarray) -> np.ndarray:
    if profile is BumpProfile.SQRT_NORMAL:
        return -0.5 * x * _SQRT_NORMAL_CONST * np.exp(-0.25 * x * x)
    if profile is BumpProfile.TRIANGULAR:
        return np.where(np.abs(x) < 1.0, -np.sign(x), 0.0)
    if profile is BumpProfile.DOUBLE_EXPONENTIAL:
        return -np.sign(x) * 0.5 * np.exp(-np.abs(x))
    return np.zeros_like(x)


ScaleSpec = Union[None, float, Tuple[float, float]]


@dataclass(frozen=True)
class SignalShape:
    """The local signal kernel ``f`` with an optional scale.

    ``scale`` is a single positive number, or a ``(tau0, tau1)`` range for a
    scale-space search over bumps.
    """

    kind: ShapeKind
    profile: Optional[BumpProfile] = None
    scale: ScaleSpec = None

    def __post_init__(self):
        kind = ShapeKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is ShapeKind.BUMP:
            if self.profile is None:
                raise InputError("bump shape needs a profile")
            object.__setattr__(self, "profile", BumpProfile(self.profile))
        elif self.profile is not None:
            raise InputError(f"profile only applies to bumps, not {kind.value}")
        sc = self.scale
        if sc is not None:
            if isinstance(sc, (tuple, list)):
                if len(sc) != 2:
                    raise InputError("scale range must have two entries")
                t0, t1 = float(sc[0]), float(sc[1])
                if not (0 < t0 < t1):
                    raise InputError("scale range requires 0 < tau0 < tau1")
                object.__setattr__(self, "scale", (t0, t1))
            else:
                if not float(sc) > 0:
                    raise InputError("scale must be positive")
                object.__setattr__(self, "scale", float(sc))

    # convenience constructors
    @classmethod
    def jump(cls) -> "SignalShape":
        return cls(ShapeKind.JUMP)

    @classmethod
    def broken_line(cls) -> "SignalShape":
        return cls(ShapeKind.BROKEN_LINE)

    @classmethod
    def paired_jump(cls, tau: float = 1.0) -> "SignalShape":
        return cls(ShapeKind.PAIRED_JUMP, scale=tau)

    @classmethod
    def bump(cls, profile: Union[str, BumpProfile], scale: ScaleSpec = None) -> "SignalShape":
        return cls(ShapeKind.BUMP, profile=BumpProfile(profile), scale=scale)

    @property
    def continuous(self) -> bool:
        """Whether f is continuous (so Z_t has continuous sample paths)."""
        if self.kind is ShapeKind.BROKEN_LINE:
            return True
        if self.kind is ShapeKind.BUMP:
            return self.profile is not BumpProfile.UNIFORM
        return False

    @property
    def has_scale_range(self) -> bool:
        return isinstance(self.scale, tuple)

    @property
    def tau(self) -> float:
        """Fixed scale used when no scale-space search is requested."""
        if self.scale is None:
            return 1.0
        if isinstance(self.scale, tuple):
            return self.scale[0]
        return self.scale

    def default_regression(self) -> Regression:
        # a slope change needs the trend in the background model, the
        # other shapes are tested against a constant level
        if self.kind is ShapeKind.BROKEN_LINE:
            return Regression.LINEAR
        return Regression.CONSTANT

    def __call__(self, x, tau: float = 1.0):
        return evaluate_shape(self, x, tau)

    def derivative(self, x, tau: float = 1.0):
        """d/dx of f(x / tau)."""
        x = np.asarray(x, dtype=float)
        if self.kind is ShapeKind.BROKEN_LINE:
            return (x > 0).astype(float)
        if self.kind is ShapeKind.BUMP:
            return _profile_derivative(self.profile, x / tau) / tau
        return np.zeros_like(x)

    def describe(self) -> dict:
        out = {"kind": self.kind.value}
        if self.profile is not None:
            out["profile"] = self.profile.value
        if self.scale is not None:
            out["scale"] = list(self.scale) if isinstance(self.scale, tuple) else self.scale
        return out


def evaluate_shape(shape: SignalShape, x, tau: float = 1.0):
    """Evaluate f(x / tau).  Broken lines and jumps ignore tau."""
    if tau <= 0:
        raise InputError("tau must be positive")
    scalar = np.isscalar(x)
    x = np.asarray(x, dtype=float)
    kind = shape.kind
    if kind is ShapeKind.BROKEN_LINE:
        out = np.maximum(x, 0.0)
    elif kind is ShapeKind.JUMP:
        out = (x > 0).astype(float)
    elif kind is ShapeKind.PAIRED_JUMP:
        y = x / tau
        out = ((y > 0) & (y <= 1)).astype(float)
    else:
        out = _profile_value(shape.profile, x / tau)
    return float(out) if scalar else out


@dataclass(frozen=True)
class TimeSeries:
    """Observed values Y_1..Y_m with optional labels (e.g. years)."""

    values: np.ndarray
    labels: Optional[np.ndarray] = None
    name: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size < 3:
            raise InputError(f"series needs at least 3 values, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise InputError("series contains missing or non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.labels is not None:
            lab = np.asarray(self.labels)
            if lab.shape != v.shape:
                raise InputError("labels must have the same length as values")
            object.__setattr__(self, "labels", lab)

    def __len__(self) -> int:
        return self.values.size

    @property
    def m(self) -> int:
        return self.values.size

    def label_of(self, index: int):
        """Label for 1-based position ``index`` (falls back to the index)."""
        if self.labels is None:
            return int(index)
        i = int(round(index)) - 1
        i = min(max(i, 0), self.m - 1)
        lab = self.labels[i]
        return lab.item() if hasattr(lab, "item") else lab


@dataclass(frozen=True)
class RhoSpec:
    """How the AR(1) coefficient is obtained: fixed, null MLE, or MLE on a subset."""

    method: str = "fixed"
    value: float = 0.0
    subset: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        if self.method not in ("fixed", "mle", "subset"):
            raise InputError(f"unknown rho method {self.method!r}")
        if self.method == "fixed" and not abs(self.value) < 1:
            raise InputError("fixed rho must satisfy |rho| < 1")
        if self.method == "subset":
            if self.subset is None or len(self.subset) != 2:
                raise InputError("subset rho needs an index range")
            a, b = int(self.subset[0]), int(self.subset[1])
            if not (1 <= a < b):
                raise InputError("subset range must satisfy 1 <= a < b")
            object.__setattr__(self, "subset", (a, b))

    @classmethod
    def fixed(cls, value: float) -> "RhoSpec":
        return cls("fixed", float(value))

    @classmethod
    def mle(cls) -> "RhoSpec":
        return cls("mle")

    @classmethod
    def on_subset(cls, start: int, stop: int) -> "RhoSpec":
        return cls("subset", subset=(start, stop))

    def describe(self):
        if self.method == "fixed":
            return f"fixed:{self.value:g}"
        if self.method == "mle":
            return "mle"
        return f"subset:{self.subset[0]}..{self.subset[1]}"


SIGMA2_METHODS = ("mse", "diff1", "diff2", "fixed")


@dataclass(frozen=True)
class Sigma2Spec:
    """Variance estimator: null residual MSE, first/second differences, or fixed."""

    method: str = "mse"
    value: Optional[float] = None

    def __post_init__(self):
        if self.method not in SIGMA2_METHODS:
            raise InputError(f"unknown sigma2 method {self.method!r}")
        if self.method == "fixed" and not (self.value is not None and self.value > 0):
            raise InputError("fixed sigma2 must be positive")

    @classmethod
    def fixed(cls, value: float) -> "Sigma2Spec":
        return cls("fixed", float(value))

    def describe(self):
        return f"fixed:{self.value:g}" if self.method == "fixed" else self.method


@dataclass(frozen=True)
class NuisanceModel:
    regression: Regression = Regression.LINEAR
    rho: RhoSpec = field(default_factory=RhoSpec)
    sigma2: Sigma2Spec = field(default_factory=Sigma2Spec)

    def __post_init__(self):
        object.__setattr__(self, "regression", Regression(self.regression))

    def describe(self) -> dict:
        return {
            "regression": self.regression.value,
            "rho": self.rho.describe(),
            "sigma2": self.sigma2.describe(),
        }


@dataclass(frozen=True)
class AnalysisConfig:
    shape: SignalShape = field(default_factory=SignalShape.broken_line)
    nuisance: Optional[NuisanceModel] = None
    m0: int = 5
    n0: int = 5
    h: int = 5
    alpha: float = 0.05
    grid: Optional[Sequence[float]] = None

    def __post_init__(self):
        if self.nuisance is None:
            object.__setattr__(
                self, "nuisance", NuisanceModel(regression=self.shape.default_regression())
            )
        if self.m0 < 3:
            raise InputError("m0 must be at least 3")
        if self.n0 < 1:
            raise InputError("n0 must be at least 1")
        if self.h < 1:
            raise InputError("h must be at least 1")
        if not (0 < self.alpha < 1):
            raise InputError("alpha must lie in (0, 1)")
        if self.grid is not None:
            object.__setattr__(self, "grid", tuple(float(g) for g in self.grid))

    def describe(self) -> dict:
        return {
            "shape": self.shape.describe(),
            "nuisance": self.nuisance.describe(),
            "m0": self.m0,
            "n0": self.n0,
            "h": self.h,
            "alpha": self.alpha,
            "grid": None if self.grid is None else list(self.grid),
        }
