"""Plant models, sampling schedules, and the physical/cyber split.

Model files are a single JSON document:

    {"name": str, "n": int, "A": [[..]], "diffusion": [[[..]], ...],
     "B_bar": [[..]]                     # closed feedback, or
     "B_hat": [[..]], "K_hat": [[..]]?   # input map (+ optional gain)
     "nonlinearity": {"type": "planar_sin"}?,
     "x0": [..]? }

Unknown keys are rejected.  Exactly one of B_bar / B_hat must be present;
a model with B_hat but no K_hat is in design mode (gain to be synthesized).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import CallbackError, DomainError, FormatError, ValidationError

_MODEL_KEYS = {"name", "n", "A", "diffusion", "B_bar", "B_hat", "K_hat", "nonlinearity", "x0"}

# envelope of the planar sine nonlinearity: phi^T Q phi <= x^T E1^T Q E1 x for any Q > 0
PLANAR_ENVELOPE = np.array([[0.25, 0.0], [1.0, 0.0]])


def _matrix(value, rows: int, cols: int, what: str) -> np.ndarray:
    m = np.asarray(value, dtype=float)
    if m.shape != (rows, cols):
        raise ValidationError(f"{what}: expected shape ({rows}, {cols}), got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValidationError(f"{what}: entries must be finite")
    return m


@dataclass(frozen=True)
class LinearSampledModel:
    """Linear plant dx = [A x + B_bar x(t_*)] dt + sum_j G_j x dB_j.

    Either the closed feedback B_bar is given directly, or an input map B_hat
    (with optional gain K_hat, so that B_bar = B_hat @ K_hat).
    """

    name: str
    n: int
    A: np.ndarray
    diffusion: tuple
    B_hat: Optional[np.ndarray] = None
    K_hat: Optional[np.ndarray] = None
    B_bar_explicit: Optional[np.ndarray] = None
    x0: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("state dimension must be >= 1")
        _matrix(self.A, self.n, self.n, "A")
        for j, g in enumerate(self.diffusion):
            _matrix(g, self.n, self.n, f"diffusion[{j}]")
        has_bbar = self.B_bar_explicit is not None
        has_bhat = self.B_hat is not None
        if has_bbar == has_bhat:
            raise ValidationError("exactly one of B_bar or B_hat must be populated")
        if has_bbar:
            _matrix(self.B_bar_explicit, self.n, self.n, "B_bar")
            if self.K_hat is not None:
                raise ValidationError("K_hat requires B_hat")
        else:
            if self.B_hat.ndim != 2 or self.B_hat.shape[0] != self.n:
                raise ValidationError(f"B_hat: expected {self.n} rows, got shape {self.B_hat.shape}")
            if self.K_hat is not None:
                _matrix(self.K_hat, self.B_hat.shape[1], self.n, "K_hat")
        if self.x0 is not None and np.asarray(self.x0).shape != (self.n,):
            raise ValidationError("x0: wrong length")

    @property
    def m(self) -> int:
        return len(self.diffusion)

    @property
    def design_mode(self) -> bool:
        return self.B_hat is not None and self.K_hat is None

    @property
    def B_bar(self) -> Optional[np.ndarray]:
        """Closed feedback matrix, or None while the gain is unresolved."""
        if self.B_bar_explicit is not None:
            return self.B_bar_explicit
        if self.K_hat is not None:
            return self.B_hat @ self.K_hat
        return None

    def with_gain(self, K_hat: np.ndarray) -> "LinearSampledModel":
        if self.B_hat is None:
            raise ValidationError("model has no input map to apply a gain to")
        return replace(self, K_hat=_matrix(K_hat, self.B_hat.shape[1], self.n, "K_hat"))

    def drift(self, x: np.ndarray) -> np.ndarray:
        """Open-loop drift A x (batch-capable: x may be (..., n))."""
        return x @ self.A.T


@dataclass(frozen=True)
class NonlinearPlanarModel:
    """Planar plant with the bounded sine nonlinearity and scalar input.

    drift(x) = A_bar x + phi(x),   phi(x) = [x1 sin(K x * x2)/4, x1 sin(K x * x2)],
    with A_bar = [[1/4, 1], [0, 0]] and input map B_hat = [0, 1]^T.  The
    envelope phi^T Q phi <= x^T E1^T Q E1 x holds structurally since |sin| <= 1.
    """

    name: str
    K_hat: Optional[np.ndarray] = None
    x0: Optional[np.ndarray] = None
    A_bar: np.ndarray = field(default_factory=lambda: np.array([[0.25, 1.0], [0.0, 0.0]]))
    B_hat: np.ndarray = field(default_factory=lambda: np.array([[0.0], [1.0]]))

    n = 2

    def __post_init__(self):
        _matrix(self.A_bar, 2, 2, "A_bar")
        _matrix(self.B_hat, 2, 1, "B_hat")
        if self.K_hat is not None:
            _matrix(self.K_hat, 1, 2, "K_hat")
        if self.x0 is not None and np.asarray(self.x0).shape != (2,):
            raise ValidationError("x0: wrong length")

    @property
    def m(self) -> int:
        return 0

    @property
    def diffusion(self) -> tuple:
        return ()

    @property
    def design_mode(self) -> bool:
        return self.K_hat is None

    @property
    def envelope(self) -> np.ndarray:
        return PLANAR_ENVELOPE.copy()

    @property
    def B_bar(self) -> Optional[np.ndarray]:
        if self.K_hat is None:
            return None
        return self.B_hat @ self.K_hat

    def with_gain(self, K_hat: np.ndarray) -> "NonlinearPlanarModel":
        return replace(self, K_hat=_matrix(K_hat, 1, 2, "K_hat"))

    def phi(self, x: np.ndarray) -> np.ndarray:
        """Sine nonlinearity; requires a resolved gain. Batch-capable."""
        if self.K_hat is None:
            raise ValidationError("phi requires a resolved gain")
        x = np.asarray(x, dtype=float)
        u = x @ self.K_hat[0]
        s = x[..., 0] * np.sin(u * x[..., 1])
        return np.stack([0.25 * s, s], axis=-1)

    def drift(self, x: np.ndarray) -> np.ndarray:
        return x @ self.A_bar.T + self.phi(x)


Model = Union[LinearSampledModel, NonlinearPlanarModel]


@dataclass(frozen=True)
class SamplingSchedule:
    """Sampling-instant generator: periodic, uniform-random gaps, or explicit."""

    kind: str
    dt: Optional[float] = None
    dt_lo: Optional[float] = None
    dt_hi: Optional[float] = None
    instants: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind == "periodic":
            if not (self.dt and self.dt > 0 and math.isfinite(self.dt)):
                raise ValidationError("periodic schedule needs dt > 0")
        elif self.kind == "uniform_random":
            ok = (
                self.dt_lo is not None
                and self.dt_hi is not None
                and 0 < self.dt_lo <= self.dt_hi < math.inf
            )
            if not ok:
                raise ValidationError("uniform_random schedule needs 0 < lo <= hi")
        elif self.kind == "explicit":
            t = np.asarray(self.instants, dtype=float)
            if t[0] != 0.0:
                t = np.concatenate([[0.0], t])
            if t.ndim != 1 or len(t) < 2 or np.any(np.diff(t) <= 0):
                raise ValidationError("explicit instants must be strictly increasing from 0")
            object.__setattr__(self, "instants", t)
        else:
            raise ValidationError(f"unknown schedule kind {self.kind!r}")

    @staticmethod
    def periodic(dt: float) -> "SamplingSchedule":
        return SamplingSchedule("periodic", dt=dt)

    @staticmethod
    def uniform_random(lo: float, hi: float) -> "SamplingSchedule":
        return SamplingSchedule("uniform_random", dt_lo=lo, dt_hi=hi)

    @staticmethod
    def explicit(instants: Sequence[float]) -> "SamplingSchedule":
        return SamplingSchedule("explicit", instants=np.asarray(instants, dtype=float))

    @staticmethod
    def parse(text: str) -> "SamplingSchedule":
        """Parse CLI syntax: 'periodic:0.02', 'uniform:0.01,0.02', 'explicit:0,0.1,0.2'."""
        try:
            kind, _, args = text.partition(":")
            vals = [float(v) for v in args.split(",") if v != ""]
        except ValueError as exc:
            raise ValidationError(f"bad schedule spec {text!r}") from exc
        if kind == "periodic" and len(vals) == 1:
            return SamplingSchedule.periodic(vals[0])
        if kind in ("uniform", "uniform_random") and len(vals) == 2:
            return SamplingSchedule.uniform_random(vals[0], vals[1])
        if kind == "explicit" and vals:
            return SamplingSchedule.explicit(vals)
        raise ValidationError(f"bad schedule spec {text!r}")

    @property
    def underline_dt(self) -> float:
        if self.kind == "periodic":
            return self.dt
        if self.kind == "uniform_random":
            return self.dt_lo
        return float(np.diff(self.instants).min())

    @property
    def overline_dt(self) -> float:
        if self.kind == "periodic":
            return self.dt
        if self.kind == "uniform_random":
            return self.dt_hi
        return float(np.diff(self.instants).max())


def schedule_instants(
    schedule: SamplingSchedule,
    horizon: float,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Sampling instants on [0, horizon], starting at t0 = 0.

    Gaps stay within [underline_dt, overline_dt]; uniform_random draws gaps
    i.i.d. uniform and is deterministic given the generator state.
    """
    if not horizon > 0:
        raise DomainError("horizon must be positive")
    if schedule.kind == "periodic":
        k = int(math.floor(horizon / schedule.dt * (1 + 1e-12)))
        return schedule.dt * np.arange(k + 1, dtype=float)
    if schedule.kind == "uniform_random":
        if rng is None:
            raise DomainError("uniform_random schedule requires a seeded generator")
        out = [0.0]
        while True:
            gap = float(rng.uniform(schedule.dt_lo, schedule.dt_hi))
            if out[-1] + gap > horizon:
                break
            out.append(out[-1] + gap)
        return np.asarray(out)
    t = schedule.instants
    return t[t <= horizon * (1 + 1e-12)].copy()


@dataclass(frozen=True)
class Segment:
    """Discretized trajectory segment recorded since the previous impulse."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray


JumpMap = Callable[[Segment, int], np.ndarray]


@dataclass(frozen=True)
class GeneralSiDE:
    """General stochastic impulsive system with callback dynamics.

    Continuous part:  dx = f(x,y,t) dt + g(x,y,t) dB,  dy = f_tilde dt + g_tilde dB.
    At each impulse instant t_k the cyber state jumps by
    h_f(segment, k) + h_g(segment, k) @ xi_k with xi_k i.i.d. standard Gaussian
    (the noisy term only when h_g is provided); x is continuous across t_k.
    Jump maps receive the trajectory segment recorded since the previous impulse.
    """

    n: int
    q: int
    m: int
    f: Callable[[np.ndarray, np.ndarray, float], np.ndarray]
    g: Callable[[np.ndarray, np.ndarray, float], np.ndarray]
    f_tilde: Callable[[np.ndarray, np.ndarray, float], np.ndarray]
    g_tilde: Callable[[np.ndarray, np.ndarray, float], np.ndarray]
    h_f: JumpMap
    h_g: Optional[JumpMap] = None
    x0: Optional[np.ndarray] = None
    y0: Optional[np.ndarray] = None

    def __post_init__(self):
        zx, zy = np.zeros(self.n), np.zeros(self.q)
        try:
            vals = [self.f(zx, zy, 0.0), self.f_tilde(zx, zy, 0.0)]
            if self.m > 0:
                vals += [self.g(zx, zy, 0.0), self.g_tilde(zx, zy, 0.0)]
        except Exception as exc:  # noqa: BLE001 - callback contract
            raise CallbackError(f"callback failed at the origin: {exc}") from exc
        for v in vals:
            if np.abs(np.asarray(v)).max(initial=0.0) > 1e-12:
                raise ValidationError("callbacks must vanish at the origin")


@dataclass(frozen=True)
class CpsForm:
    """Physical/cyber split of a sampled-data loop.

    The physical drift is drift(x) + B_bar (x - y), the cyber block copies it,
    both share the diffusion, and the jump map resets y to exactly zero at each
    sampling instant (y tracks x(t) - x(t_*), which restarts at every sample).
    """

    model: Model
    B_bar: np.ndarray

    def physical_drift(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self.model.drift(x) + (x - y) @ self.B_bar.T

    cyber_drift = physical_drift

    def jump(self, y_minus: np.ndarray) -> np.ndarray:
        return -np.asarray(y_minus)

    def as_side(self) -> GeneralSiDE:
        model = self.model
        gmats = [g.T for g in model.diffusion]

        def g(x, y, t):
            if not gmats:
                return np.zeros((model.n, 0))
            return np.stack([x @ gt for gt in gmats], axis=-1)

        return GeneralSiDE(
            n=model.n,
            q=model.n,
            m=model.m,
            f=lambda x, y, t: self.physical_drift(x, y),
            g=g,
            f_tilde=lambda x, y, t: self.physical_drift(x, y),
            g_tilde=g,
            h_f=lambda seg, k: -seg.y[-1],
            x0=None if model.x0 is None else np.asarray(model.x0, dtype=float),
            y0=np.zeros(model.n),
        )


def to_cps_form(model: Model) -> CpsForm:
    """Split a sampled-data model into its physical/cyber canonical form."""
    b_bar = model.B_bar
    if b_bar is None:
        raise ValidationError("model gain is unresolved; synthesize or supply K_hat first")
    return CpsForm(model=model, B_bar=b_bar)


def model_to_dict(model: Model) -> dict:
    d = {"name": model.name, "n": model.n, "A": None, "diffusion": [g.tolist() for g in model.diffusion]}
    if isinstance(model, NonlinearPlanarModel):
        d["A"] = model.A_bar.tolist()
        d["nonlinearity"] = {"type": "planar_sin"}
        d["B_hat"] = model.B_hat.tolist()
        if model.K_hat is not None:
            d["K_hat"] = model.K_hat.tolist()
    else:
        d["A"] = model.A.tolist()
        if model.B_bar_explicit is not None:
            d["B_bar"] = model.B_bar_explicit.tolist()
        else:
            d["B_hat"] = model.B_hat.tolist()
            if model.K_hat is not None:
                d["K_hat"] = model.K_hat.tolist()
    if model.x0 is not None:
        d["x0"] = np.asarray(model.x0).tolist()
    return d


def model_from_dict(doc: dict) -> Model:
    if not isinstance(doc, dict):
        raise FormatError("model document must be a JSON object")
    unknown = set(doc) - _MODEL_KEYS
    if unknown:
        raise FormatError(f"unknown model keys: {sorted(unknown)}")
    doc = {"name": "unnamed", **doc}
    for key in ("n", "A", "diffusion"):
        if key not in doc:
            raise FormatError(f"missing model key {key!r}")
    n = doc["n"]
    if not isinstance(n, int) or n < 1:
        raise FormatError("n must be a positive integer")
    x0 = None if "x0" not in doc else np.asarray(doc["x0"], dtype=float)
    k_hat = None if "K_hat" not in doc else np.asarray(doc["K_hat"], dtype=float)
    if "nonlinearity" in doc:
        nl = doc["nonlinearity"]
        if not isinstance(nl, dict) or nl.get("type") != "planar_sin":
            raise FormatError("unsupported nonlinearity descriptor")
        if n != 2:
            raise ValidationError("planar_sin nonlinearity requires n = 2")
        if "B_bar" in doc:
            raise ValidationError("nonlinear planar model takes B_hat, not B_bar")
        if any(np.any(np.asarray(g) != 0.0) for g in doc["diffusion"]):
            raise ValidationError("nonlinear planar model is deterministic (zero diffusion)")
        return NonlinearPlanarModel(
            name=doc["name"],
            A_bar=_matrix(doc["A"], 2, 2, "A"),
            B_hat=_matrix(doc.get("B_hat", [[0.0], [1.0]]), 2, 1, "B_hat"),
            K_hat=k_hat,
            x0=x0,
        )
    if "B_bar" in doc and "B_hat" in doc:
        raise ValidationError("provide either B_bar or B_hat, not both")
    diffusion = tuple(_matrix(g, n, n, f"diffusion[{j}]") for j, g in enumerate(doc["diffusion"]))
    return LinearSampledModel(
        name=doc["name"],
        n=n,
        A=_matrix(doc["A"], n, n, "A"),
        diffusion=diffusion,
        B_bar_explicit=None if "B_bar" not in doc else np.asarray(doc["B_bar"], dtype=float),
        B_hat=None if "B_hat" not in doc else np.asarray(doc["B_hat"], dtype=float),
        K_hat=k_hat,
        x0=x0,
    )


def load_model(path) -> Model:
    """Load and validate a model file (see module docstring for the schema)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise FormatError(f"cannot read model file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"model file {path} is not valid JSON: {exc}") from exc
    return model_from_dict(doc)


def save_model(model: Model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2)
        fh.write("\n")


@dataclass(frozen=True)
class AssumptionReport:
    """Empirical regularity ratios sampled on a box.

    This is a heuristic screen: finite sampling can refute but never prove the
    Lipschitz/linear-growth assumptions, so `heuristic` is always True.
    """

    growth_ratio: float
    lipschitz_ratio: float
    growth_bound: Optional[float]
    lipschitz_bound: Optional[float]
    violations: tuple
    n_samples: int
    heuristic: bool = True

    @property
    def ok(self) -> bool:
        return not self.violations


def _eval_side(side: GeneralSiDE, x: np.ndarray, y: np.ndarray, t: float) -> float:
    try:
        vals = [np.linalg.norm(side.f(x, y, t)), np.linalg.norm(side.f_tilde(x, y, t))]
        if side.m > 0:
            vals += [np.linalg.norm(side.g(x, y, t)), np.linalg.norm(side.g_tilde(x, y, t))]
    except Exception as exc:  # noqa: BLE001 - callback contract
        raise CallbackError(f"callback failed at x={x}, y={y}, t={t}: {exc}") from exc
    return max(vals)


def assumption_check(
    side: GeneralSiDE,
    sample_box: float,
    grid: int = 9,
    growth_bound: Optional[float] = None,
    lipschitz_bound: Optional[float] = None,
    seed: int = 0,
    t_samples: Sequence[float] = (0.0, 1.0),
) -> AssumptionReport:
    """Sample growth and Lipschitz ratios of the continuous callbacks on a box.

    `sample_box` is the half-width of the centered cube in (x, y); `grid`
    controls the number of random samples per time point (grid**2 point pairs).
    Ratios follow the squared form of the assumptions:
    max(|f|,|g|,|f_tilde|,|g_tilde|)^2 / (|x| v |y|)^2 and its increment analog.
    """
    if sample_box <= 0 or grid < 2:
        raise DomainError("sample_box must be positive and grid >= 2")
    rng = np.random.default_rng(seed)
    npts = grid * grid
    xs = rng.uniform(-sample_box, sample_box, size=(npts, side.n))
    ys = rng.uniform(-sample_box, sample_box, size=(npts, side.q))
    growth = 0.0
    lipschitz = 0.0
    for t in t_samples:
        norms = np.array([_eval_side(side, xs[i], ys[i], t) for i in range(npts)])
        denom = np.maximum(np.linalg.norm(xs, axis=1), np.linalg.norm(ys, axis=1))
        mask = denom > 1e-12
        growth = max(growth, float(((norms[mask] / denom[mask]) ** 2).max()))
        for i in range(0, npts - 1, 2):
            dx = np.linalg.norm(xs[i] - xs[i + 1])
            dy = np.linalg.norm(ys[i] - ys[i + 1])
            dd = max(dx, dy)
            if dd < 1e-12:
                continue
            df = max(
                np.linalg.norm(np.asarray(side.f(xs[i], ys[i], t)) - side.f(xs[i + 1], ys[i + 1], t)),
                np.linalg.norm(
                    np.asarray(side.f_tilde(xs[i], ys[i], t)) - side.f_tilde(xs[i + 1], ys[i + 1], t)
                ),
            )
            if side.m > 0:
                df = max(
                    df,
                    np.linalg.norm(np.asarray(side.g(xs[i], ys[i], t)) - side.g(xs[i + 1], ys[i + 1], t)),
                    np.linalg.norm(
                        np.asarray(side.g_tilde(xs[i], ys[i], t)) - side.g_tilde(xs[i + 1], ys[i + 1], t)
                    ),
                )
            lipschitz = max(lipschitz, (df / dd) ** 2)
    violations = []
    if growth_bound is not None and growth > growth_bound:
        violations.append(f"growth ratio {growth:.6g} exceeds claimed bound {growth_bound:.6g}")
    if lipschitz_bound is not None and lipschitz > lipschitz_bound:
        violations.append(f"Lipschitz ratio {lipschitz:.6g} exceeds claimed bound {lipschitz_bound:.6g}")
    return AssumptionReport(
        growth_ratio=growth,
        lipschitz_ratio=lipschitz,
        growth_bound=growth_bound,
        lipschitz_bound=lipschitz_bound,
        violations=tuple(violations),
        n_samples=npts * len(t_samples),
    )
