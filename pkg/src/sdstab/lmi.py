"""Affine LMI maps, certificate verification, and a small dense feasibility solver.

Every verification margin here is literally the largest eigenvalue of an
explicitly assembled symmetric block matrix, so "margin <= 0" is the matrix
inequality itself.  Certificates read from files were typically printed to
4-5 significant digits, so the certificate-level PASS test compares the margin
against tol * (1 + ||M||_F) with a relative tol (default 1e-2); freshly solved
points are held to an absolute strictness instead.

The feasibility solver is a projected subgradient method on
x -> lambda_max(map(x)) with Polyak-style steps, random restarts, and a
centering pass; its output is never trusted: the final margin is re-verified
with the Jacobi eigensolver.  The generalized-eigenvalue minimizer bisects on
lambda over such feasibility subproblems.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from .bounds import TwoFunctionConstants, emulation_bound_two
from .errors import DomainError, FormatError, InfeasibleError, ValidationError
from .models import LinearSampledModel, Model, NonlinearPlanarModel
from .numerics import SymMatrix, is_pos_def, lam_max

_CERT_KEYS = {
    "P", "P_tilde", "alpha_bar", "alpha_b", "gamma1", "gamma2",
    "c_tilde", "Q", "Y", "K_hat", "b", "c",
}


# ---------------------------------------------------------------------------
# affine matrix maps and variable layouts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AffineMatrixMap:
    """x -> base + sum_i x[i] * coeff_i over symmetric blocks of one order."""

    base: np.ndarray
    coeffs: Tuple[Tuple[int, np.ndarray], ...]
    nvars: int

    def __post_init__(self):
        k = self.base.shape[0]
        if self.base.shape != (k, k):
            raise DomainError("map base must be square")
        for i, c in self.coeffs:
            if not 0 <= i < self.nvars:
                raise DomainError(f"coefficient index {i} out of range")
            if c.shape != (k, k):
                raise DomainError("all coefficient blocks must share the base order")

    @property
    def order(self) -> int:
        return self.base.shape[0]

    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        m = self.base.copy()
        for i, c in self.coeffs:
            m += x[i] * c
        return m

    @staticmethod
    def blockdiag(*maps: "AffineMatrixMap") -> "AffineMatrixMap":
        """Stack maps sharing one variable space into a block-diagonal map."""
        nvars = maps[0].nvars
        if any(m.nvars != nvars for m in maps):
            raise DomainError("blockdiag requires maps over the same variables")
        orders = [m.order for m in maps]
        total = sum(orders)
        base = np.zeros((total, total))
        per_var: Dict[int, np.ndarray] = {}
        off = 0
        for m, k in zip(maps, orders):
            base[off:off + k, off:off + k] = m.base
            for i, c in m.coeffs:
                blk = per_var.setdefault(i, np.zeros((total, total)))
                blk[off:off + k, off:off + k] += c
            off += k
        coeffs = tuple((i, per_var[i]) for i in sorted(per_var))
        return AffineMatrixMap(base, coeffs, nvars)

    @staticmethod
    def combine(a: float, m1: "AffineMatrixMap", b: float, m2: "AffineMatrixMap") -> "AffineMatrixMap":
        """Entrywise a*m1 + b*m2 (same order, same variable space)."""
        if m1.order != m2.order or m1.nvars != m2.nvars:
            raise DomainError("combine requires matching order and variable count")
        per_var: Dict[int, np.ndarray] = {}
        for w, m in ((a, m1), (b, m2)):
            for i, c in m.coeffs:
                per_var[i] = per_var.get(i, 0.0) + w * c
        coeffs = tuple((i, np.asarray(c)) for i, c in sorted(per_var.items()))
        return AffineMatrixMap(a * m1.base + b * m2.base, coeffs, m1.nvars)


class VariableLayout:
    """Registry mapping named matrix/scalar variables onto one flat vector."""

    def __init__(self):
        self._specs = []
        self._size = 0

    @property
    def nvars(self) -> int:
        return self._size

    def add_sym(self, n: int, name: str) -> str:
        idx = [(i, j) for i in range(n) for j in range(i, n)]
        self._specs.append(("sym", name, n, self._size, len(idx), idx))
        self._size += len(idx)
        return name

    def add_full(self, rows: int, cols: int, name: str) -> str:
        self._specs.append(("full", name, (rows, cols), self._size, rows * cols, None))
        self._size += rows * cols
        return name

    def add_scalar(self, name: str) -> str:
        self._specs.append(("scalar", name, 1, self._size, 1, None))
        self._size += 1
        return name

    def unpack(self, x: np.ndarray) -> Dict[str, np.ndarray]:
        x = np.asarray(x, dtype=float)
        out: Dict[str, np.ndarray] = {}
        for kind, name, shape, off, count, idx in self._specs:
            chunk = x[off:off + count]
            if kind == "sym":
                m = np.zeros((shape, shape))
                for v, (i, j) in zip(chunk, idx):
                    m[i, j] = v
                    m[j, i] = v
                out[name] = m
            elif kind == "full":
                out[name] = chunk.reshape(shape)
            else:
                out[name] = float(chunk[0])
        return out

    def pack(self, **values) -> np.ndarray:
        x = np.zeros(self._size)
        for kind, name, shape, off, count, idx in self._specs:
            v = values[name]
            if kind == "sym":
                m = np.asarray(v, dtype=float)
                x[off:off + count] = [m[i, j] for i, j in idx]
            elif kind == "full":
                x[off:off + count] = np.asarray(v, dtype=float).ravel()
            else:
                x[off] = float(v)
        return x


def build_affine_map(layout: VariableLayout, assemble: Callable[[Dict], np.ndarray]) -> AffineMatrixMap:
    """Turn a numpy block assembler (affine in the variables) into an AffineMatrixMap.

    The assembler is probed at the origin and at unit vectors; the probes pin
    the base and coefficient blocks exactly since the assembly is affine.
    """
    zero = np.zeros(layout.nvars)
    base = np.asarray(assemble(layout.unpack(zero)), dtype=float)
    base = 0.5 * (base + base.T)
    coeffs = []
    for i in range(layout.nvars):
        e = zero.copy()
        e[i] = 1.0
        c = np.asarray(assemble(layout.unpack(e)), dtype=float) - base
        c = 0.5 * (c + c.T)
        if np.abs(c).max(initial=0.0) > 0.0:
            coeffs.append((i, c))
    return AffineMatrixMap(base, tuple(coeffs), layout.nvars)


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------

def _opt_matrix(doc, key) -> Optional[np.ndarray]:
    if key not in doc or doc[key] is None:
        return None
    m = np.asarray(doc[key], dtype=float)
    if m.ndim != 2 or not np.all(np.isfinite(m)):
        raise FormatError(f"certificate field {key!r} must be a finite matrix")
    return m


def _opt_scalar(doc, key) -> Optional[float]:
    if key not in doc or doc[key] is None:
        return None
    v = float(doc[key])
    if not np.isfinite(v):
        raise FormatError(f"certificate field {key!r} must be finite")
    return v


@dataclass(frozen=True)
class LmiCertificate:
    """Quadratic stability certificate, in analysis (P) and/or design (Q, Y) form."""

    alpha_bar: float
    P: Optional[np.ndarray] = None
    P_tilde: Optional[np.ndarray] = None
    alpha_b: Optional[float] = None
    gamma1: Optional[float] = None
    gamma2: Optional[float] = None
    c_tilde: Optional[float] = None
    b: Optional[float] = None
    c: Optional[float] = None
    Q: Optional[np.ndarray] = None
    Y: Optional[np.ndarray] = None
    K_hat: Optional[np.ndarray] = None

    def __post_init__(self):
        if not (np.isfinite(self.alpha_bar) and self.alpha_bar > 0):
            raise ValidationError("alpha_bar must be positive")
        if self.P is None and self.Q is None:
            raise ValidationError("certificate needs P or Q")
        for name in ("P", "P_tilde", "Q"):
            m = getattr(self, name)
            if m is not None and not is_pos_def(SymMatrix(m, sym_tol=1e-6)):
                raise ValidationError(f"{name} must be symmetric positive definite")
        if self.Q is not None and self.Y is None:
            raise ValidationError("design-form certificate needs Y alongside Q")

    @property
    def two_function_constants(self) -> Optional[TwoFunctionConstants]:
        if None in (self.alpha_b, self.gamma1, self.gamma2):
            return None
        return TwoFunctionConstants(self.alpha_bar, self.alpha_b, self.gamma1, self.gamma2)

    def analysis_form(self) -> "LmiCertificate":
        """Derive (P, P_tilde) = (Q^{-1}, c_tilde Q^{-1}) from a design-form certificate."""
        if self.P is not None:
            return self
        if self.c_tilde is None:
            raise ValidationError("design-form certificate needs c_tilde to transform")
        p = np.linalg.inv(self.Q)
        p = 0.5 * (p + p.T)
        return replace(self, P=p, P_tilde=self.c_tilde * p)

    @staticmethod
    def from_dict(doc: dict) -> "LmiCertificate":
        if not isinstance(doc, dict):
            raise FormatError("certificate document must be a JSON object")
        unknown = set(doc) - _CERT_KEYS
        if unknown:
            raise FormatError(f"unknown certificate keys: {sorted(unknown)}")
        if "alpha_bar" not in doc:
            raise FormatError("certificate is missing alpha_bar")
        return LmiCertificate(
            alpha_bar=float(doc["alpha_bar"]),
            P=_opt_matrix(doc, "P"),
            P_tilde=_opt_matrix(doc, "P_tilde"),
            alpha_b=_opt_scalar(doc, "alpha_b"),
            gamma1=_opt_scalar(doc, "gamma1"),
            gamma2=_opt_scalar(doc, "gamma2"),
            c_tilde=_opt_scalar(doc, "c_tilde"),
            b=_opt_scalar(doc, "b"),
            c=_opt_scalar(doc, "c"),
            Q=_opt_matrix(doc, "Q"),
            Y=_opt_matrix(doc, "Y"),
            K_hat=_opt_matrix(doc, "K_hat"),
        )

    def to_dict(self) -> dict:
        out = {"alpha_bar": self.alpha_bar}
        for key in ("alpha_b", "gamma1", "gamma2", "c_tilde", "b", "c"):
            v = getattr(self, key)
            if v is not None:
                out[key] = v
        for key in ("P", "P_tilde", "Q", "Y", "K_hat"):
            m = getattr(self, key)
            if m is not None:
                out[key] = np.asarray(m).tolist()
        return out


def load_certificate(path) -> LmiCertificate:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise FormatError(f"cannot read certificate file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"certificate file {path} is not valid JSON: {exc}") from exc
    return LmiCertificate.from_dict(doc)


def save_certificate(cert: LmiCertificate, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cert.to_dict(), fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# block assemblies (margins are lambda_max of these matrices)
# ---------------------------------------------------------------------------

def _check_square(m: np.ndarray, n: int, what: str) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape != (n, n):
        raise DomainError(f"{what}: expected ({n}, {n}), got {m.shape}")
    return m


def assemble_lyapunov_ito(F, G_list, P, alpha_bar: float) -> np.ndarray:
    n = np.asarray(P).shape[0]
    F = _check_square(F, n, "F")
    m = F.T @ P + P @ F + 2.0 * alpha_bar * np.asarray(P)
    for G in G_list:
        G = _check_square(G, n, "G")
        m = m + G.T @ P @ G
    return 0.5 * (m + m.T)


def assemble_em_step(F, G_list, P, h: float, c_bar: float) -> np.ndarray:
    n = np.asarray(P).shape[0]
    F = _check_square(F, n, "F")
    s = np.eye(n) + h * F
    m = s.T @ P @ s - (1.0 - c_bar) * np.asarray(P)
    for G in G_list:
        G = _check_square(G, n, "G")
        m = m + h * (G.T @ P @ G)
    return 0.5 * (m + m.T)


def assemble_feedback_energy(B_bar, P, P_tilde, alpha_b: float) -> np.ndarray:
    n = np.asarray(P).shape[0]
    B = _check_square(B_bar, n, "B_bar")
    m = B.T @ P @ B - alpha_b * np.asarray(P_tilde)
    return 0.5 * (m + m.T)


def assemble_cross_block(F, G_list, B_bar, P, P_tilde, gamma1: float, gamma2: float) -> np.ndarray:
    n = np.asarray(P).shape[0]
    F = _check_square(F, n, "F")
    B = _check_square(B_bar, n, "B_bar")
    pt = np.asarray(P_tilde)
    gsum = np.zeros((n, n))
    for G in G_list:
        G = _check_square(G, n, "G")
        gsum = gsum + G.T @ pt @ G
    m = np.block([
        [gsum - gamma1 * np.asarray(P), F.T @ pt],
        [pt @ F, -B.T @ pt - pt @ B - gamma2 * pt],
    ])
    return 0.5 * (m + m.T)


def assemble_cross_schur(F, G_list, B_bar, P, P_tilde, gamma1: float, gamma2: float) -> np.ndarray:
    """Schur reduction of the cross block over its (2,2) corner.

    Valid (same negativity) when S = B_bar^T P_tilde + P_tilde B_bar + gamma2 P_tilde > 0.
    """
    n = np.asarray(P).shape[0]
    F = _check_square(F, n, "F")
    B = _check_square(B_bar, n, "B_bar")
    pt = np.asarray(P_tilde)
    s = B.T @ pt + pt @ B + gamma2 * pt
    s = 0.5 * (s + s.T)
    if not is_pos_def(SymMatrix(s, sym_tol=1e-8)):
        raise DomainError("Schur corner is not positive definite; use the full block form")
    gsum = np.zeros((n, n))
    for G in G_list:
        gsum = gsum + np.asarray(G).T @ pt @ np.asarray(G)
    m = gsum - gamma1 * np.asarray(P) + F.T @ pt @ np.linalg.solve(s, pt @ F)
    return 0.5 * (m + m.T)


def assemble_design_rate(A, G_list, B_hat, Q, Y, alpha_bar: float) -> np.ndarray:
    n = np.asarray(Q).shape[0]
    A = _check_square(A, n, "A")
    q = np.asarray(Q)
    q11 = q @ A.T + Y.T @ B_hat.T + A @ q + B_hat @ Y + 2.0 * alpha_bar * q
    rows = [[q11] + [(G @ q).T for G in G_list]]
    for j, G in enumerate(G_list):
        row = [G @ q] + [(-q if i == j else np.zeros((n, n))) for i in range(len(G_list))]
        rows.append(row)
    m = np.block(rows) if len(rows) > 1 else q11
    return 0.5 * (m + m.T)


def assemble_design_energy(B_hat, Q, Y, alpha_b: float, c_tilde: float) -> np.ndarray:
    q = np.asarray(Q)
    by = B_hat @ Y
    m = np.block([[-alpha_b * c_tilde * q, by.T], [by, -q]])
    return 0.5 * (m + m.T)


def assemble_design_cross(
    A, G_list, B_hat, Q, Y, c_tilde: float, gamma1: float, gamma2: float
) -> np.ndarray:
    n = np.asarray(Q).shape[0]
    A = _check_square(A, n, "A")
    q = np.asarray(Q)
    mgain = c_tilde * (A @ q + B_hat @ Y)
    qt22 = -c_tilde * (Y.T @ B_hat.T + B_hat @ Y) - gamma2 * c_tilde * q
    k = len(G_list)
    rows = [[-gamma1 * q, mgain.T] + [(np.sqrt(c_tilde) * G @ q).T for G in G_list]]
    rows.append([mgain, qt22] + [np.zeros((n, n))] * k)
    for j, G in enumerate(G_list):
        row = [np.sqrt(c_tilde) * G @ q, np.zeros((n, n))]
        row += [(-q if i == j else np.zeros((n, n))) for i in range(k)]
        rows.append(row)
    m = np.block(rows)
    return 0.5 * (m + m.T)


def assemble_planar_rate(A_tilde, E1, P, alpha_bar: float, b: float) -> np.ndarray:
    if b <= 0:
        raise DomainError("envelope weight b must be positive")
    p = np.asarray(P)
    m = A_tilde.T @ p + p @ A_tilde + b * p + (1.0 / b) * E1.T @ p @ E1 + 2.0 * alpha_bar * p
    return 0.5 * (m + m.T)


def assemble_planar_cross(
    A_tilde, E1, B_bar, P, P_tilde, gamma1: float, gamma2: float, c: float
) -> np.ndarray:
    if c <= 0:
        raise DomainError("envelope weight c must be positive")
    p, pt = np.asarray(P), np.asarray(P_tilde)
    m = np.block([
        [(1.0 / c) * E1.T @ pt @ E1 - gamma1 * p, A_tilde.T @ pt],
        [pt @ A_tilde, -B_bar.T @ pt - pt @ B_bar + c * pt - gamma2 * pt],
    ])
    return 0.5 * (m + m.T)


# ---------------------------------------------------------------------------
# margin-level verification
# ---------------------------------------------------------------------------

def _margin(m: np.ndarray) -> Tuple[float, float]:
    """(lambda_max, relative scale 1 + ||M||_F) of an assembled block."""
    return lam_max(SymMatrix(m, sym_tol=1e-8)), 1.0 + float(np.linalg.norm(m))


def verify_lyapunov_ito(F, G_list, P, alpha_bar: float) -> float:
    """Margin of F^T P + P F + sum G^T P G <= -2 alpha_bar P; passes iff <= tol."""
    if not is_pos_def(SymMatrix(P, sym_tol=1e-6)):
        raise DomainError("P must be positive definite")
    return _margin(assemble_lyapunov_ito(F, G_list, P, alpha_bar))[0]


def verify_em_lmi(F, G_list, P, h: float, c_bar: float) -> float:
    """Margin of (I+hF)^T P (I+hF) + h sum G^T P G <= (1 - c_bar) P."""
    if not h > 0:
        raise DomainError("stepsize h must be positive")
    if not 0.0 < c_bar < 1.0:
        raise DomainError(f"c_bar must lie in (0, 1), got {c_bar}")
    if not is_pos_def(SymMatrix(P, sym_tol=1e-6)):
        raise DomainError("P must be positive definite")
    return _margin(assemble_em_step(F, G_list, P, h, c_bar))[0]


@dataclass(frozen=True)
class VerificationOutcome:
    """Named margins with their scales; passed iff every margin <= tol * scale."""

    margins: Dict[str, float]
    scales: Dict[str, float]
    tol: float
    passed: bool
    tau_max: Optional[float] = None
    q_star: Optional[float] = None
    form: str = "analysis"

    @property
    def implies_almost_sure(self) -> bool:
        """Mean-square exponential stability carries almost-sure exponential
        stability with it under the linear-growth hypothesis, which holds
        structurally for every model this toolkit accepts."""
        return self.passed

    def worst(self) -> Tuple[str, float]:
        name = max(self.margins, key=lambda k: self.margins[k] / self.scales[k])
        return name, self.margins[name]


def _outcome(margins, scales, tol, form, constants: Optional[TwoFunctionConstants]):
    passed = all(margins[k] <= tol * scales[k] for k in margins)
    tau_max = q_star = None
    if passed and constants is not None:
        res = emulation_bound_two(constants)
        tau_max, q_star = res.tau_max, res.q_star
    return VerificationOutcome(
        margins=margins, scales=scales, tol=tol, passed=passed,
        tau_max=tau_max, q_star=q_star, form=form,
    )


def verify_analysis_certificate(
    model: LinearSampledModel, cert: LmiCertificate, tol: float = 1e-2
) -> VerificationOutcome:
    """Check a (P, P_tilde) certificate for a linear model with resolved feedback.

    Margins: the decay-rate inequality, the feedback-energy inequality
    B^T P B <= alpha_b P_tilde, and the cross block against diag(g1 P, g2 P_tilde).
    """
    cert = cert.analysis_form()
    b_bar = model.B_bar if cert.K_hat is None else model.B_hat @ cert.K_hat
    if b_bar is None:
        raise ValidationError("model gain is unresolved and the certificate carries no K_hat")
    f = model.A + b_bar
    margins = {}
    scales = {}
    margins["rate"], scales["rate"] = _margin(
        assemble_lyapunov_ito(f, model.diffusion, cert.P, cert.alpha_bar)
    )
    constants = cert.two_function_constants
    if constants is not None:
        if cert.P_tilde is None:
            raise ValidationError("two-function certificate needs P_tilde")
        margins["feedback_energy"], scales["feedback_energy"] = _margin(
            assemble_feedback_energy(b_bar, cert.P, cert.P_tilde, cert.alpha_b)
        )
        margins["cross"], scales["cross"] = _margin(
            assemble_cross_block(
                f, model.diffusion, b_bar, cert.P, cert.P_tilde, cert.gamma1, cert.gamma2
            )
        )
    return _outcome(margins, scales, tol, "analysis", constants)


def verify_design_certificate(
    model: LinearSampledModel, cert: LmiCertificate, tol: float = 1e-2
) -> VerificationOutcome:
    """Check a (Q, Y) design certificate; acceptance implies the analysis form
    with P = Q^{-1}, P_tilde = c_tilde Q^{-1} by congruence."""
    if model.B_hat is None:
        raise ValidationError("design certificate requires a model with an input map")
    for name in ("Q", "Y", "c_tilde", "alpha_b", "gamma1", "gamma2"):
        if getattr(cert, name) is None:
            raise ValidationError(f"design certificate is missing {name}")
    if cert.Y.shape != (model.B_hat.shape[1], model.n):
        raise DomainError("Y has the wrong shape for this input map")
    margins = {}
    scales = {}
    margins["rate"], scales["rate"] = _margin(
        assemble_design_rate(model.A, model.diffusion, model.B_hat, cert.Q, cert.Y, cert.alpha_bar)
    )
    margins["feedback_energy"], scales["feedback_energy"] = _margin(
        assemble_design_energy(model.B_hat, cert.Q, cert.Y, cert.alpha_b, cert.c_tilde)
    )
    margins["cross"], scales["cross"] = _margin(
        assemble_design_cross(
            model.A, model.diffusion, model.B_hat, cert.Q, cert.Y,
            cert.c_tilde, cert.gamma1, cert.gamma2,
        )
    )
    return _outcome(margins, scales, tol, "design", cert.two_function_constants)


def verify_planar_certificate(
    model: NonlinearPlanarModel, cert: LmiCertificate, tol: float = 1e-2
) -> VerificationOutcome:
    """Check the nonlinear planar certificate (envelope weights b and c required)."""
    for name in ("P", "P_tilde", "alpha_b", "gamma1", "gamma2", "b", "c"):
        if getattr(cert, name) is None:
            raise ValidationError(f"planar certificate is missing {name}")
    gain = cert.K_hat if cert.K_hat is not None else model.K_hat
    if gain is None:
        raise ValidationError("planar certificate needs a gain (K_hat)")
    work = model.with_gain(gain)
    b_bar = work.B_bar
    a_tilde = work.A_bar + b_bar
    e1 = work.envelope
    margins = {}
    scales = {}
    margins["rate"], scales["rate"] = _margin(
        assemble_planar_rate(a_tilde, e1, cert.P, cert.alpha_bar, cert.b)
    )
    margins["feedback_energy"], scales["feedback_energy"] = _margin(
        assemble_feedback_energy(b_bar, cert.P, cert.P_tilde, cert.alpha_b)
    )
    margins["cross"], scales["cross"] = _margin(
        assemble_planar_cross(
            a_tilde, e1, b_bar, cert.P, cert.P_tilde, cert.gamma1, cert.gamma2, cert.c
        )
    )
    return _outcome(margins, scales, tol, "planar", cert.two_function_constants)


def verify_certificate(model: Model, cert: LmiCertificate, tol: float = 1e-2) -> VerificationOutcome:
    """Dispatch on model type and certificate form."""
    if isinstance(model, NonlinearPlanarModel):
        return verify_planar_certificate(model, cert, tol)
    if cert.Q is not None:
        return verify_design_certificate(model, cert, tol)
    return verify_analysis_certificate(model, cert, tol)


# ---------------------------------------------------------------------------
# feasibility solver and generalized eigenvalue minimization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SolveReport:
    status: str  # feasible | infeasible_judged | failed
    point: np.ndarray
    margin: float
    iterations: int


def _subgradient_run(base, tensor, idx, x0, iters, strictness):
    """Minimize lambda_max(base + sum x_i C_i) from x0; returns (best_x, best_f, its)."""
    x = np.asarray(x0, dtype=float).copy()
    best_x, best_f = x.copy(), np.inf
    m0 = base + np.tensordot(x[idx], tensor, axes=(0, 0))
    w = np.linalg.eigvalsh(m0)
    delta = 0.25 * (1.0 + abs(float(w[-1])))
    stall = 0
    it = 0
    for it in range(1, iters + 1):
        m = base + np.tensordot(x[idx], tensor, axes=(0, 0))
        w, v = np.linalg.eigh(m)
        f = float(w[-1])
        if not np.isfinite(f):
            break
        if f < best_f - 1e-15:
            best_f, best_x = f, x.copy()
            stall = 0
        else:
            stall += 1
            if stall >= 20:
                delta = max(0.5 * delta, 1e-12)
                stall = 0
        if best_f <= -1e3 * strictness:
            break
        top = v[:, -1]
        g = np.zeros_like(x)
        g[idx] = tensor @ top @ top
        gn = float(g @ g)
        if gn < 1e-30:
            break
        target = min(-2.0 * strictness, best_f - delta)
        x = x - ((f - target) / gn) * g
    return best_x, best_f, it


def solve_feasibility(
    amap: AffineMatrixMap,
    strictness: float = 1e-8,
    seed: int = 0,
    restarts: int = 6,
    iters: int = 400,
    center_iters: int = 200,
    initial: Sequence[np.ndarray] = (),
) -> SolveReport:
    """Search for x with lambda_max(map(x)) <= -strictness.

    Projected subgradient descent with Polyak-style steps and random restarts,
    then a centering pass that keeps pushing the margin down from the best
    point found.  The reported margin is re-verified with the Jacobi
    eigensolver; solver internals are never trusted.  If no strictly feasible
    point is found the report says infeasible_judged (best effort, no dual
    certificate); numerical breakdown yields status "failed".
    """
    if amap.nvars < 1:
        raise DomainError("feasibility search needs at least one variable")
    idx = np.array([i for i, _ in amap.coeffs], dtype=int)
    tensor = np.stack([c for _, c in amap.coeffs]) if amap.coeffs else np.zeros((0, amap.order, amap.order))
    rng = np.random.default_rng(seed)
    coeff_scale = max(float(np.abs(tensor).max(initial=0.0)), 1e-12)
    x_scale = (1.0 + float(np.abs(amap.base).max())) / coeff_scale

    starts = [np.asarray(v, dtype=float) for v in initial]
    starts.append(np.zeros(amap.nvars))
    while len(starts) < max(restarts, 1):
        starts.append(rng.normal(scale=x_scale, size=amap.nvars))

    best_x, best_f = starts[0], np.inf
    total = 0
    saw_finite = False
    for x0 in starts:
        bx, bf, it = _subgradient_run(amap.base, tensor, idx, x0, iters, strictness)
        total += it
        if np.isfinite(bf):
            saw_finite = True
            if bf < best_f:
                best_f, best_x = bf, bx
        if best_f <= -1e3 * strictness:
            break
    if not saw_finite:
        return SolveReport(status="failed", point=best_x, margin=np.inf, iterations=total)

    bx, bf, it = _subgradient_run(amap.base, tensor, idx, best_x, center_iters, strictness)
    total += it
    if bf < best_f:
        best_f, best_x = bf, bx

    margin = lam_max(SymMatrix(amap.value(best_x), sym_tol=1e-8))
    status = "feasible" if margin <= -strictness else "infeasible_judged"
    return SolveReport(status=status, point=best_x, margin=margin, iterations=total)


@dataclass(frozen=True)
class GevpResult:
    lam: float
    point: np.ndarray
    feasibility_margin: float


def minimize_gevp(
    numerator: AffineMatrixMap,
    denominator: AffineMatrixMap,
    extra: Optional[AffineMatrixMap] = None,
    lam_lo: float = 1e-6,
    lam_hi: float = 1e6,
    iters: int = 60,
    strictness: float = 1e-8,
    seed: int = 0,
    denominator_floor: float = 1e-6,
) -> GevpResult:
    """Smallest lambda with numerator(x) <= lambda * denominator(x), denominator(x) > 0.

    Log-scale bisection on lambda over feasibility subproblems; candidate
    points with an indefinite denominator are rejected by the floor block
    denominator >= floor * I, so the bisection simply continues past them.
    ``extra`` appends normalization blocks (e.g. Q >= I) to every subproblem.
    """
    if numerator.nvars != denominator.nvars:
        raise DomainError("numerator and denominator must share one variable space")
    fixed = numerator.nvars == 0

    last_point: Optional[np.ndarray] = None
    last_margin = np.inf

    def feasible(lam: float) -> bool:
        nonlocal last_point, last_margin
        shifted = AffineMatrixMap.combine(1.0, numerator, -lam, denominator)
        if fixed:
            dmin = float(np.linalg.eigvalsh(denominator.base).min())
            if dmin <= 0.0:
                return False
            ok = lam_max(SymMatrix(shifted.value(np.zeros(0)), sym_tol=1e-8)) <= 0.0
            if ok:
                last_point = np.zeros(0)
                last_margin = 0.0
            return ok
        floor = AffineMatrixMap.combine(
            -1.0, denominator, 0.0, denominator
        )
        floor = AffineMatrixMap(
            floor.base + denominator_floor * np.eye(denominator.order), floor.coeffs, floor.nvars
        )
        blocks = [shifted, floor] + ([extra] if extra is not None else [])
        prob = AffineMatrixMap.blockdiag(*blocks)
        warm = [last_point] if last_point is not None else []
        rep = solve_feasibility(prob, strictness=strictness, seed=seed, initial=warm)
        if rep.status == "feasible":
            last_point, last_margin = rep.point, rep.margin
            return True
        return False

    if not feasible(lam_hi):
        raise InfeasibleError(f"no feasible lambda in [{lam_lo:g}, {lam_hi:g}]")
    if feasible(lam_lo):
        return GevpResult(lam=lam_lo, point=last_point, feasibility_margin=last_margin)

    lo, hi = lam_lo, lam_hi
    hi_point, hi_margin = last_point, last_margin
    for _ in range(iters):
        mid = float(np.sqrt(lo * hi))
        if feasible(mid):
            hi, hi_point, hi_margin = mid, last_point, last_margin
        else:
            lo = mid
    return GevpResult(lam=hi, point=hi_point, feasibility_margin=hi_margin)
