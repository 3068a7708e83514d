"""Spectrum of A(U), Riemann invariants and the semi-Hamiltonian checks.

The characteristic polynomial is built from the angular derivative of the
integral: with lambda = g tan(phi),

    det(lambda I - A(U)) = sign * g^{n-1} cos^{-n}(phi) F_phi(phi),

so eigenvalues are exactly the fibre directions where F_phi vanishes.  The
global ``sign`` is calibrated once against a dense determinant.
"""
from __future__ import annotations

import functools
import logging
from dataclasses import dataclass

import numpy as np

from .core import as_point, build_matrix, eval_integral_angle, eval_integral_dphi, full_coefficients
from .errors import ArityError, ClassificationError, NoConvergenceError

log = logging.getLogger(__name__)

HYPERBOLIC = "strictly-hyperbolic"
DEGENERATE = "degenerate"
ELLIPTIC = "elliptic"

IMAG_RTOL = 1e-10


def _angular_poly(u):
    """Coefficients (ascending in s = tan phi) of F_phi / cos^n phi.

    F_phi / cos^n = sum_k a_k (k s^{k-1} - (n-k) s^{k+1}), degree n in s.
    """
    a = full_coefficients(u)
    n = a.shape[-1] - 1
    P = np.zeros(a.shape[:-1] + (n + 2,))
    for k in range(n + 1):
        if k > 0:
            P[..., k - 1] += k * a[..., k]
        P[..., k + 1] -= (n - k) * a[..., k]
    # the s^{n+1} coefficient cancels identically
    return P[..., : n + 1]


def _poly_from_lemma(u, sign):
    u = np.asarray(u, dtype=float)
    n = u.shape[-1]
    g = u[..., -1]
    P = _angular_poly(u)
    m = np.arange(n + 1)
    # P(lambda/g) g^{n-1}: coefficient of lambda^m is P_m g^{n-1-m}
    asc = sign * P * g[..., None] ** (n - 1 - m)
    # top coefficient is -sign * a_{n-1} / g exactly; avoid the rounding in g * g^-1
    asc[..., n] = -sign
    return asc[..., ::-1]


@functools.lru_cache(maxsize=None)
def lemma_sign(samples=100, seed=20090720):
    """Global sign relating det(lambda I - A) to g^{n-1} cos^{-n} F_phi.

    Determined from ``samples`` random (u, lambda) pairs across n = 2..6;
    raises if the pairs disagree on the sign.
    """
    rng = np.random.default_rng(seed)
    votes = []
    for trial in range(samples):
        n = 2 + trial % 5
        u = rng.uniform(-2.0, 2.0, n)
        u[-1] = rng.uniform(0.5, 2.0)
        lam = rng.uniform(-5.0, 5.0)
        det = np.linalg.det(lam * np.eye(n) - build_matrix(u))
        phi = np.arctan(lam / u[-1])
        rhs = u[-1] ** (n - 1) / np.cos(phi) ** n * eval_integral_dphi(u, phi)
        if abs(det) > 1e-8 and abs(rhs) > 1e-8:
            votes.append(np.sign(det / rhs))
    votes = np.array(votes)
    if votes.size == 0 or not np.all(votes == votes[0]):
        raise RuntimeError("characteristic polynomial sign could not be calibrated")
    return int(votes[0])


def char_poly_coeffs(u):
    """Monic coefficients of det(lambda I - A(U)), highest power first."""
    u = as_point(u)
    return _poly_from_lemma(u, lemma_sign())


def _companion(coeffs):
    coeffs = np.asarray(coeffs, dtype=float)
    n = coeffs.shape[-1] - 1
    C = np.zeros(coeffs.shape[:-1] + (n, n))
    idx = np.arange(1, n)
    C[..., idx, idx - 1] = 1.0
    C[..., :, n - 1] = -coeffs[..., :0:-1] / coeffs[..., :1]
    return C


def companion_roots(coeffs):
    """Roots of a polynomial (highest power first) via a companion eigensolve, sorted."""
    return np.sort(np.linalg.eigvals(_companion(coeffs)), axis=-1)


def dense_eigenvalues(u):
    """Eigenvalues of A(U) from a dense eigensolve, sorted (independent route)."""
    return np.sort(np.linalg.eigvals(build_matrix(u)), axis=-1)


def default_tol_sep(lam):
    return 1e-6 * (1.0 + np.max(np.abs(lam), axis=-1))


def classify(lam, tol_sep=None):
    """Classify sorted eigenvalue arrays (..., n); returns an array of labels."""
    lam = np.asarray(lam, dtype=complex)
    scale = 1.0 + np.max(np.abs(lam), axis=-1)
    if tol_sep is None:
        tol_sep = default_tol_sep(lam)
    tol_sep = np.broadcast_to(tol_sep, scale.shape)
    imag = np.max(np.abs(lam.imag), axis=-1)
    real = imag <= IMAG_RTOL * scale
    gaps = np.diff(np.sort(lam.real, axis=-1), axis=-1)
    min_gap = np.min(gaps, axis=-1) if lam.shape[-1] > 1 else np.full(scale.shape, np.inf)
    out = np.where(real & (min_gap > tol_sep), HYPERBOLIC, DEGENERATE)
    out = np.where(~real & (imag > tol_sep), ELLIPTIC, out)
    return out


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    angles: np.ndarray
    classification: str
    min_gap: float

    @property
    def hyperbolic(self):
        return self.classification == HYPERBOLIC


def spectrum(u, tol_sep=None):
    """Eigenvalues of A(U) from the characteristic polynomial, with classification.

    Angles phi_i = arctan(lambda_i / g) are filled in only for real spectra
    (NaN otherwise).
    """
    u = as_point(u)
    if u.ndim != 1:
        raise ArityError("spectrum takes a single field point; use spectra() for stacks")
    lam = companion_roots(char_poly_coeffs(u))
    label = str(classify(lam, tol_sep))
    min_gap = float(np.min(np.diff(lam.real)))
    if label == ELLIPTIC:
        return Spectrum(lam, np.full(lam.shape, np.nan), label, min_gap)
    lam = lam.real
    return Spectrum(lam, np.arctan(lam / u[-1]), label, min_gap)


def spectra(values, tol_sep=None):
    """Batched spectrum for a stack (M, n): (eigenvalues complex (M, n), labels (M,))."""
    values = as_point(values)
    lam = companion_roots(char_poly_coeffs(values))
    return lam, classify(lam, tol_sep)


def _require_hyperbolic(u, tol_sep=None):
    spec = spectrum(u, tol_sep)
    if not spec.hyperbolic:
        raise ClassificationError(f"point is {spec.classification}, not strictly hyperbolic")
    return spec


def riemann_invariants(u, tol_sep=None):
    """r_i = F(phi_i) at the critical fibre angles, ordered by ascending lambda_i."""
    u = as_point(u)
    spec = _require_hyperbolic(u, tol_sep)
    return eval_integral_angle(u, spec.angles)


def _jacobian_from_angles(angles, n):
    k = np.arange(n)
    c, s = np.cos(angles), np.sin(angles)
    return c[:, None] ** (n - k) * s[:, None] ** k


def riemann_jacobian(u, tol_sep=None):
    """d r_i / d a_k = cos^{n-k} phi_i sin^k phi_i (k = 0..n-1)."""
    u = as_point(u)
    spec = _require_hyperbolic(u, tol_sep)
    return _jacobian_from_angles(spec.angles, u.shape[-1])


def riemann_jacobian_at_angles(angles, n):
    """Closed-form Jacobian for given angles; no hyperbolicity check (degenerate rows allowed)."""
    return _jacobian_from_angles(np.asarray(angles, dtype=float), n)


@dataclass
class InversionResult:
    point: np.ndarray
    iterations: int
    residual: float


def invert_riemann_map(r_target, guess, tol=1e-12, max_iter=50, full_output=False):
    """Newton solve of r(u) = r_target starting from ``guess``.

    Steps are halved while they leave the hyperbolic region or fail to reduce
    the residual.  Raises NoConvergenceError when no admissible decrease is
    found or after ``max_iter`` iterations.
    """
    u = as_point(guess).copy()
    r_target = np.asarray(r_target, dtype=float)
    n = u.shape[-1]
    if r_target.shape != (n,):
        raise ArityError(f"expected {n} Riemann invariants")
    spec = _require_hyperbolic(u)
    resid = eval_integral_angle(u, spec.angles) - r_target
    norm = float(np.max(np.abs(resid)))
    it = 0
    while norm > tol:
        if it >= max_iter:
            raise NoConvergenceError(f"no convergence after {max_iter} iterations (residual {norm:.3e})")
        J = _jacobian_from_angles(spec.angles, n)
        try:
            delta = np.linalg.solve(J, resid)
        except np.linalg.LinAlgError as exc:
            raise NoConvergenceError("singular Riemann Jacobian") from exc
        step, accepted, saw_hyperbolic = 1.0, False, False
        for _ in range(40):
            trial = u - step * delta
            if trial[-1] > 0.0:
                trial_spec = spectrum(trial)
                if trial_spec.hyperbolic:
                    saw_hyperbolic = True
                    trial_resid = eval_integral_angle(trial, trial_spec.angles) - r_target
                    trial_norm = float(np.max(np.abs(trial_resid)))
                    if trial_norm < norm or trial_norm <= tol:
                        accepted = True
                        break
            step *= 0.5
        it += 1
        if not accepted:
            if norm <= 1e3 * tol and saw_hyperbolic:
                # stalled at rounding level
                break
            if not saw_hyperbolic:
                raise ClassificationError("every Newton step leaves the hyperbolic region")
            raise NoConvergenceError(f"Newton stalled at residual {norm:.3e}")
        u, spec, resid, norm = trial, trial_spec, trial_resid, trial_norm
    if full_output:
        return InversionResult(u, it, norm)
    return u


def default_step(u):
    return 1e-4 * (1.0 + float(np.max(np.abs(u))))


class _LambdaStencil:
    """Eigenvalues at r + h * (integer offset vector), cached per offset."""

    def __init__(self, u, h, tol=None):
        self.u = as_point(u)
        spec = _require_hyperbolic(self.u)
        if spec.min_gap < 10.0 * h:
            raise ClassificationError(
                f"eigenvalue gap {spec.min_gap:.3e} below the required margin 10*h = {10 * h:.3e}"
            )
        self.h = h
        self.n = self.u.shape[-1]
        self.r0 = eval_integral_angle(self.u, spec.angles)
        self.tol = tol if tol is not None else 1e-14 * (1.0 + float(np.max(np.abs(self.r0))))
        self.cache = {(0,) * self.n: spec.eigenvalues}

    def lam(self, offset):
        offset = tuple(int(v) for v in offset)
        if offset not in self.cache:
            target = self.r0 + self.h * np.array(offset, dtype=float)
            u = invert_riemann_map(target, self.u, tol=self.tol)
            spec = spectrum(u)
            if not spec.hyperbolic:
                raise ClassificationError("hyperbolicity lost under perturbation")
            self.cache[offset] = spec.eigenvalues
        return self.cache[offset]

    def unit(self, *pairs):
        off = [0] * self.n
        for index, amount in pairs:
            off[index] += amount
        return tuple(off)

    def d_lambda(self, i, base=()):
        """Central difference of all lambda in direction r_i around base offset."""
        plus = self.lam(self.unit(*base, (i, 1)))
        minus = self.lam(self.unit(*base, (i, -1)))
        return (plus - minus) / (2.0 * self.h)


def lambda_sensitivity(u, h=None):
    """Matrix S[i, j] = d lambda_i / d r_j by central differences in r-space.

    Diagonal entries are the genuine-nonlinearity indicators.
    """
    u = as_point(u)
    h = default_step(u) if h is None else h
    st = _LambdaStencil(u, h)
    S = np.empty((st.n, st.n))
    for j in range(st.n):
        S[:, j] = st.d_lambda(j)
    return S


def gn_indicators(u, h=None):
    """Diagonal of ``lambda_sensitivity``."""
    return np.diag(lambda_sensitivity(u, h)).copy()


def richness_residual(u, h=None, scaled=False):
    """Semi-Hamiltonian residual for every triple (i, j, k) of distinct indices.

    Value = d_{r_k}(d_{r_i} lambda_j / (lambda_i - lambda_j))
          - d_{r_i}(d_{r_k} lambda_j / (lambda_k - lambda_j)),
    with nested central differences of step h.  Empty for n = 2.  With
    ``scaled`` each difference is divided by 1 + max(|left|, |right|).
    """
    u = as_point(u)
    h = default_step(u) if h is None else h
    st = _LambdaStencil(u, h)
    n = st.n

    def gamma(i, j, base):
        lam = st.lam(st.unit(*base))
        return st.d_lambda(i, base)[j] / (lam[i] - lam[j])

    out = {}
    for i in range(n):
        for k in range(n):
            if k == i:
                continue
            for j in range(n):
                if j in (i, k):
                    continue
                lhs = (gamma(i, j, ((k, 1),)) - gamma(i, j, ((k, -1),))) / (2.0 * h)
                rhs = (gamma(k, j, ((i, 1),)) - gamma(k, j, ((i, -1),))) / (2.0 * h)
                value = lhs - rhs
                if scaled:
                    value /= 1.0 + max(abs(lhs), abs(rhs))
                out[(i, j, k)] = float(value)
    return out


def stencil_margin(u, h):
    """min eigen-gap / (h * max |d lambda / d r|).

    Roughly how many stencil steps of size h fit before two eigenvalues could
    meet; nested differences are trustworthy only when this is large.
    """
    u = as_point(u)
    spec = _require_hyperbolic(u)
    S = lambda_sensitivity(u, 1e-4)
    return spec.min_gap / (h * float(np.max(np.abs(S))))


def lemma_discrepancy(u, lam):
    """Relative mismatch |det(lambda I - A) - sign g^{n-1} cos^{-n} F_phi| / max(1, |det|)."""
    u = as_point(u)
    n = u.shape[-1]
    det = np.linalg.det(lam * np.eye(n) - build_matrix(u))
    phi = np.arctan(lam / u[-1])
    rhs = lemma_sign() * u[-1] ** (n - 1) / np.cos(phi) ** n * eval_integral_dphi(u, phi)
    return abs(det - rhs) / max(1.0, abs(det))


def random_point(rng, n):
    """Validation sampling: a_k uniform in [-2, 2], g uniform in [0.5, 2]."""
    u = rng.uniform(-2.0, 2.0, n)
    u[-1] = rng.uniform(0.5, 2.0)
    return u


def random_hyperbolic_points(rng, n, count, min_gap=0.0, max_tries=None):
    """Draw ``count`` strictly hyperbolic points (with optional gap margin)."""
    out = []
    tries = 0
    max_tries = max_tries or 1000 * count
    while len(out) < count:
        if tries >= max_tries:
            raise NoConvergenceError(f"found only {len(out)} hyperbolic points in {tries} draws")
        tries += 1
        u = random_point(rng, n)
        spec = spectrum(u)
        if spec.hyperbolic and spec.min_gap > min_gap:
            out.append(u)
    return np.array(out)


def random_rich_check_points(rng, n, count, h=1e-3, q_min=200.0, min_gap=0.05, max_tries=None):
    """Strictly hyperbolic points whose ``stencil_margin`` at step h is >= q_min."""
    out = []
    tries = 0
    max_tries = max_tries or 2000 * count
    while len(out) < count:
        if tries >= max_tries:
            raise NoConvergenceError(f"found only {len(out)} well-separated points in {tries} draws")
        tries += 1
        u = random_point(rng, n)
        spec = spectrum(u)
        if not (spec.hyperbolic and spec.min_gap >= min_gap):
            continue
        try:
            q = stencil_margin(u, h)
        except (ClassificationError, NoConvergenceError):
            continue
        if q >= q_min:
            out.append(u)
    return np.array(out)
