"""
Discrete magnetic Hamiltonian on the periodic box and its spectral diagnostics.

H = -Delta + i(A . grad + div(A .)) + V with spectral derivatives; the
magnetic term uses the 2/3-dealiased gradient, the Laplacian is exact.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import fft
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, cg, eigs, eigsh, gmres, minres
from scipy.stats import linregress

from .errors import (ConfigurationError, ConvergenceError, InvalidFieldError, NotContractiveError,
                     OnSpectrumError, PreconditionError, SingularMatrixError, WindowError)
from .fields import Grid3D, ScalarField, VectorField, build_field
from .resolvent import r0_symbol
from .settings import get_settings, worker_count

logger = logging.getLogger(__name__)

FORMS = ('symmetric', 'gradient_left', 'gradient_right')
AXES = (-3, -2, -1)

DEALIAS = 2.0 / 3.0
# eigenvalues within BAND_FACTOR (|int V| + int |A|^2) / L^3 of zero are box artifacts
BAND_FACTOR = 4.0
LOCALIZATION_THRESHOLD = 0.99
REGULARITY_THRESHOLD = 1e-3
SUPPORT_CUTOFF = 1e-8
DENSE_LIMIT = 2000
CONDITION_LIMIT = 1e13


def dealias_mask(grid):
    """Keep the wavenumbers with every |k_i| <= 2/3 of the largest one."""
    k = np.abs(grid.wavenumbers)
    keep = k <= DEALIAS * k.max()
    return keep[:, None, None] & keep[None, :, None] & keep[None, None, :]


def _real_values(values, shape, name):
    if values is None:
        return None
    if isinstance(values, (ScalarField, VectorField)):
        values = values.values
    values = np.asarray(values)
    if values.shape != shape:
        raise InvalidFieldError(f"{name} needs shape {shape}, got {values.shape}")
    if np.iscomplexobj(values):
        if np.any(values.imag != 0):
            raise InvalidFieldError(f"{name} must be real-valued")
        values = values.real
    if not np.isfinite(values).all():
        raise InvalidFieldError(f"{name} contains non-finite samples")
    return values.astype(float)


class HamiltonianOperator:
    """
    Matrix-free H on a Grid3D.

    ``form`` picks one of three equivalent writings of the magnetic term:
    symmetric i(A.grad f + div(A f)), gradient_left i div(2 A f) - i (div A) f,
    gradient_right 2i A.grad f + i (div A) f. Only the symmetric form is
    hermitian for every discretized A; the others agree with it up to the
    discrete product rule. All methods accept stacked arrays (..., n, n, n).
    """

    def __init__(self, grid, A=None, V=None, form='symmetric'):
        if form not in FORMS:
            raise ConfigurationError(f"Unknown form: {form}; available forms: {list(FORMS)}")
        self.grid = grid
        self.form = form
        self.A = _real_values(A, (3,) + grid.shape, 'A')
        self.V = _real_values(V, grid.shape, 'V')
        self._workers = worker_count()
        mask = dealias_mask(grid)
        self._ik = [1j * k * mask for k in grid.k_vectors()]
        self._k2 = grid.k_squared()
        self._div_a = None if self.A is None else np.real(self.divergence(self.A))

    @property
    def has_magnetic(self):
        return self.A is not None and np.any(self.A != 0)

    def _fft(self, values):
        return fft.fftn(values, axes=AXES, workers=self._workers)

    def _ifft(self, values):
        return fft.ifftn(values, axes=AXES, workers=self._workers)

    def gradient(self, values):
        f_hat = self._fft(values)
        return [self._ifft(ik * f_hat) for ik in self._ik]

    def divergence(self, components):
        return sum(self._ifft(ik * self._fft(c)) for ik, c in zip(self._ik, components))

    def kinetic(self, values):
        return self._ifft(self._k2 * self._fft(values))

    def magnetic(self, values):
        if not self.has_magnetic:
            return np.zeros(np.shape(values), dtype=complex)
        A = self.A
        if self.form == 'symmetric':
            grad = self.gradient(values)
            return 1j * (sum(A[i] * grad[i] for i in range(3))
                         + self.divergence([A[i] * values for i in range(3)]))
        if self.form == 'gradient_left':
            return 1j * (2 * self.divergence([A[i] * values for i in range(3)]) - self._div_a * values)
        grad = self.gradient(values)
        return 1j * (2 * sum(A[i] * grad[i] for i in range(3)) + self._div_a * values)

    def perturbation(self, values):
        """U f = H f + Delta f."""
        out = self.magnetic(values)
        if self.V is not None:
            out = out + self.V * values
        return out

    def apply_values(self, values):
        return self.kinetic(values) + self.perturbation(values)

    def apply(self, f):
        return ScalarField(self.grid, self.apply_values(f.values))

    def linear_operator(self, shift=0.0):
        """(H - shift) on flattened grid vectors."""
        shape = self.grid.shape
        N = self.grid.size

        def matvec(x):
            x = np.asarray(x).reshape(shape)
            return (self.apply_values(x) - shift * x).ravel()

        return LinearOperator((N, N), matvec=matvec, rmatvec=matvec, dtype=complex)

    def lower_bound(self):
        """min (V - |A|^2): H = (-i grad - A)^2 - |A|^2 + V is bounded below by it."""
        bound = np.zeros(self.grid.shape)
        if self.V is not None:
            bound = bound + self.V
        if self.A is not None:
            bound = bound - np.sum(self.A ** 2, axis=0)
        return float(bound.min())

    def zero_band(self):
        """Half-width of the box's near-zero window around E = 0."""
        dv = self.grid.cell_volume
        mass = 0.0
        if self.V is not None:
            mass += abs(float(np.sum(self.V)) * dv)
        if self.A is not None:
            mass += float(np.sum(self.A ** 2)) * dv
        return max(BAND_FACTOR * mass / self.grid.L ** 3, 1e-8)


def assemble_h(grid, A_spec=None, V_spec=None, form='symmetric'):
    """Sample the potentials on ``grid`` and wrap them in a HamiltonianOperator."""
    A = None
    if A_spec is not None and A_spec.has_vector:
        A = build_field(A_spec, grid, part='vector')
    V = None
    if V_spec is not None and V_spec.scalar_terms:
        V = build_field(V_spec, grid, part='scalar')
    logger.debug("assembled H on n=%d L=%g (form %s, magnetic=%s)", grid.n, grid.L, form, A is not None)
    return HamiltonianOperator(grid, A, V, form)


def _multiplier_operator(grid, symbol):
    N = grid.size
    shape = grid.shape
    workers = worker_count()

    def matvec(x):
        x_hat = fft.fftn(np.asarray(x).reshape(shape), workers=workers)
        return fft.ifftn(symbol * x_hat, workers=workers).ravel()

    return LinearOperator((N, N), matvec=matvec, dtype=complex)


def _shift_inverse(H, sigma, settings, definite):
    """(H - sigma)^{-1} by preconditioned CG (definite) or MINRES (interior shifts)."""
    op = H.linear_operator(shift=sigma)
    k2 = H.grid.k_squared()
    if definite:
        precond = _multiplier_operator(H.grid, 1.0 / (k2 - sigma))
    else:
        precond = _multiplier_operator(H.grid, 1.0 / (np.abs(k2 - sigma) + 1.0))
    solver = cg if definite else minres
    rtol = min(settings.eig_tol, 1e-10) * 1e-2

    def solve(b):
        x, info = solver(op, b, rtol=rtol, maxiter=20 * H.grid.n, M=precond)
        if info > 0:
            raise ConvergenceError(f"inner solve at shift {sigma:g} did not converge ({info} iterations)")
        return x

    N = H.grid.size
    return LinearOperator((N, N), matvec=solve, dtype=complex)


def _arpack(H, k, sigma, settings, definite):
    try:
        _, vectors = eigsh(H.linear_operator(), k=k, sigma=sigma, which='LM',
                           OPinv=_shift_inverse(H, sigma, settings, definite), tol=settings.eig_tol)
    except ArpackNoConvergence as exc:
        raise ConvergenceError(f"eigensolver did not converge at shift {sigma:g}: {exc}") from exc
    return vectors


def _rayleigh_ritz(H, vectors):
    """Orthonormal eigenvectors, energies and residuals within span(vectors)."""
    Q, _ = np.linalg.qr(vectors)
    HQ = np.stack([H.apply_values(q.reshape(H.grid.shape)).ravel() for q in Q.T], axis=1)
    small = Q.conj().T @ HQ
    energies, Z = np.linalg.eigh(0.5 * (small + small.conj().T))
    X = Q @ Z
    residuals = np.linalg.norm(HQ @ Z - X * energies[None, :], axis=0)
    return energies, X, residuals


def _localization(grid, X):
    """Fraction of each column's mass inside the inner half box."""
    inner = np.all(np.abs(grid.points()) < grid.L / 4, axis=-1).ravel()
    mass = np.abs(X) ** 2
    return mass[inner].sum(axis=0) / mass.sum(axis=0)


@dataclass
class SpectrumReport:
    """
    Eigenpairs of H sorted by energy.

    ``vectors`` are L2-normalized eigenfunctions, shape (k, n, n, n).
    Classification: 'negative', 'near-zero', 'positive'; embedded
    candidates (localized positive pairs from the window scan) are listed
    separately.
    """

    grid: Grid3D
    energies: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    classification: List[str]
    localization: np.ndarray
    band: float
    embedded: List[dict] = field(default_factory=list)
    settings: dict = field(default_factory=dict)

    def eigenfunction(self, i):
        return ScalarField(self.grid, self.vectors[i])

    @property
    def bound_indices(self):
        return [i for i, c in enumerate(self.classification) if c == 'negative']

    @property
    def negative_count(self):
        return len(self.bound_indices)

    @property
    def lambdas(self):
        """sqrt(-E_n) of the bound states."""
        return np.sqrt(-self.energies[self.bound_indices])

    def to_dict(self):
        return {
            'grid': self.grid.info(),
            'energies': [float(e) for e in self.energies],
            'residuals': [float(r) for r in self.residuals],
            'classification': list(self.classification),
            'localization': [float(s) for s in self.localization],
            'lambdas': [float(v) for v in self.lambdas],
            'band': self.band,
            'negative_count': self.negative_count,
            'embedded': list(self.embedded),
            'settings': self.settings,
        }

    def save(self, prefix):
        """Write ``prefix``.json (summary) and ``prefix``.npz (eigenvectors)."""
        with open(f"{prefix}.json", 'w') as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
        np.savez(f"{prefix}.npz", energies=self.energies, vectors=self.vectors,
                 residuals=self.residuals, localization=self.localization)

    @classmethod
    def load(cls, prefix):
        with open(f"{prefix}.json") as fh:
            data = json.load(fh)
        with np.load(f"{prefix}.npz") as arrays:
            return cls(Grid3D(data['grid']['n'], data['grid']['L']), arrays['energies'], arrays['vectors'],
                       arrays['residuals'], data['classification'], arrays['localization'],
                       data['band'], data['embedded'], data['settings'])


def _scan_window(H, window, settings, per_shift=4, n_shifts=3):
    """Localized eigenpairs with energies inside ``window`` (shift-invert at interior shifts)."""
    lo, hi = window
    found = []
    for sigma in np.linspace(lo, hi, n_shifts + 2)[1:-1]:
        energies, X, _ = _rayleigh_ritz(H, _arpack(H, per_shift, sigma, settings, definite=False))
        scores = _localization(H.grid, X)
        for energy, score in zip(energies, scores):
            if lo < energy < hi and score > LOCALIZATION_THRESHOLD:
                found.append({'energy': float(energy), 'localization': float(score)})
    if found:
        logger.warning("localized eigenpairs inside (%g, %g): %s", lo, hi, found)
    return found


def eigensolve(H, k=1, window=None, settings=None):
    """
    The k lowest eigenpairs of H, plus an optional embedded-eigenvalue scan.

    Shift-invert below the spectrum with CG inner solves; ``window`` =
    (0, E_max) additionally scans interior shifts for localized pairs.
    """
    settings = get_settings(settings)
    if k < 1:
        raise ConfigurationError(f"eigensolve needs k >= 1, got {k}")
    k = min(k, H.grid.size - 2)
    sigma = H.lower_bound() - 1.0
    energies, X, residuals = _rayleigh_ritz(H, _arpack(H, k, sigma, settings, definite=True))
    band = H.zero_band()
    classification = []
    for energy in energies:
        if energy < -band:
            classification.append('negative')
        elif energy <= band:
            classification.append('near-zero')
        else:
            classification.append('positive')
    localization = _localization(H.grid, X)
    embedded = _scan_window(H, window, settings) if window is not None else []
    # L2 normalization on the grid
    vectors = (X / np.sqrt(H.grid.cell_volume)).T.reshape((len(energies),) + H.grid.shape)
    report = SpectrumReport(H.grid, energies, vectors, residuals, classification, localization,
                            band, embedded, settings.info())
    logger.info("eigensolve: E = %s, %d negative", np.array2string(energies, precision=6), report.negative_count)
    return report


def pac_apply(report, f):
    """Remove the bound-state components: f - sum <f_n, f> f_n."""
    out = f.values.astype(complex)
    for i in report.bound_indices:
        fn = report.eigenfunction(i)
        out = out - fn.inner(f) * fn.values
    return ScalarField(f.grid, out)


def pac_commutation_residual(H, report, f):
    """||P H f - H P f|| / ||H f|| for the continuous-spectrum projection P."""
    Hf = H.apply(f)
    lhs = pac_apply(report, Hf)
    rhs = H.apply(pac_apply(report, f))
    return (lhs - rhs).norm() / max(Hf.norm(), 1e-300)


class _SupportOperator:
    """
    U R0(0) compressed to the support S of U.

    R0(0) is the free zero-energy kernel truncated at radius L/2; its
    transform is exact on the box. The compression carries all nonzero
    eigenvalues of U R0(0).
    """

    def __init__(self, H):
        self.H = H
        grid = H.grid
        weight = np.zeros(grid.shape)
        if H.V is not None:
            weight = weight + np.abs(H.V)
        if H.A is not None:
            weight = weight + np.sqrt(np.sum(H.A ** 2, axis=0))
        top = weight.max()
        self.index = np.flatnonzero(weight.ravel() > SUPPORT_CUTOFF * top) if top > 0 else np.array([], int)
        self.symbol = r0_symbol(grid, 0.0)
        self.size = len(self.index)

    def embed(self, g):
        g = np.asarray(g)
        out = np.zeros(g.shape[:-1] + (self.H.grid.size,), dtype=complex)
        out[..., self.index] = g
        return out.reshape(g.shape[:-1] + self.H.grid.shape)

    def restrict(self, values):
        flat = values.reshape(values.shape[:-3] + (-1,))
        return flat[..., self.index]

    def r0(self, values):
        return self.H._ifft(self.symbol * self.H._fft(values))

    def matvec(self, g):
        return self.restrict(self.H.perturbation(self.r0(self.embed(g))))

    def rmatvec(self, g):
        return self.restrict(self.r0(self.H.perturbation(self.embed(g))))

    def linear_operator(self):
        m = self.size
        return LinearOperator((m, m), matvec=self.matvec, rmatvec=self.rmatvec, dtype=complex)

    def dense(self, chunk=64):
        m = self.size
        out = np.empty((m, m), dtype=complex)
        eye = np.eye(m)
        for start in range(0, m, chunk):
            out[:, start:start + chunk] = self.matvec(eye[start:start + chunk]).T
        return out


def birman_schwinger_count(grid, A_spec=None, V_spec=None, settings=None):
    """Number of eigenvalues of U (-Delta)^{-1} below -1 (= number of bound states of H)."""
    settings = get_settings(settings)
    op = _SupportOperator(assemble_h(grid, A_spec, V_spec))
    m = op.size
    if m == 0:
        return 0
    if m <= DENSE_LIMIT:
        values = np.linalg.eigvals(op.dense())
        count = int(np.sum(values.real < -1.0))
    else:
        k = 6
        while True:
            k = min(k, m - 2)
            try:
                values = eigs(op.linear_operator(), k=k, which='SR', tol=settings.eig_tol,
                              return_eigenvectors=False)
            except ArpackNoConvergence as exc:
                raise ConvergenceError(f"Birman-Schwinger eigenvalues did not converge: {exc}") from exc
            count = int(np.sum(values.real < -1.0))
            if count < k or k == m - 2:
                break
            k *= 2
    logger.info("Birman-Schwinger count on n=%d: %d (support %d nodes)", grid.n, count, m)
    return count


def critical_coupling(grid, V_spec, settings=None):
    """
    Coupling c at which c V (for V <= 0) first produces a zero-energy mode.

    c = 1 / (largest eigenvalue of |V|^{1/2} R0(0) |V|^{1/2}).
    """
    settings = get_settings(settings)
    op = _SupportOperator(assemble_h(grid, None, V_spec))
    if op.size == 0:
        raise PreconditionError("critical coupling of a vanishing potential")
    root = np.sqrt(np.abs(op.restrict(op.H.V)))

    def matvec(g):
        g = np.asarray(g)
        return root * op.restrict(op.r0(op.embed(root * g)))

    if op.size <= DENSE_LIMIT:
        dense = np.real(matvec(np.eye(op.size)).T)
        top = float(np.linalg.eigvalsh(0.5 * (dense + dense.T))[-1])
    else:
        linear = LinearOperator((op.size, op.size), matvec=matvec, dtype=complex)
        top = float(eigsh(linear, k=1, which='LA', tol=settings.eig_tol, return_eigenvectors=False)[0])
    return 1.0 / top


@dataclass
class RegularityDiagnostic:
    """Smallest singular values of I + U R0(0) (H) and I - U R0(0) (H_{-1})."""

    sigma_min: float
    sigma_min_minus: float
    q: float
    threshold: float
    trend: Optional[float] = None

    @property
    def suspected_resonance(self):
        """sigma_min shrinking like h under refinement."""
        return self.trend is not None and self.trend < 0.75

    @property
    def regular(self):
        return (self.sigma_min > self.threshold and self.sigma_min_minus > self.threshold
                and not self.suspected_resonance)

    def to_dict(self):
        return {'sigma_min': self.sigma_min, 'sigma_min_minus': self.sigma_min_minus, 'q': self.q,
                'threshold': self.threshold, 'trend': self.trend, 'regular': self.regular}


def _singular_values(op, settings):
    """
    Smallest singular values of I + K and I - K and the norm of K = U R0(0) on S.

    Dense SVD up to DENSE_LIMIT support nodes, Lanczos on the normal operators beyond.
    """
    m = op.size
    if m <= DENSE_LIMIT:
        K = op.dense()
        eye = np.eye(m)
        plus = np.linalg.svd(eye + K, compute_uv=False)[-1]
        minus = np.linalg.svd(eye - K, compute_uv=False)[-1]
        q = np.linalg.svd(K, compute_uv=False)[0]
        return float(plus), float(minus), float(q)

    def extreme(sign):
        def normal(g):
            if sign == 0:
                return op.rmatvec(op.matvec(g))
            Mg = g + sign * op.matvec(g)
            return Mg + sign * op.rmatvec(Mg)

        linear = LinearOperator((m, m), matvec=normal, dtype=complex)
        try:
            value = eigsh(linear, k=1, which='LA' if sign == 0 else 'SA', tol=settings.eig_tol,
                          return_eigenvectors=False)[0]
        except ArpackNoConvergence as exc:
            raise ConvergenceError(f"singular value iteration did not converge: {exc}") from exc
        return float(np.sqrt(max(value, 0.0)))

    return extreme(1.0), extreme(-1.0), extreme(0)



def zero_regularity(grid, A_spec=None, V_spec=None, threshold=REGULARITY_THRESHOLD, trend=False,
                    settings=None):
    """
    Regularity of the zero energy for H and H_{-1} = -Delta - U.

    sigma_min is the smallest singular value of I + U R0(0) compressed to the
    support of U (I - U R0(0) for H_{-1}). I + U R0(0) is invertible exactly
    when I + R0(0) U is; only the former compresses to the support.

    With ``trend`` the smallest singular value is recomputed on the refined
    grid; a ratio near 1/2 marks a suspected resonance.
    """
    settings = get_settings(settings)
    op = _SupportOperator(assemble_h(grid, A_spec, V_spec))
    if op.size == 0:
        return RegularityDiagnostic(1.0, 1.0, 0.0, threshold, 1.0 if trend else None)
    plus, minus, q = _singular_values(op, settings)
    ratio = None
    if trend:
        fine = zero_regularity(grid.refined(), A_spec, V_spec, threshold, trend=False, settings=settings)
        ratio = min(fine.sigma_min, fine.sigma_min_minus) / max(min(plus, minus), 1e-300)
    diagnostic = RegularityDiagnostic(plus, minus, q, threshold, ratio)
    logger.info("zero regularity: sigma_min=%.4g (H_-1: %.4g), q=%.4g, regular=%s",
                plus, minus, q, diagnostic.regular)
    return diagnostic


def feshbach_invert(L, split):
    """
    Inverse of L from the block formula around the Schur complement
    C = L11 - L10 L00^{-1} L01, where block 0 holds the indices in ``split``.
    """
    L = np.asarray(L)
    n = L.shape[0]
    if L.ndim != 2 or L.shape[1] != n:
        raise ConfigurationError(f"feshbach_invert needs a square matrix, got shape {L.shape}")
    i0 = np.asarray(sorted(set(int(i) for i in split)), dtype=int)
    i1 = np.setdiff1d(np.arange(n), i0)
    dtype = np.result_type(L.dtype, float)
    out = np.empty((n, n), dtype=dtype)
    if len(i0):
        L00 = L[np.ix_(i0, i0)]
        if not np.linalg.cond(L00) < CONDITION_LIMIT:
            raise PreconditionError("block L00 is singular")
        L00_inv = np.linalg.inv(L00)
    if not len(i1):
        return L00_inv
    L11 = L[np.ix_(i1, i1)]
    if len(i0):
        L01 = L[np.ix_(i0, i1)]
        L10 = L[np.ix_(i1, i0)]
        C = L11 - L10 @ L00_inv @ L01
    else:
        C = L11
    if not np.linalg.cond(C) < CONDITION_LIMIT:
        raise SingularMatrixError("Schur complement is singular, so L is not invertible")
    C_inv = np.linalg.inv(C)
    out[np.ix_(i1, i1)] = C_inv
    if len(i0):
        out[np.ix_(i0, i1)] = -L00_inv @ L01 @ C_inv
        out[np.ix_(i1, i0)] = -C_inv @ L10 @ L00_inv
        out[np.ix_(i0, i0)] = L00_inv + L00_inv @ L01 @ C_inv @ L10 @ L00_inv
    return out


@dataclass
class AgmonFit:
    rate: float
    reference: float
    window: tuple
    r_squared: float

    @property
    def relative_error(self):
        return abs(self.rate - self.reference) / self.reference

    def to_dict(self):
        return {'rate': self.rate, 'reference': self.reference, 'window': list(self.window),
                'r_squared': self.r_squared, 'relative_error': self.relative_error}


def agmon_fit(report, index=0, window=(1.5, 4.0), floor=1e-10):
    """
    Exponential decay rate of a bound state against sqrt(-E).

    Fits log(r <|f|>_r) linearly in r over ``window`` (shell averages of
    width h); the exterior tail is exp(-sqrt(-E) r) / r.
    """
    if index not in report.bound_indices:
        raise PreconditionError(f"eigenpair {index} is not a bound state (E < 0)")
    grid = report.grid
    lo, hi = window
    if not 0 <= lo < hi <= grid.L / 2:
        raise WindowError(f"fit window {window} does not fit the box of half-width {grid.L / 2}")
    r = grid.radius().ravel()
    f = np.abs(report.vectors[index]).ravel()
    edges = np.arange(lo, hi + 0.5 * grid.h, grid.h)
    which = np.digitize(r, edges) - 1
    radii, means = [], []
    for b in range(len(edges) - 1):
        sel = which == b
        if sel.any():
            radii.append(r[sel].mean())
            means.append(f[sel].mean())
    radii, means = np.array(radii), np.array(means)
    if len(radii) < 3 or means.min() < floor * f.max():
        raise WindowError(f"fit window {window} reaches the noise floor or holds too few shells")
    fit = linregress(radii, np.log(means * radii))
    result = AgmonFit(float(-fit.slope), float(np.sqrt(-report.energies[index])), tuple(window),
                      float(fit.rvalue ** 2))
    logger.info("Agmon fit: rate %.4f vs sqrt(-E) %.4f", result.rate, result.reference)
    return result


@dataclass
class SeriesCheck:
    residual: float
    contraction: float
    samples: int

    def to_dict(self):
        return {'residual': self.residual, 'contraction': self.contraction, 'samples': self.samples}


def _operator_norm(apply, adjoint, shape, rng, iterations=30):
    x = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    x /= np.linalg.norm(x)
    value = 0.0
    for _ in range(iterations):
        y = adjoint(apply(x))
        value = np.linalg.norm(y)
        if value == 0:
            return 0.0
        x = y / value
    return float(np.sqrt(value))


def resolvent_series_check(grid, A_spec, V_spec, lam, n_samples=5, seed=0, settings=None):
    """
    Compare R = (I - R0 U R0 U)^{-1} (R0 - R0 U R0) with (H - lam^2)^{-1} on random samples.

    R0 is the periodic free resolvent 1/(k^2 - lam^2). The series side is
    solved by GMRES on I - R0 U R0 U; the reference solves (H - lam^2) x = b by
    GMRES preconditioned with (k^2 + 1)^{-1}, so it never goes through R0.
    The residual is the largest relative difference.
    """
    settings = get_settings(settings)
    lam = complex(lam)
    z = lam ** 2
    if abs(z.imag) < 1e-14:
        raise OnSpectrumError(f"lambda^2 = {z} is real; the check needs Im lambda^2 != 0")
    H = assemble_h(grid, A_spec, V_spec)
    shape = grid.shape
    N = grid.size
    symbol = 1.0 / (grid.k_squared() - z)

    def r0(values, conjugate=False):
        return H._ifft((np.conj(symbol) if conjugate else symbol) * H._fft(values))

    def T(x):
        return r0(H.perturbation(r0(H.perturbation(x))))

    def T_adjoint(x):
        return H.perturbation(r0(H.perturbation(r0(x, True)), True))

    rng = np.random.default_rng(seed)
    norm = _operator_norm(T, T_adjoint, shape, rng)
    if norm >= 1.0:
        raise NotContractiveError(f"||R0 U R0 U|| = {norm:.4g} >= 1")

    bessel = 1.0 / (grid.k_squared() + 1.0)
    preconditioner = LinearOperator(
        (N, N), matvec=lambda x: H._ifft(bessel * H._fft(x.reshape(shape))).ravel(), dtype=complex)

    def solve(matvec, rhs, M=None):
        op = LinearOperator((N, N), matvec=lambda x: matvec(x.reshape(shape)).ravel(), dtype=complex)
        x, info = gmres(op, rhs.ravel(), rtol=settings.neumann_tol, atol=0.0, restart=50,
                        maxiter=20 * grid.n, M=M)
        if info > 0:
            raise ConvergenceError(f"GMRES did not converge ({info} iterations)")
        return x.reshape(shape)

    envelope = np.exp(-np.sum(grid.points() ** 2, axis=-1) / (grid.L / 6) ** 2)
    worst = 0.0
    for _ in range(n_samples):
        b = envelope * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
        rhs = r0(b) - r0(H.perturbation(r0(b)))
        series = solve(lambda x: x - T(x), rhs)
        reference = solve(lambda x: H.apply_values(x) - z * x, b, preconditioner)
        worst = max(worst, float(np.linalg.norm(series - reference) / np.linalg.norm(reference)))
    logger.info("resolvent series at lambda=%s: residual %.3e (||T|| = %.3g)", lam, worst, norm)
    return SeriesCheck(worst, norm, n_samples)
