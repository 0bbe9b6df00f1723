"""Two-qubit state tomography: linear inversion and maximum likelihood.

Counts for setting ``nu`` are modelled as ``n_nu ~ A * g_nu * Tr(P_nu rho)``
where ``g_nu`` is the relative exposure (gate count) of the setting and ``A``
an unknown overall intensity.  ``A`` is profiled out of both likelihoods in
closed form, so only ``rho`` is optimized.  The MLE parameterizes
``rho = T^dag T / Tr(T^dag T)`` with ``T`` lower triangular (16 real
parameters), which keeps every iterate physical.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .polarization import (basis_ket, bell_phi, check_density, density_to_dict, fidelity_sqrt,
                           purity, two_photon_projector)
from .records import CountRecord, sum_by_setting

__all__ = [
    "JAMES_SETTINGS",
    "ProjectorSet",
    "SpanningError",
    "MLEOptions",
    "TomographyResult",
    "SubtractedCounts",
    "default_projector_set",
    "subtract_accidentals",
    "counts_from_records",
    "expected_counts",
    "linear_reconstruct",
    "mle_reconstruct",
    "phase_fit",
    "reconstruct_records",
    "bootstrap_errors",
    "rho_from_params",
    "params_from_rho",
]

# the standard sixteen-setting two-qubit tomography sequence
JAMES_SETTINGS = ("HH", "HV", "VV", "VH", "RH", "RV", "DV", "DH",
                  "DR", "DD", "RD", "HD", "VD", "VL", "HL", "RL")

_PAULI = [np.eye(2), np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1, -1])]
_GAMMA = np.array([0.5 * np.kron(a, b) for a in _PAULI for b in _PAULI], dtype=complex)

_TRIL = np.tril_indices(4, -1)


class SpanningError(ValueError):
    def __init__(self, cond):
        super().__init__(f"projector set is not tomographically complete (condition number {cond:.3g})")
        self.condition_number = cond


@dataclass
class ProjectorSet:
    """Sixteen (setting_id, signal label, idler label) entries and their projectors."""

    entries: list
    max_condition: float = 1e10

    def __post_init__(self):
        self.entries = [tuple(e) for e in self.entries]
        self.projectors = np.array([two_photon_projector(basis_ket(s), basis_ket(i))
                                    for _, s, i in self.entries])
        # B[nu, mu] = Tr(P_nu Gamma_mu); Gamma are Hermitian so this is real
        self.overlap = np.real(np.einsum("nij,mji->nm", self.projectors, _GAMMA))
        if self.overlap.shape[0] == 16:
            self.condition_number = float(np.linalg.cond(self.overlap))
        else:
            self.condition_number = float("inf")

    @classmethod
    def from_ids(cls, setting_ids) -> "ProjectorSet":
        return cls([(sid, sid[0], sid[1]) for sid in setting_ids])

    @property
    def setting_ids(self) -> list[str]:
        return [e[0] for e in self.entries]

    @property
    def spanning(self) -> bool:
        return len(self.entries) == 16 and self.condition_number < self.max_condition

    def require_spanning(self) -> "ProjectorSet":
        if not self.spanning:
            raise SpanningError(self.condition_number)
        return self

    def probabilities(self, rho) -> np.ndarray:
        return np.real(np.einsum("nij,ji->n", self.projectors, rho))


def default_projector_set() -> ProjectorSet:
    return ProjectorSet.from_ids(JAMES_SETTINGS)


@dataclass
class SubtractedCounts:
    setting_ids: list
    counts: np.ndarray
    exposure: np.ndarray
    clamped: list

    @property
    def clamp_rate(self) -> float:
        return len(self.clamped) / max(len(self.setting_ids), 1)


def subtract_accidentals(records) -> SubtractedCounts:
    """``max(coincidence - accidental, 0)`` per record; clamped setting ids are reported."""
    counts, clamped = [], []
    for r in records:
        v = r.coincidence - r.accidental
        if v < 0:
            clamped.append(r.setting_id)
            v = 0
        counts.append(v)
    return SubtractedCounts([r.setting_id for r in records], np.array(counts, dtype=float),
                            np.array([r.n_gates for r in records], dtype=float), clamped)


def counts_from_records(records, pset: ProjectorSet, subtract: bool = True) -> SubtractedCounts:
    """Sum repeats per setting and align them with ``pset``'s order."""
    merged = {r.setting_id: r for r in sum_by_setting(records)}
    missing = [sid for sid in pset.setting_ids if sid not in merged]
    if missing:
        raise ValueError(f"records missing settings {missing}")
    ordered = [merged[sid] for sid in pset.setting_ids]
    if subtract:
        return subtract_accidentals(ordered)
    return SubtractedCounts(pset.setting_ids, np.array([r.coincidence for r in ordered], dtype=float),
                            np.array([r.n_gates for r in ordered], dtype=float), [])


def expected_counts(rho, pset: ProjectorSet, total: float = 1e6, exposure=None) -> np.ndarray:
    """Noise-free counts ``total * g_nu * Tr(P_nu rho)`` (``g`` defaults to all ones)."""
    g = np.ones(len(pset.entries)) if exposure is None else np.asarray(exposure, float) / np.mean(exposure)
    return total * g * pset.probabilities(rho)


def _relative_exposure(exposure, n):
    if exposure is None:
        return np.ones(n)
    g = np.asarray(exposure, dtype=float)
    if np.any(g <= 0):
        raise ValueError("exposures must be > 0")
    return g / g.mean()


def linear_reconstruct(counts, pset: ProjectorSet, exposure=None):
    """Linear-inversion estimate; returns ``(rho, is_physical)``.

    The result is Hermitian with unit trace but may have negative eigenvalues.
    """
    pset.require_spanning()
    counts = np.asarray(counts, dtype=float)
    g = _relative_exposure(exposure, counts.size)
    coeffs = np.linalg.solve(pset.overlap, counts / g)
    rho = np.einsum("m,mij->ij", coeffs, _GAMMA)
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.real(np.trace(rho))
    if tr <= 0:
        raise ValueError("linear inversion gave non-positive trace; counts carry no signal")
    rho = rho / tr
    return rho, bool(np.linalg.eigvalsh(rho)[0] >= -1e-9)


def rho_from_params(t) -> np.ndarray:
    T = _t_matrix(t)
    m = T.conj().T @ T
    return m / np.real(np.trace(m))


def _t_matrix(t):
    t = np.asarray(t, dtype=float)
    T = np.zeros((4, 4), dtype=complex)
    T[np.diag_indices(4)] = t[:4]
    T[_TRIL] = t[4:10] + 1j * t[10:16]
    return T


def params_from_rho(rho, floor: float = 1e-8) -> np.ndarray:
    """Lower-triangular ``T`` with ``T^dag T = rho`` after clipping and regularizing."""
    rho = 0.5 * (rho + np.conj(rho).T)
    w, v = np.linalg.eigh(rho)
    w = np.clip(w, 0.0, None)
    w = w / w.sum()
    w = (1 - floor) * w + floor / 4
    rho = (v * w) @ v.conj().T
    # T^dag T with T lower triangular: Cholesky of the index-reversed matrix
    J = np.eye(4)[::-1]
    L = np.linalg.cholesky(J @ rho @ J)
    T = (J @ L @ J).conj().T
    return np.concatenate([np.real(np.diag(T)), T[_TRIL].real, T[_TRIL].imag])


@dataclass
class MLEOptions:
    likelihood: str = "poisson"
    max_iterations: int = 100_000
    convergence_tol: float = 1e-10
    initializer: str = "projected_linear"

    def __post_init__(self):
        if self.likelihood not in ("poisson", "gaussian"):
            raise ValueError("likelihood must be 'poisson' or 'gaussian'")
        if self.initializer not in ("identity", "projected_linear"):
            raise ValueError("initializer must be 'identity' or 'projected_linear'")
        if self.convergence_tol <= 0:
            raise ValueError("convergence_tol must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class TomographyResult:
    rho: np.ndarray
    nll: float
    iterations: int
    converged: bool
    fidelity_phi_plus: float
    fidelity_best_phase: float
    best_phase: float
    purity: float
    raw_vs_subtracted: str = "subtracted"
    options: MLEOptions = field(default_factory=MLEOptions)
    nll_trace: list = field(default_factory=list, repr=False)
    clamped: list = field(default_factory=list)
    phase_defined: bool = True

    def to_dict(self) -> dict:
        return {
            "rho": density_to_dict(self.rho),
            "metrics": {
                "fidelity_phi_plus": self.fidelity_phi_plus,
                "fidelity_best_phase": self.fidelity_best_phase,
                "best_phase_rad": self.best_phase,
                "phase_defined": bool(self.phase_defined),
                "purity": self.purity,
            },
            "optimizer": {
                "nll": self.nll,
                "iterations": self.iterations,
                "converged": bool(self.converged),
                "nll_monotone": bool(np.all(np.diff(self.nll_trace) <= 1e-9 * (1 + np.abs(self.nll_trace[1:]))))
                if len(self.nll_trace) > 1 else True,
            },
            "counts": {"mode": self.raw_vs_subtracted, "clamped_settings": list(self.clamped)},
            "options": asdict(self.options),
        }


def _nll_and_weights(p, n, likelihood):
    """Profiled negative log-likelihood and its gradient with respect to ``p``."""
    p = np.maximum(p, 1e-300)
    if likelihood == "poisson":
        # measured from the saturated model, so the optimum sits near zero
        ntot, s = n.sum(), p.sum()
        pos = n > 0
        nll = np.sum(n[pos] * np.log(n[pos] * s / (ntot * p[pos])))
        return nll, ntot / s - n / p
    a = np.sqrt(np.sum(n**2 / p) / p.sum())
    nll = np.sum((n - a * p) ** 2 / (2 * a * p))
    return nll, a / 2 - n**2 / (2 * a * p**2)


def _objective(t, n, g, pset, likelihood):
    T = _t_matrix(t)
    m = T.conj().T @ T
    tr = np.real(np.trace(m))
    rho = m / tr
    p = g * pset.probabilities(rho)
    nll, w = _nll_and_weights(p, n, likelihood)
    W = np.einsum("n,nij->ij", w * g, pset.projectors)
    Wp = (W - np.real(np.trace(W @ rho)) * np.eye(4)) / tr
    G = Wp @ T.conj().T  # d nll = 2 Re Tr(G dT)
    grad_T = 2 * G.T  # entry (j, k) pairs with dT[j, k]
    grad = np.concatenate([np.real(np.diag(grad_T)), np.real(grad_T[_TRIL]), -np.imag(grad_T[_TRIL])])
    return nll, grad


def mle_reconstruct(counts, pset: ProjectorSet, opts: MLEOptions | None = None, exposure=None,
                    mode: str = "subtracted", clamped=()) -> TomographyResult:
    """Maximum-likelihood density matrix from sixteen setting counts."""
    opts = opts or MLEOptions()
    pset.require_spanning()
    n = np.asarray(counts, dtype=float)
    if np.any(n < 0):
        raise ValueError("counts must be >= 0")
    if not np.any(n > 0):
        raise ValueError("all counts are zero; nothing to reconstruct")
    g = _relative_exposure(exposure, n.size)

    if opts.initializer == "projected_linear":
        try:
            rho0, _ = linear_reconstruct(n, pset, g)
        except ValueError:
            rho0 = np.eye(4) / 4
    else:
        rho0 = np.eye(4) / 4
    t0 = params_from_rho(rho0, floor=1e-3)

    trace = [_objective(t0, n, g, pset, opts.likelihood)[0]]

    def cb(xk):
        trace.append(_objective(xk, n, g, pset, opts.likelihood)[0])

    res = minimize(_objective, t0, args=(n, g, pset, opts.likelihood), jac=True, method="L-BFGS-B",
                   callback=cb, options={"maxiter": opts.max_iterations, "ftol": opts.convergence_tol,
                                         "gtol": 1e-12, "maxcor": 30, "maxfun": 10 * opts.max_iterations})
    rho = rho_from_params(res.x)
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.real(np.trace(rho))
    check_density(rho)
    # an exhausted line search at machine precision is still a converged optimum
    converged = bool(res.success or (res.nit < opts.max_iterations and "ABNORMAL" in str(res.message)))
    phase, f_best, defined = phase_fit(rho, return_flag=True)
    return TomographyResult(
        rho=rho, nll=float(res.fun), iterations=int(res.nit), converged=converged,
        fidelity_phi_plus=fidelity_sqrt(rho, bell_phi(0.0)), fidelity_best_phase=f_best,
        best_phase=phase, purity=purity(rho), raw_vs_subtracted=mode, options=opts,
        nll_trace=trace, clamped=list(clamped), phase_defined=defined,
    )


def phase_fit(rho, return_flag: bool = False):
    """Best relative phase of ``|HH> + e^{i phi}|VV>`` and the fidelity there.

    The optimum is ``arg rho[VV, HH]``; when that coherence vanishes the
    phase is undefined and reported as 0 (flag ``False``).
    """
    rho = np.asarray(rho)
    c = rho[3, 0]
    defined = bool(abs(c) >= 1e-12)
    phi = float(np.angle(c)) if defined else 0.0
    f = fidelity_sqrt(rho, bell_phi(phi))
    return (phi, f, defined) if return_flag else (phi, f)


def reconstruct_records(records, pset: ProjectorSet | None = None, opts: MLEOptions | None = None,
                        subtract: bool = True) -> TomographyResult:
    """Sum repeats, optionally subtract accidentals, then run the MLE."""
    pset = (pset or default_projector_set()).require_spanning()
    sc = counts_from_records(records, pset, subtract)
    return mle_reconstruct(sc.counts, pset, opts, sc.exposure,
                           "subtracted" if subtract else "raw", sc.clamped)


def bootstrap_errors(records, pset: ProjectorSet | None = None, opts: MLEOptions | None = None,
                     n_resamples: int = 200, seed: int = 0, subtract: bool = True) -> dict:
    """Parametric Poisson bootstrap of fidelity, purity and phase.

    Coincidence and accidental totals per setting are redrawn from Poisson
    distributions centred on the observed values and the MLE is rerun.
    Returns sample standard deviations keyed by metric name, plus the
    resampled values.
    """
    if n_resamples < 100:
        raise ValueError("n_resamples must be >= 100")
    pset = (pset or default_projector_set()).require_spanning()
    merged = {r.setting_id: r for r in sum_by_setting(records)}
    base = [merged[sid] for sid in pset.setting_ids]
    coinc = np.array([r.coincidence for r in base], dtype=float)
    acc = np.array([r.accidental for r in base], dtype=float)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2,)))
    samples = {"fidelity_phi_plus": [], "fidelity_best_phase": [], "purity": [], "best_phase": []}
    for _ in range(n_resamples):
        c = rng.poisson(coinc)
        a = rng.poisson(acc) if subtract else np.zeros_like(acc)
        resampled = [replace(r, coincidence=int(ci), accidental=int(ai)) for r, ci, ai in zip(base, c, a)]
        try:
            res = reconstruct_records(resampled, pset, opts, subtract)
        except ValueError:
            continue
        for key in samples:
            samples[key].append(getattr(res, key))
    out = {key: float(np.std(v, ddof=1)) for key, v in samples.items()}
    out["samples"] = {key: np.array(v) for key, v in samples.items()}
    return out
