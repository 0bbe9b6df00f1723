"""Two-qubit polarization algebra on the H/V basis.

Kets are plain complex numpy arrays: shape ``(2,)`` for a single photon
(Jones vector) and shape ``(4,)`` for a signal/idler pair.  Density matrices
are ``(4, 4)`` complex arrays.  The product basis order is fixed as
``(HH, HV, VH, VV)`` with the signal photon as the major index.

Waveplate convention: the component along the fast axis is left unchanged
and the slow-axis component picks up ``exp(i * retardance)``.  Only relative
phases are observable, so this choice only fixes the handedness labels.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BASIS_ORDER",
    "basis_ket",
    "normalize",
    "same_ray",
    "rotation",
    "WavePlate",
    "waveplate_matrix",
    "pair_ket",
    "bell_phi",
    "phased_bell_density",
    "density_from_ket",
    "fidelity_overlap",
    "fidelity_sqrt",
    "purity",
    "projector",
    "two_photon_projector",
    "born_probability",
    "check_density",
    "is_physical",
    "local_unitary",
    "density_to_dict",
    "density_from_dict",
    "density_to_json",
    "density_from_json",
]

BASIS_ORDER = ("HH", "HV", "VH", "VV")

_S2 = 1.0 / np.sqrt(2.0)
_BASIS = {
    "H": np.array([1.0, 0.0], dtype=complex),
    "V": np.array([0.0, 1.0], dtype=complex),
    "D": np.array([_S2, _S2], dtype=complex),
    "A": np.array([_S2, -_S2], dtype=complex),
    "R": np.array([_S2, 1j * _S2], dtype=complex),
    "L": np.array([_S2, -1j * _S2], dtype=complex),
}


def basis_ket(label: str) -> np.ndarray:
    """Return the Jones vector for one of ``H, V, D, A, L, R``."""
    try:
        return _BASIS[label].copy()
    except KeyError:
        raise ValueError(
            f"unknown polarization label {label!r}; expected one of {sorted(_BASIS)}"
        ) from None


def normalize(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    norm = np.linalg.norm(psi)
    if norm == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return psi / norm


def _fix_global_phase(psi: np.ndarray) -> np.ndarray:
    # first amplitude above noise level is made real-positive
    idx = np.flatnonzero(np.abs(psi) > 1e-12)
    if idx.size == 0:
        return psi
    a = psi[idx[0]]
    return psi * (abs(a) / a)


def same_ray(a, b, atol: float = 1e-10) -> bool:
    """True if two kets are equal up to normalization and global phase."""
    a = _fix_global_phase(normalize(a))
    b = _fix_global_phase(normalize(b))
    return bool(np.allclose(a, b, atol=atol))


def rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]], dtype=complex)


_RETARDANCE = {"half": np.pi, "quarter": np.pi / 2}


@dataclass(frozen=True)
class WavePlate:
    """A retarder with fast axis at ``angle`` radians from H."""

    kind: str
    angle: float = 0.0

    def __post_init__(self):
        if self.kind not in _RETARDANCE:
            raise ValueError(f"waveplate kind must be 'half' or 'quarter', got {self.kind!r}")

    @property
    def retardance(self) -> float:
        return _RETARDANCE[self.kind]

    def matrix(self) -> np.ndarray:
        return waveplate_matrix(self)


def waveplate_matrix(plate: WavePlate) -> np.ndarray:
    """Jones matrix ``R(theta) diag(1, exp(i*G)) R(-theta)`` of a rotated retarder."""
    r = rotation(plate.angle)
    core = np.diag([1.0, np.exp(1j * plate.retardance)])
    return r @ core @ r.T


def pair_ket(c_hh=0.0, c_hv=0.0, c_vh=0.0, c_vv=0.0) -> np.ndarray:
    return normalize([c_hh, c_hv, c_vh, c_vv])


def bell_phi(phi: float = 0.0) -> np.ndarray:
    """``(|HH> + exp(i*phi)|VV>)/sqrt(2)``; ``phi=0`` is Phi+."""
    return np.array([_S2, 0.0, 0.0, _S2 * np.exp(1j * phi)], dtype=complex)


def density_from_ket(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def phased_bell_density(phi: float) -> np.ndarray:
    """Density matrix of ``(|HH> + exp(i*phi)|VV>)/sqrt(2)``.

    The HH/VV coherences have magnitude 1/2 and carry ``exp(-i*phi)`` in the
    (HH, VV) entry and ``exp(+i*phi)`` in the (VV, HH) entry.
    """
    rho = np.zeros((4, 4), dtype=complex)
    rho[0, 0] = rho[3, 3] = 0.5
    rho[0, 3] = 0.5 * np.exp(-1j * phi)
    rho[3, 0] = 0.5 * np.exp(1j * phi)
    return rho


def fidelity_overlap(rho, target) -> float:
    """Overlap ``<target|rho|target>`` (the squared form of the fidelity)."""
    t = np.asarray(target, dtype=complex)
    val = np.real(t.conj() @ np.asarray(rho) @ t)
    return float(min(max(val, 0.0), 1.0))


def fidelity_sqrt(rho, target) -> float:
    """Fidelity as ``sqrt(<target|rho|target>)``.

    Every fidelity metric in this package uses this square-root form;
    :func:`fidelity_overlap` gives the plain overlap.
    """
    return float(np.sqrt(fidelity_overlap(rho, target)))


def purity(rho) -> float:
    rho = np.asarray(rho)
    return float(np.real(np.trace(rho @ rho)))


def projector(jones) -> np.ndarray:
    e = normalize(jones)
    return np.outer(e, e.conj())


def two_photon_projector(s, i) -> np.ndarray:
    """Rank-1 projector ``|s><s| (x) |i><i|`` on the (HH, HV, VH, VV) basis."""
    return np.kron(projector(s), projector(i))


def born_probability(proj, rho) -> float:
    return float(np.real(np.trace(np.asarray(proj) @ np.asarray(rho))))


def check_density(rho, herm_tol=1e-10, trace_tol=1e-10, psd_tol=1e-9) -> np.ndarray:
    """Validate a 4x4 density matrix, raising ``ValueError`` on any violation."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ValueError(f"density matrix must be 4x4, got shape {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > trace_tol:
        raise ValueError(f"density matrix trace is {np.trace(rho).real:.3g}, not 1")
    lam_min = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
    if lam_min < -psd_tol:
        raise ValueError(f"density matrix has negative eigenvalue {lam_min:.3g}")
    return rho


def is_physical(rho, **tols) -> bool:
    try:
        check_density(rho, **tols)
    except ValueError:
        return False
    return True


def local_unitary(rho, u_s, u_i) -> np.ndarray:
    u = np.kron(u_s, u_i)
    return u @ np.asarray(rho) @ u.conj().T


def density_to_dict(rho) -> dict:
    rho = np.asarray(rho, dtype=complex)
    return {"basis": list(BASIS_ORDER), "re": rho.real.tolist(), "im": rho.imag.tolist()}


def density_from_dict(d: dict) -> np.ndarray:
    re = np.asarray(d["re"], dtype=float)
    im = np.asarray(d["im"], dtype=float)
    if re.shape != (4, 4) or im.shape != (4, 4):
        raise ValueError("density matrix 're' and 'im' must both be 4x4")
    return re + 1j * im


def density_to_json(rho, **kwargs) -> str:
    return json.dumps(density_to_dict(rho), **kwargs)


def density_from_json(text: str) -> np.ndarray:
    return density_from_dict(json.loads(text))
