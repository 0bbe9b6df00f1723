"""Pump optics and the polarization-maintaining fiber loop as a pair source.

The pump's V component travels counter-clockwise and leaves through the H
port of the beam splitter, so it produces ``|HH>``; the H component goes
clockwise and produces ``|VV>``.  Four-wave mixing consumes two pump photons
per pair, so each pair amplitude goes as the square of its pump amplitude and
the pump's H/V phase appears doubled in the pair state.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .polarization import WavePlate, normalize

__all__ = [
    "REFERENCE_POWER_W",
    "REFERENCE_MU",
    "REFERENCE_PAIR_COEFF",
    "PumpConfig",
    "LoopConfig",
    "PulseEmission",
    "linear_jones",
    "pump_jones",
    "pump_phase",
    "pump_with_phase",
    "extinction_ratio_db",
    "solve_pump_plates",
    "loop_output_state",
    "noise_density",
    "polarization_pair_factor",
    "mean_pairs_per_pulse",
    "emit_pulse",
    "emit_pulses",
]

# calibration point: 0.01 pairs per pulse at 1.58 uW average pump power
REFERENCE_POWER_W = 1.58e-6
REFERENCE_MU = 0.01
REFERENCE_PAIR_COEFF = REFERENCE_MU / REFERENCE_POWER_W**2


@dataclass(frozen=True)
class PumpConfig:
    avg_power: float = REFERENCE_POWER_W  # W
    rep_rate: float = 3.88e6  # Hz
    polarizer_axis: float = np.pi / 2  # rad
    qwp_angle: float = 0.0  # rad
    hwp_angle: float = 3 * np.pi / 8  # rad; 67.5 deg turns V into 45 deg linear

    def __post_init__(self):
        if self.avg_power < 0:
            raise ValueError("avg_power must be >= 0")
        if self.rep_rate <= 0:
            raise ValueError("rep_rate must be > 0")

    def jones(self) -> np.ndarray:
        return pump_jones(self)


@dataclass(frozen=True)
class LoopConfig:
    """Effective loop parameters.

    ``raman_rate_s``/``raman_rate_i`` are mean noise photons per pulse in each
    channel at the loop output, at the operating pump power; they see the
    same coupling losses as the pair photons.
    """

    phi_b: float = 0.24  # rad
    pair_gen_coeff: float = REFERENCE_PAIR_COEFF  # pairs / pulse / W^2
    raman_rate_s: float = 0.0
    raman_rate_i: float = 0.0
    coupling_loss_s: float = -3.3  # dB
    coupling_loss_i: float = -3.1  # dB

    def __post_init__(self):
        if self.pair_gen_coeff < 0:
            raise ValueError("pair_gen_coeff must be >= 0")
        if self.raman_rate_s < 0 or self.raman_rate_i < 0:
            raise ValueError("raman rates must be >= 0")
        if self.coupling_loss_s > 0 or self.coupling_loss_i > 0:
            raise ValueError("coupling losses must be <= 0 dB")


@dataclass
class PulseEmission:
    n_pairs: int
    state: np.ndarray
    n_noise_s: int
    n_noise_i: int


def linear_jones(angle: float) -> np.ndarray:
    return np.array([np.cos(angle), np.sin(angle)], dtype=complex)


def _plates_jones(polarizer_axis, qwp_angle, hwp_angle) -> np.ndarray:
    qwp = WavePlate("quarter", qwp_angle).matrix()
    hwp = WavePlate("half", hwp_angle).matrix()
    return hwp @ qwp @ linear_jones(polarizer_axis)


def pump_jones(pump: PumpConfig) -> np.ndarray:
    """Pump polarization entering the loop: polarizer, then QWP, then HWP."""
    return _plates_jones(pump.polarizer_axis, pump.qwp_angle, pump.hwp_angle)


def pump_phase(jv) -> float:
    """The pump H/V phase ``arg(a_H / a_V)`` that gets doubled in the pair state."""
    a_h, a_v = np.asarray(jv, dtype=complex)
    return float(np.angle(a_h * np.conj(a_v)))


def pump_with_phase(phase: float, theta: float = np.pi / 4) -> np.ndarray:
    """Pump with H/V power split ``cos^2/sin^2(theta)`` and ``arg(a_H/a_V) = phase``."""
    return np.array([np.cos(theta), np.sin(theta) * np.exp(-1j * phase)], dtype=complex)


def extinction_ratio_db(jv) -> float:
    """Major/minor axis intensity ratio of the polarization ellipse, in dB."""
    a_h, a_v = normalize(jv)
    s3 = 2 * np.imag(np.conj(a_h) * a_v)
    chi = 0.5 * np.arcsin(np.clip(s3, -1.0, 1.0))
    if abs(np.sin(chi)) < 1e-15:
        return float("inf")
    return float(10 * np.log10(1.0 / np.tan(chi) ** 2))


def solve_pump_plates(target, polarizer_axis: float = np.pi / 2, tol: float = 1e-12):
    """Find (QWP, HWP) angles that turn the polarizer output into ``target``.

    Returns ``(qwp_angle, hwp_angle)`` in radians.  Every pure polarization is
    reachable with this two-plate chain, so a failure to reach ``tol`` raises.
    """
    t = normalize(target)

    def infidelity(x):
        out = _plates_jones(polarizer_axis, x[0], x[1])
        return 1.0 - abs(np.vdot(t, out)) ** 2

    grid = np.linspace(0, np.pi, 7, endpoint=False)
    starts = [(q, h) for q in grid for h in grid]
    best = min(starts, key=infidelity)
    res = minimize(infidelity, best, method="BFGS", options={"gtol": 1e-14})
    if res.fun > tol:
        res = minimize(infidelity, res.x, method="Nelder-Mead",
                       options={"xatol": 1e-14, "fatol": 1e-16, "maxiter": 20000})
    if res.fun > tol:
        raise RuntimeError(f"plate solve reached infidelity {res.fun:.2e} > {tol:.0e}")
    q, h = np.mod(res.x, np.pi)
    return float(q), float(h)


def loop_output_state(pump_jv, loop: LoopConfig) -> np.ndarray:
    """Two-photon ket produced by the loop for a given pump polarization."""
    a_h, a_v = np.asarray(pump_jv, dtype=complex)
    if abs(a_h) < 1e-15 and abs(a_v) < 1e-15:
        raise ValueError("pump Jones vector has zero amplitude")
    c = np.array([a_v**2, 0.0, 0.0, a_h**2 * np.exp(1j * loop.phi_b)], dtype=complex)
    return normalize(c)


def noise_density(pump_jv) -> np.ndarray:
    """Single-photon state of loop Raman noise: H with weight |a_V|^2, V with |a_H|^2.

    Noise photons from the two propagation directions are mutually incoherent.
    """
    a_h, a_v = normalize(pump_jv)
    return np.diag([abs(a_v) ** 2, abs(a_h) ** 2]).astype(complex)


def polarization_pair_factor(pump_jv) -> float:
    """Pair-rate factor ``2(|a_H|^4 + |a_V|^4)``; equals 1 for an equal H/V split."""
    a_h, a_v = normalize(pump_jv)
    return float(2 * (abs(a_h) ** 4 + abs(a_v) ** 4))


def mean_pairs_per_pulse(avg_power: float, loop: LoopConfig, pump: PumpConfig | None = None) -> float:
    """Mean pairs per pulse, quadratic in average pump power.

    ``pair_gen_coeff`` is defined for an equal H/V pump split at the operating
    repetition rate; a pump polarization other than that scales the rate by
    :func:`polarization_pair_factor`.
    """
    if avg_power < 0:
        raise ValueError("avg_power must be >= 0")
    factor = 1.0 if pump is None else polarization_pair_factor(pump_jones(pump))
    return loop.pair_gen_coeff * avg_power**2 * factor


def emit_pulse(pump: PumpConfig, loop: LoopConfig, rng: np.random.Generator) -> PulseEmission:
    jv = pump_jones(pump)
    mu = mean_pairs_per_pulse(pump.avg_power, loop, pump)
    return PulseEmission(
        n_pairs=int(rng.poisson(mu)),
        state=loop_output_state(jv, loop),
        n_noise_s=int(rng.poisson(loop.raman_rate_s)),
        n_noise_i=int(rng.poisson(loop.raman_rate_i)),
    )


def emit_pulses(pump: PumpConfig, loop: LoopConfig, n: int, rng: np.random.Generator):
    """Vectorized :func:`emit_pulse`: arrays of pair and noise numbers for ``n`` pulses."""
    mu = mean_pairs_per_pulse(pump.avg_power, loop, pump)
    return (
        rng.poisson(mu, size=n),
        rng.poisson(loop.raman_rate_s, size=n),
        rng.poisson(loop.raman_rate_i, size=n),
    )
