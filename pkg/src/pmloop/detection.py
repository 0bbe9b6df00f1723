"""Polarization analyzers, gated threshold detectors and coincidence counting.

Each arm is reduced to a single-photon POVM element ``E`` (2x2, PSD, norm at
most 1) that folds in the analyzer projection, polarization-dependent loss and
every scalar efficiency.  A pair in state ``rho`` then clicks both detectors
with probability ``Tr((E_s (x) E_i) rho)``.  Pair numbers are Poisson per
pulse, so the numbers of pairs landing in each outcome class are independent
Poisson variables; that gives exact closed forms for the per-gate click
probabilities.

One gate per pump pulse.  Accidental coincidences pair the signal click of
gate ``g`` with the idler click of gate ``g + 1`` (cyclically within a record,
so a record of ``n`` gates has ``n`` such pairs).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .config import ExperimentConfig, db_to_linear
from .polarization import WavePlate, rotation
from .records import CountRecord
from .source import loop_output_state, mean_pairs_per_pulse, noise_density, pump_jones, linear_jones
from .polarization import density_from_ket

__all__ = [
    "ANALYZER_ANGLES",
    "AnalyzerSetting",
    "DetectorConfig",
    "AngleErrors",
    "CalibrationError",
    "CalibrationReport",
    "analyzer_projector",
    "arm_povm",
    "click_probabilities",
    "setting_probabilities",
    "draw_angle_errors",
    "expected_record",
    "run_counting",
    "run_campaign",
    "expected_campaign",
    "calibrate_analyzers",
    "coupling_ratios",
    "split_setting",
    "setting_stream",
]

# (QWP, HWP) angles in degrees that map each basis state onto the H polarizer
ANALYZER_ANGLES = {
    "H": (0.0, 0.0),
    "V": (0.0, 45.0),
    "D": (45.0, 22.5),
    "A": (45.0, -22.5),
    "R": (0.0, -22.5),
    "L": (0.0, 22.5),
}

# stream keys under the master seed
_STREAM_ANGLES = 0
_STREAM_COUNTS = 1
# per-gate Monte Carlo draws one stream per fixed-size chunk, so results do
# not depend on how chunks are grouped into batches
GATE_CHUNK = 1 << 16


@dataclass(frozen=True)
class AnalyzerSetting:
    qwp_angle: float  # rad
    hwp_angle: float  # rad
    angle_error_bound: float = math.radians(3.0)
    insertion_loss: float = 0.0  # dB

    def __post_init__(self):
        if self.angle_error_bound < 0:
            raise ValueError("angle_error_bound must be >= 0")
        if self.insertion_loss > 0:
            raise ValueError("insertion_loss must be <= 0 dB")

    @classmethod
    def for_label(cls, label: str, **kwargs) -> "AnalyzerSetting":
        try:
            q, h = ANALYZER_ANGLES[label]
        except KeyError:
            raise ValueError(f"no analyzer setting for label {label!r}") from None
        return cls(math.radians(q), math.radians(h), **kwargs)


@dataclass(frozen=True)
class DetectorConfig:
    efficiency: float
    dark_count_per_gate: float = 0.0
    gate_width: float = 2.5e-9  # s; recorded only, the gate is assumed to contain the photon

    def __post_init__(self):
        if not 0 <= self.efficiency <= 1:
            raise ValueError("efficiency must be in [0, 1]")
        if not 0 <= self.dark_count_per_gate <= 1:
            raise ValueError("dark_count_per_gate must be in [0, 1]")


@dataclass(frozen=True)
class AngleErrors:
    """Fixed per-plate angle offsets (radians) for one experiment."""

    qwp_s: float = 0.0
    hwp_s: float = 0.0
    qwp_i: float = 0.0
    hwp_i: float = 0.0

    def signal(self):
        return (self.qwp_s, self.hwp_s)

    def idler(self):
        return (self.qwp_i, self.hwp_i)


class CalibrationError(RuntimeError):
    pass


def split_setting(setting_id: str) -> tuple[str, str]:
    if len(setting_id) != 2 or any(c not in ANALYZER_ANGLES for c in setting_id):
        raise ValueError(f"setting id must be two basis labels like 'HD', got {setting_id!r}")
    return setting_id[0], setting_id[1]


def setting_stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def analyzer_projector(setting: AnalyzerSetting, realized_error=(0.0, 0.0)):
    """Projector onto the polarization the analyzer passes, and its transmissivity.

    Light crosses the QWP, then the HWP, then an H polarizer.  ``realized_error``
    holds (QWP, HWP) angle offsets in radians.
    """
    eq, eh = realized_error
    bound = setting.angle_error_bound + 1e-15
    if abs(eq) > bound or abs(eh) > bound:
        raise ValueError("realized angle error exceeds the setting's error bound")
    qwp = WavePlate("quarter", setting.qwp_angle + eq).matrix()
    hwp = WavePlate("half", setting.hwp_angle + eh).matrix()
    e = (hwp @ qwp).conj().T @ np.array([1.0, 0.0], dtype=complex)
    return np.outer(e, e.conj()), db_to_linear(setting.insertion_loss)


def arm_povm(proj, transmission: float, pdl_db: float = 0.0, pre_rotation: float = 0.0):
    """Single-photon click POVM element of one arm (detector darks excluded).

    ``pdl_db`` attenuates V ahead of the analyzer; ``pre_rotation`` is a
    polarization rotation (fiber controller misalignment) ahead of everything.
    """
    f = np.diag([1.0, math.sqrt(db_to_linear(pdl_db))]).astype(complex)
    m = f @ rotation(pre_rotation)
    return transmission * (m.conj().T @ proj @ m)


def _check_prob(name, p):
    if not (-1e-12 <= p <= 1 + 1e-12):
        raise RuntimeError(f"derived probability {name}={p!r} outside [0, 1]; check the configuration")
    return min(max(p, 0.0), 1.0)


def click_probabilities(rho, mu, povm_s, povm_i, noise_s=0.0, noise_i=0.0,
                        noise_rho=None, dark_s=0.0, dark_i=0.0):
    """Per-gate probabilities ``(p_click_s, p_click_i, p_coincidence)``.

    ``mu`` is the mean pair number per gate, ``noise_s``/``noise_i`` the mean
    noise photon numbers entering each arm with single-photon state
    ``noise_rho``.  Click causes combine as independent OR events.
    """
    rho = np.asarray(rho, dtype=complex)
    eye = np.eye(2)
    q_b = _check_prob("q_both", np.real(np.trace(np.kron(povm_s, povm_i) @ rho)))
    m_s = _check_prob("q_signal", np.real(np.trace(np.kron(povm_s, eye) @ rho)))
    m_i = _check_prob("q_idler", np.real(np.trace(np.kron(eye, povm_i) @ rho)))
    if noise_rho is None:
        noise_rho = 0.5 * eye
    t_s = _check_prob("t_noise_s", np.real(np.trace(povm_s @ noise_rho)))
    t_i = _check_prob("t_noise_i", np.real(np.trace(povm_i @ noise_rho)))
    # log of the no-click probability from each independent Poisson cause
    ls = -mu * m_s - noise_s * t_s + math.log1p(-dark_s) if dark_s < 1 else -math.inf
    li = -mu * m_i - noise_i * t_i + math.log1p(-dark_i) if dark_i < 1 else -math.inf
    # neither arm: the pair classes 'both', 's only', 'i only' are all empty
    lsi = ls + li + mu * q_b
    p_s = -math.expm1(ls)
    p_i = -math.expm1(li)
    # 1 - A_s - A_i + A_si, arranged to avoid cancellation at small rates
    p_c = p_s + p_i - (-math.expm1(lsi)) if lsi > -math.inf else p_s + p_i - 1.0
    return (_check_prob("p_click_s", p_s), _check_prob("p_click_i", p_i),
            _check_prob("p_coincidence", p_c))


def _arm(cfg: ExperimentConfig, side: str):
    coupling = getattr(cfg, f"coupling_loss_{side}_dB") + getattr(cfg, f"excess_loss_{side}_dB")
    setting_kw = dict(angle_error_bound=cfg.angle_error_bound,
                      insertion_loss=getattr(cfg, f"analyzer_loss_{side}_dB"))
    det = DetectorConfig(getattr(cfg, f"efficiency_{side}"),
                         getattr(cfg, f"dark_count_{side}_per_gate"),
                         cfg.gate_width_ns * 1e-9)
    return coupling, setting_kw, det, getattr(cfg, f"pdl_{side}_dB")


def _povm_for(cfg, side, label, err, pre_rotation=0.0):
    coupling, setting_kw, det, pdl = _arm(cfg, side)
    setting = AnalyzerSetting.for_label(label, **setting_kw)
    proj, t_an = analyzer_projector(setting, err)
    return arm_povm(proj, db_to_linear(coupling) * t_an * det.efficiency, pdl, pre_rotation), det


def setting_probabilities(cfg: ExperimentConfig, setting_id: str, errors: AngleErrors | None = None,
                          pre_rotation=(0.0, 0.0)):
    """Per-gate click probabilities for one analyzer setting pair."""
    errors = errors or AngleErrors()
    ls, li = split_setting(setting_id)
    pump = cfg.pump()
    loop = cfg.loop()
    jv = pump_jones(pump)
    rho = density_from_ket(loop_output_state(jv, loop))
    mu = mean_pairs_per_pulse(pump.avg_power, loop, pump)
    povm_s, det_s = _povm_for(cfg, "s", ls, errors.signal(), pre_rotation[0])
    povm_i, det_i = _povm_for(cfg, "i", li, errors.idler(), pre_rotation[1])
    return click_probabilities(rho, mu, povm_s, povm_i,
                               loop.raman_rate_s, loop.raman_rate_i, noise_density(jv),
                               det_s.dark_count_per_gate, det_i.dark_count_per_gate)


def draw_angle_errors(bound: float, rng: np.random.Generator) -> AngleErrors:
    """Per-plate offsets, uniform on ``[-bound, bound]``, fixed for a whole experiment."""
    return AngleErrors(*rng.uniform(-bound, bound, size=4))


def _n_gates(cfg, duration):
    if duration <= 0:
        raise ValueError("duration must be > 0")
    return int(round(duration * cfg.rep_rate))


def expected_record(cfg: ExperimentConfig, setting_id: str, duration: float = 10.0,
                    errors: AngleErrors | None = None) -> CountRecord:
    """Expectation of every :class:`CountRecord` field (real-valued)."""
    n = _n_gates(cfg, duration)
    p_s, p_i, p_c = setting_probabilities(cfg, setting_id, errors)
    return CountRecord(setting_id, n * p_c, n * p_s * p_i, n * p_s, n * p_i, duration, n)


def _aggregate_counts(n, probs, rng):
    p_s, p_i, p_c = probs
    q = np.array([p_c, p_s - p_c, p_i - p_c, 0.0])
    q = np.clip(q, 0.0, 1.0)
    q[3] = max(0.0, 1.0 - q[:3].sum())
    n11, n10, n01, _ = rng.multinomial(n, q / q.sum())
    s, i = n11 + n10, n11 + n01
    # successors of the s signal-click gates form an s-subset of the record
    acc = rng.hypergeometric(i, n - i, s) if s > 0 and i > 0 else 0
    return int(n11), int(acc), int(s), int(i)


def _gate_counts(cfg, setting_id, errors, n, seed, key):
    """Explicit per-gate simulation: sample emissions, then every click cause."""
    ls, li = split_setting(setting_id)
    pump = cfg.pump()
    loop = cfg.loop()
    jv = pump_jones(pump)
    rho = density_from_ket(loop_output_state(jv, loop))
    mu = mean_pairs_per_pulse(pump.avg_power, loop, pump)
    povm_s, det_s = _povm_for(cfg, "s", ls, errors.signal())
    povm_i, det_i = _povm_for(cfg, "i", li, errors.idler())
    eye = np.eye(2)
    q_b = np.real(np.trace(np.kron(povm_s, povm_i) @ rho))
    q_s = np.real(np.trace(np.kron(povm_s, eye) @ rho)) - q_b
    q_i = np.real(np.trace(np.kron(eye, povm_i) @ rho)) - q_b
    pair_p = np.clip([q_b, q_s, q_i, 0.0], 0.0, 1.0)
    pair_p[3] = max(0.0, 1.0 - pair_p[:3].sum())
    nrho = noise_density(jv)
    t_s = np.real(np.trace(povm_s @ nrho))
    t_i = np.real(np.trace(povm_i @ nrho))

    click_s = np.empty(n, dtype=bool)
    click_i = np.empty(n, dtype=bool)
    for chunk, start in enumerate(range(0, n, GATE_CHUNK)):
        m = min(GATE_CHUNK, n - start)
        rng = setting_stream(seed, *key, chunk)
        pairs = rng.poisson(mu, size=m)
        cls = np.zeros((m, 4), dtype=np.int64)
        hit = np.flatnonzero(pairs)
        if hit.size:
            cls[hit] = rng.multinomial(pairs[hit], pair_p / pair_p.sum())
        noise_ns = rng.binomial(rng.poisson(loop.raman_rate_s, size=m), t_s)
        noise_ni = rng.binomial(rng.poisson(loop.raman_rate_i, size=m), t_i)
        dark_s = rng.random(m) < det_s.dark_count_per_gate
        dark_i = rng.random(m) < det_i.dark_count_per_gate
        click_s[start:start + m] = (cls[:, 0] + cls[:, 1] > 0) | (noise_ns > 0) | dark_s
        click_i[start:start + m] = (cls[:, 0] + cls[:, 2] > 0) | (noise_ni > 0) | dark_i
    coinc = int(np.count_nonzero(click_s & click_i))
    acc = int(np.count_nonzero(click_s & np.roll(click_i, -1)))
    return coinc, acc, int(click_s.sum()), int(click_i.sum())


def run_counting(cfg: ExperimentConfig, setting_id: str, duration: float = 10.0, repeats: int = 5,
                 seed: int = 0, errors: AngleErrors | None = None, method: str = "aggregate",
                 setting_index: int = 0) -> list[CountRecord]:
    """Monte Carlo counting for one setting pair: ``repeats`` records of ``duration`` seconds.

    ``method="aggregate"`` samples each record's gate outcomes jointly from the
    exact per-gate outcome probabilities (multinomial over gates, hypergeometric
    adjacent-gate accidentals).  ``method="gates"`` simulates every gate and is
    the reference path; it is only practical up to ~1e7 gates.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    errors = errors or AngleErrors()
    n = _n_gates(cfg, duration)
    if method == "aggregate":
        probs = setting_probabilities(cfg, setting_id, errors)
    elif method != "gates":
        raise ValueError(f"unknown counting method {method!r}")
    out = []
    for r in range(repeats):
        key = (_STREAM_COUNTS, setting_index, r)
        if method == "aggregate":
            c, a, s, i = _aggregate_counts(n, probs, setting_stream(seed, *key))
        else:
            c, a, s, i = _gate_counts(cfg, setting_id, errors, n, seed, key)
        out.append(CountRecord(setting_id, c, a, s, i, duration, n))
    return out


def run_campaign(cfg: ExperimentConfig, setting_ids, duration=10.0, repeats=5, seed=0,
                 method="aggregate", with_angle_errors=True):
    """Full tomography campaign with one set of plate errors drawn from ``seed``.

    Returns ``(records, errors)``; records are ordered as ``setting_ids``.
    """
    if with_angle_errors:
        errors = draw_angle_errors(cfg.angle_error_bound, setting_stream(seed, _STREAM_ANGLES))
    else:
        errors = AngleErrors()
    records = []
    for k, sid in enumerate(setting_ids):
        records.extend(run_counting(cfg, sid, duration, repeats, seed, errors, method, k))
    return records, errors


def expected_campaign(cfg: ExperimentConfig, setting_ids, duration=10.0, repeats=5, errors=None):
    """Analytic twin of :func:`run_campaign` (one summed record per setting)."""
    return [expected_record(cfg, sid, duration * repeats, errors) for sid in setting_ids]


@dataclass
class CalibrationReport:
    injected_s: float
    injected_i: float
    recovered_s: float
    recovered_i: float
    tolerance: float
    scan: dict = field(default_factory=dict)

    @property
    def residual_s(self):
        return self.recovered_s - self.injected_s

    @property
    def residual_i(self):
        return self.recovered_i - self.injected_i

    @property
    def aligned(self) -> bool:
        return abs(self.residual_s) <= self.tolerance and abs(self.residual_i) <= self.tolerance


def calibrate_analyzers(cfg: ExperimentConfig, misalignment_s=0.0, misalignment_i=0.0,
                        tolerance=math.radians(0.5), scan_step=math.radians(1.0)):
    """Align each analyzer to the H port by maximizing its singles rate.

    The pump is set along V (HWP1 at 0 behind a V polarizer) so the loop emits
    only ``|HH>``.  Each arm carries an unknown rotation ``misalignment_*``
    (radians); a compensating rotation is scanned on a grid and then refined.
    Returns a :class:`CalibrationReport` with the recovered misalignments.
    """
    vcfg = cfg.replace(pump_polarizer_deg=90.0, pump_qwp_deg=0.0, pump_hwp_deg=0.0)
    mis = {"s": misalignment_s, "i": misalignment_i}

    def singles(side, comp):
        rot = [0.0, 0.0]
        rot[0 if side == "s" else 1] = mis[side] - comp
        p_s, p_i, _ = setting_probabilities(vcfg, "HH", pre_rotation=tuple(rot))
        return p_s if side == "s" else p_i

    grid = np.arange(-np.pi / 2, np.pi / 2, scan_step)
    found, scans = {}, {}
    for side in ("s", "i"):
        curve = np.array([singles(side, c) for c in grid])
        scans[side] = curve
        if curve.max() - curve.min() <= 1e-12 * max(curve.max(), 1e-300):
            raise CalibrationError(f"flat singles response in arm {side!r}; no pair signal to align on")
        c0 = grid[int(np.argmax(curve))]
        res = minimize_scalar(lambda c: -singles(side, c), bounds=(c0 - scan_step, c0 + scan_step),
                              method="bounded", options={"xatol": 1e-9})
        found[side] = (res.x + np.pi / 2) % np.pi - np.pi / 2
    return CalibrationReport(misalignment_s, misalignment_i, found["s"], found["i"], tolerance,
                             {"grid": grid, **scans})


def coupling_ratios(cfg: ExperimentConfig, setting_id: str = "HH"):
    """Arm coupling ratios estimated from expected counts, as an experimenter would.

    ``(C - A) / (S_other - D_other*N)`` divided by the analyzer transmission and
    detector efficiency of the arm; returns ``(signal_ratio, idler_ratio)``.
    """
    rec = expected_record(cfg, setting_id, 1.0)
    n = rec.n_gates
    true = rec.coincidence - rec.accidental
    s_bg = rec.singles_s - n * cfg.dark_count_s_per_gate
    i_bg = rec.singles_i - n * cfg.dark_count_i_per_gate
    ratio_s = true / i_bg / (db_to_linear(cfg.analyzer_loss_s_dB) * cfg.efficiency_s)
    ratio_i = true / s_bg / (db_to_linear(cfg.analyzer_loss_i_dB) * cfg.efficiency_i)
    return ratio_s, ratio_i
