"""Batch driver: ``pmloop simulate | tomo | scan-phase | report``.

Every subcommand is deterministic given its arguments and master seed and
writes its artifacts under ``--out``.  Failures exit nonzero with one line
on stderr of the form ``pmloop: error: <kind>: <detail>``.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, preset_config
from .detection import expected_campaign, run_campaign, split_setting
from .polarization import density_from_dict, BASIS_ORDER
from .records import load_records, records_to_csv, records_to_json
from .source import pump_with_phase, solve_pump_plates
from .tomography import (JAMES_SETTINGS, MLEOptions, ProjectorSet, SpanningError,
                         default_projector_set, reconstruct_records)

__all__ = ["main", "scan_phase"]


class CLIError(Exception):
    def __init__(self, kind: str, detail: str, code: int = 1):
        super().__init__(detail)
        self.kind, self.detail, self.code = kind, detail, code


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _load_config(path):
    if path is None:
        return preset_config("elliptical"), "<preset:elliptical>"
    if path.startswith("preset:"):
        try:
            return preset_config(path.split(":", 1)[1]), f"<{path}>"
        except ValueError as exc:
            raise CLIError("config", str(exc)) from None
    try:
        return ExperimentConfig.load(path), str(path)
    except ConfigError as exc:
        raise CLIError("config", f"key={exc.key}: {exc.message}") from None
    except OSError as exc:
        raise CLIError("config", f"cannot read {path}: {exc.strerror}") from None


def _settings(arg):
    if not arg:
        return list(JAMES_SETTINGS)
    ids = [s.strip() for s in arg.split(",") if s.strip()]
    try:
        for sid in ids:
            split_setting(sid)
    except ValueError as exc:
        raise CLIError("settings", str(exc)) from None
    return ids


def _write(out: Path, name: str, text: str, written: list):
    path = out / name
    path.write_text(text)
    written.append(name)


def _manifest(command, config_src, cfg, seed, params, outputs):
    return {
        "command": command,
        "config_path": config_src,
        "config_sha256": hashlib.sha256(cfg.to_json().encode()).hexdigest() if cfg else None,
        "master_seed": seed,
        "parameters": params,
        "outputs": sorted(outputs),
        "tool_version": __version__,
    }


def cmd_simulate(args):
    cfg, src = _load_config(args.config)
    ids = _settings(args.settings)
    if args.duration_s <= 0:
        raise CLIError("usage", "--duration-s must be > 0", 2)
    if args.repeats < 1:
        raise CLIError("usage", "--repeats must be >= 1", 2)
    if args.analytic:
        records = expected_campaign(cfg, ids, args.duration_s, args.repeats)
    else:
        records, _ = run_campaign(cfg, ids, args.duration_s, args.repeats, args.seed,
                                  with_angle_errors=not args.no_angle_errors)
    records = sorted(records, key=lambda r: r.setting_id)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    _write(out, "records.csv", records_to_csv(records), written)
    _write(out, "records.json", records_to_json(records), written)
    _write(out, "config.json", cfg.to_json(), written)
    params = {"settings": ids, "duration_s": args.duration_s, "repeats": args.repeats,
              "analytic": args.analytic, "angle_errors": not args.no_angle_errors}
    _write(out, "manifest.json", _dump(_manifest("simulate", src, cfg, args.seed, params,
                                                 written + ["manifest.json"])), written)
    print(f"wrote {len(records)} records to {out}")


def _load_all_records(paths):
    records = []
    for p in paths:
        try:
            records.extend(load_records(p))
        except (OSError, ValueError, KeyError) as exc:
            raise CLIError("records", f"{p}: {exc}") from None
    return records


def cmd_tomo(args):
    records = _load_all_records(args.records)
    ids = sorted({r.setting_id for r in records})
    try:
        pset = ProjectorSet.from_ids(ids) if len(ids) != 16 or set(ids) != set(JAMES_SETTINGS) \
            else default_projector_set()
        pset.require_spanning()
    except SpanningError as exc:
        raise CLIError("spanning", f"condition_number={exc.condition_number:.6g} {exc}") from None
    except ValueError as exc:
        raise CLIError("records", str(exc)) from None
    opts = MLEOptions(likelihood=args.likelihood)
    try:
        result = reconstruct_records(records, pset, opts, subtract=not args.raw)
    except ValueError as exc:
        raise CLIError("tomography", str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = result.to_dict()
    payload["inputs"] = [str(p) for p in args.records]
    name = "tomography_raw.json" if args.raw else "tomography.json"
    (out / name).write_text(_dump(payload))
    m = result
    print(f"F(Phi+)={m.fidelity_phi_plus:.4f} F(best)={m.fidelity_best_phase:.4f} "
          f"phase={m.best_phase:.4f} purity={m.purity:.4f} -> {out / name}")


def scan_phase(cfg: ExperimentConfig, pump_phases, opts: MLEOptions | None = None):
    """Reconstructed relative phase and fidelity for each pump H/V phase (analytic counts).

    Returns a list of ``(pump_phase, best_phase, fidelity_best_phase)`` rows.
    """
    pset = default_projector_set()
    rows = []
    for phi_p in pump_phases:
        q, h = solve_pump_plates(pump_with_phase(phi_p), math.radians(cfg.pump_polarizer_deg))
        c = cfg.replace(pump_qwp_deg=math.degrees(q), pump_hwp_deg=math.degrees(h))
        res = reconstruct_records(expected_campaign(c, pset.setting_ids), pset, opts)
        rows.append((float(phi_p), res.best_phase, res.fidelity_best_phase))
    return rows


def _fit_line(x, y):
    if len(set(x)) < 2:
        return float("nan"), float("nan")
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)


def cmd_scan_phase(args):
    cfg, src = _load_config(args.config)
    try:
        grid = [float(v) for v in args.phi_p.split(",") if v.strip()]
    except ValueError:
        raise CLIError("usage", f"--phi-p must be a comma-separated list of radians, got {args.phi_p!r}", 2) from None
    if not grid:
        raise CLIError("usage", "--phi-p grid is empty", 2)
    if args.phi_b_rad is not None:
        cfg = cfg.replace(phi_b_rad=args.phi_b_rad)
    rows = scan_phase(cfg, grid, MLEOptions(likelihood=args.likelihood))
    phases = np.unwrap([r[1] for r in rows])
    slope, intercept = _fit_line([r[0] for r in rows], list(phases))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["pump_phase_rad", "best_phase_rad", "fidelity_best_phase"])
    for (p, _, f), ph in zip(rows, phases):
        w.writerow([repr(p), repr(float(ph)), repr(f)])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "scan_phase.csv").write_text(buf.getvalue())
    (out / "scan_phase_fit.json").write_text(_dump({"slope": slope, "intercept_rad": intercept,
                                                    "phi_b_rad": cfg.phi_b_rad, "config_path": src}))
    sys.stdout.write(buf.getvalue())
    print(f"slope={slope:.6f} intercept={intercept:.6f}")


def _matrix_csv(m):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["row\\col", *BASIS_ORDER])
    for label, row in zip(BASIS_ORDER, m):
        w.writerow([label, *(f"{v:.6f}" for v in row)])
    return buf.getvalue()


def report_text(results: dict) -> str:
    """Metrics table for several tomography result payloads keyed by name."""
    lines = [f"{'result':<28} {'F(Phi+)':>8} {'F(best)':>8} {'phase':>8} {'purity':>8} {'mode':>10}"]
    for name, payload in results.items():
        m = payload["metrics"]
        lines.append(f"{name:<28} {m['fidelity_phi_plus']:8.4f} {m['fidelity_best_phase']:8.4f} "
                     f"{m['best_phase_rad']:8.4f} {m['purity']:8.4f} {payload['counts']['mode']:>10}")
    return "\n".join(lines) + "\n"


def cmd_report(args):
    if not args.results:
        raise CLIError("usage", "report needs at least one tomography result file", 2)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = {}
    for p in args.results:
        try:
            payload = json.loads(Path(p).read_text())
            rho = density_from_dict(payload["rho"])
        except (OSError, ValueError, KeyError) as exc:
            raise CLIError("results", f"{p}: {exc}") from None
        stem = Path(p).stem
        if stem in results:
            stem = f"{Path(p).parent.name}_{stem}"
        results[stem] = payload
        (out / f"{stem}_real.csv").write_text(_matrix_csv(rho.real))
        (out / f"{stem}_imag.csv").write_text(_matrix_csv(rho.imag))
    text = report_text(results)
    (out / "report.txt").write_text(text)
    sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pmloop", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="experiment config JSON, or preset:linear / preset:elliptical "
                                            "(default preset:elliptical)")
        p.add_argument("--out", default=".", help="output directory")

    p = sub.add_parser("simulate", help="run the counting campaign")
    common(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration-s", type=float, default=10.0)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--settings", help="comma-separated setting ids (default: the 16 tomography settings)")
    p.add_argument("--analytic", action="store_true", help="write expected counts instead of samples")
    p.add_argument("--no-angle-errors", action="store_true", help="ideal analyzer plate angles")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("tomo", help="reconstruct the density matrix from count records")
    common(p, config=False)
    p.add_argument("records", nargs="+", help="records CSV or JSON files")
    p.add_argument("--raw", action="store_true", help="skip accidental subtraction")
    p.add_argument("--likelihood", choices=("poisson", "gaussian"), default="poisson")
    p.set_defaults(func=cmd_tomo)

    p = sub.add_parser("scan-phase", help="reconstructed phase versus pump H/V phase")
    common(p)
    p.add_argument("--phi-p", default="-0.2,-0.1,0,0.1,0.2", help="comma-separated pump phases (rad)")
    p.add_argument("--phi-b-rad", type=float, default=None, help="override the residual phase")
    p.add_argument("--likelihood", choices=("poisson", "gaussian"), default="poisson")
    p.set_defaults(func=cmd_scan_phase)

    p = sub.add_parser("report", help="matrix CSVs and a metrics table from tomography results")
    common(p, config=False)
    p.add_argument("results", nargs="*", help="tomography JSON files")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except CLIError as exc:
        print(f"pmloop: error: {exc.kind}: {exc.detail}", file=sys.stderr)
        return exc.code
    return 0


if __name__ == "__main__":
    sys.exit(main())
