"""Count records and their CSV / JSON interchange formats."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from pathlib import Path

__all__ = ["CSV_HEADER", "CountRecord", "records_to_csv", "records_from_csv",
           "records_to_json", "records_from_json", "save_records", "load_records",
           "sum_by_setting"]

CSV_HEADER = ["setting_id", "coincidence", "accidental", "singles_s", "singles_i", "duration_s", "n_gates"]


@dataclass
class CountRecord:
    """Counts for one analyzer setting pair over one integration window.

    Monte Carlo records hold integers; expectation records hold floats.
    """

    setting_id: str
    coincidence: float
    accidental: float
    singles_s: float
    singles_i: float
    duration_s: float
    n_gates: int

    def validate(self, rep_rate: float | None = None) -> "CountRecord":
        for name in ("coincidence", "accidental", "singles_s", "singles_i"):
            if getattr(self, name) < 0:
                raise ValueError(f"{self.setting_id}: {name} must be >= 0")
        if self.coincidence > min(self.singles_s, self.singles_i) + 1e-9 * max(1.0, self.coincidence):
            raise ValueError(f"{self.setting_id}: coincidence exceeds singles")
        if self.duration_s <= 0:
            raise ValueError(f"{self.setting_id}: duration_s must be > 0")
        if rep_rate is not None and self.n_gates != round(self.duration_s * rep_rate):
            raise ValueError(f"{self.setting_id}: n_gates inconsistent with duration and rep rate")
        return self


def _fmt(v):
    # repr keeps floats round-trippable; ints stay ints
    return repr(float(v)) if isinstance(v, float) else str(int(v))


def _num(text: str):
    try:
        return int(text)
    except ValueError:
        return float(text)


def records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow([r.setting_id, _fmt(r.coincidence), _fmt(r.accidental), _fmt(r.singles_s),
                    _fmt(r.singles_i), _fmt(r.duration_s), str(int(r.n_gates))])
    return buf.getvalue()


def records_from_csv(text: str) -> list[CountRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != CSV_HEADER:
        raise ValueError(f"count CSV header must be {','.join(CSV_HEADER)}")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(CSV_HEADER):
            raise ValueError(f"line {lineno}: expected {len(CSV_HEADER)} fields, got {len(row)}")
        sid, *nums = row
        c, a, s, i, d, n = (_num(x) for x in nums)
        out.append(CountRecord(sid, c, a, s, i, float(d), int(n)).validate())
    return out


def records_to_json(records) -> str:
    return json.dumps({"records": [asdict(r) for r in records]}, indent=2) + "\n"


def records_from_json(text: str) -> list[CountRecord]:
    data = json.loads(text)
    rows = data["records"] if isinstance(data, dict) else data
    return [CountRecord(**row).validate() for row in rows]


def save_records(records, path) -> None:
    path = Path(path)
    text = records_to_json(records) if path.suffix == ".json" else records_to_csv(records)
    path.write_text(text)


def load_records(path) -> list[CountRecord]:
    path = Path(path)
    text = path.read_text()
    return records_from_json(text) if path.suffix == ".json" else records_from_csv(text)


def sum_by_setting(records) -> list[CountRecord]:
    """Merge repeated measurements of one setting by summing counts and exposure.

    Order follows the first appearance of each setting id.
    """
    merged: dict[str, CountRecord] = {}
    for r in records:
        m = merged.get(r.setting_id)
        if m is None:
            merged[r.setting_id] = CountRecord(**asdict(r))
        else:
            m.coincidence += r.coincidence
            m.accidental += r.accidental
            m.singles_s += r.singles_s
            m.singles_i += r.singles_i
            m.duration_s += r.duration_s
            m.n_gates += r.n_gates
    return list(merged.values())
