"""Per-claim verification records."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field


@dataclass
class ClaimRecord:
    """One checked claim.

    ``kind="le"`` passes when ``observed <= bound + tolerance``; ``kind="abs"``
    treats ``bound`` as a target and passes when ``|observed - bound| <=
    tolerance``.  Records with ``asserted=False`` are reported but never fail
    a run.
    """

    claim: str
    observed: float
    bound: float
    tolerance: float
    kind: str = "le"
    asserted: bool = True
    note: str = ""
    details: dict = field(default_factory=dict)
    subchecks_ok: bool = True

    @property
    def passed(self) -> bool:
        if not self.subchecks_ok or not math.isfinite(self.observed):
            return False
        if self.kind == "abs":
            return abs(self.observed - self.bound) <= self.tolerance
        return self.observed <= self.bound + self.tolerance

    def to_dict(self) -> dict:
        return {
            "claim": self.claim, "observed": _num(self.observed), "bound": _num(self.bound),
            "tolerance": self.tolerance, "kind": self.kind, "pass": self.passed,
            "asserted": self.asserted, "note": self.note,
            "details": {k: _num(v) if isinstance(v, float) else v for k, v in self.details.items()},
        }


def combine(claim: str, checks: list[ClaimRecord], note: str = "") -> ClaimRecord:
    """Fold sub-checks into one record that fails if any of them fails.

    The headline numbers are those of the sub-check with the least slack.
    """
    def slack(c: ClaimRecord) -> float:
        if not math.isfinite(c.observed):
            return -math.inf
        if c.kind == "abs":
            return c.tolerance - abs(c.observed - c.bound)
        return c.bound + c.tolerance - c.observed

    worst = min(checks, key=slack)
    details = {}
    for c in checks:
        details[c.note] = {"observed": _num(c.observed), "bound": _num(c.bound),
                           "tolerance": c.tolerance, "pass": c.passed}
    return ClaimRecord(claim, worst.observed, worst.bound, worst.tolerance, kind=worst.kind,
                       note=note or worst.note, details=details,
                       subchecks_ok=all(c.passed for c in checks))


class VerificationReport:
    def __init__(self, records: list[ClaimRecord]):
        self.records = list(records)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records if r.asserted)

    def failures(self) -> list[ClaimRecord]:
        return [r for r in self.records if r.asserted and not r.passed]

    def to_dict(self) -> dict:
        return {"pass": self.passed, "claims": [r.to_dict() for r in self.records]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["claim", "observed", "bound", "tolerance", "kind", "pass", "asserted", "note"])
        for r in self.records:
            writer.writerow([r.claim, _fmt(r.observed), _fmt(r.bound), _fmt(r.tolerance), r.kind,
                             int(r.passed), int(r.asserted), r.note])
        return buf.getvalue()

    def lines(self) -> list[str]:
        out = []
        for r in self.records:
            status = "PASS" if r.passed else ("FAIL" if r.asserted else "info")
            rel = "~" if r.kind == "abs" else "<="
            out.append(f"{status:4s} {r.claim:20s} observed={_fmt(r.observed)} {rel} "
                       f"{_fmt(r.bound)} (tol {_fmt(r.tolerance)})  {r.note}")
        return out


def _num(x: float):
    return x if math.isfinite(x) else None


def _fmt(x: float) -> str:
    return format(float(x), ".6g")
