"""Experiment reports: rows with estimates and standard errors, explicit
assertions with tolerances, deterministic serialization."""
from __future__ import annotations

import csv
import io
import json
import math
import platform

import numpy as np
from dataclasses import dataclass, field
from pathlib import Path


def fingerprint() -> dict:
    import numba
    import numpy
    import scipy

    import sepwalk

    return {
        "sepwalk": sepwalk.__version__,
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "python": platform.python_version(),
    }


@dataclass
class Assertion:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


@dataclass
class ExperimentReport:
    kind: str
    seed: int
    config_hash: str
    config: dict
    tolerances: dict
    rows: list[dict] = field(default_factory=list)
    assertions: list[Assertion] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    def check(self, name: str, passed: bool, detail: str) -> None:
        self.assertions.append(Assertion(name, bool(passed), detail))

    def to_json_text(self) -> str:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return repr(v)
            return v

        payload = {
            "kind": self.kind,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "config": self.config,
            "tolerances": self.tolerances,
            "rows": [{k: clean(v) for k, v in row.items()} for row in self.rows],
            "assertions": [{"name": a.name, "passed": a.passed,
                            "detail": a.detail} for a in self.assertions],
            "notes": self.notes,
            "passed": self.passed,
            "environment": fingerprint(),
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    def rows_csv(self) -> str:
        if not self.rows:
            return ""
        cols = sorted({k for row in self.rows for k in row})
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(cols)
        for row in self.rows:
            out = []
            for c in cols:
                v = row.get(c, "")
                if isinstance(v, (float, np.floating)):
                    v = repr(float(v))
                out.append(v)
            wr.writerow(out)
        return buf.getvalue()

    def write(self, outdir: str | Path, fmt: str = "csv",
              figures: bool = True) -> Path:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.to_json_text())
        if fmt == "csv" and self.rows:
            (out / f"{self.kind}_rows.csv").write_text(self.rows_csv())
        if figures:
            from . import figures as figmod

            figmod.render_report(self, out)
        return out / "report.json"

    def print_summary(self) -> None:
        for a in self.assertions:
            print(a.line())
        print(f"[{'PASS' if self.passed else 'FAIL'}] {self.kind}: "
              f"{sum(a.passed for a in self.assertions)}/{len(self.assertions)}"
              " assertions passed")
