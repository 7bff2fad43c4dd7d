"""Machine-readable certificate records."""
from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List

import numpy as np


def _clean(obj):
    """Convert numpy scalars/arrays and non-finite floats into JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def inputs_hash(inputs: Any) -> str:
    blob = json.dumps(_clean(inputs), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class CertificateReport:
    name: str
    passed: bool
    measured: Dict[str, Any] = field(default_factory=dict)
    thresholds: Dict[str, Any] = field(default_factory=dict)
    failures: List[str] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    inputs_hash: str = ""
    wall_time: float = 0.0

    def __bool__(self):
        return bool(self.passed)

    def fail(self, message: str):
        self.failures.append(message)
        self.passed = False

    def warn(self, message: str):
        """Record a non-fatal finding; ``strict`` runs count it as a failure."""
        self.warnings.append(message)

    def check(self, ok: bool, message: str) -> bool:
        if not ok:
            self.fail(message)
        return ok

    def to_dict(self) -> Dict[str, Any]:
        return _clean(asdict(self))

    def to_json(self, path=None, **kw) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True, **kw)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "CertificateReport":
        return cls(**{k: d[k] for k in ("name", "passed", "measured", "thresholds", "failures", "warnings",
                                     "inputs_hash", "wall_time") if k in d})

    @classmethod
    def load(cls, path) -> "CertificateReport":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def passed_strict(self, strict: bool = False) -> bool:
        return bool(self.passed) and not (strict and self.warnings)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f"  ({'; '.join(self.failures)})" if self.failures else ""
        if self.warnings:
            extra += f"  [warning: {'; '.join(self.warnings)}]"
        return f"[{status}] {self.name}{extra}"


class timed:
    """Context manager that stamps wall time onto a report."""

    def __init__(self, report: CertificateReport):
        self.report = report

    def __enter__(self):
        self._t0 = time.perf_counter()
        return self.report

    def __exit__(self, *exc):
        self.report.wall_time = time.perf_counter() - self._t0
        return False
