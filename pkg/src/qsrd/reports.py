"""Named inequality/identity steps and their aggregate reports."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DIRECTIONS = ("==", "<=", ">=")


@dataclass(frozen=True)
class ChainStep:
    """One displayed line of a chain: ``lhs <direction> rhs`` within ``tol``.

    Informational steps are evaluated and reported but never fail the chain.
    """

    label: str
    lhs: float
    rhs: float
    direction: str
    tol: float = 1e-9
    informational: bool = False
    detail: str = ""

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"unknown direction {self.direction!r}")

    @property
    def slack(self) -> float:
        """Signed margin; non-negative means the step holds exactly."""
        if self.direction == "<=":
            return self.rhs - self.lhs
        if self.direction == ">=":
            return self.lhs - self.rhs
        return -abs(self.lhs - self.rhs)

    @property
    def ok(self) -> bool:
        if not (np.isfinite(self.lhs) and np.isfinite(self.rhs)):
            return False
        return self.slack >= -self.tol

    def to_record(self) -> dict:
        return {"label": self.label, "lhs": float(self.lhs), "rhs": float(self.rhs), "direction": self.direction,
                "tol": self.tol, "ok": self.ok, "informational": self.informational, "detail": self.detail}


@dataclass
class ChainReport:
    chain_id: str
    steps: list[ChainStep] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add(self, label, lhs, rhs, direction, tol=1e-9, informational=False, detail="") -> ChainStep:
        s = ChainStep(label, float(lhs), float(rhs), direction, tol, informational, detail)
        self.steps.append(s)
        return s

    @property
    def all_ok(self) -> bool:
        return all(s.ok for s in self.steps if not s.informational)

    def failures(self) -> list[ChainStep]:
        return [s for s in self.steps if not s.informational and not s.ok]

    def extend(self, other: "ChainReport", prefix: str = ""):
        for s in other.steps:
            self.steps.append(ChainStep(prefix + s.label, s.lhs, s.rhs, s.direction, s.tol, s.informational, s.detail))

    def to_record(self) -> dict:
        return {"chain_id": self.chain_id, "all_ok": self.all_ok, "steps": [s.to_record() for s in self.steps],
                "metadata": self.metadata}

    @classmethod
    def from_record(cls, r: dict) -> "ChainReport":
        steps = [ChainStep(s["label"], s["lhs"], s["rhs"], s["direction"], s["tol"], s["informational"],
                           s.get("detail", "")) for s in r["steps"]]
        return cls(r["chain_id"], steps, dict(r.get("metadata", {})))
