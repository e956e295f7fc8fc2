"""Monte-Carlo runs of the spot-checking protocols.

Devices are simulated through their outcome probabilities only.  A test
round reports the ground state with probability ``theta``; a measurement
round matches the input with probability :func:`effective_score`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import csv
import json
import math
from pathlib import Path
from typing import Optional

import numpy as np

from .rates import FreqVector, ProtocolParams
from .qubit import quantum_max_score

__all__ = [
    "DEVICE_KINDS",
    "RoundRecord",
    "EmpiricalScores",
    "DeviceModel",
    "Transcript",
    "ideal_score",
    "effective_score",
    "run_protocol",
    "empirical_scores",
    "empirical_freq",
    "write_transcript_csv",
    "read_transcript_csv",
    "write_summary",
]

DEVICE_KINDS = ("qubit", "coherent", "classical_mixing", "custom_table")


@dataclass(frozen=True)
class RoundRecord:
    t: int
    x: int
    y: int

    def __post_init__(self):
        for name in ("t", "x", "y"):
            if getattr(self, name) not in (0, 1):
                raise ValueError(f"{name} must be a bit")


@dataclass
class EmpiricalScores:
    """Estimates ``theta_hash`` and ``omega_hash`` and the raw counts ``counts[t, x, y]``."""

    theta_hash: float
    omega_hash: float
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (2, 2, 2) or np.any(self.counts < 0):
            raise ValueError("counts must be a non-negative (2, 2, 2) array")
        if self.theta_hash < 0 or self.omega_hash < 0:
            raise ValueError("scores must be non-negative")

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def to_dict(self):
        return {"theta_hash": self.theta_hash, "omega_hash": self.omega_hash,
                "counts": {f"{t}{x}{y}": int(self.counts[t, x, y])
                           for t in (0, 1) for x in (0, 1) for y in (0, 1)}}


@dataclass(frozen=True)
class DeviceModel:
    """Honest or reference device.

    Parameters
    ----------
    kind : {"qubit", "coherent", "classical_mixing", "custom_table"}
    theta : float
        Overlap the source is tuned to.
    detection_efficiency : float
        With probability ``1 - detection_efficiency`` the measurement
        outcome is a uniformly random bit.
    extra : dict
        ``alpha`` for the coherent source (defaults to ``sqrt(ln(1/theta))``),
        ``table`` with ``P(Y = x | X = x)`` per input for ``custom_table``.
    """

    kind: str
    theta: float
    detection_efficiency: float = 1.0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in DEVICE_KINDS:
            raise ValueError(f"kind must be one of {DEVICE_KINDS}")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must be in [0, 1]")
        if not 0.0 <= self.detection_efficiency <= 1.0:
            raise ValueError("detection_efficiency must be in [0, 1]")
        if self.kind == "coherent":
            if self.theta <= 0:
                raise ValueError("coherent source needs theta > 0")
            alpha = self.extra.get("alpha")
            if alpha is not None and not math.isclose(alpha ** 2, math.log(1 / self.theta),
                                                      rel_tol=1e-9, abs_tol=1e-12):
                raise ValueError("|alpha| must equal sqrt(ln(1/theta))")
        if self.kind == "classical_mixing" and self.theta < 0.5:
            raise ValueError("classical mixing needs theta >= 1/2")
        if self.kind == "custom_table":
            tab = self.extra.get("table")
            if tab is None or len(tab) != 2 or not all(0.0 <= v <= 1.0 for v in tab):
                raise ValueError("custom_table needs extra['table'] = (P(Y=0|X=0), P(Y=1|X=1))")

    @property
    def alpha(self) -> Optional[float]:
        if self.kind != "coherent":
            return None
        return float(self.extra.get("alpha", math.sqrt(math.log(1.0 / self.theta))))

    def success_probabilities(self):
        """``P(Y = x | X = x, T = 0)`` for ``x = 0, 1`` including detector noise."""
        if self.kind == "custom_table":
            base = tuple(float(v) for v in self.extra["table"])
        else:
            s = ideal_score(self)
            base = (s, s)
        eta = self.detection_efficiency
        return tuple(eta * b + (1.0 - eta) / 2.0 for b in base)


def ideal_score(model: DeviceModel) -> float:
    """Noiseless score of the device."""
    th = model.theta
    if model.kind == "qubit":
        return float(quantum_max_score(th))
    if model.kind == "coherent":
        # Helstrom bound for |alpha> and |-alpha>, overlap exp(-2|alpha|^2) = theta^2
        return 0.5 + math.sqrt(1.0 - th ** 4) / 2.0
    if model.kind == "classical_mixing":
        return 1.5 - th
    tab = model.extra["table"]
    return 0.5 * (float(tab[0]) + float(tab[1]))


def effective_score(model: DeviceModel) -> float:
    """``eta_det * ideal + (1 - eta_det) / 2``."""
    eta = model.detection_efficiency
    return eta * ideal_score(model) + (1.0 - eta) / 2.0


@dataclass
class Transcript:
    """Rounds stored column-wise as ``uint8`` arrays."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.uint8)
        self.x = np.asarray(self.x, dtype=np.uint8)
        self.y = np.asarray(self.y, dtype=np.uint8)
        if not (self.t.shape == self.x.shape == self.y.shape) or self.t.ndim != 1:
            raise ValueError("t, x, y must be 1-D arrays of equal length")
        if max(self.t.max(initial=0), self.x.max(initial=0), self.y.max(initial=0)) > 1:
            raise ValueError("transcript entries must be bits")

    def __len__(self):
        return int(self.t.size)

    def __getitem__(self, i) -> RoundRecord:
        return RoundRecord(int(self.t[i]), int(self.x[i]), int(self.y[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @classmethod
    def from_records(cls, records) -> "Transcript":
        rows = [(r.t, r.x, r.y) for r in records]
        arr = np.array(rows, dtype=np.uint8).reshape(-1, 3)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2])

    def counts(self) -> np.ndarray:
        code = (self.t.astype(np.int64) << 2) | (self.x.astype(np.int64) << 1) | self.y
        return np.bincount(code, minlength=8).reshape(2, 2, 2)

    def output_bits(self) -> np.ndarray:
        """Raw bits ``(X_i, Y_i, T_i)`` per round, concatenated in round order."""
        return np.stack([self.x, self.y, self.t], axis=1).ravel()


def empirical_scores(counts, n: int, p0: float, gamma: float) -> EmpiricalScores:
    """Estimators normalised by the expected number of rounds per ``(t, x)``."""
    c = np.asarray(counts)
    p = (p0, 1.0 - p0)
    theta = 0.5 * sum(c[1, x, 0] / (n * p[x] * gamma) for x in (0, 1))
    omega = 0.5 * sum(c[0, x, x] / (n * p[x] * (1.0 - gamma)) for x in (0, 1))
    return EmpiricalScores(float(theta), float(omega), c)


def run_protocol(params: ProtocolParams, model: DeviceModel, seed: int):
    """Simulate ``params.n`` rounds and apply the abort rule.

    Returns ``(transcript, scores, aborted)``.  The run is a deterministic
    function of ``seed`` (NumPy ``PCG64``).
    """
    if params.p0 * params.gamma <= 0:
        raise ValueError("p0 * gamma must be positive")
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    n = params.n
    x = (rng.random(n) >= params.p0).astype(np.uint8)  # X = 0 with probability p0
    t = (rng.random(n) < params.gamma).astype(np.uint8)
    u = rng.random(n)
    succ = np.asarray(model.success_probabilities())
    correct = u < succ[x]
    y_meas = np.where(correct, x, 1 - x)
    y_test = (u >= model.theta).astype(np.uint8)  # ground-state click gives 0
    y = np.where(t == 1, y_test, y_meas).astype(np.uint8)
    tr = Transcript(t, x, y)
    scores = empirical_scores(tr.counts(), n, params.p0, params.gamma)
    aborted = (scores.theta_hash < params.theta_exp - params.delta_theta
               or scores.omega_hash < params.omega_exp - params.delta_omega)
    return tr, scores, bool(aborted)


def empirical_freq(transcript: Transcript) -> FreqVector:
    """Normalised counts over ``(t, x, y)``."""
    if len(transcript) == 0:
        raise ValueError("empty transcript")
    c = transcript.counts()
    return FreqVector(c / c.sum())


def write_transcript_csv(path, transcript: Transcript) -> Path:
    """One ``i,t,x,y`` row per round."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "t", "x", "y"])
        for i in range(len(transcript)):
            w.writerow([i, int(transcript.t[i]), int(transcript.x[i]), int(transcript.y[i])])
    return path


def read_transcript_csv(path) -> Transcript:
    with Path(path).open() as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != ["i", "t", "x", "y"]:
            raise ValueError(f"unexpected header {header}")
        rows = [(int(a), int(b), int(c), int(d)) for a, b, c, d in r]
    arr = np.array(rows, dtype=np.int64).reshape(-1, 4)
    if not np.array_equal(arr[:, 0], np.arange(arr.shape[0])):
        raise ValueError("round indices must be 0, 1, 2, ...")
    return Transcript(arr[:, 1], arr[:, 2], arr[:, 3])


def write_summary(path, scores: EmpiricalScores, aborted: bool, extra: Optional[dict] = None) -> Path:
    doc = {"aborted": aborted, **scores.to_dict(), "n": scores.n}
    doc.update(extra or {})
    path = Path(path)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True))
    return path
