"""
Closed forms on the disk of radius s with γ constant.

The Neumann function between boundary points is N(x, y) = -(1/π) log|x - y|
(twice the 2D fundamental solution), so with chords |·| between the four
electrode centers

    U_{k,l} = (I / (γπ)) · log( |k⁺-l⁻| |k⁻-l⁺| / (|k⁺-l⁺| |k⁻-l⁻|) )

and, for electrodes met in the order k⁺, k⁻, l⁺, l⁻ along the circle with
arc lengths d1 = k⁺→k⁻, d2 = k⁻→l⁺, d3 = l⁺→l⁻,

    U = (I / (γπ)) · log( sin((d1+d2+d3)/2s) sin(d2/2s) / (sin((d1+d2)/2s) sin((d2+d3)/2s)) ).
"""
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from errors import DegenerateError, GeometryError
from forward.models import Pattern

# Points closer than this fraction of the radius count as coincident
COINCIDENCE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class DiskSpec:
    """Disk of radius `radius` with electrode centers at arc positions `positions` (1-based order)."""
    radius: float
    positions: Tuple[float, ...]

    def __post_init__(self):
        if not self.radius > 0:
            raise GeometryError("Disk radius must be positive", {"radius": self.radius})
        pos = np.asarray(self.positions, dtype=float)
        if len(pos) > 1 and (np.any(np.diff(pos) <= 0) or pos[-1] - pos[0] >= self.circumference):
            raise GeometryError("Electrode arc positions must be strictly increasing around the circle")

    @classmethod
    def equally_spaced(cls, radius: float, count: int, offset: float = 0.0) -> "DiskSpec":
        return cls(radius, tuple(offset + 2.0 * np.pi * radius * np.arange(count) / count))

    @property
    def circumference(self) -> float:
        return 2.0 * np.pi * self.radius

    def point(self, k: int) -> np.ndarray:
        theta = self.positions[k - 1] / self.radius
        return self.radius * np.array([np.cos(theta), np.sin(theta)])


def _chord(a: np.ndarray, b: np.ndarray, radius: float) -> float:
    d = float(np.linalg.norm(a - b))
    if d <= COINCIDENCE_TOLERANCE * radius:
        raise DegenerateError("Coincident electrode points", {"distance": d})
    return d


def _log_ratio(disk: DiskSpec, pattern: Pattern) -> float:
    kp, km, lp, lm = (disk.point(k) for k in pattern.as_tuple())
    r = disk.radius
    num = _chord(kp, lm, r) * _chord(km, lp, r)
    den = _chord(kp, lp, r) * _chord(km, lm, r)
    return float(np.log(num / den))


def disk_neumann(x: np.ndarray, y: np.ndarray) -> float:
    """N₁(x, y) = -(1/π) log|x - y| for boundary points of a disk (additive constant dropped)."""
    d = float(np.linalg.norm(np.asarray(x) - np.asarray(y)))
    if d == 0.0:
        raise DegenerateError("Neumann function is singular at coincident points")
    return -np.log(d) / np.pi


def disk_neumann_values(disk: DiskSpec, pattern: Pattern) -> Tuple[float, float, float, float]:
    """(N(k⁺,l⁺), N(k⁺,l⁻), N(k⁻,l⁺), N(k⁻,l⁻)) from the closed form."""
    kp, km, lp, lm = (disk.point(k) for k in pattern.as_tuple())
    return (disk_neumann(kp, lp), disk_neumann(kp, lm), disk_neumann(km, lp), disk_neumann(km, lm))


def disk_voltage_homogeneous(disk: DiskSpec, gamma: float, current: float, pattern: Pattern) -> float:
    """Transadmittance voltage U_{k,l} on the homogeneous disk (chord form)."""
    if not gamma > 0:
        raise GeometryError("Conductivity must be positive", {"gamma": gamma})
    return current / (gamma * np.pi) * _log_ratio(disk, pattern)


def gamma_from_voltage(disk: DiskSpec, voltage: float, current: float, pattern: Pattern) -> float:
    """Invert the chord form: γ = (I / (Uπ)) · log(chord ratio)."""
    if voltage == 0:
        raise DegenerateError("Zero voltage cannot determine γ", {"pattern": pattern.as_tuple()})
    return current / (voltage * np.pi) * _log_ratio(disk, pattern)


def disk_voltage_from_arcs(d1: float, d2: float, d3: float, radius: float,
                           gamma: float, current: float) -> float:
    """Arc-length form of the disk voltage (electrodes in order k⁺, k⁻, l⁺, l⁻)."""
    if min(d1, d2, d3) <= 0 or d1 + d2 + d3 >= 2.0 * np.pi * radius:
        raise DegenerateError("Arc lengths must be positive and leave a gap back to k⁺",
                              {"d": (d1, d2, d3), "radius": radius})
    s2 = 2.0 * radius
    ratio = (np.sin((d1 + d2 + d3) / s2) * np.sin(d2 / s2)) / (
        np.sin((d1 + d2) / s2) * np.sin((d2 + d3) / s2)
    )
    return current / (gamma * np.pi) * float(np.log(ratio))


def chord_from_arc(arc: float, radius: float) -> float:
    return 2.0 * radius * np.sin(arc / (2.0 * radius))


def arcs_for_pattern(disk: DiskSpec, pattern: Pattern) -> Tuple[float, float, float]:
    """(d1, d2, d3) counterclockwise arcs k⁺→k⁻→l⁺→l⁻, when the four lie in that cyclic order."""
    c = disk.circumference
    p = [disk.positions[k - 1] for k in pattern.as_tuple()]
    d = [float(np.mod(b - a, c)) for a, b in zip(p, p[1:])]
    if sum(d) >= c:
        raise GeometryError("Electrodes are not in the cyclic order k⁺, k⁻, l⁺, l⁻",
                            {"pattern": pattern.as_tuple()})
    return d[0], d[1], d[2]


def random_disk_patterns(count: int, n_electrodes: int, rng: np.random.Generator) -> Sequence[Pattern]:
    """Distinct random four-electrode patterns (for oracle comparisons)."""
    patterns = []
    seen = set()
    while len(patterns) < count:
        k = tuple(int(i) + 1 for i in rng.choice(n_electrodes, size=4, replace=False))
        if k not in seen:
            seen.add(k)
            patterns.append(Pattern(*k))
    return patterns
