"""
Inject-measure pattern sets around a center electrode.

From the window Z_n = (n-3, ..., n+4) every quadruple (i, j, k, l) with
i < j, k < l, i < k and j ≠ l (compared before modular reduction) is
a candidate: drive (i, j), measure (k, l). Over eight electrodes there are
266 of them. Quadruples that measure on a drive electrode (j = k, or j = l
after reduction) are then filtered out; both counts are kept.
"""
import itertools
import logging
from dataclasses import dataclass
from typing import List, Tuple

from errors import ConfigError
from forward.models import Pattern
from geometry.electrodes import NEIGHBORHOOD_SIZE, wrap_index

logger = logging.getLogger(__name__)

Quadruple = Tuple[int, int, int, int]


@dataclass(frozen=True)
class PatternSet:
    """
    n:           center electrode (1-based)
    n_electrodes: N_E
    patterns:    physically valid patterns, in enumeration order
    reference:   (n, n+1, n-1, n+2) reduced into 1..N_E
    combinatorial_count: quadruples before the drive/measure filter
    """
    n: int
    n_electrodes: int
    patterns: Tuple[Pattern, ...]
    reference: Pattern
    combinatorial_count: int

    def __len__(self) -> int:
        return len(self.patterns)

    @property
    def filtered_count(self) -> int:
        return len(self.patterns)

    @property
    def all_patterns(self) -> Tuple[Pattern, ...]:
        """Reference first, then the set."""
        return (self.reference,) + self.patterns

    def drive_pairs(self) -> List[Tuple[int, int]]:
        """Distinct drive pairs of the reference and every pattern, first-seen order."""
        return list(dict.fromkeys(p.drive for p in self.all_patterns))

    def measure_pairs(self) -> List[Tuple[int, int]]:
        return list(dict.fromkeys(p.measure for p in self.all_patterns))


def window_quadruples(n: int) -> List[Quadruple]:
    """Unreduced quadruples over Z_n satisfying i<j, k<l, i<k, j≠l."""
    window = range(n - 3, n + 5)
    return [
        (i, j, k, l)
        for i, j, k, l in itertools.product(window, repeat=4)
        if i < j and k < l and i < k and j != l
    ]


def reference_pattern(n: int, n_electrodes: int) -> Pattern:
    return Pattern(
        wrap_index(n, n_electrodes),
        wrap_index(n + 1, n_electrodes),
        wrap_index(n - 1, n_electrodes),
        wrap_index(n + 2, n_electrodes),
    )


def enumerate_patterns(n: int, n_electrodes: int) -> PatternSet:
    """
    Pattern set of center electrode n.

    Args:
        n: center electrode index (1-based)
        n_electrodes: number of electrodes N_E

    Returns:
        PatternSet with the filtered patterns and the reference pattern

    Raises:
        ConfigError: N_E < 8
    """
    if n_electrodes < NEIGHBORHOOD_SIZE:
        raise ConfigError(
            f"Pattern sets need at least {NEIGHBORHOOD_SIZE} electrodes",
            {"n_electrodes": n_electrodes},
        )
    if not 1 <= n <= n_electrodes:
        raise ConfigError(f"Center electrode {n} outside 1..{n_electrodes}")
    quads = window_quadruples(n)
    patterns = []
    for quad in quads:
        kp, km, lp, lm = (wrap_index(q, n_electrodes) for q in quad)
        if {lp, lm} & {kp, km}:
            continue
        patterns.append(Pattern(kp, km, lp, lm))
    logger.debug(f"Pattern set n={n}: {len(quads)} quadruples, {len(patterns)} after drive/measure filter")
    return PatternSet(
        n=n,
        n_electrodes=n_electrodes,
        patterns=tuple(patterns),
        reference=reference_pattern(n, n_electrodes),
        combinatorial_count=len(quads),
    )
