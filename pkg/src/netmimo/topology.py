"""Network geometry: node layouts, pairwise distances, interference levels,
cooperation radius, and local data-sharing neighborhoods.

Node indices are 0-based everywhere in code; the plain-text layout file
format is addressed by line number (1-based). TX i and RX i are co-located
at position i, and all distances are Euclidean in the plane (no wrap-around).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import isqrt
from pathlib import Path

import numpy as np

__all__ = [
    "NodeLayout",
    "InterferenceLevelMatrix",
    "UnboundedRadiusError",
    "place_grid",
    "place_uniform_random",
    "pairwise_distance",
    "interference_levels",
    "cooperation_radius",
    "data_sharing_sets",
    "grid_side",
    "save_layout",
    "load_layout",
]


class UnboundedRadiusError(ValueError):
    """No finite cooperation radius exists for gamma >= 1."""


@dataclass(frozen=True)
class NodeLayout:
    """2-D positions of the K TX/RX pairs, shape (K, 2), in grid units.

    Positions may coincide; co-located pairs model a multi-antenna site.
    """

    positions: np.ndarray

    def __post_init__(self) -> None:
        pos = np.array(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2 or pos.shape[0] < 1:
            raise ValueError(f"positions must have shape (K, 2) with K >= 1, got {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def K(self) -> int:
        return int(self.positions.shape[0])


@dataclass(frozen=True)
class InterferenceLevelMatrix:
    """Per-link interference levels, entries[k, i] = 1 + (gamma - 1) * dist(k, i).

    Direct links sit at level exactly 1, every entry is <= 1 for gamma <= 1,
    and the matrix inherits the symmetry of the distance matrix.
    """

    gamma: float
    entries: np.ndarray

    def __post_init__(self) -> None:
        ent = np.array(self.entries, dtype=float)
        ent.setflags(write=False)
        object.__setattr__(self, "entries", ent)


def place_grid(side: int) -> NodeLayout:
    """Regular side x side grid at integer coordinates (1..side, 1..side).

    Nodes are ordered row-major: index r*side + c sits at (x, y) = (c+1, r+1),
    so index 0 is (1, 1), index 1 is (2, 1), and so on.
    """
    side = int(side)
    if side < 1:
        raise ValueError(f"side must be >= 1, got {side}")
    coords = np.arange(side, dtype=float)
    x = np.tile(coords, side) + 1.0
    y = np.repeat(coords, side) + 1.0
    return NodeLayout(np.column_stack([x, y]))


def place_uniform_random(k: int, side: float, rng: np.random.Generator) -> NodeLayout:
    """k nodes drawn i.i.d. uniformly over the square [0, side]^2."""
    k = int(k)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if side <= 0:
        raise ValueError(f"side must be > 0, got {side}")
    return NodeLayout(rng.uniform(0.0, float(side), size=(k, 2)))


def pairwise_distance(layout: NodeLayout) -> np.ndarray:
    """K x K matrix of Euclidean distances; exact zeros on the diagonal."""
    pos = layout.positions
    diff = pos[:, None, :] - pos[None, :, :]
    return np.hypot(diff[..., 0], diff[..., 1])


def interference_levels(distances: np.ndarray, gamma: float) -> InterferenceLevelMatrix:
    """Map distances to interference levels 1 + (gamma - 1) * dist.

    gamma in (0, 1] controls how fast cross links weaken relative to the
    direct ones; gamma = 1 collapses the geometry (all links equal).
    """
    d = np.asarray(distances, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError(f"distances must be square, got shape {d.shape}")
    if np.any(d < 0) or not np.all(np.isfinite(d)):
        raise ValueError("distances must be finite and nonnegative")
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    return InterferenceLevelMatrix(gamma=float(gamma), entries=1.0 + (gamma - 1.0) * d)


def cooperation_radius(gamma: float) -> float:
    """Distance 1/(1 - gamma) beyond which a cross link carries no bits.

    Defined for gamma in (0, 1) only; at gamma = 1 every link is as strong
    as a direct one and no finite radius exists.
    """
    if gamma >= 1.0:
        raise UnboundedRadiusError(f"cooperation radius is unbounded for gamma = {gamma}")
    if gamma <= 0.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    return 1.0 / (1.0 - gamma)


def data_sharing_sets(layout: NodeLayout, gamma: float) -> list[set[int]]:
    """Per-TX sets of user indices whose data TX j keeps: K_j = {i : dist(i, j) <= radius}.

    Nodes exactly on the boundary are included. For gamma = 1 the radius is
    unbounded and every set is the full index set (fallback, not an error).
    """
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    k = layout.K
    if gamma == 1.0:
        return [set(range(k)) for _ in range(k)]
    d0 = cooperation_radius(gamma)
    dist = pairwise_distance(layout)
    return [set(np.flatnonzero(dist[j] <= d0).tolist()) for j in range(k)]


def grid_side(layout: NodeLayout) -> int | None:
    """Side length if the layout is exactly a row-major integer grid, else None."""
    side = isqrt(layout.K)
    if side * side != layout.K:
        return None
    if np.array_equal(layout.positions, place_grid(side).positions):
        return side
    return None


def save_layout(layout: NodeLayout, path: str | Path) -> None:
    """Write one `x y` pair per line; the 1-based line number is the node index."""
    lines = [f"{x:.17g} {y:.17g}" for x, y in layout.positions]
    Path(path).write_text("\n".join(lines) + "\n")


def load_layout(path: str | Path) -> NodeLayout:
    """Read a layout file written by save_layout (blank lines ignored)."""
    rows = []
    for ln, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"line {ln}: expected `x y`, got {line!r}")
        rows.append((float(parts[0]), float(parts[1])))
    if not rows:
        raise ValueError(f"no nodes found in {path}")
    return NodeLayout(np.array(rows))
