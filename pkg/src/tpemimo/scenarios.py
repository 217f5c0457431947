"""Built-in scattering geometries (M = 160, K = 16, half-wavelength ULA)."""
from __future__ import annotations

import math

import numpy as np

from .channel import ScatteringGeometry, parse_association_rows

M_DEFAULT = 160
K_DEFAULT = 16
SECTOR = (-math.pi / 3, math.pi / 3)

# rows are clusters, columns users 1..16
MIXED_ASSOCIATION = (
    "* . . * * * . . . . * . . * . *",
    ". . * . * . . . * . * * . . * *",
    "* * * . . . . * * * * * * * . .",
    "* * * * * . . . . . * * * * * *",
    ". * * * * . * . . * * * * * . *",
)
MIXED_CENTERS_DEG = (-30.62, -17.56, -16.69, 7.5, 11.92)
MIXED_SPREAD = math.pi / 6

QUASI_SPREAD = math.radians(180.0 / 11.0)
QUASI_CLUSTERS = 8


def single_cluster(K=K_DEFAULT):
    """Every user sees one cluster at broadside with a 30 degree spread."""
    return ScatteringGeometry(((0.0, math.radians(30.0)),), tuple({0} for _ in range(K)), SECTOR)


def quasi_orthogonal(n_clusters=QUASI_CLUSTERS, users_per_cluster=2, spread=QUASI_SPREAD):
    """Equally spaced clusters whose outer supports touch the sector edges.

    Eight 180/11 degree supports span more than the 120 degree sector, so
    neighbouring supports overlap slightly (about 1.6 degrees each).
    """
    lo, hi = SECTOR
    centers = np.linspace(lo + spread / 2, hi - spread / 2, n_clusters)
    clusters = tuple((float(c), spread) for c in centers)
    association = tuple({s} for s in range(n_clusters) for _ in range(users_per_cluster))
    return ScatteringGeometry(clusters, association, SECTOR)


def mixed_table():
    """Five 30 degree clusters with the overlapping user association grid."""
    grid = parse_association_rows(MIXED_ASSOCIATION, K_DEFAULT)
    clusters = tuple((math.radians(c), MIXED_SPREAD) for c in MIXED_CENTERS_DEG)
    return ScatteringGeometry.from_association_matrix(clusters, grid, SECTOR)


_BUILDERS = {
    "single-cluster": single_cluster,
    "quasi-orthogonal-8": quasi_orthogonal,
    "mixed-table1": mixed_table,
}

SCENARIO_NAMES = tuple(_BUILDERS)


def builtin_geometry(name):
    try:
        return _BUILDERS[name]()
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIO_NAMES)}") from None
