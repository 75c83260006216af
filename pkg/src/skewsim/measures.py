"""Finite atomic and signed measures on the half-line."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .grids import BoundaryGridFunction, GridFunction


@dataclass(frozen=True)
class CatalystMeasure:
    """Finite atomic catalyst eta = sum_i mass_i delta_{x_i}, sites in (0, oo)."""

    atoms: tuple[tuple[float, float], ...]

    def __post_init__(self):
        atoms = tuple((float(x), float(m)) for x, m in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        for x, m in atoms:
            if x <= 0.0:
                raise ValueError(f"catalyst site {x} not in (0, oo)")
            if m <= 0.0:
                raise ValueError(f"catalyst mass {m} must be positive")

    @property
    def sites(self) -> np.ndarray:
        return np.array([x for x, _ in self.atoms])

    @property
    def masses(self) -> np.ndarray:
        return np.array([m for _, m in self.atoms])

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum()) if self.atoms else 0.0


@dataclass(frozen=True)
class SignedAtomicMeasure:
    """Signed measure: finite atoms plus an optional absolutely continuous part.

    Atoms may sit at x = 0; evaluation against a plain GridFunction uses the
    f(0) = 0 extension, while a BoundaryGridFunction contributes its boundary
    value there.
    """

    atoms: tuple[tuple[float, float], ...] = ()
    density: Optional[GridFunction] = None

    def __post_init__(self):
        atoms = tuple((float(x), float(w)) for x, w in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        for x, _ in atoms:
            if x < 0.0:
                raise ValueError(f"atom location {x} must be >= 0")

    @classmethod
    def from_catalyst(cls, eta: CatalystMeasure) -> "SignedAtomicMeasure":
        return cls(atoms=eta.atoms)

    @property
    def locations(self) -> np.ndarray:
        return np.array([x for x, _ in self.atoms])

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.atoms])

    def is_nonnegative(self) -> bool:
        if any(w < 0.0 for _, w in self.atoms):
            return False
        return self.density is None or bool(np.all(self.density.values >= 0.0))

    def __call__(self, f) -> float:
        """Integral of f against the measure."""
        boundary_value = 0.0
        if isinstance(f, BoundaryGridFunction):
            boundary_value = f.boundary
            f = f.interior
        total = 0.0
        for x, w in self.atoms:
            total += w * (boundary_value if x == 0.0 else float(f(x)))
        if self.density is not None:
            total += self.density.grid.integrate(self.density.values * f.values)
        return total

    def jordan(self) -> tuple["SignedAtomicMeasure", "SignedAtomicMeasure"]:
        """Decomposition induced by the signs of the atom weights and density."""
        pos_atoms = tuple((x, w) for x, w in self.atoms if w > 0.0)
        neg_atoms = tuple((x, -w) for x, w in self.atoms if w < 0.0)
        pos_density = neg_density = None
        if self.density is not None:
            pos_density = self.density.with_values(np.maximum(self.density.values, 0.0))
            neg_density = self.density.with_values(np.maximum(-self.density.values, 0.0))
        return (SignedAtomicMeasure(pos_atoms, pos_density),
                SignedAtomicMeasure(neg_atoms, neg_density))
