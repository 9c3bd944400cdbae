"""Spherical tensor operators, density-matrix multipole decomposition and mass model.

Tensors are built from Clebsch-Gordan coefficients,
``<J,M|T_jm|J,M'> = <J,M'; j,m | J,M> r_j / sqrt(2J+1)``,
with reduced elements ``r_j = sqrt(2j+1)`` so every ``T_jm`` has unit
Hilbert-Schmidt norm.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Optional

import numpy as np

from .states import DickeMixture, PureState, DensityMatrix
from .su2 import Rotation, SpinQuantum, as_spin, clebsch_gordan, wigner_D

__all__ = [
    "SphericalTensorBasis",
    "TensorDecomposition",
    "MassDistribution",
    "build_tensor_basis",
    "rescale_basis",
    "decompose",
    "rotate_decomposition",
    "mass_distribution",
    "qmi",
]


@dataclass(frozen=True)
class SphericalTensorBasis:
    """All ``T_jm`` for ``j = 0..2J`` acting on spin ``J``.

    ``stack`` holds the matrices in ``labels`` order, ``(j, m)`` with j
    ascending and m descending.
    """

    j_system: SpinQuantum
    labels: tuple
    stack: np.ndarray = field(repr=False)
    reduced_elements: tuple  # r_j for j = 0..2J

    @property
    def ranks(self) -> range:
        return range(self.j_system.two_j + 1)

    def index(self, j: int, m: int) -> int:
        # offset of rank j is j^2, then m runs from +j down
        if not (0 <= j <= self.j_system.two_j and -j <= m <= j):
            raise KeyError((j, m))
        return j * j + (j - m)

    def tensor(self, j: int, m: int) -> np.ndarray:
        return self.stack[self.index(j, m)]

    def norm2(self, j: int) -> float:
        """``||T_jm||^2 = r_j^2 / (2j+1)``, independent of m."""
        return self.reduced_elements[j] ** 2 / (2 * j + 1)

    @property
    def norms(self) -> np.ndarray:
        return np.array([self.norm2(j) for j, _ in self.labels])

    @property
    def tensors(self) -> dict:
        return {lab: self.stack[k] for k, lab in enumerate(self.labels)}


@lru_cache(maxsize=32)
def _unit_basis(two_j: int) -> SphericalTensorBasis:
    spin = SpinQuantum(two_j)
    big_j = spin.j
    ms = spin.m_values()
    d = spin.dim
    labels = []
    mats = []
    for j in range(two_j + 1):
        red = np.sqrt(2 * j + 1)
        for m in range(j, -j - 1, -1):
            t = np.zeros((d, d))
            for col, mp in enumerate(ms):
                row_m = mp + m
                if abs(row_m) > big_j:
                    continue
                row = spin.index(row_m)
                t[row, col] = clebsch_gordan(big_j, mp, j, m, big_j, row_m) * red / np.sqrt(d)
            labels.append((j, m))
            mats.append(t.astype(complex))
    stack = np.array(mats)
    stack.setflags(write=False)
    reduced = tuple(float(np.sqrt(2 * j + 1)) for j in range(two_j + 1))
    return SphericalTensorBasis(spin, tuple(labels), stack, reduced)


def build_tensor_basis(j_system) -> SphericalTensorBasis:
    """Unit-norm spherical tensor basis on spin ``j_system`` (cached)."""
    return _unit_basis(as_spin(j_system).two_j)


def rescale_basis(basis: SphericalTensorBasis, reduced: Mapping[int, float]) -> SphericalTensorBasis:
    """Same basis with new reduced matrix elements for the ranks listed in ``reduced``."""
    red = list(basis.reduced_elements)
    scale = np.ones(len(basis.labels))
    for j, r in reduced.items():
        factor = r / red[j]
        red[j] = float(r)
        for m in range(-j, j + 1):
            scale[basis.index(j, m)] = factor
    stack = basis.stack * scale[:, None, None]
    stack.setflags(write=False)
    return SphericalTensorBasis(basis.j_system, basis.labels, stack, tuple(red))


def _rho(state) -> tuple[SpinQuantum, np.ndarray]:
    if isinstance(state, (DensityMatrix, PureState, DickeMixture)):
        return state.j, state.rho
    raise TypeError(f"unsupported state type {type(state).__name__}")


def _basis_for(j: SpinQuantum, basis: Optional[SphericalTensorBasis]) -> SphericalTensorBasis:
    basis = basis or build_tensor_basis(j)
    if basis.j_system != j:
        raise ValueError("basis and state have different J")
    return basis


@dataclass(frozen=True)
class TensorDecomposition:
    """Expansion coefficients ``tau_jm`` with ``rho = sum tau_jm T_jm``."""

    basis: SphericalTensorBasis = field(repr=False)
    values: np.ndarray = field(repr=False)  # aligned with basis.labels

    def __getitem__(self, jm: tuple) -> complex:
        return complex(self.values[self.basis.index(*jm)])

    @property
    def coefficients(self) -> dict:
        return {lab: complex(v) for lab, v in zip(self.basis.labels, self.values)}

    def rank(self, j: int) -> np.ndarray:
        """Coefficients of rank j ordered m = j .. -j."""
        start = j * j
        return self.values[start:start + 2 * j + 1]

    def rank_norms(self) -> np.ndarray:
        """``sum_m |tau_jm|^2`` per rank j."""
        return np.array([np.sum(np.abs(self.rank(j)) ** 2) for j in self.basis.ranks])

    def reconstruct(self) -> np.ndarray:
        return np.tensordot(self.values, self.basis.stack, axes=1)


def decompose(state, basis: Optional[SphericalTensorBasis] = None) -> TensorDecomposition:
    """``tau_jm = Tr(T_jm^dagger rho) / ||T_jm||^2``."""
    j, rho = _rho(state)
    basis = _basis_for(j, basis)
    overlaps = np.einsum("kab,ab->k", basis.stack.conj(), rho)
    return TensorDecomposition(basis, overlaps / basis.norms)


def rotate_decomposition(dec: TensorDecomposition, r: Rotation) -> TensorDecomposition:
    """Coefficients of ``R rho R^dagger``: ``tau'_{jm'} = sum_m D^j_{m'm}(R) tau_jm``."""
    if r.j != dec.basis.j_system:
        raise ValueError("rotation and decomposition act on different spins")
    out = np.empty_like(dec.values)
    for j in dec.basis.ranks:
        start = j * j
        out[start:start + 2 * j + 1] = wigner_D(SpinQuantum(2 * j), r.angles) @ dec.rank(j)
    return TensorDecomposition(dec.basis, out)


@dataclass(frozen=True)
class MassDistribution:
    """Per-sphere masses ``|<T_jm>|^2 / ||T_jm||^2``, each vector ordered m = j .. -j."""

    spheres: dict

    def total_mass(self, j: int) -> float:
        return float(np.sum(self.spheres[j]))

    @property
    def total_masses(self) -> dict:
        return {j: self.total_mass(j) for j in self.spheres}

    def moment_of_inertia(self) -> float:
        return float(sum(np.dot(np.arange(j, -j - 1, -1) ** 2, v) for j, v in self.spheres.items() if j >= 1))

    def rows(self) -> list[tuple[int, int, float]]:
        """(sphere_j, m, mass) sorted by j then m, both descending."""
        out = []
        for j in sorted(self.spheres, reverse=True):
            for m, val in zip(range(j, -j - 1, -1), self.spheres[j]):
                out.append((j, m, float(val)))
        return out


def _masses_from_expectations(basis: SphericalTensorBasis, expect: np.ndarray) -> MassDistribution:
    mass = np.abs(expect) ** 2 / basis.norms
    spheres = {j: mass[j * j:j * j + 2 * j + 1].copy() for j in basis.ranks}
    return MassDistribution(spheres)


def mass_distribution(state, basis: Optional[SphericalTensorBasis] = None) -> MassDistribution:
    j, rho = _rho(state)
    basis = _basis_for(j, basis)
    expect = np.einsum("kab,ba->k", basis.stack, rho)
    return _masses_from_expectations(basis, expect)


def qmi(state, basis: Optional[SphericalTensorBasis] = None) -> float:
    """Quantum moment of inertia ``sum_{j>=1} sum_{m=-j..j} m^2 |<T_jm>|^2 / ||T_jm||^2``.

    Half the dynamical susceptibility for pure states, at most half for mixed ones.
    """
    if isinstance(state, DickeMixture):
        # diagonal states only overlap m = 0 tensors
        return 0.0
    return mass_distribution(state, basis).moment_of_inertia()
