"""Probe states of N two-mode bosons in the spin-N/2 Dicke basis."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from math import comb
from typing import Iterable, Union

import numpy as np

from .su2 import SpinQuantum, as_spin, doubled, rotation_about_axis

__all__ = [
    "PureState",
    "DensityMatrix",
    "DickeMixture",
    "SectoredState",
    "as_density",
    "dicke",
    "coherent_spin_state",
    "cat_state",
    "kitten_state",
    "twin_fock_probe",
    "mix",
    "two_condensate_mixture",
    "two_condensate_wells",
    "random_pure",
    "random_density",
    "random_css_mixture",
]

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = -1e-10
NORM_TOL = 1e-12


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PureState:
    """Normalized ket in the Dicke basis of spin ``j``."""

    j: SpinQuantum
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        psi = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if psi.shape != (self.j.dim,):
            raise ValueError(f"expected {self.j.dim} amplitudes, got {psi.size}")
        norm = np.linalg.norm(psi)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized (norm {norm!r})")
        object.__setattr__(self, "amplitudes", _readonly(psi))

    @classmethod
    def normalized(cls, j, amplitudes) -> "PureState":
        psi = np.asarray(amplitudes, dtype=complex)
        return cls(as_spin(j), psi / np.linalg.norm(psi))

    @property
    def n_particles(self) -> int:
        return self.j.two_j

    @property
    def rho(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())

    def density(self) -> "DensityMatrix":
        return DensityMatrix(self.j, self.rho)

    def transformed(self, unitary: np.ndarray) -> "PureState":
        return PureState.normalized(self.j, unitary @ self.amplitudes)


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite matrix on spin ``j``.

    Inputs violating the tolerances are rejected, never clipped.
    """

    j: SpinQuantum
    rho: np.ndarray = field(repr=False)

    def __post_init__(self):
        r = np.asarray(self.rho, dtype=complex)
        d = self.j.dim
        if r.shape != (d, d):
            raise ValueError(f"expected a {d}x{d} matrix, got shape {r.shape}")
        if not np.all(np.isfinite(r)):
            raise ValueError("matrix has non-finite entries")
        herm = np.max(np.abs(r - r.conj().T)) if d else 0.0
        if herm > HERMITIAN_TOL:
            raise ValueError(f"matrix is not Hermitian (deviation {herm:.3e})")
        r = (r + r.conj().T) / 2
        tr = np.trace(r).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"trace is {tr!r}, expected 1")
        lam_min = float(np.linalg.eigvalsh(r)[0])
        if lam_min < PSD_TOL:
            raise ValueError(f"matrix is not positive semidefinite (smallest eigenvalue {lam_min:.6e})")
        object.__setattr__(self, "rho", _readonly(r))

    @classmethod
    def from_unnormalized(cls, j, matrix) -> "DensityMatrix":
        """Hermitize and rescale to unit trace before validating."""
        m = np.asarray(matrix, dtype=complex)
        m = (m + m.conj().T) / 2
        return cls(as_spin(j), m / np.trace(m).real)

    @classmethod
    def maximally_mixed(cls, j) -> "DensityMatrix":
        spin = as_spin(j)
        return cls(spin, np.eye(spin.dim) / spin.dim)

    @property
    def n_particles(self) -> int:
        return self.j.two_j

    def density(self) -> "DensityMatrix":
        return self

    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linalg.eigh(self.rho)

    def transformed(self, unitary: np.ndarray) -> "DensityMatrix":
        u = np.asarray(unitary)
        out = u @ self.rho @ u.conj().T
        return DensityMatrix(self.j, (out + out.conj().T) / 2)

    def expect(self, operator: np.ndarray) -> complex:
        return np.trace(self.rho @ operator)


@dataclass(frozen=True)
class DickeMixture:
    """State diagonal in the Dicke basis, stored by its populations.

    Keeps large-J sectors cheap; ``density()`` materializes the matrix.
    """

    j: SpinQuantum
    populations: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.asarray(self.populations, dtype=float).reshape(-1)
        if p.shape != (self.j.dim,):
            raise ValueError(f"expected {self.j.dim} populations, got {p.size}")
        if np.any(p < PSD_TOL):
            raise ValueError("populations must be non-negative")
        if abs(p.sum() - 1.0) > TRACE_TOL:
            raise ValueError(f"populations sum to {p.sum()!r}, expected 1")
        p = np.clip(p, 0.0, None)
        p.setflags(write=False)
        object.__setattr__(self, "populations", p)

    @property
    def n_particles(self) -> int:
        return self.j.two_j

    @property
    def rho(self) -> np.ndarray:
        return np.diag(self.populations).astype(complex)

    def density(self) -> DensityMatrix:
        return DensityMatrix(self.j, self.rho)


State = Union[PureState, DensityMatrix, DickeMixture]


@dataclass(frozen=True)
class SectoredState:
    """Incoherent mixture over sectors of different total particle number."""

    sectors: tuple

    def __post_init__(self):
        secs = tuple((float(w), s) for w, s in self.sectors)
        if not secs:
            raise ValueError("at least one sector is required")
        weights = np.array([w for w, _ in secs])
        if np.any(weights < 0):
            raise ValueError("sector weights must be non-negative")
        if abs(weights.sum() - 1.0) > TRACE_TOL:
            raise ValueError(f"sector weights sum to {weights.sum()!r}, expected 1")
        js = [s.j for _, s in secs]
        if len(set(js)) != len(js):
            raise ValueError("each sector must have a distinct J")
        object.__setattr__(self, "sectors", tuple(sorted(secs, key=lambda ws: ws[1].j.two_j)))

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.sectors])

    @property
    def particle_numbers(self) -> np.ndarray:
        return np.array([s.j.two_j for _, s in self.sectors])

    @property
    def mean_particles(self) -> float:
        return float(self.weights @ self.particle_numbers)

    @property
    def particle_number_spread(self) -> float:
        n = self.particle_numbers
        return float(np.sqrt(self.weights @ (n - self.mean_particles) ** 2))


def as_density(state) -> DensityMatrix:
    """Materialize any single-sector state as a DensityMatrix."""
    if isinstance(state, DensityMatrix):
        return state
    if isinstance(state, (PureState, DickeMixture)):
        return state.density()
    raise TypeError(f"cannot convert {type(state).__name__} to a density matrix")


def _spin(n_particles: int) -> SpinQuantum:
    if int(n_particles) != n_particles or n_particles < 0:
        raise ValueError("n_particles must be a non-negative integer")
    return SpinQuantum.from_particles(int(n_particles))


def _basis_vector(spin: SpinQuantum, m) -> np.ndarray:
    v = np.zeros(spin.dim, dtype=complex)
    v[spin.index(m)] = 1.0
    return v


def dicke(n_particles: int, m) -> PureState:
    """``|J=N/2, M=m>``."""
    spin = _spin(n_particles)
    return PureState(spin, _basis_vector(spin, m))


def coherent_spin_state(n_particles: int, theta: float, phi: float) -> PureState:
    """N copies of the single-particle orbital pointing at (theta, phi)."""
    spin = _spin(n_particles)
    if n_particles < 1:
        raise ValueError("n_particles must be at least 1")
    n = spin.two_j
    k = np.arange(n + 1)  # J - M, number of down particles
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    binom = np.sqrt([comb(n, int(x)) for x in k], dtype=float)
    amp = binom * c ** (n - k) * s ** k * np.exp(1j * phi * k)
    return PureState.normalized(spin, amp)


def cat_state(n_particles: int, relative_phase: float = 0.0) -> PureState:
    """``(|J,J> + e^{i phase}|J,-J>)/sqrt(2)``."""
    spin = _spin(n_particles)
    if n_particles < 1:
        raise ValueError("n_particles must be at least 1")
    v = _basis_vector(spin, spin.j) + np.exp(1j * relative_phase) * _basis_vector(spin, -spin.j)
    return PureState.normalized(spin, v)


def kitten_state(n_particles: int, m) -> PureState:
    """``(|J,m> + |J,-m>)/sqrt(2)`` for ``0 < m <= J``."""
    spin = _spin(n_particles)
    if doubled(m) <= 0:
        raise ValueError("kitten states need m > 0")
    v = _basis_vector(spin, m) + _basis_vector(spin, -doubled(m) / 2)
    return PureState.normalized(spin, v)


def twin_fock_probe(n_particles: int) -> PureState:
    """Twin Fock state after a balanced beam splitter, ``exp(i pi/2 Jx)|N/2, 0>``."""
    if n_particles % 2:
        raise ValueError("twin Fock states need an even particle number")
    spin = _spin(n_particles)
    u = rotation_about_axis(spin, (1.0, 0.0, 0.0), -np.pi / 2).unitary
    return PureState.normalized(spin, u @ _basis_vector(spin, 0))


def mix(components: Iterable[tuple[float, State]]) -> DensityMatrix:
    """Convex combination of states sharing the same J."""
    comps = list(components)
    if not comps:
        raise ValueError("nothing to mix")
    weights = np.array([float(w) for w, _ in comps])
    if np.any(weights < 0):
        raise ValueError("mixing weights must be non-negative")
    if abs(weights.sum() - 1.0) > 1e-10:
        raise ValueError(f"mixing weights sum to {weights.sum()!r}, expected 1")
    spins = {s.j for _, s in comps}
    if len(spins) != 1:
        raise ValueError("all components must share the same J")
    spin = spins.pop()
    rho = sum(w * s.rho for w, (_, s) in zip(weights / weights.sum(), comps))
    return DensityMatrix(spin, rho)


def two_condensate_mixture(n_min: int, n_max: int) -> SectoredState:
    """Two independently loaded wells, each flat on ``[n_min, n_max]``.

    A draw (a, b) contributes ``|J=(a+b)/2, M=(a-b)/2>`` to the sector of
    total number a+b.  Sector states are Dicke-diagonal.
    """
    if not (0 <= n_min <= n_max):
        raise ValueError("need 0 <= n_min <= n_max")
    counts = np.arange(n_min, n_max + 1)
    w = 1.0 / counts.size ** 2
    sectors: dict[int, dict[int, float]] = defaultdict(dict)
    for a in counts:
        for b in counts:
            n = int(a + b)
            idx = int(b)  # row index J - M equals the second-well count
            sectors[n][idx] = sectors[n].get(idx, 0.0) + w
    out = []
    for n, pops in sectors.items():
        p = np.zeros(n + 1)
        for idx, val in pops.items():
            p[idx] = val
        total = p.sum()
        out.append((total, DickeMixture(SpinQuantum(n), p / total)))
    total = sum(t for t, _ in out)
    return SectoredState(tuple((t / total, s) for t, s in out))


def two_condensate_wells(mean_total: int, spread: int) -> tuple[int, int]:
    """Per-well range whose total has mean ``mean_total`` and range ``spread / 2``.

    Inverse of ``mean_total = n_min + n_max`` and ``spread = 2 (n_max - n_min)``,
    the convention under which the closed-form footnote value is exact.
    Raises ValueError if no integer wells realize the pair.
    """
    if spread % 2 or (mean_total - spread // 2) % 2:
        raise ValueError(f"(mean={mean_total}, spread={spread}) has no integer well range")
    n_min = (mean_total - spread // 2) // 2
    n_max = (mean_total + spread // 2) // 2
    if n_min < 0:
        raise ValueError("spread too large for the mean")
    return n_min, n_max


def random_pure(j, rng: np.random.Generator) -> PureState:
    spin = as_spin(j)
    v = rng.normal(size=spin.dim) + 1j * rng.normal(size=spin.dim)
    return PureState.normalized(spin, v)


def random_density(j, rng: np.random.Generator, rank: int | None = None) -> DensityMatrix:
    """Random density matrix from a Ginibre matrix (full rank unless ``rank`` given)."""
    spin = as_spin(j)
    k = spin.dim if rank is None else int(rank)
    g = rng.normal(size=(spin.dim, k)) + 1j * rng.normal(size=(spin.dim, k))
    return DensityMatrix.from_unnormalized(spin, g @ g.conj().T)


def random_css_mixture(n_particles: int, rng: np.random.Generator, n_components: int | None = None) -> DensityMatrix:
    """Random convex mixture of coherent spin states (a separable state)."""
    k = int(rng.integers(1, 6)) if n_components is None else int(n_components)
    w = rng.dirichlet(np.ones(k))
    comps = []
    for wi in w:
        theta = np.arccos(rng.uniform(-1, 1))
        phi = rng.uniform(0, 2 * np.pi)
        comps.append((wi, coherent_spin_state(n_particles, theta, phi)))
    return mix(comps)
