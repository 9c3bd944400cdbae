"""Brute-force tensor-product model of N spin-1/2 particles (N <= 10).

Used to cross-check the symmetric-subspace code.  Qubit basis state 0 is
spin up.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from math import comb
from typing import Optional

import numpy as np

from .metrology import qfi_matrices, qfi_unitary, Generator
from .states import PureState
from .su2 import SpinQuantum, as_spin, doubled

__all__ = [
    "MAX_QUBITS",
    "MultiQubitState",
    "JSector",
    "JSectorDecomposition",
    "collective_operator",
    "j_sector_decomposition",
    "multiplicity",
    "singlet_eigenstate",
    "symmetrize_embed",
    "pj_bound",
    "random_mixed_qubits",
    "run_oracle_checks",
]

MAX_QUBITS = 10
CLUSTER_TOL = 1e-8

_HALF = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex) / 2,
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex) / 2,
    "z": np.array([[1, 0], [0, -1]], dtype=complex) / 2,
}


def _check_n(n: int):
    if not (1 <= n <= MAX_QUBITS):
        raise ValueError(f"qubit count must be in 1..{MAX_QUBITS}, got {n}")


@dataclass(frozen=True)
class MultiQubitState:
    """Pure (vector) or mixed (matrix) state of ``n`` qubits."""

    n: int
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        _check_n(self.n)
        a = np.asarray(self.data, dtype=complex)
        d = 2 ** self.n
        if a.shape == (d,):
            if abs(np.linalg.norm(a) - 1) > 1e-12:
                raise ValueError("state vector is not normalized")
        elif a.shape == (d, d):
            if abs(np.trace(a).real - 1) > 1e-10:
                raise ValueError("density matrix does not have unit trace")
            if np.max(np.abs(a - a.conj().T)) > 1e-12:
                raise ValueError("density matrix is not Hermitian")
        else:
            raise ValueError(f"expected shape ({d},) or ({d},{d}), got {a.shape}")
        a.setflags(write=False)
        object.__setattr__(self, "data", a)

    @property
    def is_pure(self) -> bool:
        return self.data.ndim == 1

    @property
    def rho(self) -> np.ndarray:
        if self.is_pure:
            return np.outer(self.data, self.data.conj())
        return self.data


@lru_cache(maxsize=None)
def _collective(n: int, axis: str) -> np.ndarray:
    d = 2 ** n
    out = np.zeros((d, d), dtype=complex)
    for site in range(n):
        out += np.kron(np.kron(np.eye(2 ** site), _HALF[axis]), np.eye(2 ** (n - site - 1)))
    out.setflags(write=False)
    return out


def collective_operator(n: int, axis: str) -> np.ndarray:
    """``J_axis = sum_k s_axis^(k)`` on the 2^n dimensional space."""
    _check_n(n)
    if axis not in _HALF:
        raise ValueError("axis must be one of 'x', 'y', 'z'")
    return _collective(n, axis)


def multiplicity(n: int, j_total) -> int:
    """Number of spin-J irreps in n spin-1/2 particles, ``C(n, n/2-J) - C(n, n/2-J-1)``."""
    k = (n - doubled(j_total)) // 2
    if k < 0 or (n - doubled(j_total)) % 2:
        return 0
    return comb(n, k) - (comb(n, k - 1) if k >= 1 else 0)


@dataclass(frozen=True)
class JSector:
    j_total: float
    projector: np.ndarray = field(repr=False)
    multiplicity: int
    weight: float


@dataclass(frozen=True)
class JSectorDecomposition:
    n: int
    sectors: tuple

    def weights(self) -> dict:
        return {s.j_total: s.weight for s in self.sectors}

    def bound(self) -> float:
        return 4.0 * sum(s.weight * s.j_total ** 2 for s in self.sectors)


@lru_cache(maxsize=None)
def _projectors(n: int) -> tuple:
    ops = [_collective(n, a) for a in "xyz"]
    j2 = sum(o @ o for o in ops)
    w, v = np.linalg.eigh(j2)
    out = []
    start = 0
    # eigenvalues come sorted; cut wherever the gap exceeds the tolerance
    while start < w.size:
        stop = start + 1
        while stop < w.size and w[stop] - w[start] < CLUSTER_TOL:
            stop += 1
        lam = float(np.mean(w[start:stop]))
        j_total = (-1 + np.sqrt(1 + 4 * lam)) / 2
        j_total = round(2 * j_total) / 2
        block = v[:, start:stop]
        proj = block @ block.conj().T
        proj.setflags(write=False)
        size = stop - start
        out.append((j_total, proj, size // int(2 * j_total + 1)))
        start = stop
    return tuple(sorted(out, key=lambda t: -t[0]))


def j_sector_decomposition(n: int, state: Optional[MultiQubitState] = None) -> JSectorDecomposition:
    """Total-spin sectors from clustering the J^2 spectrum.

    Weights are ``Tr(P_J rho)`` for ``state``, or the tracial weights
    ``(2J+1) d_J / 2^n`` if no state is given.
    """
    _check_n(n)
    rho = None if state is None else state.rho
    if state is not None and state.n != n:
        raise ValueError("state has a different qubit count")
    sectors = []
    for j_total, proj, mult in _projectors(n):
        if rho is None:
            weight = (2 * j_total + 1) * mult / 2 ** n
        else:
            weight = float(np.real(np.vdot(proj, rho)))
        sectors.append(JSector(j_total, proj, mult, weight))
    return JSectorDecomposition(n, tuple(sectors))


def _bits_index(bits: tuple) -> int:
    idx = 0
    for b in bits:
        idx = 2 * idx + b
    return idx


def _symmetric_dicke_vector(n: int, n_down: int) -> np.ndarray:
    v = np.zeros(2 ** n, dtype=complex)
    for downs in combinations(range(n), n_down):
        bits = [0] * n
        for k in downs:
            bits[k] = 1
        v[_bits_index(tuple(bits))] = 1.0
    return v / np.sqrt(comb(n, n_down))


@lru_cache(maxsize=None)
def _dicke_isometry(n: int) -> np.ndarray:
    iso = np.column_stack([_symmetric_dicke_vector(n, k) for k in range(n + 1)])
    iso.setflags(write=False)
    return iso


def symmetrize_embed(state: PureState) -> MultiQubitState:
    """Embed a spin-N/2 Dicke-basis vector into the symmetric subspace of N qubits."""
    n = state.j.two_j
    _check_n(n)
    return MultiQubitState(n, _dicke_isometry(n) @ state.amplitudes)


def embed_density(rho: np.ndarray, n: int) -> MultiQubitState:
    iso = _dicke_isometry(n)
    return MultiQubitState(n, iso @ np.asarray(rho) @ iso.conj().T)


def singlet_eigenstate(n: int, j_total, m) -> MultiQubitState:
    """``|J, M>`` made of a symmetric block of 2J qubits and (n/2 - J) singlet pairs."""
    _check_n(n)
    if n % 2:
        raise ValueError("the singlet construction needs an even qubit count")
    two_j, two_m = doubled(j_total), doubled(m)
    if two_j > n or two_j < 0 or (n - two_j) % 2:
        raise ValueError(f"J={j_total} is not reachable with {n} qubits")
    if abs(two_m) > two_j or (two_j - two_m) % 2:
        raise ValueError(f"m={m} is not valid for J={j_total}")
    n_sym = two_j
    n_down = (two_j - two_m) // 2
    head = _symmetric_dicke_vector(n_sym, n_down) if n_sym else np.ones(1, dtype=complex)
    singlet = np.array([0, 1, -1, 0], dtype=complex) / np.sqrt(2)
    v = head
    for _ in range((n - n_sym) // 2):
        v = np.kron(v, singlet)
    return MultiQubitState(n, v)


def pj_bound(state: MultiQubitState) -> float:
    """``4 sum_J P_J J^2``, the QFI bound from total-spin populations."""
    return j_sector_decomposition(state.n, state).bound()


def random_mixed_qubits(n: int, rng: np.random.Generator, rank: Optional[int] = None) -> MultiQubitState:
    d = 2 ** n
    k = d if rank is None else rank
    g = rng.normal(size=(d, k)) + 1j * rng.normal(size=(d, k))
    rho = g @ g.conj().T
    return MultiQubitState(n, rho / np.trace(rho).real)


@dataclass(frozen=True)
class OracleCheck:
    name: str
    n: int
    passed: bool
    deviation: float


def run_oracle_checks(n_max: int = 6, rng: Optional[np.random.Generator] = None, samples: int = 5, tol: float = 1e-9) -> list[OracleCheck]:
    """Cross-validate the symmetric-subspace code against the qubit model."""
    from .states import random_density, random_pure

    rng = rng or np.random.default_rng(0)
    checks = []
    for n in range(1, min(n_max, MAX_QUBITS) + 1):
        spin = SpinQuantum(n)
        jz_full = collective_operator(n, "z")
        dev = 0.0
        for _ in range(samples):
            psi = random_pure(spin, rng)
            dev = max(dev, abs(qfi_unitary(psi, Generator.jz(spin)) - qfi_matrices(symmetrize_embed(psi).rho, jz_full)))
            rho = random_density(spin, rng)
            dev = max(dev, abs(qfi_unitary(rho, Generator.jz(spin)) - qfi_matrices(embed_density(rho.rho, n).rho, jz_full)))
        checks.append(OracleCheck("qfi_symmetric_vs_full", n, dev <= tol, dev))

        dec = j_sector_decomposition(n)
        bad = max(abs(s.multiplicity - multiplicity(n, s.j_total)) for s in dec.sectors)
        dims = sum((2 * s.j_total + 1) * s.multiplicity for s in dec.sectors)
        checks.append(OracleCheck("multiplicity_formula", n, bad == 0 and dims == 2 ** n, float(bad + abs(dims - 2 ** n))))

        worst = 0.0
        for _ in range(samples):
            st = random_mixed_qubits(n, rng)
            worst = max(worst, qfi_matrices(st.rho, jz_full) - pj_bound(st))
        checks.append(OracleCheck("pj_bound", n, worst <= tol, max(worst, 0.0)))
    return checks
