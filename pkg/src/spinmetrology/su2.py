"""Finite-dimensional SU(2) machinery on the Dicke basis.

All matrices use the basis ordering ``M = J, J-1, ..., -J`` (row 0 is the
highest weight).  Half-integer quantum numbers are stored doubled so they
stay exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import factorial, pi, sqrt
from numbers import Real

import numpy as np

__all__ = [
    "SpinQuantum",
    "SpinOps",
    "EulerAngles",
    "Rotation",
    "as_spin",
    "doubled",
    "spin_operators",
    "wigner_D",
    "wigner_small_d",
    "rotation_from_euler",
    "rotation_about_axis",
    "euler_from_su2",
    "clebsch_gordan",
    "axis_operator",
]

_AXIS_TOL = 1e-9
_PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def doubled(x) -> int:
    """Return ``2*x`` as an int, rejecting anything that is not a half-integer."""
    if isinstance(x, (int, np.integer)):
        return 2 * int(x)
    if isinstance(x, Fraction):
        d = 2 * x
        if d.denominator != 1:
            raise ValueError(f"{x} is not a half-integer")
        return int(d)
    if isinstance(x, Real):
        d = 2.0 * float(x)
        r = round(d)
        if abs(d - r) > 1e-9:
            raise ValueError(f"{x} is not a half-integer")
        return int(r)
    raise TypeError(f"cannot interpret {x!r} as a half-integer")


@dataclass(frozen=True, order=True)
class SpinQuantum:
    """Spin quantum number J, stored as ``two_j = 2J``."""

    two_j: int

    def __post_init__(self):
        if not isinstance(self.two_j, (int, np.integer)) or isinstance(self.two_j, bool):
            raise TypeError("two_j must be an integer")
        if self.two_j < 0:
            raise ValueError("two_j must be non-negative")
        object.__setattr__(self, "two_j", int(self.two_j))

    @classmethod
    def from_value(cls, j) -> "SpinQuantum":
        return cls(doubled(j))

    @classmethod
    def from_particles(cls, n_particles: int) -> "SpinQuantum":
        return cls(int(n_particles))

    @property
    def j(self) -> float:
        return self.two_j / 2

    @property
    def dim(self) -> int:
        return self.two_j + 1

    @property
    def n_particles(self) -> int:
        return self.two_j

    def m_values(self) -> np.ndarray:
        """Magnetic numbers in basis order, ``J`` down to ``-J``."""
        return self.j - np.arange(self.dim)

    def index(self, m) -> int:
        """Row index of ``|J, m>``."""
        two_m = doubled(m)
        if abs(two_m) > self.two_j or (self.two_j - two_m) % 2:
            raise ValueError(f"m={m} not valid for J={self.j}")
        return (self.two_j - two_m) // 2

    def __str__(self):
        return f"{self.two_j}/2" if self.two_j % 2 else str(self.two_j // 2)


def as_spin(j) -> SpinQuantum:
    """Coerce a SpinQuantum or a (half-)integer value to SpinQuantum."""
    if isinstance(j, SpinQuantum):
        return j
    return SpinQuantum.from_value(j)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SpinOps:
    j: SpinQuantum
    jx: np.ndarray
    jy: np.ndarray
    jz: np.ndarray
    jplus: np.ndarray
    jminus: np.ndarray

    def vector(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.jx, self.jy, self.jz


@lru_cache(maxsize=None)
def _spin_operators(two_j: int) -> SpinOps:
    j = SpinQuantum(two_j)
    J = j.j
    m = j.m_values()
    # <M+1|J+|M> sits at (row of M+1, column of M) = (k-1, k)
    up = np.sqrt((J - m[1:]) * (J + m[1:] + 1))
    jplus = np.diag(up, k=1).astype(complex)
    jminus = jplus.conj().T
    jx = (jplus + jminus) / 2
    jy = (jplus - jminus) / 2j
    jz = np.diag(m).astype(complex)
    return SpinOps(j, *(_frozen(a) for a in (jx, jy, jz, jplus, jminus)))


def spin_operators(j) -> SpinOps:
    """Jx, Jy, Jz, J+ and J- for spin ``j`` (cached, read-only arrays)."""
    return _spin_operators(as_spin(j).two_j)


def _unit_axis(axis) -> np.ndarray:
    n = np.asarray(axis, dtype=float).reshape(3)
    norm = np.linalg.norm(n)
    if not np.isfinite(norm) or abs(norm - 1.0) > _AXIS_TOL:
        raise ValueError(f"axis must be a unit 3-vector, got norm {norm}")
    return n / norm


def axis_operator(j, axis) -> np.ndarray:
    """``n . J`` for a unit axis ``n``."""
    n = _unit_axis(axis)
    ops = spin_operators(j)
    return n[0] * ops.jx + n[1] * ops.jy + n[2] * ops.jz


@dataclass(frozen=True)
class EulerAngles:
    """z-y-z Euler angles: ``R = exp(-i alpha Jz) exp(-i beta Jy) exp(-i gamma Jz)``."""

    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            v = float(getattr(self, name))
            if not np.isfinite(v):
                raise ValueError(f"Euler angle {name} must be finite")
            object.__setattr__(self, name, v)

    def canonical(self) -> tuple[float, float, float]:
        """Angles folded into [0, 2pi) x [0, pi] x [0, 2pi) for display.

        Folding by 2pi flips the sign of half-integer representations, so the
        folded triple is only meant for output formatting.
        """
        a, b, g = self.alpha, self.beta % (2 * pi), self.gamma
        if b > pi:
            b = 2 * pi - b
            a += pi
            g += pi
        return a % (2 * pi), b, g % (2 * pi)

    def as_tuple(self) -> tuple[float, float, float]:
        return self.alpha, self.beta, self.gamma


@lru_cache(maxsize=None)
def _jy_eig(two_j: int):
    w, v = np.linalg.eigh(spin_operators(SpinQuantum(two_j)).jy)
    return w, v


def wigner_small_d(j, beta: float) -> np.ndarray:
    """Real matrix ``d^j(beta) = exp(-i beta Jy)`` via eigendecomposition of Jy."""
    two_j = as_spin(j).two_j
    w, v = _jy_eig(two_j)
    d = (v * np.exp(-1j * beta * w)) @ v.conj().T
    return d.real


def wigner_D(j, angles: EulerAngles) -> np.ndarray:
    """``D^j_{m,m'} = <j,m| exp(-i a Jz) exp(-i b Jy) exp(-i g Jz) |j,m'>``."""
    spin = as_spin(j)
    m = spin.m_values()
    d = wigner_small_d(spin, angles.beta)
    return np.exp(-1j * angles.alpha * m)[:, None] * d * np.exp(-1j * angles.gamma * m)[None, :]


def euler_from_su2(u: np.ndarray) -> EulerAngles:
    """Euler angles reproducing a 2x2 SU(2) matrix exactly (sign included).

    The returned gamma may lie outside [0, 2pi): the extra 2pi carries the
    sign of the spinor representation.
    """
    u = np.asarray(u, dtype=complex)
    c, s = abs(u[0, 0]), abs(u[1, 0])
    beta = 2.0 * np.arctan2(s, c)
    tiny = 1e-12
    plus = -2.0 * np.angle(u[0, 0]) if c > tiny else 0.0   # alpha + gamma
    minus = 2.0 * np.angle(u[1, 0]) if s > tiny else 0.0   # alpha - gamma
    alpha = (plus + minus) / 2
    gamma = (plus - minus) / 2
    angles = EulerAngles(alpha, beta, gamma)
    # alpha, gamma are fixed mod 2pi only; pick the branch with the right spinor sign
    if np.linalg.norm(_su2(angles) - u) > np.linalg.norm(_su2(angles) + u):
        angles = EulerAngles(alpha, beta, gamma + 2 * pi)
    return angles


def _su2(angles: EulerAngles) -> np.ndarray:
    return wigner_D(SpinQuantum(1), angles)


@dataclass(frozen=True)
class Rotation:
    """A rotation represented on spin ``j``.

    ``angles`` records an Euler triple with ``wigner_D(j, angles) == unitary``.
    """

    j: SpinQuantum
    unitary: np.ndarray = field(repr=False)
    angles: EulerAngles

    def __post_init__(self):
        u = np.asarray(self.unitary, dtype=complex)
        if u.shape != (self.j.dim, self.j.dim):
            raise ValueError("unitary has wrong dimension")
        if np.linalg.norm(u @ u.conj().T - np.eye(self.j.dim)) > 1e-12 * self.j.dim:
            raise ValueError("matrix is not unitary")
        object.__setattr__(self, "unitary", _frozen(u))

    @classmethod
    def identity(cls, j) -> "Rotation":
        spin = as_spin(j)
        return cls(spin, np.eye(spin.dim, dtype=complex), EulerAngles(0.0, 0.0, 0.0))

    @property
    def su2(self) -> np.ndarray:
        return _su2(self.angles)

    def __matmul__(self, other: "Rotation") -> "Rotation":
        if self.j != other.j:
            raise ValueError("rotations act on different spins")
        angles = euler_from_su2(self.su2 @ other.su2)
        return Rotation(self.j, self.unitary @ other.unitary, angles)

    def inverse(self) -> "Rotation":
        return Rotation(self.j, self.unitary.conj().T, euler_from_su2(self.su2.conj().T))

    def on(self, j) -> "Rotation":
        """The same group element represented on another spin."""
        return rotation_from_euler(j, self.angles)

    def conjugate(self, operator: np.ndarray) -> np.ndarray:
        """``U A U^dagger``."""
        return self.unitary @ operator @ self.unitary.conj().T

    def transport_axis(self, axis) -> np.ndarray:
        """Unit vector ``m`` with ``U (n.J) U^dagger = m.J``."""
        n = _unit_axis(axis)
        u = self.su2
        nsig = sum(c * s for c, s in zip(n, _PAULI))
        conj = u @ nsig @ u.conj().T
        m = np.array([np.real(np.trace(s @ conj)) / 2 for s in _PAULI])
        return m / np.linalg.norm(m)

    def so3(self) -> np.ndarray:
        """3x3 rotation matrix acting on the mean-spin vector."""
        return np.column_stack([self.transport_axis(e) for e in np.eye(3)])

    def axis_angle(self) -> tuple[np.ndarray, float]:
        """Unit axis and angle in [0, 2pi] of the underlying SU(2) element."""
        u = self.su2
        cos_half = np.clip(np.real(np.trace(u)) / 2, -1.0, 1.0)
        angle = 2.0 * np.arccos(cos_half)
        # u = cos(a/2) 1 - i sin(a/2) n.sigma
        n = np.array([-np.imag(u[0, 1] + u[1, 0]), np.real(u[1, 0] - u[0, 1]), -np.imag(u[0, 0] - u[1, 1])]) / 2
        norm = np.linalg.norm(n)
        if norm < 1e-15:
            return np.array([0.0, 0.0, 1.0]), angle
        return n / norm, angle


def rotation_from_euler(j, angles: EulerAngles) -> Rotation:
    spin = as_spin(j)
    return Rotation(spin, wigner_D(spin, angles), angles)


def rotation_about_axis(j, axis, angle: float) -> Rotation:
    """``exp(-i angle n.J)`` through eigendecomposition of the generator."""
    spin = as_spin(j)
    n = _unit_axis(axis)
    w, v = np.linalg.eigh(axis_operator(spin, n))
    u = (v * np.exp(-1j * angle * w)) @ v.conj().T
    half = np.cos(angle / 2) * np.eye(2) - 1j * np.sin(angle / 2) * sum(c * s for c, s in zip(n, _PAULI))
    return Rotation(spin, u, euler_from_su2(half))


def _check_pair(two_j: int, two_m: int, what: str):
    if two_j < 0:
        raise ValueError(f"{what}: j must be non-negative")
    if abs(two_m) > two_j or (two_j - two_m) % 2:
        raise ValueError(f"{what}: m={two_m / 2} incompatible with j={two_j / 2}")


@lru_cache(maxsize=65536)
def _cg_doubled(tj1, tm1, tj2, tm2, tJ, tM) -> float:
    if tm1 + tm2 != tM:
        return 0.0
    if tJ < abs(tj1 - tj2) or tJ > tj1 + tj2 or (tj1 + tj2 + tJ) % 2:
        return 0.0
    j1, m1, j2, m2, J, M = (Fraction(x, 2) for x in (tj1, tm1, tj2, tm2, tJ, tM))

    def f(x: Fraction) -> int:
        return factorial(int(x))

    pref = Fraction(
        (tJ + 1) * f(J + j1 - j2) * f(J - j1 + j2) * f(j1 + j2 - J),
        f(j1 + j2 + J + 1),
    ) * f(J + M) * f(J - M) * f(j1 - m1) * f(j1 + m1) * f(j2 - m2) * f(j2 + m2)
    total = Fraction(0)
    kmin = int(max(0, j2 - J - m1, j1 - J + m2))
    kmax = int(min(j1 + j2 - J, j1 - m1, j2 + m2))
    for k in range(kmin, kmax + 1):
        den = (
            factorial(k) * f(j1 + j2 - J - k) * f(j1 - m1 - k) * f(j2 + m2 - k)
            * f(J - j2 + m1 + k) * f(J - j1 - m2 + k)
        )
        total += Fraction((-1) ** k, den)
    if total == 0:
        return 0.0
    value = sqrt(pref * total * total)
    return value if total > 0 else -value


def clebsch_gordan(j1, m1, j2, m2, J, M) -> float:
    """``<j1 m1; j2 m2 | J M>`` in the Condon-Shortley convention (Racah formula)."""
    t = [doubled(x) for x in (j1, m1, j2, m2, J, M)]
    _check_pair(t[0], t[1], "first")
    _check_pair(t[2], t[3], "second")
    _check_pair(t[4], t[5], "coupled")
    return _cg_doubled(*t)
