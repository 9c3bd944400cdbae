"""Fisher information, susceptibility, Bures distance and squeezing.

States may be passed as ``PureState``, ``DensityMatrix`` or ``DickeMixture``;
number-fluctuating states go through :func:`sectored_qfi`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .states import DensityMatrix, DickeMixture, PureState, SectoredState, as_density
from .su2 import Rotation, SpinQuantum, as_spin, axis_operator, rotation_about_axis, spin_operators

__all__ = [
    "Generator",
    "Povm",
    "InterferometerSpec",
    "MetricReport",
    "qfi_unitary",
    "qfi_matrices",
    "dynamical_susceptibility",
    "qfi_path",
    "qfi_interferometer",
    "cfi",
    "fidelity",
    "bures_distance",
    "spin_squeezing",
    "spin_squeezing_general",
    "bounds",
    "sectored_qfi",
    "two_condensate_closed_form",
    "metric_report",
]

EIG_FLOOR = 1e-12      # relative cut on p_i + p_j
PROB_FLOOR = 1e-12     # classical probabilities below this are skipped
SQUEEZE_FLOOR = 1e-10  # |<J_perp>|^2 below this * N leaves xi^2 undefined
HERMITIAN_TOL = 1e-12

AnyState = Union[PureState, DensityMatrix, DickeMixture]


@dataclass(frozen=True)
class Generator:
    """Hermitian generator of a phase shift.

    ``axis`` is set when the generator is ``n.J`` for a unit vector ``n``.
    """

    matrix: np.ndarray = field(repr=False)
    label: str = ""
    axis: Optional[tuple] = None

    def __post_init__(self):
        g = np.asarray(self.matrix, dtype=complex)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ValueError("generator must be a square matrix")
        if np.max(np.abs(g - g.conj().T), initial=0.0) > HERMITIAN_TOL * max(1.0, np.abs(g).max(initial=0.0)):
            raise ValueError("generator is not Hermitian")
        g = (g + g.conj().T) / 2
        g.setflags(write=False)
        object.__setattr__(self, "matrix", g)
        if self.axis is not None:
            object.__setattr__(self, "axis", tuple(float(x) for x in self.axis))

    @classmethod
    def along(cls, j, axis) -> "Generator":
        n = np.asarray(axis, dtype=float)
        n = n / np.linalg.norm(n)
        return cls(axis_operator(j, n), label=f"n.J n=({n[0]:.6g},{n[1]:.6g},{n[2]:.6g})", axis=tuple(n))

    @classmethod
    def jz(cls, j) -> "Generator":
        return cls(spin_operators(j).jz, label="Jz", axis=(0.0, 0.0, 1.0))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def _as_generator(g, j: SpinQuantum) -> Generator:
    gen = g if isinstance(g, Generator) else Generator(np.asarray(g))
    if gen.dim != j.dim:
        raise ValueError(f"generator dimension {gen.dim} does not match state dimension {j.dim}")
    return gen


@dataclass(frozen=True)
class Povm:
    """Positive operator valued measure given by its effects."""

    effects: tuple

    def __post_init__(self):
        effs = tuple(np.asarray(e, dtype=complex) for e in self.effects)
        if not effs:
            raise ValueError("a POVM needs at least one effect")
        d = effs[0].shape[0]
        for k, e in enumerate(effs):
            if e.shape != (d, d):
                raise ValueError(f"effect {k} has shape {e.shape}, expected {(d, d)}")
            if np.max(np.abs(e - e.conj().T)) > 1e-10:
                raise ValueError(f"effect {k} is not Hermitian")
            if np.linalg.eigvalsh((e + e.conj().T) / 2)[0] < -1e-10:
                raise ValueError(f"effect {k} is not positive semidefinite")
        if np.max(np.abs(sum(effs) - np.eye(d))) > 1e-10:
            raise ValueError("effects do not sum to the identity")
        object.__setattr__(self, "effects", effs)

    @classmethod
    def dicke_projective(cls, j) -> "Povm":
        """Projective measurement of Jz (population imbalance)."""
        spin = as_spin(j)
        eye = np.eye(spin.dim)
        return cls(tuple(np.outer(eye[k], eye[k]) for k in range(spin.dim)))

    def probabilities(self, rho: np.ndarray) -> np.ndarray:
        return np.array([np.real(np.vdot(e.conj().T, rho)) for e in self.effects])


@dataclass(frozen=True)
class InterferometerSpec:
    """Sequence ``post . exp(-i theta n.J) . pre`` with ``n.J = axis Jz axis^dagger``.

    ``pre`` acts first on the probe, ``post`` last.
    """

    pre: Rotation
    axis: Rotation
    post: Rotation
    label: str = ""

    def __post_init__(self):
        if not (self.pre.j == self.axis.j == self.post.j):
            raise ValueError("all rotations must act on the same spin")

    @property
    def j(self) -> SpinQuantum:
        return self.pre.j

    @classmethod
    def trivial(cls, j) -> "InterferometerSpec":
        one = Rotation.identity(j)
        return cls(one, one, one, label="z-phase")

    @classmethod
    def mach_zehnder(cls, j) -> "InterferometerSpec":
        """Balanced beam splitters ``exp(+i pi/2 Jx)`` before and ``exp(-i pi/2 Jx)`` after a z phase.

        The output imbalance is ``cos(theta) <Jz> + sin(theta) <Jx>``.
        """
        spin = as_spin(j)
        x = (1.0, 0.0, 0.0)
        return cls(
            rotation_about_axis(spin, x, -np.pi / 2),
            Rotation.identity(spin),
            rotation_about_axis(spin, x, np.pi / 2),
            label="mach-zehnder",
        )

    def on(self, j) -> "InterferometerSpec":
        """Same rotation sequence represented on another spin."""
        return InterferometerSpec(self.pre.on(j), self.axis.on(j), self.post.on(j), self.label)

    @property
    def phase_axis(self) -> np.ndarray:
        """Direction ``n`` of the phase imprint."""
        return self.axis.transport_axis((0.0, 0.0, 1.0))

    @property
    def effective_axis(self) -> np.ndarray:
        """Axis ``n'`` with ``pre^dagger (n.J) pre = n'.J``."""
        return self.pre.inverse().transport_axis(self.phase_axis)

    def correction_rotation(self) -> Rotation:
        """Rotation R with ``qfi_interferometer(rho) == susceptibility(R rho R^dagger)``."""
        return self.axis.inverse() @ self.pre

    def unitary(self, theta: float) -> np.ndarray:
        m = self.j.m_values()
        phase = np.exp(-1j * theta * m)
        a = self.axis.unitary
        inner = (a * phase[None, :]) @ a.conj().T
        return self.post.unitary @ inner @ self.pre.unitary

    def effective_generator(self) -> Generator:
        return Generator.along(self.j, self.effective_axis)

    def output(self, state: AnyState, theta: float) -> DensityMatrix:
        return as_density(state).transformed(self.unitary(theta))


def _state_matrix(state) -> tuple[SpinQuantum, np.ndarray]:
    if isinstance(state, (DensityMatrix, PureState, DickeMixture)):
        return state.j, state.rho
    raise TypeError(f"unsupported state type {type(state).__name__}")


def _spectrum(rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p, v = np.linalg.eigh(rho)
    return np.clip(p, 0.0, None), v


def _pair_weights(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    tot = p[:, None] + p[None, :]
    mask = tot > EIG_FLOOR * p.sum()
    return tot, mask


def _qfi_diagonal(p: np.ndarray, g: np.ndarray) -> float:
    tot, mask = _pair_weights(p)
    diff2 = (p[:, None] - p[None, :]) ** 2
    w = np.zeros_like(tot)
    w[mask] = diff2[mask] / tot[mask]
    return float(2.0 * np.sum(w * np.abs(g) ** 2))


def _qfi_dicke_axis(mix: DickeMixture, axis) -> float:
    # only nearest-neighbour elements of n.J connect distinct populations
    n = np.asarray(axis, dtype=float)
    p = mix.populations
    if p.size < 2:
        return 0.0
    spin = mix.j
    m = spin.m_values()[1:]
    ladder = (spin.j - m) * (spin.j + m + 1)
    a, b = p[:-1], p[1:]
    tot = a + b
    mask = tot > EIG_FLOOR
    terms = np.zeros_like(tot)
    terms[mask] = (a[mask] - b[mask]) ** 2 / tot[mask] * ladder[mask]
    return float((n[0] ** 2 + n[1] ** 2) * terms.sum())


def qfi_unitary(state: AnyState, g) -> float:
    """QFI of ``exp(-i theta G) rho exp(i theta G)`` with respect to theta.

    Uses ``2 sum (p_i - p_j)^2 / (p_i + p_j) |<i|G|j>|^2`` over eigenpairs of rho,
    skipping pairs whose summed weight falls below ``1e-12 * Tr rho``.
    """
    j, rho = _state_matrix(state)
    gen = _as_generator(g, j)
    if isinstance(state, DickeMixture):
        if gen.axis is not None:
            return _qfi_dicke_axis(state, gen.axis)
        return _qfi_diagonal(state.populations, gen.matrix)
    if isinstance(state, PureState):
        psi = state.amplitudes
        gpsi = gen.matrix @ psi
        mean = np.vdot(psi, gpsi).real
        return float(max(0.0, 4.0 * (np.vdot(gpsi, gpsi).real - mean ** 2)))
    p, v = _spectrum(rho)
    gt = v.conj().T @ gen.matrix @ v
    return _qfi_diagonal(p, gt)


def qfi_matrices(rho: np.ndarray, g: np.ndarray) -> float:
    """QFI for raw matrices, e.g. states on the full qubit space."""
    rho = np.asarray(rho, dtype=complex)
    g = np.asarray(g, dtype=complex)
    if rho.shape != g.shape:
        raise ValueError("state and generator dimensions differ")
    p, v = _spectrum((rho + rho.conj().T) / 2)
    return _qfi_diagonal(p, v.conj().T @ g @ v)


def dynamical_susceptibility(state: AnyState) -> float:
    """QFI for the canonical Jz generator in variance-minus-coherence form.

    ``4 sum_i p_i Var_i(Jz) - 8 sum_{i != j} p_i p_j / (p_i + p_j) |<i|Jz|j>|^2``.
    """
    j, rho = _state_matrix(state)
    jz = spin_operators(j).jz
    p, v = _spectrum(rho)
    gt = v.conj().T @ jz @ v
    g2 = v.conj().T @ (jz @ jz) @ v
    var_i = np.real(np.diag(g2)) - np.real(np.diag(gt)) ** 2
    tot, mask = _pair_weights(p)
    np.fill_diagonal(mask, False)
    coh = np.zeros_like(tot)
    coh[mask] = (p[:, None] * p[None, :])[mask] / tot[mask]
    value = 4.0 * np.dot(p, var_i) - 8.0 * np.sum(coh * np.abs(gt) ** 2)
    return float(max(value, 0.0))


def _check_delta(delta: float):
    if not delta > 0:
        raise ValueError("finite-difference step must be positive")


def qfi_path(rho_minus, rho_center, rho_plus, delta: float) -> float:
    """QFI of a general one-parameter family from three samples.

    Central difference for the derivative, then
    ``2 sum |<i|d rho|j>|^2 / (p_i + p_j)`` in the eigenbasis of the middle state.
    """
    _check_delta(delta)
    mats = [as_density(r).rho for r in (rho_minus, rho_center, rho_plus)]
    if len({m.shape for m in mats}) != 1:
        raise ValueError("states along the path must share a dimension")
    drho = (mats[2] - mats[0]) / (2.0 * delta)
    p, v = _spectrum(mats[1])
    dt = v.conj().T @ drho @ v
    tot, mask = _pair_weights(p)
    w = np.zeros_like(tot)
    w[mask] = 1.0 / tot[mask]
    return float(2.0 * np.sum(w * np.abs(dt) ** 2))


def qfi_interferometer(state: AnyState, spec: InterferometerSpec) -> float:
    """QFI for theta under the interferometer; equals the QFI of the back-rotated axis."""
    _state_matrix(state)
    return _qfi_along(state, spec.effective_axis)


def cfi(povm: Povm, rho_minus, rho_plus, delta: float, rho_center=None) -> float:
    """Classical Fisher information of ``povm`` from central differences.

    The outcome probabilities at the centre default to the average of the two
    shifted ones, which is accurate to second order in ``delta``.
    """
    _check_delta(delta)
    pm = povm.probabilities(as_density(rho_minus).rho)
    pp = povm.probabilities(as_density(rho_plus).rho)
    p0 = (pm + pp) / 2 if rho_center is None else povm.probabilities(as_density(rho_center).rho)
    dp = (pp - pm) / (2.0 * delta)
    mask = p0 > PROB_FLOOR
    return float(np.sum(dp[mask] ** 2 / p0[mask]))


def _sqrt_psd(rho: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(rho)
    if w[0] < -1e-10:
        raise ValueError(f"matrix is not positive semidefinite (smallest eigenvalue {w[0]:.6e})")
    w = np.where(w > 1e-14 * max(w[-1], 1e-300), w, 0.0)
    return (v * np.sqrt(w)) @ v.conj().T


def fidelity(rho1, rho2) -> float:
    """Root fidelity ``Tr sqrt(sqrt(rho1) rho2 sqrt(rho1))`` via the nuclear norm of ``sqrt(rho1) sqrt(rho2)``."""
    a, b = as_density(rho1).rho, as_density(rho2).rho
    if a.shape != b.shape:
        raise ValueError("states have different dimensions")
    s = np.linalg.svd(_sqrt_psd(a) @ _sqrt_psd(b), compute_uv=False)
    return float(min(1.0, s.sum()))


def bures_distance(rho1, rho2) -> float:
    """``d = sqrt(2 (1 - fidelity))``."""
    return float(np.sqrt(max(0.0, 2.0 * (1.0 - fidelity(rho1, rho2)))))


def _moments(state) -> tuple[np.ndarray, np.ndarray]:
    """Mean spin vector and second-moment matrix ``<(J_a J_b + J_b J_a)/2>``."""
    j, rho = _state_matrix(state)
    ops = spin_operators(j).vector()
    mean = np.array([np.real(np.vdot(o.conj().T, rho)) for o in ops])
    second = np.empty((3, 3))
    for a in range(3):
        for b in range(3):
            sym = (ops[a] @ ops[b] + ops[b] @ ops[a]) / 2
            second[a, b] = np.real(np.vdot(sym.conj().T, rho))
    return mean, second


def spin_squeezing(state) -> Optional[float]:
    """``N Var(Jz) / <Jx>^2``; ``None`` when the mean spin along x vanishes."""
    j, _ = _state_matrix(state)
    mean, second = _moments(state)
    n = j.n_particles
    if mean[0] ** 2 < SQUEEZE_FLOOR * max(n, 1):
        return None
    var = second[2, 2] - mean[2] ** 2
    return float(n * max(var, 0.0) / mean[0] ** 2)


def spin_squeezing_general(state, axis) -> Optional[float]:
    """``N Var(n.J) / |<J>_perp|^2`` with the mean spin projected orthogonally to ``n``."""
    j, _ = _state_matrix(state)
    n = np.asarray(axis, dtype=float)
    if abs(np.linalg.norm(n) - 1.0) > 1e-9:
        raise ValueError("axis must be a unit 3-vector")
    mean, second = _moments(state)
    perp = mean - np.dot(mean, n) * n
    perp2 = float(perp @ perp)
    if perp2 < SQUEEZE_FLOOR * max(j.n_particles, 1):
        return None
    var = n @ second @ n - np.dot(mean, n) ** 2
    return float(j.n_particles * max(var, 0.0) / perp2)


def bounds(n_particles: int, single_party: Optional[np.ndarray] = None) -> tuple[float, float]:
    """Separable and ultimate bounds ``N (dl)^2`` and ``N^2 (dl)^2``.

    ``dl`` is the spread of the single-party generator spectrum (1 for
    spin-1/2 parties with ``sigma_z / 2``).
    """
    h = np.diag([0.5, -0.5]) if single_party is None else np.asarray(single_party)
    lam = np.linalg.eigvalsh((h + h.conj().T) / 2)
    spread = float(lam[-1] - lam[0])
    return n_particles * spread ** 2, n_particles ** 2 * spread ** 2


GeneratorSource = Union[Sequence[float], np.ndarray, InterferometerSpec, Callable[[SpinQuantum], Generator]]


def _qfi_along(state: AnyState, axis) -> float:
    if isinstance(state, DickeMixture):
        n = np.asarray(axis, dtype=float)
        return _qfi_dicke_axis(state, n / np.linalg.norm(n))
    return qfi_unitary(state, Generator.along(state.j, axis))


def _sector_qfi(state: AnyState, source) -> float:
    if isinstance(source, InterferometerSpec):
        return _qfi_along(state, source.effective_axis)
    if callable(source):
        gen = source(state.j)
        gen = gen if isinstance(gen, Generator) else Generator(np.asarray(gen))
        if gen.dim != state.j.dim:
            raise ValueError(f"generator for J={state.j.j} has dimension {gen.dim}; it must act within the sector")
        return qfi_unitary(state, gen)
    return _qfi_along(state, source)


def sectored_qfi(state: SectoredState, generator_per_sector: GeneratorSource) -> float:
    """Weighted sum of per-sector QFIs for a sector-conserving generator.

    ``generator_per_sector`` is a unit axis, an InterferometerSpec (re-represented
    on every sector) or a callable returning the generator for a given J.
    """
    if not isinstance(state, SectoredState):
        return _sector_qfi(state, generator_per_sector)
    return float(sum(w * _sector_qfi(s, generator_per_sector) for w, s in state.sectors))


def two_condensate_closed_form(mean_total: float, spread: float) -> float:
    """Closed-form susceptibility of the two-condensate mixture.

    ``N (N/2 + 1) (1 - r^2) - r^2 / 2`` with ``r = spread / (spread + 2)``.
    """
    r2 = (spread / (spread + 2.0)) ** 2
    return mean_total * (mean_total / 2 + 1) * (1 - r2) - 0.5 * r2


@dataclass(frozen=True)
class MetricReport:
    qfi: float
    susceptibility: float
    snl: float
    hl: float
    xi_squared: Optional[float]
    qmi: Optional[float]
    entangled: bool
    interferometer: str = "z-phase"

    def as_dict(self) -> dict:
        return {
            "qfi": self.qfi,
            "susceptibility": self.susceptibility,
            "snl": self.snl,
            "hl": self.hl,
            "xi_squared": self.xi_squared,
            "xi_squared_defined": self.xi_squared is not None,
            "qmi": self.qmi,
            "entangled": self.entangled,
            "interferometer": self.interferometer,
        }


def _sectored_squeezing(state: SectoredState) -> Optional[float]:
    mean = np.zeros(3)
    jz2 = 0.0
    for w, s in state.sectors:
        m, second = _moments(s)
        mean += w * m
        jz2 += w * second[2, 2]
    if mean[0] ** 2 < SQUEEZE_FLOOR * max(state.mean_particles, 1.0):
        return None
    return float(state.mean_particles * max(jz2 - mean[2] ** 2, 0.0) / mean[0] ** 2)


def metric_report(state, spec: Optional[InterferometerSpec] = None) -> MetricReport:
    """Evaluate every scalar metric of a state.

    ``qfi`` is taken under ``spec`` (default: phase about z on the bare state).
    """
    from .tensors import qmi as _qmi

    if isinstance(state, SectoredState):
        first_j = state.sectors[0][1].j
        spec = spec or InterferometerSpec.trivial(first_j)
        qfi = sectored_qfi(state, spec)
        susc = sectored_qfi(state, (0.0, 0.0, 1.0))
        snl = state.mean_particles
        hl = float(state.weights @ state.particle_numbers.astype(float) ** 2)
        xi2 = _sectored_squeezing(state)
        qmi_value = None
    else:
        spec = spec or InterferometerSpec.trivial(state.j)
        qfi = qfi_interferometer(state, spec)
        susc = qfi_unitary(state, Generator.jz(state.j))
        snl, hl = bounds(state.j.n_particles)
        xi2 = spin_squeezing(state)
        qmi_value = _qmi(state)
    return MetricReport(
        qfi=qfi,
        susceptibility=susc,
        snl=float(snl),
        hl=float(hl),
        xi_squared=xi2,
        qmi=qmi_value,
        entangled=bool(qfi > snl + 1e-9 * max(1.0, snl)),
        interferometer=spec.label,
    )
