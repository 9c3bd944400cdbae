"""Monte-Carlo phase estimation with a Jz (population imbalance) readout."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .metrology import InterferometerSpec, qfi_interferometer
from .states import DensityMatrix, PureState, as_density
from .su2 import SpinQuantum

__all__ = [
    "RNG_ALGORITHM",
    "ExperimentConfig",
    "MeasurementRecord",
    "PhaseModel",
    "MleEstimate",
    "MomentEstimate",
    "TrialStats",
    "NonInvertibleError",
    "outcome_distribution",
    "trial_rng",
    "sample",
    "mle_estimate",
    "moment_estimate",
    "run_experiment",
]

RNG_ALGORITHM = "PCG64"
MLE_GRID = 721
SLOPE_EPS = 1e-8


class NonInvertibleError(ValueError):
    """The mean-imbalance signal has (near) zero slope at the operating point."""


@dataclass(frozen=True)
class PhaseModel:
    """Outcome probabilities as a trigonometric polynomial in theta.

    ``p_M(theta) = sum_d c[M, d] exp(-i theta d)`` with d = m_k - m_l running
    over -2J..2J; exact for every interferometer.
    """

    j: SpinQuantum
    freqs: np.ndarray
    coeffs: np.ndarray

    @classmethod
    def build(cls, probe, spec: InterferometerSpec) -> "PhaseModel":
        rho = as_density(probe)
        j = rho.j
        if spec.j != j:
            spec = spec.on(j)
        a = spec.axis.unitary
        x = a.conj().T @ spec.pre.unitary @ rho.rho @ spec.pre.unitary.conj().T @ a
        b = spec.post.unitary @ a
        m = j.m_values()
        two = np.rint(2 * (m[:, None] - m[None, :])).astype(int)  # doubled frequency
        freqs = np.arange(-2 * j.two_j, 2 * j.two_j + 1, 2) / 2
        coeffs = np.zeros((j.dim, freqs.size), dtype=complex)
        # c[M, d] = sum_{k-l=d} B[M,k] X[k,l] conj(B[M,l])
        terms = np.einsum("mk,kl,ml->mkl", b, x, b.conj())
        for idx, d2 in enumerate(range(-2 * j.two_j, 2 * j.two_j + 1, 2)):
            mask = two == d2
            coeffs[:, idx] = terms[:, mask].sum(axis=1)
        return cls(j, freqs, coeffs)

    def probabilities(self, theta) -> np.ndarray:
        """Array of shape (..., dim) of outcome probabilities, outcomes ordered M = J..-J."""
        th = np.asarray(theta, dtype=float)
        phase = np.exp(-1j * th[..., None] * self.freqs)
        p = np.real(phase @ self.coeffs.T)
        return np.clip(p, 0.0, None)

    def derivative(self, theta) -> np.ndarray:
        th = np.asarray(theta, dtype=float)
        phase = -1j * self.freqs * np.exp(-1j * th[..., None] * self.freqs)
        return np.real(phase @ self.coeffs.T)

    def mean(self, theta) -> np.ndarray:
        return self.probabilities(theta) @ self.j.m_values()

    def mean_slope(self, theta) -> np.ndarray:
        return self.derivative(theta) @ self.j.m_values()

    def variance(self, theta) -> np.ndarray:
        m = self.j.m_values()
        p = self.probabilities(theta)
        return p @ m ** 2 - (p @ m) ** 2

    def fisher(self, theta: float) -> float:
        """Classical Fisher information of the Jz readout."""
        p = self.probabilities(theta)
        dp = self.derivative(theta)
        mask = p > 1e-12
        return float(np.sum(dp[mask] ** 2 / p[mask]))


def outcome_distribution(probe, spec: InterferometerSpec, theta: float) -> np.ndarray:
    """Jz outcome probabilities after the interferometer, ordered M = J..-J."""
    out = spec.output(probe, theta)
    p = np.clip(np.real(np.diag(out.rho)), 0.0, None)
    return p / p.sum()


@dataclass(frozen=True)
class MeasurementRecord:
    """ν outcomes (M values in draw order) and their histogram over M = J..-J."""

    j: SpinQuantum
    outcomes: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)

    @property
    def shots(self) -> int:
        return int(self.counts.sum())

    @property
    def sample_mean(self) -> float:
        return float(self.counts @ self.j.m_values() / self.shots)


def trial_rng(master_seed: int, trial: int) -> np.random.Generator:
    """Independent PCG64 substream for one trial."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(trial),))
    return np.random.Generator(np.random.PCG64(ss))


def sample(dist, nu: int, seed, j: Optional[SpinQuantum] = None) -> MeasurementRecord:
    """Draw ``nu`` outcomes from ``dist`` (ordered M = J..-J).

    ``seed`` is an int or a ``numpy.random.Generator``.
    """
    p = np.asarray(dist, dtype=float)
    if np.any(p < 0) or abs(p.sum() - 1) > 1e-9:
        raise ValueError("dist must be a probability vector")
    if nu < 1:
        raise ValueError("nu must be at least 1")
    spin = j or SpinQuantum(p.size - 1)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.Generator(np.random.PCG64(int(seed)))
    idx = rng.choice(p.size, size=int(nu), p=p / p.sum())
    counts = np.bincount(idx, minlength=p.size)
    return MeasurementRecord(spin, spin.m_values()[idx], counts)


@dataclass(frozen=True)
class MleEstimate:
    theta: float
    flat: bool  # likelihood flat or maximized on more than one point


def _log_likelihood(model: PhaseModel, counts: np.ndarray, theta) -> np.ndarray:
    p = model.probabilities(theta)
    with np.errstate(divide="ignore"):
        logp = np.log(p)
    used = counts > 0
    return np.where(np.isfinite(logp[..., used]), logp[..., used], -1e300) @ counts[used]


def mle_estimate(record: MeasurementRecord, probe, spec: InterferometerSpec,
                 search_interval: Optional[tuple] = None, center: float = 0.0,
                 model: Optional[PhaseModel] = None) -> MleEstimate:
    """Maximum-likelihood phase on ``search_interval`` (default ``center -/+ pi/2``).

    A grid scan locates the best cell, bounded scalar minimization refines it.
    Ties and flat likelihoods return the midpoint of the maximizer set, flagged.
    """
    model = model or PhaseModel.build(probe, spec)
    if record.counts.size != model.j.dim:
        raise ValueError("record does not match the probe dimension")
    lo, hi = search_interval or (center - np.pi / 2, center + np.pi / 2)
    grid = np.linspace(lo, hi, MLE_GRID)
    ll = _log_likelihood(model, record.counts, grid)
    top = ll.max()
    tol = 1e-9 * max(1.0, abs(top))
    winners = np.flatnonzero(ll >= top - tol)
    if winners[-1] - winners[0] > 1:
        return MleEstimate(float((grid[winners[0]] + grid[winners[-1]]) / 2), True)
    k = int(winners[0])
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    res = minimize_scalar(lambda t: -_log_likelihood(model, record.counts, t), bounds=(a, b),
                          method="bounded", options={"xatol": 1e-12})
    theta = float(res.x) if -res.fun >= top else float(grid[k])
    return MleEstimate(theta, False)


@dataclass(frozen=True)
class MomentEstimate:
    theta: float
    predicted_variance: float


def moment_estimate(record: MeasurementRecord, probe, spec: InterferometerSpec,
                    operating_point: float = 0.0, model: Optional[PhaseModel] = None) -> MomentEstimate:
    """Invert the mean imbalance ``f(theta) = <Jz>_out`` on its monotone branch.

    The predicted variance is the error-propagation value
    ``Var(Jz)_out / (nu f'(theta)^2)`` at the operating point.
    """
    model = model or PhaseModel.build(probe, spec)
    slope0 = float(model.mean_slope(operating_point))
    if abs(slope0) < SLOPE_EPS * max(1.0, model.j.j):
        raise NonInvertibleError(f"signal slope {slope0:.3e} vanishes at theta={operating_point}")
    # extend the branch until the slope changes sign
    grid = np.linspace(operating_point - np.pi / 2, operating_point + np.pi / 2, 2 * MLE_GRID + 1)
    mid = MLE_GRID
    slopes = model.mean_slope(grid)
    good = np.sign(slopes) == np.sign(slope0)
    left = mid
    while left > 0 and good[left - 1]:
        left -= 1
    right = mid
    while right < grid.size - 1 and good[right + 1]:
        right += 1
    a, b = grid[left], grid[right]
    target = record.sample_mean
    fa, fb = float(model.mean(a)) - target, float(model.mean(b)) - target
    if fa * fb > 0:
        theta = a if abs(fa) < abs(fb) else b
    elif fa == 0:
        theta = a
    elif fb == 0:
        theta = b
    else:
        theta = brentq(lambda t: float(model.mean(t)) - target, a, b, xtol=1e-14)
    predicted = float(model.variance(operating_point)) / (record.shots * slope0 ** 2)
    return MomentEstimate(float(theta), predicted)


@dataclass(frozen=True)
class ExperimentConfig:
    probe: object
    interferometer: InterferometerSpec
    true_theta: float
    shots: int
    trials: int
    master_seed: int

    def __post_init__(self):
        if self.shots < 1 or self.trials < 1:
            raise ValueError("shots and trials must be at least 1")
        if not (0 <= int(self.master_seed) < 2 ** 64):
            raise ValueError("master_seed must be an unsigned 64-bit integer")
        if not isinstance(self.probe, (PureState, DensityMatrix)):
            raise TypeError("probe must be a single-sector state")


def _sample_stats(x: np.ndarray) -> tuple[float, Optional[float], Optional[float]]:
    n = x.size
    mean = float(x.mean())
    if n < 2:
        return mean, None, None
    var = float(x.var(ddof=1))
    m4 = float(np.mean((x - mean) ** 4))
    # large-sample standard error of the unbiased sample variance
    se2 = (m4 - (n - 3) / (n - 1) * var ** 2) / n
    return mean, var, float(np.sqrt(max(se2, 0.0)))


@dataclass(frozen=True)
class TrialStats:
    estimator_mean: float
    estimator_variance: Optional[float]
    estimator_variance_se: Optional[float]
    moment_mean: Optional[float]
    moment_variance: Optional[float]
    moment_variance_se: Optional[float]
    crlb: float
    cfi_bound: float
    error_propagation_prediction: Optional[float]
    qfi: float
    cfi: float
    flat_likelihoods: int
    trials: int
    shots: int
    rng: dict

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def run_experiment(config: ExperimentConfig) -> TrialStats:
    """Repeat sample -> estimate ``trials`` times; deterministic given ``master_seed``."""
    spec = config.interferometer
    probe = config.probe
    if spec.j != probe.j:
        spec = spec.on(probe.j)
    model = PhaseModel.build(probe, spec)
    theta0 = float(config.true_theta)
    dist = model.probabilities(theta0)
    dist = dist / dist.sum()
    qfi = qfi_interferometer(probe, spec)
    fcl = model.fisher(theta0)

    mle = np.empty(config.trials)
    moments = np.empty(config.trials)
    flat = 0
    invertible = True
    prediction = None
    for t in range(config.trials):
        rec = sample(dist, config.shots, trial_rng(config.master_seed, t), probe.j)
        est = mle_estimate(rec, probe, spec, center=theta0, model=model)
        mle[t] = est.theta
        flat += int(est.flat)
        if invertible:
            try:
                mom = moment_estimate(rec, probe, spec, operating_point=theta0, model=model)
                moments[t] = mom.theta
                prediction = mom.predicted_variance
            except NonInvertibleError:
                invertible = False
    mean, var, se = _sample_stats(mle)
    if invertible:
        m_mean, m_var, m_se = _sample_stats(moments)
    else:
        m_mean = m_var = m_se = None
    inf = float("inf")
    return TrialStats(
        estimator_mean=mean,
        estimator_variance=var,
        estimator_variance_se=se,
        moment_mean=m_mean,
        moment_variance=m_var,
        moment_variance_se=m_se,
        crlb=1.0 / (config.shots * qfi) if qfi > 0 else inf,
        cfi_bound=1.0 / (config.shots * fcl) if fcl > 0 else inf,
        error_propagation_prediction=prediction,
        qfi=qfi,
        cfi=fcl,
        flat_likelihoods=flat,
        trials=config.trials,
        shots=config.shots,
        rng={"algorithm": RNG_ALGORITHM, "master_seed": int(config.master_seed),
             "substreams": "SeedSequence(master_seed, spawn_key=(trial,))"},
    )
