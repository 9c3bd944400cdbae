"""Maximal dynamical susceptibility over global rotations of a state.

The susceptibility of a rotated state ``R rho R^dagger`` equals the QFI of
``rho`` for the generator ``n.J`` with ``n`` the back-rotated z axis, so the
search runs over axes on the upper half-sphere (``n`` and ``-n`` give the
same value, and a final z rotation leaves the value unchanged).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .metrology import InterferometerSpec, _qfi_diagonal, _spectrum
from .states import as_density
from .su2 import EulerAngles, Rotation, rotation_from_euler, spin_operators

__all__ = [
    "InnateResult",
    "innate_entanglement",
    "mz_design_from_innate",
    "rotation_to_axis",
    "axis_from_angles",
    "fibonacci_hemisphere",
    "principal_axes",
]

_GOLDEN = np.pi * (3.0 - np.sqrt(5.0))


def axis_from_angles(theta: float, phi: float) -> np.ndarray:
    return np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])


def _canonical_angles(n: np.ndarray) -> tuple[float, float]:
    n = n / np.linalg.norm(n)
    if n[2] < 0:
        n = -n
    theta = float(np.arccos(np.clip(n[2], -1.0, 1.0)))
    if np.hypot(n[0], n[1]) < 1e-15:
        return 0.0, 0.0
    phi = float(np.arctan2(n[1], n[0]) % (2 * np.pi))
    if abs(n[2]) < 1e-12 and phi >= np.pi:
        # on the equator n and -n are both in the half-sphere
        phi -= np.pi
    return theta, phi


def fibonacci_hemisphere(k: int) -> np.ndarray:
    """``k`` (theta, phi) pairs spread over the upper half-sphere, pole first."""
    idx = np.arange(k - 1)
    z = 1.0 - (idx + 0.5) / (k - 1)
    theta = np.arccos(z)
    phi = (idx * _GOLDEN) % (2 * np.pi)
    return np.vstack([[0.0, 0.0], np.column_stack([theta, phi])])


def rotation_to_axis(j, theta: float, phi: float) -> Rotation:
    """``R = exp(i theta Jy) exp(i phi Jz)`` so that ``R^dagger Jz R = n(theta, phi).J``."""
    return rotation_from_euler(j, EulerAngles(0.0, -theta, -phi))


def principal_axes(state) -> dict:
    """Eigenvectors of the symmetrized covariance tensor and of the 3x3 QFI matrix."""
    rho = as_density(state)
    ops = spin_operators(rho.j).vector()
    r = rho.rho
    mean = np.array([np.real(np.trace(r @ o)) for o in ops])
    cov = np.empty((3, 3))
    for a in range(3):
        for b in range(3):
            sym = (ops[a] @ ops[b] + ops[b] @ ops[a]) / 2
            cov[a, b] = np.real(np.trace(r @ sym)) - mean[a] * mean[b]
    p, v = _spectrum(r)
    gt = [v.conj().T @ o @ v for o in ops]
    tot = p[:, None] + p[None, :]
    w = np.zeros_like(tot)
    mask = tot > 1e-12 * p.sum()
    w[mask] = (p[:, None] - p[None, :])[mask] ** 2 / tot[mask]
    qmat = np.array([[2.0 * np.sum(w * np.real(gt[a] * gt[b].T)) for b in range(3)] for a in range(3)])
    cw, cv = np.linalg.eigh(cov)
    qw, qv = np.linalg.eigh(qmat)
    return {"covariance": (cw, cv), "qfi_matrix": (qw, qv)}


@dataclass(frozen=True)
class InnateResult:
    value: float
    optimal_rotation: Rotation
    optimal_axis: np.ndarray
    angles: tuple  # canonical (theta, phi) of the optimal axis
    grid_trace: list = field(repr=False)
    degenerate: bool = False
    n_candidates: int = 1
    diagnostics: dict = field(default_factory=dict, repr=False)


def _objective(state):
    rho = as_density(state)
    p, v = _spectrum(rho.rho)
    gt = [v.conj().T @ o @ v for o in spin_operators(rho.j).vector()]

    def f(theta: float, phi: float) -> float:
        n = axis_from_angles(theta, phi)
        return _qfi_diagonal(p, n[0] * gt[0] + n[1] * gt[1] + n[2] * gt[2])

    return rho, f


def _axis_alignment(axis: np.ndarray, vecs: np.ndarray) -> float:
    """Angle between ``axis`` and the closest of the columns of ``vecs`` (up to sign)."""
    cos = np.abs(vecs.T @ axis)
    return float(np.arccos(np.clip(cos.max(), 0.0, 1.0)))


def innate_entanglement(state, grid_points: int = 400, refine_tol: float = 1e-8, n_starts: int = 3) -> InnateResult:
    """Grid scan plus Nelder-Mead refinement of the susceptibility over axes.

    Deterministic for fixed inputs.  When several axes reach the maximum to
    within ``1e-9`` relative, the lexicographically smallest canonical
    (theta, phi) pair is returned and ``degenerate`` is set.
    """
    if grid_points < 8:
        raise ValueError("grid_points must be at least 8")
    if not refine_tol > 0:
        raise ValueError("refine_tol must be positive")
    rho, f = _objective(state)
    grid = fibonacci_hemisphere(int(grid_points))
    values = np.array([f(t, p) for t, p in grid])
    trace = [((float(t), float(p)), float(val)) for (t, p), val in zip(grid, values)]

    order = np.argsort(-values, kind="stable")[:max(1, n_starts)]
    candidates = [(float(values[k]), tuple(grid[k])) for k in order]
    for k in order:
        x0 = grid[k]
        scale = max(1.0, float(values[k]))
        res = minimize(
            lambda x: -f(x[0], x[1]),
            x0,
            method="Nelder-Mead",
            options={"xatol": refine_tol, "fatol": 1e-15 * scale, "maxiter": 4000,
                     "initial_simplex": np.array([x0, x0 + [0.05, 0.0], x0 + [0.0, 0.05]])},
        )
        candidates.append((float(-res.fun), (float(res.x[0]), float(res.x[1]))))

    best = max(v for v, _ in candidates)
    tol = 1e-9 * max(1.0, abs(best))
    near = []  # (theta, phi, number of free angles)
    for v, (t, p) in candidates:
        if v < best - tol:
            continue
        ct, cp = _canonical_angles(axis_from_angles(t, p))
        near.append((ct, cp, 2))
        # snap to the pole, the equator and zero azimuth, keeping snaps only if still optimal
        for st, sp, free in ((0.0, 0.0, 0), (np.pi / 2, 0.0, 0), (np.pi / 2, cp, 1), (ct, 0.0, 1)):
            if f(st, sp) >= best - tol:
                near.append(_canonical_angles(axis_from_angles(st, sp)) + (free,))
    # angles closer than the refinement resolution tie; exact snapped points win ties
    digits = int(np.clip(round(-np.log10(10 * refine_tol)), 1, 12))
    near.sort(key=lambda c: (round(c[0], digits), round(c[1], digits), c[2], c[0], c[1]))
    theta, phi, _ = near[0]
    value = f(theta, phi)
    distinct = {tuple(np.round(_axis_key(t_i, p_i), 6)) for t_i, p_i, _ in near}
    axis = axis_from_angles(theta, phi)
    axes = principal_axes(rho)
    diagnostics = {
        "covariance_axis_offset": _axis_alignment(axis, axes["covariance"][1]),
        "qfi_matrix_axis_offset": _axis_alignment(axis, axes["qfi_matrix"][1]),
        "qfi_matrix_max_eigenvalue": float(axes["qfi_matrix"][0][-1]),
        "grid_best": float(values.max()),
    }
    return InnateResult(
        value=float(value),
        optimal_rotation=rotation_to_axis(rho.j, theta, phi),
        optimal_axis=axis,
        angles=(float(theta), float(phi)),
        grid_trace=trace,
        degenerate=len(distinct) > 1,
        n_candidates=len(distinct),
        diagnostics=diagnostics,
    )


def _axis_key(theta: float, phi: float) -> np.ndarray:
    n = axis_from_angles(theta, phi)
    return n if n[2] > 1e-12 or (abs(n[2]) <= 1e-12 and (n[1] > 1e-12 or (abs(n[1]) <= 1e-12 and n[0] > 0))) else -n


def mz_design_from_innate(result: InnateResult) -> InterferometerSpec:
    """Interferometer with ``pre = R_max``, a z phase, and ``post = R_max^dagger``."""
    r = result.optimal_rotation
    return InterferometerSpec(r, Rotation.identity(r.j), r.inverse(), label="innate-optimal")
