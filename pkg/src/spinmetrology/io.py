"""State-spec parsing, report serialization and tabular export."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from datetime import datetime, timezone
from typing import Any

import numpy as np

from . import __version__
from .metrology import InterferometerSpec
from .states import (
    DensityMatrix,
    DickeMixture,
    PureState,
    SectoredState,
    cat_state,
    coherent_spin_state,
    dicke,
    kitten_state,
    mix,
    two_condensate_mixture,
    twin_fock_probe,
)
from .su2 import Rotation, SpinQuantum, rotation_about_axis
from .tensors import MassDistribution

__all__ = [
    "FORMAT_VERSION",
    "STATE_KINDS",
    "SpecError",
    "parse_state_spec",
    "parse_rotation",
    "parse_interferometer",
    "apply_rotations",
    "to_jsonable",
    "dumps_report",
    "make_report",
    "mass_csv",
    "write_atomic",
]

FORMAT_VERSION = 1

STATE_KINDS = ("dicke", "css", "cat", "kitten", "twin_fock_probe", "mixture", "two_condensate", "dense")

_ALLOWED = {
    "dicke": {"m"},
    "css": {"theta", "phi"},
    "cat": {"phase"},
    "kitten": {"m"},
    "twin_fock_probe": set(),
    "mixture": {"components"},
    "two_condensate": {"n_min", "n_max"},
    "dense": {"matrix"},
}


class SpecError(ValueError):
    """Schema violation in an input document; ``path`` locates the field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _number(doc: dict, key: str, path: str, default=None) -> float:
    if key not in doc:
        if default is None:
            raise SpecError(f"{path}.{key}", "required field is missing")
        return float(default)
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SpecError(f"{path}.{key}", f"must be a number in radians or plain units, got {type(v).__name__}")
    if not math.isfinite(v):
        raise SpecError(f"{path}.{key}", "must be finite")
    return float(v)


def _integer(doc: dict, key: str, path: str, minimum: int = 0) -> int:
    v = doc.get(key)
    if key not in doc:
        raise SpecError(f"{path}.{key}", "required field is missing")
    if isinstance(v, bool) or not (isinstance(v, int) or (isinstance(v, float) and v.is_integer())):
        raise SpecError(f"{path}.{key}", "must be an integer")
    if int(v) < minimum:
        raise SpecError(f"{path}.{key}", f"must be >= {minimum}")
    return int(v)


def _particles(doc: dict, path: str, inherited=None) -> int:
    keys = [k for k in ("n", "n_particles") if k in doc]
    if len(keys) == 2:
        raise SpecError(path, "give either 'n' or 'n_particles', not both")
    if not keys:
        if inherited is None:
            raise SpecError(f"{path}.n", "required field is missing")
        return inherited
    n = _integer(doc, keys[0], path)
    if inherited is not None and n != inherited:
        raise SpecError(f"{path}.{keys[0]}", f"must match the enclosing particle number {inherited}")
    return n


def _complex_matrix(value, dim: int, path: str) -> np.ndarray:
    if not isinstance(value, list) or len(value) != dim:
        raise SpecError(path, f"must be a list of {dim} rows")
    out = np.empty((dim, dim), dtype=complex)
    for r, row in enumerate(value):
        if not isinstance(row, list) or len(row) != dim:
            raise SpecError(f"{path}[{r}]", f"must be a list of {dim} entries")
        for c, entry in enumerate(row):
            p = f"{path}[{r}][{c}]"
            if (not isinstance(entry, list) or len(entry) != 2
                    or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in entry)):
                raise SpecError(p, "must be a [re, im] pair of numbers")
            if not all(math.isfinite(x) for x in entry):
                raise SpecError(p, "must be finite")
            out[r, c] = complex(float(entry[0]), float(entry[1]))
    return out


def _build(doc: Any, path: str, inherited_n=None):
    if not isinstance(doc, dict):
        raise SpecError(path, "must be an object")
    kind = doc.get("kind")
    if kind not in STATE_KINDS:
        raise SpecError(f"{path}.kind", f"unknown kind {kind!r}; allowed kinds: {', '.join(STATE_KINDS)}")
    extra = set(doc) - _ALLOWED[kind] - {"kind", "n", "n_particles"}
    if extra:
        raise SpecError(path, f"unexpected field(s) for kind '{kind}': {', '.join(sorted(extra))}")
    try:
        if kind == "two_condensate":
            n_min = _integer(doc, "n_min", path)
            n_max = _integer(doc, "n_max", path)
            if n_max < n_min:
                raise SpecError(f"{path}.n_max", "must be >= n_min")
            if inherited_n is not None:
                raise SpecError(path, "two_condensate states cannot be mixture components")
            return two_condensate_mixture(n_min, n_max)
        n = _particles(doc, path, inherited_n)
        if kind == "dicke":
            return dicke(n, _number(doc, "m", path))
        if kind == "css":
            return coherent_spin_state(n, _number(doc, "theta", path), _number(doc, "phi", path, default=0.0))
        if kind == "cat":
            return cat_state(n, _number(doc, "phase", path, default=0.0))
        if kind == "kitten":
            return kitten_state(n, _number(doc, "m", path))
        if kind == "twin_fock_probe":
            return twin_fock_probe(n)
        if kind == "dense":
            if "matrix" not in doc:
                raise SpecError(f"{path}.matrix", "required field is missing")
            m = _complex_matrix(doc["matrix"], n + 1, f"{path}.matrix")
            try:
                return DensityMatrix(SpinQuantum(n), m)
            except ValueError as exc:
                raise SpecError(f"{path}.matrix", str(exc)) from None
        comps = doc.get("components")
        if not isinstance(comps, list) or not comps:
            raise SpecError(f"{path}.components", "must be a non-empty list")
        parts = []
        for k, comp in enumerate(comps):
            p = f"{path}.components[{k}]"
            if not isinstance(comp, dict) or set(comp) != {"weight", "state"}:
                raise SpecError(p, "must be an object with exactly 'weight' and 'state'")
            w = _number(comp, "weight", p)
            if w < 0:
                raise SpecError(f"{p}.weight", "must be non-negative")
            parts.append((w, _build(comp["state"], f"{p}.state", n)))
        total = sum(w for w, _ in parts)
        if abs(total - 1.0) > 1e-10:
            raise SpecError(f"{path}.components", f"weights sum to {total!r}, expected 1")
        return mix(parts)
    except SpecError:
        raise
    except (ValueError, TypeError) as exc:
        raise SpecError(path, str(exc)) from None


def parse_state_spec(text: str):
    """Parse a JSON state description into a PureState, DensityMatrix or SectoredState."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"line {exc.lineno} column {exc.colno}", f"invalid JSON: {exc.msg}") from None
    return _build(doc, "$")


_AXES = {"x": (1.0, 0.0, 0.0), "y": (0.0, 1.0, 0.0), "z": (0.0, 0.0, 1.0)}


def parse_rotation(text: str, j) -> Rotation:
    """``AXIS:ANGLE`` with AXIS in x, y, z or ``a,b,c``; ANGLE in radians."""
    if ":" not in text:
        raise SpecError("--rotate", f"expected AXIS:ANGLE, got {text!r}")
    axis_txt, angle_txt = text.rsplit(":", 1)
    angle_txt = angle_txt.strip()
    if angle_txt.lower().endswith(("deg", "°", "d")):
        raise SpecError("--rotate", "angles are accepted in radians only")
    try:
        angle = float(angle_txt)
    except ValueError:
        raise SpecError("--rotate", f"angle {angle_txt!r} is not a number (radians)") from None
    if not math.isfinite(angle):
        raise SpecError("--rotate", "angle must be finite")
    axis_txt = axis_txt.strip().lower()
    if axis_txt in _AXES:
        axis = _AXES[axis_txt]
    else:
        try:
            axis = tuple(float(x) for x in axis_txt.split(","))
        except ValueError:
            raise SpecError("--rotate", f"axis {axis_txt!r} is not x, y, z or a,b,c") from None
        if len(axis) != 3:
            raise SpecError("--rotate", "a custom axis needs three components")
        norm = math.sqrt(sum(a * a for a in axis))
        if abs(norm - 1.0) > 1e-9:
            raise SpecError("--rotate", f"axis must have unit length, got {norm}")
    return rotation_about_axis(j, axis, angle)


def _rotate_one(state, rotations: list[str]):
    for text in rotations:
        u = parse_rotation(text, state.j).unitary
        if isinstance(state, PureState):
            state = state.transformed(u)
        else:
            state = (state.density() if isinstance(state, DickeMixture) else state).transformed(u)
    return state


def apply_rotations(state, rotations: list[str]):
    """Apply ``exp(-i angle n.J)`` for each rotation string, in order."""
    if not rotations:
        return state
    if isinstance(state, SectoredState):
        return SectoredState(tuple((w, _rotate_one(s, rotations)) for w, s in state.sectors))
    return _rotate_one(state, rotations)


def _rotation_chain(items, j, path: str) -> Rotation:
    if not isinstance(items, list):
        raise SpecError(path, "must be a list of AXIS:ANGLE strings")
    r = Rotation.identity(j)
    for k, item in enumerate(items):
        if not isinstance(item, str):
            raise SpecError(f"{path}[{k}]", "must be an AXIS:ANGLE string")
        try:
            r = parse_rotation(item, j) @ r
        except SpecError as exc:
            raise SpecError(f"{path}[{k}]", str(exc).split(": ", 1)[-1]) from None
    return r


def parse_interferometer(doc, j, path: str = "$.interferometer") -> InterferometerSpec:
    """``"z"``, ``"mz"`` or ``{"pre": [...], "axis": [...], "post": [...]}`` rotation lists."""
    if doc in ("z", None):
        return InterferometerSpec.trivial(j)
    if doc == "mz":
        return InterferometerSpec.mach_zehnder(j)
    if not isinstance(doc, dict):
        raise SpecError(path, "must be 'z', 'mz' or an object with pre/axis/post rotation lists")
    extra = set(doc) - {"pre", "axis", "post"}
    if extra:
        raise SpecError(path, f"unexpected field(s): {', '.join(sorted(extra))}")
    parts = {k: _rotation_chain(doc.get(k, []), j, f"{path}.{k}") for k in ("pre", "axis", "post")}
    return InterferometerSpec(parts["pre"], parts["axis"], parts["post"], label="custom")


def to_jsonable(obj):
    """Convert numpy and complex values; non-finite floats become None."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [to_jsonable(float(obj.real)), to_jsonable(float(obj.imag))]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def dumps_report(report: dict) -> str:
    """Deterministic JSON (sorted keys, shortest round-trip float repr)."""
    return json.dumps(to_jsonable(report), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = datetime.fromtimestamp(int(epoch), tz=timezone.utc) if epoch else datetime.now(timezone.utc)
    return when.strftime("%Y-%m-%dT%H:%M:%SZ")


def make_report(command: str, input_echo: dict, results: dict, seed=None) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "tool": {"name": "spinmetrology", "version": __version__},
        "timestamp": _timestamp(),
        "command": command,
        "input": input_echo,
        "seed": seed,
        "results": results,
    }


def mass_csv(masses: MassDistribution) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sphere_j", "m", "mass"])
    for j, m, val in masses.rows():
        w.writerow([j, m, repr(float(val))])
    return buf.getvalue()


def write_atomic(path: str, text: str) -> None:
    """Write via a temporary file in the target directory and rename over ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
