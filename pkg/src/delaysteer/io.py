"""Reading and writing systems, states and reports as JSON."""

import json

import numpy as np

from .errors import InputError
from .model import DelaySystem, M2State, MatrixKernel


def _kernel_from_dict(d, n):
    if d is None:
        return None
    if not isinstance(d, dict):
        raise InputError("kernel must be an object")
    if "pieces" in d:
        pieces = []
        for piece in d["pieces"]:
            try:
                left, right = piece["interval"]
                coeffs = np.asarray(piece["coeffs"], dtype=float)
            except (KeyError, TypeError, ValueError) as exc:
                raise InputError(f"bad kernel piece: {exc}") from exc
            if coeffs.ndim == 1 and n == 1:
                coeffs = coeffs[:, None, None]
            elif coeffs.ndim == 2:
                coeffs = coeffs[None]
            pieces.append((left, right, coeffs))
        return MatrixKernel(d.get("support_left", min(p[0] for p in pieces)), pieces)
    if "theta" in d and "values" in d:
        return MatrixKernel.from_samples(d["theta"], d["values"], d.get("support_left"))
    raise InputError("kernel needs 'pieces' or 'theta'/'values'")


def system_from_dict(d):
    if not isinstance(d, dict):
        raise InputError("system description must be an object")
    if "b" not in d or "A1" not in d:
        raise InputError("system description needs at least A1 and b")
    b = np.asarray(d["b"], dtype=float).ravel()
    n = int(d.get("n", b.size))
    if n != b.size:
        raise InputError(f"n = {n} but b has {b.size} entries")
    try:
        return DelaySystem(
            A1=d["A1"], b=b, A0=d.get("A0"), A_minus1=d.get("A_minus1"),
            A2=_kernel_from_dict(d.get("A2"), n), A3=_kernel_from_dict(d.get("A3"), n),
        )
    except (TypeError, ValueError) as exc:
        raise InputError(str(exc)) from exc


def state_from_dict(d, n=None, grid_points=None):
    """State from {"y": [...], "z0": [[...], ...]}; a constant history may be
    given as {"y": [...], "z0_constant": [...]} (sampled on ``grid_points``)."""
    if not isinstance(d, dict) or "y" not in d:
        raise InputError("state needs a 'y' field")
    y = np.atleast_1d(np.asarray(d["y"], dtype=float))
    if n is not None and y.size != n:
        raise InputError(f"state has dimension {y.size}, system has {n}")
    if "z0" in d:
        z0 = np.asarray(d["z0"], dtype=float)
        if z0.ndim == 1:
            z0 = z0[:, None]
        return M2State(y, z0)
    if "z0_constant" in d:
        return M2State.constant(y, d["z0_constant"], grid_points or int(d.get("grid_points", 513)))
    raise InputError("state needs 'z0' samples or 'z0_constant'")


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc


def load_system(path):
    return system_from_dict(_read_json(path))


def load_state(path, n=None, grid_points=None):
    return state_from_dict(_read_json(path), n, grid_points)


def load_json(path):
    return _read_json(path)


def dumps(obj):
    """Deterministic JSON text."""
    return json.dumps(obj, sort_keys=True, indent=2, default=_default) + "\n"


def _default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return {"re": o.real, "im": o.imag}
    raise TypeError(f"cannot serialise {type(o).__name__}")
