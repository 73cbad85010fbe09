"""Reference systems shipped with the package."""

from importlib import resources

from ..io import load_state, load_system

NAMES = ("incompletable", "spectrally_uncontrollable", "scalar", "diag12")


def path(name):
    return str(resources.files(__name__).joinpath(f"{name}.json"))


def system(name):
    if name not in NAMES:
        raise KeyError(name)
    return load_system(path(name))


def unit_state(n, grid_points=513):
    return load_state(path(f"unit_state_{n}"), n, grid_points)
