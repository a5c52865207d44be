"""Small grid cases shipped with the package."""

from __future__ import annotations

from importlib import resources

from .netmodel import GridCase, parse_case

NAMES = ("two_bus", "triangle", "parallel", "idaho", "path4", "ring6")


def fixture_text(name: str) -> str:
    return resources.files(__package__).joinpath("data", f"{name}.json").read_text(encoding="utf-8")


def load_fixture(name: str) -> GridCase:
    if name not in NAMES:
        raise KeyError(f"no fixture named {name!r}")
    return parse_case(fixture_text(name))
