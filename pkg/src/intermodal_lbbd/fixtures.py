"""Committed instance files, regenerated by ``write_fixtures``."""
from __future__ import annotations

from importlib import resources
from pathlib import Path

from .generator import (ExtendedConfig, GeneratorConfig, generate, generate_extended,
                        resource_starved_instance)
from .instance import Instance

FIXTURES = {
    "micro_N4_seed0": lambda: generate(GeneratorConfig(2, 2, 4, 0)),
    "micro_N5_seed1": lambda: generate(GeneratorConfig(2, 2, 5, 1)),
    "suite01_N60_seed0": lambda: generate(GeneratorConfig(2, 2, 60, 0)),
    "ext_N4_seed0": lambda: generate_extended(ExtendedConfig(4, 0)),
    "resource_starved": resource_starved_instance,
}


def fixture_names() -> list[str]:
    return sorted(FIXTURES)


def load_fixture(name: str) -> Instance:
    path = resources.files(__package__).joinpath("fixtures", f"{name}.json")
    return Instance.from_json(path.read_text())


def write_fixtures(directory: str | Path | None = None) -> list[Path]:
    out = Path(directory) if directory else Path(__file__).parent / "fixtures"
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in fixture_names():
        p = out / f"{name}.json"
        p.write_text(FIXTURES[name]().to_json())
        paths.append(p)
    return paths
