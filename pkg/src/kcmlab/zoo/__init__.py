"""Bundled model zoo: canonical update families as JSON rule files."""

from importlib import resources

from ..family import UpdateFamily


def names():
    """Family names shipped with the package."""
    out = []
    for entry in resources.files(__package__).iterdir():
        if entry.name.endswith(".family"):
            out.append(entry.name[: -len(".family")])
    return sorted(out)


def load(name: str) -> UpdateFamily:
    path = resources.files(__package__) / f"{name}.family"
    if not path.is_file():
        raise KeyError(f"no zoo family named {name!r}; have {names()}")
    return UpdateFamily.from_json(path.read_text())
