"""Shipped example configurations, one per acceptance criterion."""
from importlib import resources


def names():
    """Config names without the ``.json`` suffix."""
    return sorted(p.name[:-5] for p in resources.files(__name__).iterdir() if p.name.endswith(".json"))


def path(name):
    return resources.files(__name__) / (name if name.endswith(".json") else f"{name}.json")
