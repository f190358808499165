"""Semantic annotation, reasoning and cross-domain querying for IoT readings."""

from pathlib import Path

__version__ = "0.1.0"

DATA_DIR = Path(__file__).parent / "data"
DEFAULT_TAXONOMY = DATA_DIR / "m3-lite-mini.ttl"
DEFAULT_MANIFEST = DATA_DIR / "catalog.toml"
DEFAULT_TEMPLATES = DATA_DIR / "templates.ttl"
