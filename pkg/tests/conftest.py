from pathlib import Path

import pytest

from m3engine import DATA_DIR, DEFAULT_MANIFEST, DEFAULT_TAXONOMY, DEFAULT_TEMPLATES
from m3engine.generator import load_template_file
from m3engine.knowledge import load_catalog
from m3engine.taxonomy import load_taxonomy_file

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="session")
def tax():
    return load_taxonomy_file(DEFAULT_TAXONOMY)


@pytest.fixture(scope="session")
def catalog():
    return load_catalog(DEFAULT_MANIFEST)


@pytest.fixture(scope="session")
def templates(catalog, tax):
    return load_template_file(DEFAULT_TEMPLATES, catalog, tax)


@pytest.fixture
def data_dir():
    return DATA_DIR


def pytest_terminal_summary(terminalreporter):
    from acceptance import report_lines
    lines = report_lines()
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
