import pathlib

import pytest

from racebox.parser import parse_program

CORPUS = pathlib.Path(__file__).resolve().parent.parent / "corpus"


@pytest.fixture
def corpus():
    def load(name: str):
        return parse_program((CORPUS / f"{name}.conc").read_text())

    return load


@pytest.fixture
def corpus_source():
    def load(name: str) -> str:
        return (CORPUS / f"{name}.conc").read_text()

    return load
