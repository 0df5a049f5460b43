import pytest

from hypident.numkernel import EvalContext

from helpers import bundled_index


@pytest.fixture
def ctx40():
    return EvalContext(40)


@pytest.fixture
def ctx60():
    return EvalContext(60)


@pytest.fixture
def index():
    return bundled_index()


@pytest.fixture
def run_cli(capsys):
    from hypident.cli import run_cli as _run

    def call(*argv):
        code = _run(list(argv))
        out = capsys.readouterr()
        return code, out.out, out.err

    return call
