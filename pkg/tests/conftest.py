"""Shared fixtures and the acceptance-criteria reporter."""

import os

# Pin BLAS/OpenMP thread pools before numpy loads so latency comparisons
# measure single-core arithmetic rather than thread-pool scheduling.
for _var in (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
    "NUMEXPR_NUM_THREADS",
):
    os.environ.setdefault(_var, "1")

from contextlib import contextmanager

import numpy as np
import pytest

from listcont.corpus import Vocabulary

_CRITERIA: dict[str, tuple[str, str, dict]] = {}


@pytest.fixture
def criterion():
    """Context manager that records one acceptance criterion's outcome.

    Yields a dict; a test may set ``info["note"]`` to surface measured values
    in the summary table.
    """

    @contextmanager
    def record(ident: str, title: str):
        info: dict = {}
        _CRITERIA[ident] = (title, "FAIL", info)
        yield info
        _CRITERIA[ident] = (title, "PASS", info)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for ident in sorted(_CRITERIA):
        title, status, info = _CRITERIA[ident]
        line = f"criterion {ident}: {status} - {title}"
        if info.get("note"):
            line += f" [{info['note']}]"
        terminalreporter.write_line(line)


@pytest.fixture
def tiny_vocab() -> Vocabulary:
    """12-item vocabulary with three planted categories of four items each."""
    tokens = [f"t{i}" for i in range(12)]
    vocab = Vocabulary(tokens=tokens, frequencies=[20 - i for i in range(12)])
    vocab.assign_categories(np.repeat(np.arange(3), 4), 3)
    return vocab
