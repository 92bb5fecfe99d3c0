"""Collects one status line per acceptance criterion for the terminal summary."""
from contextlib import contextmanager

import pytest

RESULTS: dict[int, str] = {}


@contextmanager
def criterion(number: int, title: str):
    try:
        yield
    except pytest.skip.Exception as exc:
        RESULTS[number] = f"SKIP  criterion {number:2d}: {title} ({exc.msg})"
        raise
    except BaseException as exc:
        RESULTS[number] = f"FAIL  criterion {number:2d}: {title} ({type(exc).__name__}: {exc})"
        raise
    RESULTS[number] = f"PASS  criterion {number:2d}: {title}"
