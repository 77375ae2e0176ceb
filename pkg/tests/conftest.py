"""Shared fixtures: golden-file comparison and default taxonomy/mapping."""

from __future__ import annotations

import os
from pathlib import Path

import pytest

GOLDEN_DIR = Path(__file__).parent / "goldens"


class GoldenChecker:
    """Byte-exact comparison against frozen files in tests/goldens.

    Set UPDATE_GOLDENS=1 to (re)write the files instead; review the diff before
    committing. Missing goldens fail rather than silently self-create.
    """

    def check(self, name: str, text: str) -> None:
        path = GOLDEN_DIR / name
        if os.environ.get("UPDATE_GOLDENS") == "1":
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding="utf-8")
            return
        if not path.exists():
            raise AssertionError(
                f"golden file {name} missing; run with UPDATE_GOLDENS=1 and review"
            )
        expected = path.read_text(encoding="utf-8")
        assert text == expected, f"output differs from golden {name}"


@pytest.fixture(scope="session")
def goldens() -> GoldenChecker:
    return GoldenChecker()


@pytest.fixture(scope="session")
def default_taxonomy():
    from geosector import taxonomy

    return taxonomy.default_taxonomy()


@pytest.fixture(scope="session")
def default_mapping():
    from geosector import taxonomy

    return taxonomy.default_mapping()
