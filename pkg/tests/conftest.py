import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))  # for the oracles module

from sealvault import modes, tee, vault

TEST_PASSWORD = "correct horse battery"
TEST_ITERATIONS = 500  # keep PBKDF2 cheap in tests; the default is exercised separately


@pytest.fixture(scope="session")
def platform():
    return tee.create_platform(b"\x11" * 32)


@pytest.fixture(scope="session")
def other_platform():
    return tee.create_platform(b"\x22" * 32)


@pytest.fixture(scope="session")
def enclave():
    return tee.measure_enclave(b"test enclave code blob", b"test signer", 7, 3)


@pytest.fixture
def make_vault(tmp_path, platform):
    """Factory: create and unlock a vault of either mode under tmp_path."""

    handles = []

    def _make(mode: modes.ModeId, name: str = "vault", password: str = TEST_PASSWORD):
        root = tmp_path / name
        plat = platform if mode is modes.ModeId.SEALED else None
        vault.create_vault(root, password, mode, platform=plat, iterations=TEST_ITERATIONS)
        handle = vault.unlock_vault(root, password, platform=plat)
        handles.append(handle)
        return handle

    yield _make
    for handle in handles:
        if not handle.is_locked:
            handle.lock()
