"""Suite-wide guards.

The whole suite must run offline: any attempt to open a network connection
fails the offending test immediately.
"""

import socket

import pytest

_REAL_CONNECT = socket.socket.connect


class NetworkAccessAttempted(RuntimeError):
    pass


def _blocked_connect(self, address):
    raise NetworkAccessAttempted(f"test suite attempted network access to {address!r}")


@pytest.fixture(autouse=True, scope="session")
def block_network():
    socket.socket.connect = _blocked_connect
    try:
        yield
    finally:
        socket.socket.connect = _REAL_CONNECT
