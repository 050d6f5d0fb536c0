"""Localhost TCP transport speaking the framed protocol.

One thread per client owns a connection to the server socket. The server
side drives rounds exactly like the in-process simulation, so a socket run
produces the same parameters bit for bit.
"""

from __future__ import annotations

import logging
import socket
import threading
import time
from typing import Sequence

from ..privacy import DpConfig
from .client import ClientState, LocalTraining
from .compression import CompressionSpec
from .protocol import (
    DecodeError,
    GlobalBroadcast,
    ProtocolError,
    Shutdown,
    recv_message,
    send_message,
)
from .server import GlobalState, RoundStats, apply_sync

log = logging.getLogger(__name__)


def _client_loop(sock, client: ClientState, training, dp, comp, errors: list):
    try:
        with sock:
            while True:
                msg = recv_message(sock)
                if isinstance(msg, Shutdown):
                    return
                if not isinstance(msg, GlobalBroadcast):
                    raise ProtocolError(f"client {client.client_id} got unexpected {type(msg).__name__}")
                send_message(sock, client.handle(msg, training, dp, comp))
    except Exception as exc:  # surfaced to the server via ``errors``
        log.debug("client %d failed: %s", client.client_id, exc)
        errors.append(exc)


class SocketCluster:
    """Server socket plus one connected worker thread per client.

    Use as a context manager; :meth:`run_round` performs one synchronous
    round over the wire.
    """

    def __init__(
        self,
        clients: Sequence[ClientState],
        training: LocalTraining,
        dp: DpConfig,
        comp: CompressionSpec,
        host: str = "127.0.0.1",
        timeout: float = 60.0,
    ):
        self.clients = list(clients)
        self.training = training
        self.dp = dp
        self.comp = comp
        self.host = host
        self.timeout = timeout
        self.errors: list[Exception] = []
        self._threads: list[threading.Thread] = []
        self._conns: list[socket.socket] = []
        self._listener: socket.socket | None = None

    def __enter__(self):
        self._listener = socket.create_server((self.host, 0))
        self._listener.settimeout(self.timeout)
        port = self._listener.getsockname()[1]
        for client in self.clients:
            sock = socket.create_connection((self.host, port), timeout=self.timeout)
            t = threading.Thread(
                target=_client_loop,
                args=(sock, client, self.training, self.dp, self.comp, self.errors),
                daemon=True,
            )
            conn, _ = self._listener.accept()
            conn.settimeout(self.timeout)
            self._conns.append(conn)
            self._threads.append(t)
            t.start()
        return self

    def run_round(self, state: GlobalState) -> tuple[GlobalState, RoundStats]:
        if len(self._conns) != state.num_nodes:
            raise ProtocolError(f"{len(self._conns)} connections, server expects {state.num_nodes}")
        t0 = time.perf_counter()
        bcast = state.broadcast()
        for conn in self._conns:
            send_message(conn, bcast)
        messages = []
        for conn in self._conns:
            try:
                messages.append(recv_message(conn))
            except (ConnectionError, DecodeError, OSError) as exc:
                detail = f"; client error: {self.errors[0]!r}" if self.errors else ""
                raise ProtocolError(f"lost a client during round {state.round}: {exc!r}{detail}") from exc
        return apply_sync(state, messages, time.perf_counter() - t0)

    def __exit__(self, *exc):
        for conn in self._conns:
            try:
                send_message(conn, Shutdown())
            except OSError:
                pass
        for t in self._threads:
            t.join(timeout=self.timeout)
        for conn in self._conns:
            conn.close()
        if self._listener is not None:
            self._listener.close()
        return False
