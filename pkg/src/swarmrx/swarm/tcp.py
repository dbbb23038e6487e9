"""TCP transport: every node listens on base_port + its index.

Outbound frames are queued per peer and flushed over a cached connection.
Connections are (re)established by a background thread under exponential
backoff (200 ms doubling to a 5 s cap), so the node loop never blocks on a
dead peer and messages sent while a peer restarts are delivered as soon as
it returns instead of vanishing. Inbound connections are accepted on a
listener thread; each feeds decoded messages into a thread-safe queue that
the node loop drains. Sender identity comes from the wire header, not the
socket, so reconnects and restarts need no handshake.
"""

from __future__ import annotations

import queue
import socket
import struct
import threading
import time
from collections import deque

from .codec import SwarmDecodeError, SwarmMessage, decode_message, encode_message

BACKOFF_BASE = 0.2
BACKOFF_CAP = 5.0
CONNECT_TIMEOUT = 0.25
RECONNECT_SCAN_PERIOD = 0.05
SEND_QUEUE_CAP = 256  # frames per peer; oldest dropped beyond this


class TcpTransport:
    def __init__(self, node_id: int, addresses: list[tuple[str, int]], listen_host: str = ""):
        self.node_id = node_id
        self.addresses = addresses
        self.inbox: "queue.Queue[tuple[int, SwarmMessage]]" = queue.Queue()
        self._conns: dict[int, socket.socket] = {}
        self._outq: dict[int, deque[bytes]] = {
            i: deque(maxlen=SEND_QUEUE_CAP) for i in range(len(addresses))
        }
        self._next_try: dict[int, float] = {}
        self._backoff: dict[int, float] = {}
        self._stop = threading.Event()
        self._lock = threading.Lock()

        host, port = addresses[node_id]
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((listen_host or host, port))
        self._listener.listen(16)
        threading.Thread(target=self._accept_loop, daemon=True).start()
        threading.Thread(target=self._reconnect_loop, daemon=True).start()

    # -- inbound -----------------------------------------------------------

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            threading.Thread(target=self._read_loop, args=(conn,), daemon=True).start()

    def _read_loop(self, conn: socket.socket) -> None:
        buf = b""
        conn.settimeout(None)
        try:
            while not self._stop.is_set():
                while len(buf) < 4:
                    chunk = conn.recv(65536)
                    if not chunk:
                        return
                    buf += chunk
                (body_len,) = struct.unpack(">I", buf[:4])
                total = 4 + body_len
                while len(buf) < total:
                    chunk = conn.recv(65536)
                    if not chunk:
                        return
                    buf += chunk
                frame, buf = buf[:total], buf[total:]
                try:
                    msg = decode_message(frame)
                except SwarmDecodeError:
                    continue  # drop garbage, keep the stream framing
                self.inbox.put((msg.sender, msg))
        except OSError:
            return
        finally:
            conn.close()

    # -- outbound ----------------------------------------------------------

    def _drop_conn_locked(self, dest: int) -> None:
        sock = self._conns.pop(dest, None)
        if sock is not None:
            try:
                sock.close()
            except OSError:
                pass
        delay = self._backoff.get(dest, BACKOFF_BASE)
        self._backoff[dest] = min(delay * 2.0, BACKOFF_CAP)
        self._next_try[dest] = time.monotonic() + delay

    def _flush_locked(self, dest: int) -> None:
        q = self._outq[dest]
        sock = self._conns.get(dest)
        if sock is None:
            return
        while q:
            try:
                sock.sendall(q[0])
            except OSError:
                self._drop_conn_locked(dest)
                return
            q.popleft()

    def _reconnect_loop(self) -> None:
        """Background dialer: connect to peers with pending traffic when due."""
        while not self._stop.is_set():
            now = time.monotonic()
            with self._lock:
                wanted = [
                    dest
                    for dest, q in self._outq.items()
                    if dest != self.node_id
                    and q
                    and dest not in self._conns
                    and now >= self._next_try.get(dest, 0.0)
                ]
            for dest in wanted:
                try:
                    sock = socket.create_connection(self.addresses[dest], timeout=CONNECT_TIMEOUT)
                    sock.settimeout(2.0)
                except OSError:
                    with self._lock:
                        self._drop_conn_locked(dest)
                    continue
                with self._lock:
                    self._conns[dest] = sock
                    self._backoff[dest] = BACKOFF_BASE
                    self._next_try[dest] = 0.0
                    self._flush_locked(dest)
            time.sleep(RECONNECT_SCAN_PERIOD)

    def send(self, dest: int, msg: SwarmMessage) -> None:
        data = encode_message(msg)
        with self._lock:
            self._outq[dest].append(data)
            self._flush_locked(dest)

    def poll(self) -> list[tuple[int, SwarmMessage]]:
        with self._lock:
            for dest in self._outq:
                if dest != self.node_id:
                    self._flush_locked(dest)
        out = []
        while True:
            try:
                out.append(self.inbox.get_nowait())
            except queue.Empty:
                return out

    def retry_now(self) -> None:
        """Forget the backoff schedule; used during startup warm-up."""
        with self._lock:
            self._next_try.clear()

    def connected_peers(self) -> set[int]:
        with self._lock:
            return set(self._conns)

    def close(self) -> None:
        self._stop.set()
        try:
            self._listener.close()
        except OSError:
            pass
        with self._lock:
            for sock in self._conns.values():
                try:
                    sock.close()
                except OSError:
                    pass
            self._conns.clear()
