"""Untrusted store-and-forward relay server and its wire framing.

The server only routes opaque blobs to named mailboxes; it deliberately
imports nothing from the cryptographic modules, so it could not inspect
traffic even by accident. Anyone can PUT into or GET from any mailbox:
privacy rests entirely on the protocol transcript leaking nothing.

Wire format: each frame is a 4-byte big-endian total length, a 1-byte
opcode, then fields each carrying its own 4-byte big-endian length prefix.

    PUT  recipient, blob          -> OK
    GET  recipient                -> LIST id1, blob1, id2, blob2, ...
    ACK  recipient, id1, id2, ... -> OK   (acknowledged blobs are removed)

Malformed frames get an ERR reply and the connection survives.
"""

from __future__ import annotations

import logging
import socket
import socketserver
import threading
from collections import OrderedDict
from pathlib import Path

logger = logging.getLogger(__name__)

OP_PUT = 0
OP_GET = 1
OP_ACK = 2
OP_OK = 3
OP_ERR = 4
OP_LIST = 5

MAX_FRAME = 16 * 1024 * 1024


class FrameError(Exception):
    pass


def encode_frame(opcode: int, fields: list[bytes]) -> bytes:
    body = bytes([opcode]) + b"".join(
        len(f).to_bytes(4, "big") + bytes(f) for f in fields
    )
    return len(body).to_bytes(4, "big") + body


def decode_frame(body: bytes) -> tuple[int, list[bytes]]:
    if not body:
        raise FrameError("empty frame")
    opcode = body[0]
    fields = []
    offset = 1
    while offset < len(body):
        if offset + 4 > len(body):
            raise FrameError("truncated field length")
        n = int.from_bytes(body[offset:offset + 4], "big")
        offset += 4
        if offset + n > len(body):
            raise FrameError("truncated field")
        fields.append(body[offset:offset + n])
        offset += n
    return opcode, fields


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = sock.recv(remaining)
        if not chunk:
            raise ConnectionError("peer closed connection")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> tuple[int, list[bytes]]:
    header = _recv_exact(sock, 4)
    length = int.from_bytes(header, "big")
    if length == 0 or length > MAX_FRAME:
        raise FrameError(f"bad frame length {length}")
    return decode_frame(_recv_exact(sock, length))


class MailboxStore:
    """Per-recipient queues of opaque blobs, optionally persisted.

    Persistence is an append-only log of PUT/ACK frames replayed at
    startup; the store itself never looks inside a blob.
    """

    def __init__(self, log_path=None) -> None:
        self._lock = threading.Lock()
        self._boxes: dict[bytes, OrderedDict] = {}
        self._next_id = 0
        self._log_path = Path(log_path) if log_path else None
        self._log = None
        if self._log_path is not None:
            self._replay()
            self._log = open(self._log_path, "ab")

    def _replay(self) -> None:
        if not self._log_path.exists():
            return
        data = self._log_path.read_bytes()
        offset = 0
        while offset + 4 <= len(data):
            length = int.from_bytes(data[offset:offset + 4], "big")
            if offset + 4 + length > len(data):
                logger.warning("truncated relay log tail ignored")
                break
            opcode, fields = decode_frame(data[offset + 4:offset + 4 + length])
            if opcode == OP_PUT:
                self._put_locked(fields[0], fields[1])
            elif opcode == OP_ACK:
                self._ack_locked(fields[0], fields[1:])
            offset += 4 + length

    def _append_log(self, opcode: int, fields: list[bytes]) -> None:
        if self._log is not None:
            self._log.write(encode_frame(opcode, fields))
            self._log.flush()

    def _put_locked(self, recipient: bytes, blob: bytes) -> bytes:
        blob_id = self._next_id.to_bytes(8, "big")
        self._next_id += 1
        self._boxes.setdefault(bytes(recipient), OrderedDict())[blob_id] = bytes(blob)
        return blob_id

    def _ack_locked(self, recipient: bytes, blob_ids) -> None:
        box = self._boxes.get(bytes(recipient))
        if not box:
            return
        for blob_id in blob_ids:
            box.pop(bytes(blob_id), None)

    def put(self, recipient: bytes, blob: bytes) -> bytes:
        with self._lock:
            blob_id = self._put_locked(recipient, blob)
            self._append_log(OP_PUT, [recipient, blob])
        return blob_id

    def get(self, recipient: bytes) -> list[tuple[bytes, bytes]]:
        with self._lock:
            box = self._boxes.get(bytes(recipient), {})
            return list(box.items())

    def ack(self, recipient: bytes, blob_ids) -> None:
        with self._lock:
            self._ack_locked(recipient, blob_ids)
            self._append_log(OP_ACK, [recipient, *blob_ids])

    def close(self) -> None:
        if self._log is not None:
            self._log.close()
            self._log = None


class _RelayHandler(socketserver.BaseRequestHandler):

    def handle(self) -> None:
        store: MailboxStore = self.server.store  # type: ignore[attr-defined]
        while True:
            try:
                opcode, fields = read_frame(self.request)
            except (ConnectionError, OSError):
                return
            except FrameError as exc:
                try:
                    self.request.sendall(encode_frame(OP_ERR, [str(exc).encode()]))
                except OSError:
                    return
                continue
            try:
                reply = self._dispatch(store, opcode, fields)
            except (FrameError, IndexError) as exc:
                reply = encode_frame(OP_ERR, [str(exc).encode()])
            try:
                self.request.sendall(reply)
            except OSError:
                return

    @staticmethod
    def _dispatch(store: MailboxStore, opcode: int, fields: list[bytes]) -> bytes:
        if opcode == OP_PUT:
            if len(fields) != 2:
                raise FrameError("PUT expects recipient and blob")
            store.put(fields[0], fields[1])
            return encode_frame(OP_OK, [])
        if opcode == OP_GET:
            if len(fields) != 1:
                raise FrameError("GET expects a recipient")
            pairs = store.get(fields[0])
            flat = [x for pair in pairs for x in pair]
            return encode_frame(OP_LIST, flat)
        if opcode == OP_ACK:
            if not fields:
                raise FrameError("ACK expects a recipient")
            store.ack(fields[0], fields[1:])
            return encode_frame(OP_OK, [])
        raise FrameError(f"unknown opcode {opcode}")


class RelayServer:
    """Threaded TCP relay; `with RelayServer(...) as srv:` or start()/stop()."""

    def __init__(self, bind_address=("127.0.0.1", 0), store: MailboxStore | None = None):
        self.store = store if store is not None else MailboxStore()
        self._server = socketserver.ThreadingTCPServer(bind_address, _RelayHandler,
                                                       bind_and_activate=False)
        self._server.allow_reuse_address = True
        self._server.daemon_threads = True
        self._server.store = self.store  # type: ignore[attr-defined]
        self._server.server_bind()
        self._server.server_activate()
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def start(self) -> "RelayServer":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
        self.store.close()

    def __enter__(self) -> "RelayServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def serve(bind_address: tuple[str, int], store: MailboxStore | None = None) -> RelayServer:
    return RelayServer(bind_address, store).start()
