"""Minimal RFC 6455 WebSocket implementation: framing, handshake, client.

No WebSocket library is assumed; this speaks the standard wire protocol so
browsers connect natively and test bots can drive the channel over real
sockets.  Supports text/binary/ping/pong/close frames and continuation
fragments; extensions and subprotocols are not negotiated.
"""

from __future__ import annotations

import base64
import hashlib
import os
import socket
import struct
import threading
import urllib.parse
from typing import Optional

_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

OP_CONT = 0x0
OP_TEXT = 0x1
OP_BINARY = 0x2
OP_CLOSE = 0x8
OP_PING = 0x9
OP_PONG = 0xA


class ConnectionClosed(Exception):
    pass


class ReceiveTimeout(Exception):
    pass


def accept_key(client_key: str) -> str:
    digest = hashlib.sha1((client_key + _GUID).encode("ascii")).digest()
    return base64.b64encode(digest).decode("ascii")


def encode_frame(opcode: int, payload: bytes, mask: bool, fin: bool = True) -> bytes:
    head = bytearray()
    head.append((0x80 if fin else 0) | opcode)
    length = len(payload)
    mask_bit = 0x80 if mask else 0
    if length < 126:
        head.append(mask_bit | length)
    elif length < 1 << 16:
        head.append(mask_bit | 126)
        head += struct.pack(">H", length)
    else:
        head.append(mask_bit | 127)
        head += struct.pack(">Q", length)
    if mask:
        key = os.urandom(4)
        head += key
        payload = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
    return bytes(head) + payload


class WSConnection:
    """Frame-level connection over an accepted socket (post-handshake)."""

    def __init__(self, sock: socket.socket, mask_outgoing: bool):
        self.sock = sock
        self.mask_outgoing = mask_outgoing
        self._buf = b""
        self._send_lock = threading.Lock()
        self.open = True

    # -- receiving ---------------------------------------------------------

    def _read_exact(self, n: int, timeout: Optional[float]) -> bytes:
        self.sock.settimeout(timeout)
        while len(self._buf) < n:
            try:
                chunk = self.sock.recv(65536)
            except (socket.timeout, TimeoutError):
                raise ReceiveTimeout()
            except OSError:
                raise ConnectionClosed()
            if not chunk:
                raise ConnectionClosed()
            self._buf += chunk
        out, self._buf = self._buf[:n], self._buf[n:]
        return out

    def recv_frame(self, timeout: Optional[float] = None) -> tuple[int, bytes, bool]:
        b1, b2 = self._read_exact(2, timeout)
        fin = bool(b1 & 0x80)
        opcode = b1 & 0x0F
        masked = bool(b2 & 0x80)
        length = b2 & 0x7F
        if length == 126:
            (length,) = struct.unpack(">H", self._read_exact(2, timeout))
        elif length == 127:
            (length,) = struct.unpack(">Q", self._read_exact(8, timeout))
        key = self._read_exact(4, timeout) if masked else None
        payload = self._read_exact(length, timeout) if length else b""
        if key:
            payload = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
        return opcode, payload, fin

    def recv_message(self, timeout: Optional[float] = None,
                     auto_pong: bool = True) -> tuple[int, bytes]:
        """Next complete data/control message; reassembles fragmented frames.

        Raises ReceiveTimeout if nothing arrives in time (stream state is
        preserved; a partially received frame resumes on the next call) and
        ConnectionClosed on close frames or EOF.
        """
        assembled = b""
        assembled_op: Optional[int] = None
        while True:
            opcode, payload, fin = self.recv_frame(timeout)
            if opcode == OP_CLOSE:
                self.open = False
                try:
                    self.send_frame(OP_CLOSE, payload)
                except ConnectionClosed:
                    pass
                raise ConnectionClosed()
            if opcode == OP_PING:
                if auto_pong:
                    self.send_frame(OP_PONG, payload)
                    continue
                return OP_PING, payload
            if opcode == OP_PONG:
                return OP_PONG, payload
            if opcode in (OP_TEXT, OP_BINARY):
                if fin:
                    return opcode, payload
                assembled, assembled_op = payload, opcode
            elif opcode == OP_CONT:
                assembled += payload
                if fin and assembled_op is not None:
                    return assembled_op, assembled

    def recv_text(self, timeout: Optional[float] = None) -> str:
        while True:
            opcode, payload = self.recv_message(timeout)
            if opcode == OP_TEXT:
                return payload.decode("utf-8")

    # -- sending -----------------------------------------------------------

    def send_frame(self, opcode: int, payload: bytes) -> None:
        if not self.open:
            raise ConnectionClosed()
        data = encode_frame(opcode, payload, mask=self.mask_outgoing)
        with self._send_lock:
            try:
                self.sock.sendall(data)
            except OSError:
                self.open = False
                raise ConnectionClosed()

    def send_text(self, text: str) -> None:
        self.send_frame(OP_TEXT, text.encode("utf-8"))

    def ping(self, data: bytes = b"") -> None:
        self.send_frame(OP_PING, data)

    def close(self, code: int = 1000) -> None:
        if self.open:
            try:
                self.send_frame(OP_CLOSE, struct.pack(">H", code))
            except ConnectionClosed:
                pass
            self.open = False
        try:
            self.sock.close()
        except OSError:
            pass


def server_handshake_response(websocket_key: str) -> bytes:
    return (
        "HTTP/1.1 101 Switching Protocols\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Accept: {accept_key(websocket_key)}\r\n"
        "\r\n"
    ).encode("ascii")


class WSClient:
    """Blocking WebSocket client for bots and tests."""

    def __init__(self, conn: WSConnection):
        self.conn = conn

    @classmethod
    def connect(cls, url: str, timeout: float = 10.0, auto_pong: bool = True) -> "WSClient":
        parts = urllib.parse.urlsplit(url)
        if parts.scheme not in ("ws", "http"):
            raise ValueError(f"unsupported scheme {parts.scheme!r}")
        host = parts.hostname or "127.0.0.1"
        port = parts.port or 80
        path = parts.path or "/"
        if parts.query:
            path += "?" + parts.query
        sock = socket.create_connection((host, port), timeout=timeout)
        key = base64.b64encode(os.urandom(16)).decode("ascii")
        request = (
            f"GET {path} HTTP/1.1\r\n"
            f"Host: {host}:{port}\r\n"
            "Upgrade: websocket\r\n"
            "Connection: Upgrade\r\n"
            f"Sec-WebSocket-Key: {key}\r\n"
            "Sec-WebSocket-Version: 13\r\n"
            "\r\n"
        ).encode("ascii")
        sock.sendall(request)
        response = b""
        while b"\r\n\r\n" not in response:
            chunk = sock.recv(4096)
            if not chunk:
                raise ConnectionClosed("server closed during handshake")
            response += chunk
        head, _, rest = response.partition(b"\r\n\r\n")
        status = head.split(b"\r\n", 1)[0]
        if b"101" not in status:
            sock.close()
            raise ConnectionClosed(f"handshake rejected: {status.decode(errors='replace')}")
        expected = accept_key(key).encode("ascii")
        if expected not in head:
            sock.close()
            raise ConnectionClosed("bad Sec-WebSocket-Accept")
        conn = WSConnection(sock, mask_outgoing=True)
        conn._buf = rest  # frames that arrived with the handshake tail
        client = cls(conn)
        client._auto_pong = auto_pong
        return client

    _auto_pong = True

    def send_json(self, obj: dict) -> None:
        import json
        self.conn.send_text(json.dumps(obj))

    def recv_json(self, timeout: Optional[float] = 10.0) -> dict:
        import json
        while True:
            opcode, payload = self.conn.recv_message(timeout, auto_pong=self._auto_pong)
            if opcode == OP_TEXT:
                return json.loads(payload.decode("utf-8"))

    def close(self) -> None:
        self.conn.close()
