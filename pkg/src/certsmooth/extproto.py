"""Subprocess wire protocol: any executable can be the base classifier.

Newline-delimited JSON over stdin/stdout, one object per line (UTF-8).
Requests: ``hello {version:1}``, ``infer {id, shape, data_b64}`` with the
batch as base64 float32 little-endian row-major, ``shutdown {}``.
Responses: ``hello_ok {num_classes}``, ``labels {id, labels}``,
``error {id, message}``.  Responses may arrive out of order; they are
matched by id.  See PROTOCOL.md for byte-level examples.
"""

from __future__ import annotations

import base64
import json
import selectors
import shlex
import subprocess
import threading
import time
from collections import deque

import numpy as np

from .smoothing import ClassifierError

PROTOCOL_VERSION = 1
HANDSHAKE_TIMEOUT_S = 10.0
RESPONSE_TIMEOUT_S = 120.0
SHUTDOWN_TIMEOUT_S = 5.0
MAX_OUTSTANDING = 4


class ProtocolError(RuntimeError):
    """The child spoke the wire format wrong (or not at all)."""


def encode_batch(batch: np.ndarray) -> tuple[list[int], str]:
    batch = np.ascontiguousarray(batch, dtype="<f4")
    return list(batch.shape), base64.b64encode(batch.tobytes()).decode("ascii")


def decode_batch(shape: list[int], data_b64: str) -> np.ndarray:
    raw = base64.b64decode(data_b64.encode("ascii"), validate=True)
    return np.frombuffer(raw, dtype="<f4").reshape(shape)


class ExternalClassifier:
    """BaseClassifier that proxies evaluate() to a child process.

    Writes are serialized; up to four infer requests may be outstanding at
    once across threads.  The child's stderr is drained continuously and
    its tail is attached to every failure.
    """

    concurrent_safe = True  # internal locking enforces the 4-slot pipeline

    def __init__(self, command, handshake_timeout: float = HANDSHAKE_TIMEOUT_S):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                bufsize=0,
            )
        except OSError as exc:
            raise ClassifierError(f"cannot spawn {argv!r}: {exc}") from exc
        self._closed = False
        self._buffer = bytearray()
        self._bytes_read = 0
        self._next_id = 0
        self._pending: dict[int, dict] = {}
        self._waiting: set[int] = set()
        self._write_lock = threading.Lock()
        self._read_lock = threading.Lock()
        self._state_lock = threading.Lock()
        self._slots = threading.BoundedSemaphore(MAX_OUTSTANDING)
        self._stderr_tail: deque[str] = deque(maxlen=40)
        self._stderr_thread = threading.Thread(target=self._drain_stderr, daemon=True)
        self._stderr_thread.start()
        self._selector = selectors.DefaultSelector()
        self._selector.register(self._proc.stdout, selectors.EVENT_READ)

        self._send({"kind": "hello", "version": PROTOCOL_VERSION})
        reply = self._read_frame(handshake_timeout)
        if reply.get("kind") != "hello_ok":
            raise ProtocolError(
                f"expected hello_ok during handshake, got {reply.get('kind')!r}"
                f"{self._stderr_suffix()}"
            )
        num_classes = reply.get("num_classes")
        if not isinstance(num_classes, int) or num_classes < 2:
            raise ProtocolError(f"hello_ok carried bad num_classes {num_classes!r}")
        self.num_classes = num_classes

    # -- wire plumbing ----------------------------------------------------

    def _drain_stderr(self) -> None:
        stream = self._proc.stderr
        try:
            for raw in iter(stream.readline, b""):
                self._stderr_tail.append(raw.decode("utf-8", "replace").rstrip())
        except ValueError:
            pass  # stream closed during shutdown

    def _stderr_suffix(self) -> str:
        if not self._stderr_tail:
            return ""
        return " | child stderr: " + " / ".join(list(self._stderr_tail)[-5:])

    def _send(self, frame: dict) -> None:
        payload = (json.dumps(frame, separators=(",", ":")) + "\n").encode("utf-8")
        with self._write_lock:
            try:
                self._proc.stdin.write(payload)
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise ClassifierError(
                    f"child pipe broke while sending {frame.get('kind')!r}: "
                    f"{exc}{self._stderr_suffix()}"
                ) from exc

    def _read_line(self, timeout: float) -> bytes:
        deadline = time.monotonic() + timeout
        stdout = self._proc.stdout
        while True:
            newline = self._buffer.find(b"\n")
            if newline >= 0:
                line = bytes(self._buffer[:newline])
                del self._buffer[: newline + 1]
                return line
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise ProtocolError(
                    f"timed out after {timeout:.0f}s waiting for the child"
                    f"{self._stderr_suffix()}"
                )
            if not self._selector.select(timeout=min(remaining, 0.5)):
                continue
            chunk = stdout.read(65536)  # raw pipe: returns available bytes
            if chunk == b"":
                raise ClassifierError(
                    f"child closed stdout (exit={self._proc.poll()})"
                    f"{self._stderr_suffix()}"
                )
            self._buffer.extend(chunk)

    def _read_frame(self, timeout: float) -> dict:
        line_start = self._bytes_read
        line = self._read_line(timeout)
        self._bytes_read = line_start + len(line) + 1
        try:
            frame = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ProtocolError(
                f"malformed response line at byte offset {line_start}: {exc}"
            ) from exc
        if not isinstance(frame, dict):
            raise ProtocolError(
                f"malformed response line at byte offset {line_start}: "
                f"expected an object, got {type(frame).__name__}"
            )
        return frame

    def _await_response(self, request_id: int, timeout: float) -> dict:
        deadline = time.monotonic() + timeout
        while True:
            with self._state_lock:
                if request_id in self._pending:
                    return self._pending.pop(request_id)
            if not self._read_lock.acquire(timeout=0.05):
                continue
            try:
                with self._state_lock:
                    if request_id in self._pending:
                        return self._pending.pop(request_id)
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise ProtocolError(
                        f"timed out waiting for response id={request_id}"
                        f"{self._stderr_suffix()}"
                    )
                frame = self._read_frame(remaining)
            finally:
                self._read_lock.release()
            frame_id = frame.get("id")
            if frame_id == request_id:
                return frame
            with self._state_lock:
                if frame_id not in self._waiting or frame_id in self._pending:
                    raise ProtocolError(
                        f"duplicate or unsolicited response id={frame_id!r}"
                    )
                self._pending[frame_id] = frame

    # -- BaseClassifier surface -------------------------------------------

    def evaluate(self, batch: np.ndarray) -> np.ndarray:
        if self._closed:
            raise ClassifierError("external classifier already shut down")
        batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
        shape, data = encode_batch(batch)
        self._slots.acquire()
        try:
            with self._state_lock:
                request_id = self._next_id
                self._next_id += 1
                self._waiting.add(request_id)
            try:
                self._send(
                    {"kind": "infer", "id": request_id, "shape": shape, "data_b64": data}
                )
                frame = self._await_response(request_id, RESPONSE_TIMEOUT_S)
            finally:
                with self._state_lock:
                    self._waiting.discard(request_id)
        finally:
            self._slots.release()

        kind = frame.get("kind")
        if kind == "error":
            raise ClassifierError(
                f"child reported error for id={request_id}: {frame.get('message')!r}"
                f"{self._stderr_suffix()}"
            )
        if kind != "labels":
            raise ProtocolError(f"expected a labels frame, got {kind!r}")
        labels = frame.get("labels")
        if not isinstance(labels, list) or len(labels) != batch.shape[0]:
            raise ProtocolError(
                f"labels frame for id={request_id} has {len(labels) if isinstance(labels, list) else 'no'} "
                f"labels for a {batch.shape[0]}-row batch"
            )
        out = np.asarray(labels, dtype=np.int64)
        if out.size and (out.min() < 0 or out.max() >= self.num_classes):
            raise ProtocolError(
                f"labels outside [0, {self.num_classes}) in response id={request_id}"
            )
        return out

    # -- lifecycle ----------------------------------------------------------

    def shutdown(self) -> int:
        """Ask the child to exit; returns its exit code."""
        if self._closed:
            return self._proc.returncode if self._proc.returncode is not None else 0
        self._closed = True
        try:
            self._send({"kind": "shutdown"})
        except ClassifierError:
            pass  # already gone
        try:
            code = self._proc.wait(timeout=SHUTDOWN_TIMEOUT_S)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            code = self._proc.wait()
        self._selector.close()
        for stream in (self._proc.stdin, self._proc.stdout, self._proc.stderr):
            try:
                stream.close()
            except OSError:
                pass
        return code

    close = shutdown

    def __enter__(self) -> "ExternalClassifier":
        return self

    def __exit__(self, *exc_info) -> None:
        self.shutdown()


def spawn_external(command) -> ExternalClassifier:
    """Launch and handshake an external classifier process."""
    return ExternalClassifier(command)
