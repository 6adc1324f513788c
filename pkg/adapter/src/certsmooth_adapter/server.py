"""Newline-delimited JSON classifier server over stdin/stdout.

Speaks the certsmooth external-classifier protocol, version 1: answers
``hello`` with ``hello_ok {num_classes}``, maps each ``infer`` frame's
base64 float32 batch to ``labels`` via argmax(W x + b) with lowest-index
tie-breaking, and exits 0 on ``shutdown``.  Malformed but parseable
frames get an ``error`` response carrying the request id; an unparseable
line is fatal (log to stderr, exit 2).  Standard library only: the point
of this program is the wire boundary, not the model behind it.
"""

from __future__ import annotations

import argparse
import base64
import binascii
import json
import struct
import sys

PROTOCOL_VERSION = 1

CONTAINER_MAGIC = b"CSMT"
CONTAINER_VERSION = 1
DTYPE_F32 = 1


def read_weights(path: str) -> list[list[float]]:
    """Parse a CSMT tensor container holding a float32 matrix."""
    with open(path, "rb") as handle:
        blob = handle.read()
    if blob[:4] != CONTAINER_MAGIC:
        raise ValueError(f"{path}: bad container magic {blob[:4]!r}")
    version, dtype, ndim = struct.unpack_from("<HBI", blob, 4)
    if version != CONTAINER_VERSION:
        raise ValueError(f"{path}: unsupported container version {version}")
    if dtype != DTYPE_F32:
        raise ValueError(f"{path}: expected float32 payload, dtype code {dtype}")
    offset = 11
    dims = struct.unpack_from(f"<{ndim}I", blob, offset)
    offset += 4 * ndim
    count = 1
    for d in dims:
        count *= d
    values = struct.unpack_from(f"<{count}f", blob, offset)
    if len(blob) != offset + 4 * count:
        raise ValueError(f"{path}: payload size does not match dims {dims}")
    if ndim == 1:
        return [list(values)]
    if ndim != 2:
        raise ValueError(f"{path}: expected a matrix, got {ndim} dims")
    rows, cols = dims
    return [list(values[r * cols : (r + 1) * cols]) for r in range(rows)]


class LinearModel:
    """argmax(W x + b) with ties resolved to the lowest class index."""

    def __init__(self, weights: list[list[float]], bias: list[float] | None = None):
        if not weights or not weights[0]:
            raise ValueError("weights must be a non-empty matrix")
        self.weights = weights
        self.num_classes = len(weights)
        self.dim = len(weights[0])
        self.bias = list(bias) if bias is not None else [0.0] * self.num_classes
        if len(self.bias) != self.num_classes:
            raise ValueError(
                f"bias has {len(self.bias)} entries for {self.num_classes} classes"
            )

    def label(self, row: tuple[float, ...]) -> int:
        best_class = 0
        best_score = None
        for c in range(self.num_classes):
            w = self.weights[c]
            score = self.bias[c]
            for j in range(self.dim):
                score += w[j] * row[j]
            if best_score is None or score > best_score:
                best_score = score
                best_class = c
        return best_class

    def labels(self, shape: list[int], data_b64: str) -> list[int]:
        flat = 1
        for d in shape:
            flat *= d
        raw = base64.b64decode(data_b64, validate=True)
        if len(raw) != 4 * flat:
            raise ValueError(
                f"payload is {len(raw)} bytes, shape {shape} needs {4 * flat}"
            )
        rows = shape[0]
        row_dim = flat // rows if rows else 0
        if row_dim != self.dim:
            raise ValueError(f"batch rows have dim {row_dim}, model needs {self.dim}")
        values = struct.unpack(f"<{flat}f", raw)
        return [
            self.label(values[r * self.dim : (r + 1) * self.dim]) for r in range(rows)
        ]


def serve(model: LinearModel, stdin=None, stdout=None) -> int:
    """Run the frame loop until shutdown; returns the exit code."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout

    def send(obj) -> None:
        stdout.write(json.dumps(obj, separators=(",", ":")) + "\n")
        stdout.flush()

    for line in stdin:
        if not line.strip():
            continue
        try:
            frame = json.loads(line)
        except json.JSONDecodeError as exc:
            print(f"fatal: unparseable frame: {exc}", file=sys.stderr, flush=True)
            return 2
        if not isinstance(frame, dict):
            print("fatal: frame is not an object", file=sys.stderr, flush=True)
            return 2
        kind = frame.get("kind")
        frame_id = frame.get("id")
        if kind == "hello":
            version = frame.get("version")
            if version != PROTOCOL_VERSION:
                send(
                    {
                        "kind": "error",
                        "id": frame_id,
                        "message": f"unsupported protocol version {version!r}",
                    }
                )
                return 2
            send({"kind": "hello_ok", "num_classes": model.num_classes})
        elif kind == "infer":
            try:
                shape = frame["shape"]
                if (
                    not isinstance(shape, list)
                    or not shape
                    or not all(isinstance(d, int) and d > 0 for d in shape)
                ):
                    raise ValueError(f"bad shape {shape!r}")
                labels = model.labels(shape, frame["data_b64"])
            except (KeyError, ValueError, TypeError, binascii.Error) as exc:
                send({"kind": "error", "id": frame_id, "message": str(exc)})
                continue
            send({"kind": "labels", "id": frame_id, "labels": labels})
        elif kind == "shutdown":
            return 0
        else:
            send(
                {
                    "kind": "error",
                    "id": frame_id,
                    "message": f"unknown frame kind {kind!r}",
                }
            )
    return 0  # engine hung up without a shutdown frame


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--weights", required=True, help="CSMT container, [K x D] f32")
    parser.add_argument("--bias", default=None, help="CSMT container, [K] f32")
    args = parser.parse_args(argv)
    try:
        weights = read_weights(args.weights)
        bias = read_weights(args.bias)[0] if args.bias else None
        model = LinearModel(weights, bias)
    except (OSError, ValueError) as exc:
        print(f"fatal: {exc}", file=sys.stderr, flush=True)
        return 2
    return serve(model)


if __name__ == "__main__":
    sys.exit(main())
