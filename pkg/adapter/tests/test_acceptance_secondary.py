"""Protocol equivalence: certification through the adapter, bit for bit.

Drives the engine purely through its external interfaces (config files,
the CLI, the records file): one run on the in-process linear model, one
on the same weights served by the adapter subprocess.  Everything except
wall-clock timings must match exactly.
"""

import json
import shlex
import struct
import subprocess
import sys
import time
from pathlib import Path

import pytest

SAMPLES = 50
DIM = 6
CLASSES = 3


def csmt(path: Path, code: int, dims, payload: bytes) -> Path:
    blob = b"CSMT" + struct.pack("<HBI", 1, code, len(dims))
    blob += struct.pack(f"<{len(dims)}I", *dims)
    path.write_bytes(blob + payload)
    return path


def csmt_f32(path: Path, dims, values) -> Path:
    return csmt(path, 1, dims, struct.pack(f"<{len(values)}f", *values))


def csmt_u32(path: Path, values) -> Path:
    return csmt(path, 2, (len(values),), struct.pack(f"<{len(values)}I", *values))


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("equiv")

    # one-hot weights with exact binary-fraction biases: the adapter's pure
    # python scores and the engine's vectorized scores agree bit for bit
    weights = []
    for c in range(CLASSES):
        row = [0.0] * DIM
        row[c] = 1.0
        weights.extend(row)
    csmt_f32(root / "weights.csmt", (CLASSES, DIM), weights)
    csmt_f32(root / "bias.csmt", (CLASSES,), [0.125, -0.25, 0.0625])

    # deterministic dataset: values on a coarse lattice, exactly f32
    images = []
    state = 1
    for _ in range(SAMPLES * DIM):
        state = (1103515245 * state + 12345) % (1 << 31)
        images.append((state % 256) / 256.0)
    csmt_f32(root / "images.csmt", (SAMPLES, DIM), images)
    csmt_u32(root / "labels.csmt", [i % CLASSES for i in range(SAMPLES)])
    (root / "manifest.json").write_text(
        json.dumps(
            {
                "name": "equiv",
                "classes": [f"c{i}" for i in range(CLASSES)],
                "template": "a probe image of {}",
                "tensor_file": "images.csmt",
                "labels_file": "labels.csmt",
            }
        )
    )
    return root


def write_config(root: Path, name: str, model_section: dict) -> Path:
    config = {
        "run": {"seed": 424242, "workers": 1, "out": str(root / name)},
        "dataset": {"manifest": str(root / "manifest.json")},
        "model": model_section,
        "method": {"kind": "no_pl"},
        "noise": {"sigmas": [0.25, 0.5], "n0": 100, "n": 10_000, "alpha": 0.001,
                  "batch_size": 1_000},
        "report": {"radius_grid": [0.1, 0.25, 0.5]},
    }
    path = root / f"{name}.json"
    path.write_text(json.dumps(config))
    return path


def run_cli(config_path: Path) -> None:
    proc = subprocess.run(
        [sys.executable, "-m", "certsmooth.harness.cli", "--config",
         str(config_path), "certify"],
        capture_output=True,
        timeout=300,
    )
    assert proc.returncode == 0, proc.stderr.decode()


def canonical_records(path: Path) -> list[dict]:
    records = []
    for line in path.read_text().splitlines():
        obj = json.loads(line)
        obj.pop("wall_time_ms")
        records.append(obj)
    return records


def test_adapter_certification_bit_identical(fixture_dir):
    started = time.perf_counter()
    adapter_cmd = " ".join(
        shlex.quote(part)
        for part in (
            sys.executable,
            "-m",
            "certsmooth_adapter",
            "--weights",
            str(fixture_dir / "weights.csmt"),
            "--bias",
            str(fixture_dir / "bias.csmt"),
        )
    )
    local = write_config(
        fixture_dir,
        "local",
        {
            "kind": "linear",
            "weights": str(fixture_dir / "weights.csmt"),
            "bias": str(fixture_dir / "bias.csmt"),
        },
    )
    remote = write_config(
        fixture_dir, "remote", {"kind": "external", "command": adapter_cmd}
    )
    run_cli(local)
    run_cli(remote)
    ours = canonical_records(fixture_dir / "local" / "records.jsonl")
    theirs = canonical_records(fixture_dir / "remote" / "records.jsonl")
    assert len(ours) == SAMPLES * 2
    assert ours == theirs
    elapsed = time.perf_counter() - started
    assert elapsed <= 120.0
    print(
        f"\nACCEPTANCE PASS protocol-equivalence records={len(ours)} "
        f"({elapsed:.1f}s)"
    )
