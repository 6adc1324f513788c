"""Bit-exact tensor container and the bundles built on top of it.

Layout, little-endian throughout: magic ``CSMT``, version u16, dtype code
u8 (1 = float32, 2 = uint32), ndim u32, dims u32[ndim], then the payload
row-major.  Model/prompt/dataset bundles are directories of containers
plus a small JSON meta file.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .toymodel import PromptState, SynthDataset, ToyVlm

MAGIC = b"CSMT"
VERSION = 1
DTYPE_F32 = 1
DTYPE_U32 = 2

_CODE_TO_DTYPE = {DTYPE_F32: np.dtype("<f4"), DTYPE_U32: np.dtype("<u4")}
_KIND_TO_CODE = {"f": DTYPE_F32, "u": DTYPE_U32, "i": DTYPE_U32, "b": DTYPE_U32}


class ContainerError(ValueError):
    """Malformed or mismatched tensor container."""


def write_tensor(path: str | Path, array: np.ndarray) -> None:
    array = np.asarray(array)
    code = _KIND_TO_CODE.get(array.dtype.kind)
    if code is None:
        raise ContainerError(f"unsupported dtype {array.dtype}")
    if code == DTYPE_U32 and array.size and int(array.min()) < 0:
        raise ContainerError("negative values cannot be stored as uint32")
    data = np.ascontiguousarray(array, dtype=_CODE_TO_DTYPE[code])
    header = MAGIC + struct.pack("<HBI", VERSION, code, data.ndim)
    header += struct.pack(f"<{data.ndim}I", *data.shape)
    Path(path).write_bytes(header + data.tobytes())


def read_tensor(path: str | Path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise ContainerError(f"{path}: bad magic {blob[:4]!r}")
    if len(blob) < 11:
        raise ContainerError(f"{path}: truncated header")
    version, code, ndim = struct.unpack_from("<HBI", blob, 4)
    if version != VERSION:
        raise ContainerError(f"{path}: unsupported container version {version}")
    if code not in _CODE_TO_DTYPE:
        raise ContainerError(f"{path}: unknown dtype code {code}")
    offset = 11
    if len(blob) < offset + 4 * ndim:
        raise ContainerError(f"{path}: truncated dims")
    dims = struct.unpack_from(f"<{ndim}I", blob, offset)
    offset += 4 * ndim
    dtype = _CODE_TO_DTYPE[code]
    expected = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    payload = blob[offset:]
    if len(payload) != expected:
        raise ContainerError(
            f"{path}: payload is {len(payload)} bytes, dims require {expected}"
        )
    return np.frombuffer(payload, dtype=dtype).reshape(dims).copy()


def save_prompt_state(path: str | Path, prompts: PromptState) -> None:
    write_tensor(path, prompts.context.astype(np.float32))


def load_prompt_state(path: str | Path) -> PromptState:
    context = read_tensor(path)
    if context.ndim not in (2, 3):
        raise ContainerError(f"{path}: prompt context must be 2-D or 3-D")
    return PromptState(context=context.astype(np.float64))


def save_vlm(directory: str | Path, vlm: ToyVlm) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_tensor(directory / "w_img.csmt", vlm.w_img.astype(np.float32))
    write_tensor(directory / "w_txt.csmt", vlm.w_txt.astype(np.float32))
    write_tensor(directory / "class_tokens.csmt", vlm.class_tokens.astype(np.float32))
    (directory / "meta.json").write_text(
        json.dumps({"kind": "toy_vlm", "init_seed": vlm.init_seed}, indent=2) + "\n"
    )


def load_vlm(directory: str | Path) -> ToyVlm:
    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text())
    if meta.get("kind") != "toy_vlm":
        raise ContainerError(f"{directory}: not a toy VLM bundle")
    return ToyVlm(
        w_img=read_tensor(directory / "w_img.csmt").astype(np.float64),
        w_txt=read_tensor(directory / "w_txt.csmt").astype(np.float64),
        class_tokens=read_tensor(directory / "class_tokens.csmt").astype(np.float64),
        init_seed=int(meta.get("init_seed", 0)),
    )


def save_dataset(
    directory: str | Path,
    dataset: SynthDataset,
    name: str,
    class_names: list[str],
    template: str,
) -> Path:
    """Write images/labels containers plus the manifest; returns its path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_tensor(directory / "images.csmt", dataset.images.astype(np.float32))
    write_tensor(directory / "labels.csmt", dataset.labels.astype(np.uint32))
    write_tensor(directory / "class_means.csmt", dataset.class_means.astype(np.float32))
    manifest = {
        "name": name,
        "classes": list(class_names),
        "template": template,
        "tensor_file": "images.csmt",
        "labels_file": "labels.csmt",
        "seed": dataset.seed,
    }
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def load_dataset(manifest_path: str | Path) -> tuple[SynthDataset, dict]:
    """Read a dataset manifest; returns the dataset and the manifest dict."""
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    for key in ("name", "classes", "template", "tensor_file", "labels_file"):
        if key not in manifest:
            raise ContainerError(f"{manifest_path}: manifest missing field {key!r}")
    base = manifest_path.parent
    images = read_tensor(base / manifest["tensor_file"]).astype(np.float64)
    labels = read_tensor(base / manifest["labels_file"]).astype(np.int64)
    if images.ndim != 2:
        raise ContainerError(f"{manifest_path}: images must be [N x D]")
    if labels.shape != (images.shape[0],):
        raise ContainerError(
            f"{manifest_path}: {labels.size} labels for {images.shape[0]} images"
        )
    means_file = base / "class_means.csmt"
    if means_file.exists():
        means = read_tensor(means_file).astype(np.float64)
    else:
        k = len(manifest["classes"])
        means = np.stack(
            [
                images[labels == c].mean(axis=0)
                if np.any(labels == c)
                else np.zeros(images.shape[1])
                for c in range(k)
            ]
        )
    dataset = SynthDataset(
        images=images,
        labels=labels,
        class_means=means,
        seed=int(manifest.get("seed", 0)),
    )
    return dataset, manifest
