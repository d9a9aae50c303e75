"""Parameter checkpoints.

Layout (little-endian): magic "CFNN", version u16 = 1, config echo
(in_channels u32, class_count u32, encoder u32 x4, bottleneck u32,
decoder u32 x4), step counter u64, block count u32, then per block:
name length u16, name bytes (utf-8), dim count u8, dims u32 each, f32
data. Blocks hold weights plus Adam moments, named "w:", "m:", "v:"
plus the parameter name. Values are stored as float32.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import DataError
from .unet import UNetConfig, UNetParams

MAGIC = b"CFNN"
VERSION = 1


def save_checkpoint(cfg: UNetConfig, params: UNetParams, path) -> None:
    blocks = []
    for prefix, group in (("w", params.weights), ("m", params.m), ("v", params.v)):
        for name, arr in group.items():
            blocks.append((f"{prefix}:{name}", np.asarray(arr, dtype=np.float32)))
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        fh.write(struct.pack("<II", cfg.in_channels, cfg.class_count))
        fh.write(struct.pack("<4I", *cfg.encoder))
        fh.write(struct.pack("<I", cfg.bottleneck))
        fh.write(struct.pack("<4I", *cfg.decoder))
        fh.write(struct.pack("<QI", params.step, len(blocks)))
        for name, arr in blocks:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path) -> tuple[UNetConfig, UNetParams]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise DataError(f"{path}: bad checkpoint magic {data[:4]!r}")
    pos = 4

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise DataError(f"{path}: truncated checkpoint")
        vals = struct.unpack_from(fmt, data, pos)
        pos += size
        return vals

    (version,) = take("<H")
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    in_channels, class_count = take("<II")
    encoder = take("<4I")
    bottleneck = take("<I")[0]
    decoder = take("<4I")
    step, n_blocks = take("<QI")
    cfg = UNetConfig(
        in_channels=in_channels, class_count=class_count,
        encoder=tuple(encoder), bottleneck=bottleneck, decoder=tuple(decoder),
    )
    groups = {"w": {}, "m": {}, "v": {}}
    for _ in range(n_blocks):
        (name_len,) = take("<H")
        name = data[pos : pos + name_len].decode("utf-8")
        pos += name_len
        (ndim,) = take("<B")
        dims = take(f"<{ndim}I")
        count = int(np.prod(dims)) if ndim else 1
        need = count * 4
        if pos + need > len(data):
            raise DataError(f"{path}: truncated block {name!r}")
        arr = np.frombuffer(data, dtype="<f4", offset=pos, count=count).reshape(dims).copy()
        pos += need
        prefix, _, pname = name.partition(":")
        if prefix not in groups or not pname:
            raise DataError(f"{path}: malformed block name {name!r}")
        groups[prefix][pname] = arr
    if not (groups["w"].keys() == groups["m"].keys() == groups["v"].keys()):
        raise DataError(f"{path}: weight/moment blocks do not align")
    return cfg, UNetParams(weights=groups["w"], m=groups["m"], v=groups["v"], step=step)
