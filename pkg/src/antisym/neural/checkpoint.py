"""Versioned binary checkpoints.

Layout (little-endian)::

    magic    8 bytes  b"ASYMCKP\\0"
    u16      version
    u32      header length L
    L bytes  UTF-8 JSON header (model tag, shapes, activation, seeds, tau0)
    f64 *    every trainable block in ``model.params()`` order
    bytes    frozen sidecar (ensemble or bank), absent for the plain MLP
    u32      CRC-32 of everything above

The JSON header is written with sorted keys, so equal models give equal files.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .._binio import FormatError, Reader, le_doubles, strip_crc, with_crc
from ..features import bank_to_bytes, ensemble_to_bytes, read_bank, read_ensemble
from ..symmetry import Permutation
from .ansatz import BiLipschitzModel, PlainMLPModel, VandermondeModel
from .mlp import zeros_mlp

_MAGIC = b"ASYMCKP\x00"
_VERSION = 1


def _net_header(net) -> dict:
    return {"layer_sizes": list(net.layer_sizes), "activation": net.activation}


def checkpoint_bytes(model) -> bytes:
    header = {"tag": model.tag, "n": model.n, "d": model.d, "init_seed": int(model.init_seed),
              "nets": [_net_header(net) for net in model.nets()]}
    if isinstance(model, BiLipschitzModel):
        header["tau0"] = list(model.tau0.mapping)
        header["feature_seed"] = model.ensemble.seed
        sidecar = ensemble_to_bytes(model.ensemble)
    elif isinstance(model, VandermondeModel):
        header["feature_seed"] = model.bank.seed
        sidecar = bank_to_bytes(model.bank)
    else:
        sidecar = b""
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    body = b"".join(le_doubles(p) for p in model.params())
    return with_crc(_MAGIC + struct.pack("<HI", _VERSION, len(hbytes)) + hbytes + body + sidecar)


def checkpoint_from_bytes(buf: bytes):
    what = "checkpoint"
    if len(buf) < len(_MAGIC) or bytes(buf[:len(_MAGIC)]) != _MAGIC:
        raise FormatError(f"{what}: bad magic")
    r = Reader(strip_crc(buf, what), what)
    r.expect_magic(_MAGIC)
    version, hlen = r.unpack("<HI")
    if version != _VERSION:
        raise FormatError(f"{what}: unsupported version {version}")
    try:
        header = json.loads(bytes(r.take(hlen)).decode("utf-8"))
    except ValueError as exc:
        raise FormatError(f"{what}: unreadable header ({exc})") from exc
    nets = [zeros_mlp(h["layer_sizes"], h["activation"]) for h in header["nets"]]
    for net in nets:
        for p in net.params():
            p[...] = r.doubles(p.size).reshape(p.shape)
    tag = header["tag"]
    if tag == "bilipschitz":
        ens = read_ensemble(r)
        model = BiLipschitzModel(ens, nets[0], Permutation.from_mapping(header["tau0"]),
                                 header["init_seed"])
    elif tag == "vandermonde":
        bank = read_bank(r)
        model = VandermondeModel(bank, nets[0], nets[1], header["init_seed"])
    elif tag == "mlp":
        model = PlainMLPModel(header["n"], header["d"], nets[0], header["init_seed"])
    else:
        raise FormatError(f"{what}: unknown model tag {tag!r}")
    r.done()
    return model


def save_checkpoint(model, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(model))


def load_checkpoint(path):
    return checkpoint_from_bytes(Path(path).read_bytes())


def same_parameters(a, b) -> bool:
    pa, pb = a.params(), b.params()
    return len(pa) == len(pb) and all(np.array_equal(x, y) for x, y in zip(pa, pb))
