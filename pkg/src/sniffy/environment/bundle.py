"""Environment bundle files (``.gdm``).

Layout::

    SNIFFYGDM <version>\\n
    <header length in bytes>\\n
    <JSON header>\\n
    <little-endian array payload>

The header carries the environment (size, walls, vents, source, spawn
region), grid metadata and a table of the arrays in the payload.  Every
length is checked on load, so truncated or corrupted files raise
:class:`BundleError` instead of producing garbage.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from sniffy.environment.filaments import GasFieldSequence
from sniffy.environment.flow import FlowField
from sniffy.environment.model import Environment

MAGIC = b"SNIFFYGDM"
FORMAT_VERSION = 1
_MAX_HEADER = 64 * 1024 * 1024


class BundleError(ValueError):
    pass


@dataclass
class Bundle:
    env: Environment
    flow: FlowField
    gas: GasFieldSequence

    @property
    def id(self) -> str:
        return self.env.id

    def to_bytes(self) -> bytes:
        arrays = [
            ("flow_u", np.ascontiguousarray(self.flow.u, dtype="<f8")),
            ("flow_v", np.ascontiguousarray(self.flow.v, dtype="<f8")),
            ("flow_fluid", np.ascontiguousarray(self.flow.fluid, dtype="u1")),
            ("gas_frames", np.ascontiguousarray(self.gas.frames, dtype="<f4")),
        ]
        table = []
        offset = 0
        for name, arr in arrays:
            table.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape),
                          "offset": offset, "nbytes": int(arr.nbytes)})
            offset += int(arr.nbytes)
        header = {
            "format_version": FORMAT_VERSION,
            "environment": self.env.to_dict(),
            "flow": {"cell_size": float(self.flow.cell_size), "inlet_speed": float(self.flow.inlet_speed)},
            "gas": {"cell_size": float(self.gas.cell_size), "frame_interval": float(self.gas.frame_interval),
                    "n_frames": self.gas.n_frames},
            "arrays": table,
            "payload_bytes": offset,
        }
        text = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        parts = [MAGIC, b" %d\n" % FORMAT_VERSION, b"%d\n" % len(text), text, b"\n"]
        parts.extend(arr.tobytes() for _, arr in arrays)
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Bundle":
        try:
            first, rest = data.split(b"\n", 1)
            magic, version = first.split(b" ")
        except ValueError:
            raise BundleError("not a bundle file") from None
        if magic != MAGIC:
            raise BundleError("not a bundle file")
        if version != str(FORMAT_VERSION).encode():
            raise BundleError(f"unsupported bundle version {version.decode(errors='replace')}")
        try:
            length_line, rest = rest.split(b"\n", 1)
            length = int(length_line)
        except ValueError:
            raise BundleError("corrupted header length field") from None
        if length <= 0 or length > min(_MAX_HEADER, len(rest) - 1):
            raise BundleError("corrupted header length field")
        try:
            header = json.loads(rest[:length].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise BundleError("corrupted bundle header") from None
        if rest[length:length + 1] != b"\n":
            raise BundleError("corrupted header length field")
        payload = rest[length + 1:]
        if len(payload) != header.get("payload_bytes"):
            raise BundleError(f"truncated payload: expected {header.get('payload_bytes')} bytes, "
                              f"got {len(payload)}")
        arrays = {}
        for entry in header["arrays"]:
            dtype = np.dtype(entry["dtype"])
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            start, nbytes = entry["offset"], entry["nbytes"]
            if nbytes != count * dtype.itemsize or start + nbytes > len(payload):
                raise BundleError(f"array {entry['name']} does not fit the payload")
            arrays[entry["name"]] = np.frombuffer(payload, dtype=dtype, count=count, offset=start).reshape(shape)
        env = Environment.from_dict(header["environment"])
        flow = FlowField(
            cell_size=header["flow"]["cell_size"],
            u=arrays["flow_u"].astype(np.float64),
            v=arrays["flow_v"].astype(np.float64),
            fluid=arrays["flow_fluid"].astype(bool),
            inlet_speed=header["flow"]["inlet_speed"],
        )
        gas = GasFieldSequence(
            frames=arrays["gas_frames"].astype(np.float32),
            cell_size=header["gas"]["cell_size"],
            frame_interval=header["gas"]["frame_interval"],
        )
        return cls(env, flow, gas)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "Bundle":
        return cls.from_bytes(Path(path).read_bytes())


def save_bundle(bundle: Bundle, path: str | Path) -> None:
    bundle.save(path)


def load_bundle(path: str | Path) -> Bundle:
    return Bundle.load(path)
