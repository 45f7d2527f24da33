"""Device model: AIE grid, compute rates, interface bandwidths, PLIO and routing limits."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path


class DeviceError(ValueError):
    pass


@dataclass(frozen=True)
class Interface:
    frequency_hz: float
    bitwidth: int | None
    channels: int
    total_tb_s: float

    @property
    def derived_bytes_per_s(self) -> float | None:
        if self.bitwidth is None:
            return None
        return self.channels * self.bitwidth / 8 * self.frequency_hz


@dataclass(frozen=True)
class DeviceModel:
    name: str = "vck5000"
    rows: int = 8
    cols: int = 50
    aie_freq_hz: float = 1.25e9
    pl_freq_hz: float = 250e6
    tb_bytes: float = 1.024e12
    macs_per_cycle: dict = field(default_factory=dict)
    ops_per_mac: dict = field(default_factory=dict)
    dtype_bytes: dict = field(default_factory=dict)
    interfaces: dict = field(default_factory=dict)
    plio_channels: int = 78
    plio_bitwidth: int = 128
    plio_in_budget: int = 39
    plio_out_budget: int = 39
    plio_slots_per_column: int = 2
    plio_columns: tuple[int, ...] | None = None
    rc_west: int = 6
    rc_east: int = 6
    local_memory_bytes: int = 32768
    double_buffer: bool = True
    pl_buffer_bytes: int = 20 * 2**20
    packet_switch_limit: int = 4
    shared_buffer_bytes_per_cycle: int = 32
    noc_stream_bytes_per_cycle: int = 4

    @property
    def aie_count(self) -> int:
        return self.rows * self.cols

    @property
    def usable_local_memory(self) -> int:
        return self.local_memory_bytes // 2 if self.double_buffer else self.local_memory_bytes

    @property
    def plio_bytes_per_cycle(self) -> float:
        return self.plio_bitwidth / 8

    @property
    def columns_with_plio(self) -> tuple[int, ...]:
        return self.plio_columns if self.plio_columns is not None else tuple(range(self.cols))

    def bytes_per_s(self, iface: str) -> float:
        """Table total of an interface in bytes per second."""
        return self.interfaces[iface].total_tb_s * self.tb_bytes

    def mpc(self, dtype: str) -> int:
        if dtype not in self.macs_per_cycle:
            raise DeviceError(f"unknown data type {dtype!r} (device {self.name} has no MAC rate)")
        return self.macs_per_cycle[dtype]

    def element_bytes(self, dtype: str) -> int:
        if dtype not in self.dtype_bytes:
            raise DeviceError(f"unknown data type {dtype!r}")
        return self.dtype_bytes[dtype]

    def ops(self, dtype: str) -> int:
        self.mpc(dtype)
        return self.ops_per_mac.get(dtype, 2)

    def peak_ops(self, nodes: int, dtype: str) -> float:
        return nodes * self.mpc(dtype) * self.ops(dtype) * self.aie_freq_hz

    def with_overrides(self, **kw) -> "DeviceModel":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)


def device_from_doc(doc: dict) -> DeviceModel:
    try:
        plio = doc.get("plio", {})
        routing = doc.get("routing", {})
        ifaces = {k: Interface(float(v["frequency_hz"]),
                               None if v.get("bitwidth") is None else int(v["bitwidth"]),
                               int(v["channels"]), float(v["total_tb_s"]))
                  for k, v in doc.get("interfaces", {}).items()}
        dev = DeviceModel(
            name=doc.get("name", "device"),
            rows=int(doc["rows"]), cols=int(doc["cols"]),
            aie_freq_hz=float(doc["aie_freq_hz"]),
            pl_freq_hz=float(doc.get("pl_freq_hz", 250e6)),
            tb_bytes=float(doc.get("tb_bytes", 1.024e12)),
            macs_per_cycle={k: int(v) for k, v in doc["macs_per_cycle"].items()},
            ops_per_mac={k: int(v) for k, v in doc.get("ops_per_mac", {}).items()},
            dtype_bytes={k: int(v) for k, v in doc["dtype_bytes"].items()},
            interfaces=ifaces,
            plio_channels=int(plio.get("channels", 78)),
            plio_bitwidth=int(plio.get("bitwidth", 128)),
            plio_in_budget=int(plio.get("in_budget", 39)),
            plio_out_budget=int(plio.get("out_budget", 39)),
            plio_slots_per_column=int(plio.get("slots_per_column", 2)),
            plio_columns=None if plio.get("columns") is None else tuple(plio["columns"]),
            rc_west=int(routing.get("rc_west", 6)),
            rc_east=int(routing.get("rc_east", 6)),
            local_memory_bytes=int(doc.get("local_memory_bytes", 32768)),
            double_buffer=bool(doc.get("double_buffer", True)),
            pl_buffer_bytes=int(doc.get("pl_buffer_bytes", 20 * 2**20)),
            packet_switch_limit=int(doc.get("packet_switch_limit", 4)),
            shared_buffer_bytes_per_cycle=int(doc.get("shared_buffer_bytes_per_cycle", 32)),
            noc_stream_bytes_per_cycle=int(doc.get("noc_stream_bytes_per_cycle", 4)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DeviceError(f"malformed device document: {exc}") from exc
    _validate(dev)
    return dev


def _validate(dev: DeviceModel) -> None:
    ints = [dev.rows, dev.cols, dev.plio_channels, dev.plio_bitwidth, dev.plio_in_budget,
            dev.plio_out_budget, dev.plio_slots_per_column, dev.rc_west, dev.rc_east,
            dev.local_memory_bytes, dev.pl_buffer_bytes, dev.packet_switch_limit]
    if min(ints) <= 0 or dev.aie_freq_hz <= 0:
        raise DeviceError("device parameters must be positive")
    if any(v <= 0 for v in dev.macs_per_cycle.values()):
        raise DeviceError("MAC rates must be positive")


def load_device(path: str | Path | None = None) -> DeviceModel:
    """Load a device file; ``None`` loads the shipped VCK5000 model."""
    if path is None:
        text = resources.files("urmap.data").joinpath("vck5000.json").read_text()
    else:
        p = Path(path)
        if not p.is_file():
            raise FileNotFoundError(f"device file not found: {p}")
        text = p.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DeviceError(f"malformed device file {path}: {exc}") from exc
    return device_from_doc(doc)


def default_device() -> DeviceModel:
    return load_device(None)
