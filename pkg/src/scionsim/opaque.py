"""
:mod:`opaque` --- hop opaque fields and segment info fields
===========================================================

Opaque field, 8 bytes::

    0        1        2                 4                 5                 7
    +--------+--------+--------+--------+--------+--------+--------+--------+
    | flags  | expiry |   ingress (12)  |   egress (12)   |     mac (24)    |
    +--------+--------+--------+--------+--------+--------+--------+--------+

The MAC is computed by the owning AS over the first five bytes followed
by the previous hop's opaque field (zeros for the first hop of a segment),
so fields cannot be spliced between segments.

Info field, 8 bytes: timestamp (32), ISD (16), flags (8), hop count (8).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

from .crypto import AsSecrets, truncated_mac

OF_LEN = 8
INFO_LEN = 8
EXPIRY_UNIT = 256  # seconds
DEFAULT_EXPIRY_UNITS = 169  # 169 * 256 s = 43264 s, about 12 h
ZERO_OF = bytes(OF_LEN)

OF_PEERING = 0x01
OF_SHORTCUT_CONT = 0x02  # reserved for the packet-level marker, always zero in issued fields

INFO_CONSDIR = 0x01
INFO_SHORTCUT = 0x02
INFO_PEERING = 0x04
KIND_SHIFT = 4
KIND_UP, KIND_DOWN, KIND_CORE = 0, 1, 2


class OfRejected(Exception):
    """A border router refused an opaque field; ``reason`` is mac, expired or wrong-interface."""

    def __init__(self, reason):
        self.reason = reason
        super().__init__(reason)


@dataclass(frozen=True)
class OpaqueField:
    flags: int
    expiry: int
    ingress: int
    egress: int
    mac: int

    def __post_init__(self):
        if not (0 <= self.ingress < 1 << 12 and 0 <= self.egress < 1 << 12):
            raise ValueError("interface id does not fit 12 bits")
        if not (0 <= self.flags < 256 and 0 <= self.expiry < 256 and 0 <= self.mac < 1 << 24):
            raise ValueError("opaque field value out of range")

    @property
    def peering(self) -> bool:
        return bool(self.flags & OF_PEERING)

    def mac_input(self) -> bytes:
        return bytes((self.flags, self.expiry)) + (self.ingress << 12 | self.egress).to_bytes(3, "big")

    def pack(self) -> bytes:
        return self.mac_input() + self.mac.to_bytes(3, "big")

    @classmethod
    def unpack(cls, raw: bytes) -> "OpaqueField":
        if len(raw) != OF_LEN:
            raise ValueError("opaque field must be 8 bytes")
        ifs = int.from_bytes(raw[2:5], "big")
        return cls(raw[0], raw[1], ifs >> 12, ifs & 0xFFF, int.from_bytes(raw[5:8], "big"))

    def expires_at(self, timestamp: float) -> float:
        return timestamp + self.expiry * EXPIRY_UNIT


def _mac_key(secrets) -> bytes:
    return secrets.mac_secret if isinstance(secrets, AsSecrets) else secrets


def compute_mac(secrets, flags, expiry, ingress, egress, prior: OpaqueField | bytes | None) -> int:
    if isinstance(prior, OpaqueField):
        prior = prior.pack()
    if not (0 <= ingress < 1 << 12 and 0 <= egress < 1 << 12):
        raise ValueError("interface id does not fit 12 bits")
    head = bytes((flags, expiry)) + (ingress << 12 | egress).to_bytes(3, "big")
    return truncated_mac(_mac_key(secrets), head + (prior or ZERO_OF))


def build_of(secrets, flags: int, expiry_units: int, ingress: int, egress: int,
             prior: OpaqueField | None = None) -> OpaqueField:
    mac = compute_mac(secrets, flags, expiry_units, ingress, egress, prior)
    return OpaqueField(flags, expiry_units, ingress, egress, mac)


def verify_of(secrets, of: OpaqueField, prior: OpaqueField | None, now: float, timestamp: float,
              arrival_if: int | None = None, consdir: bool = True) -> None:
    """Check an opaque field at its owning AS; raise :class:`OfRejected` on failure.

    ``arrival_if`` is the interface the packet came in on (``None`` skips the
    check). Traveling along the construction direction the packet must
    arrive on the field's ingress, otherwise on its egress.
    """
    if compute_mac(secrets, of.flags, of.expiry, of.ingress, of.egress, prior) != of.mac:
        raise OfRejected("mac")
    if now >= of.expires_at(timestamp):
        raise OfRejected("expired")
    if arrival_if is not None:
        expected = of.ingress if consdir else of.egress
        if arrival_if != expected:
            raise OfRejected("wrong-interface")


@dataclass(frozen=True)
class InfoField:
    timestamp: int
    isd: int
    flags: int
    hops: int

    @property
    def consdir(self) -> bool:
        return bool(self.flags & INFO_CONSDIR)

    @property
    def shortcut(self) -> bool:
        return bool(self.flags & INFO_SHORTCUT)

    @property
    def peering(self) -> bool:
        return bool(self.flags & INFO_PEERING)

    @property
    def kind(self) -> int:
        return (self.flags >> KIND_SHIFT) & 0x3

    def pack(self) -> bytes:
        return struct.pack("!IHBB", self.timestamp, self.isd, self.flags, self.hops)

    @classmethod
    def unpack(cls, raw: bytes) -> "InfoField":
        if len(raw) != INFO_LEN:
            raise ValueError("info field must be 8 bytes")
        return cls(*struct.unpack("!IHBB", raw))
