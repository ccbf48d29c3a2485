"""
:mod:`header` --- packet header codec
=====================================

Layout::

    0        1        2        3        4        5        6        7
    +--------+--------+--------+--------+--------+--------+--------+--------+
    |ver|srcT|dstT|nP |  total length   | CurrINF| CurrHF | pathLen|  rsvd  |
    +--------+--------+--------+--------+--------+--------+--------+--------+
    | source address (0/4/6/16/20 B) | destination address (0/4/6/16/20 B)  |
    +-----------------------------------------------------------------------+
    | info field | opaque fields ... | info field | opaque fields ... | ... |
    +-----------------------------------------------------------------------+
    | payload                                                               |

``CurrINF``, ``CurrHF`` and ``pathLen`` count 8-byte units from the start
of the path region. Addresses are never parsed on the forwarding path;
only the destination AS calls :meth:`PacketHeader.read_dst`.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

from .combiner import EndToEndPath, verify_only_mask
from .opaque import INFO_CONSDIR, INFO_LEN, OF_LEN, InfoField, OpaqueField

VERSION = 1
COMMON_LEN = 8
MAX_PARTS = 3
MAX_OFS = 64
ADDR_LENS = {0: 0, 1: 4, 2: 6, 3: 16, 4: 20}
ADDR_TYPES = {v: k for k, v in ADDR_LENS.items()}


class HeaderError(ValueError):
    pass


@dataclass
class PacketHeader:
    parts: tuple  # ((InfoField, (OpaqueField, ...)), ...)
    info_idx: int = 0
    of_idx: int = 0  # index inside the current part, construction order
    src_raw: bytes = b""
    dst_raw: bytes = b""
    payload: bytes = b""
    version: int = VERSION
    address_reads: int = field(default=0, compare=False)

    def __post_init__(self):
        if len(self.src_raw) not in ADDR_TYPES or len(self.dst_raw) not in ADDR_TYPES:
            raise HeaderError("unsupported address length")
        if len(self.parts) > MAX_PARTS:
            raise HeaderError("more than %d segments" % MAX_PARTS)
        if sum(len(ofs) for _, ofs in self.parts) > MAX_OFS:
            raise HeaderError("more than %d hops" % MAX_OFS)

    @property
    def path_len(self) -> int:
        """Size of the path region in bytes."""
        return sum(INFO_LEN + OF_LEN * len(ofs) for _, ofs in self.parts)

    @property
    def total_len(self) -> int:
        return COMMON_LEN + len(self.src_raw) + len(self.dst_raw) + self.path_len + len(self.payload)

    def _offsets(self):
        unit, out = 0, []
        for info, ofs in self.parts:
            out.append(unit)
            unit += 1 + len(ofs)
        return out

    def current(self) -> tuple[InfoField, OpaqueField]:
        info, ofs = self.parts[self.info_idx]
        return info, ofs[self.of_idx]

    def read_dst(self) -> bytes:
        self.address_reads += 1
        return self.dst_raw

    def read_src(self) -> bytes:
        self.address_reads += 1
        return self.src_raw

    def at(self, info_idx: int, of_idx: int) -> "PacketHeader":
        return replace(self, info_idx=info_idx, of_idx=of_idx, address_reads=0)

    def pack(self) -> bytes:
        if self.total_len > 0xFFFF:
            raise HeaderError("packet too long")
        if self.parts:
            cur_inf = self._offsets()[self.info_idx]
            cur_hf = cur_inf + 1 + self.of_idx
        else:
            cur_inf = cur_hf = 0
        out = bytearray()
        out.append(self.version << 4 | ADDR_TYPES[len(self.src_raw)])
        out.append(ADDR_TYPES[len(self.dst_raw)] << 4 | len(self.parts))
        out += self.total_len.to_bytes(2, "big")
        out += bytes((cur_inf, cur_hf, self.path_len // 8, 0))
        out += self.src_raw + self.dst_raw
        for info, ofs in self.parts:
            out += info.pack()
            for of in ofs:
                out += of.pack()
        out += self.payload
        return bytes(out)

    @classmethod
    def unpack(cls, raw: bytes) -> "PacketHeader":
        if len(raw) < COMMON_LEN:
            raise HeaderError("truncated common header")
        version, src_t = raw[0] >> 4, raw[0] & 0xF
        dst_t, nparts = raw[1] >> 4, raw[1] & 0xF
        if version != VERSION:
            raise HeaderError("unsupported version %d" % version)
        if src_t not in ADDR_LENS or dst_t not in ADDR_LENS:
            raise HeaderError("unknown address type")
        total = int.from_bytes(raw[2:4], "big")
        cur_inf, cur_hf, path_units, rsvd = raw[4], raw[5], raw[6], raw[7]
        if rsvd:
            raise HeaderError("reserved byte must be zero")
        if total != len(raw):
            raise HeaderError("length field %d does not match %d bytes" % (total, len(raw)))
        off = COMMON_LEN
        src = raw[off:off + ADDR_LENS[src_t]]
        off += ADDR_LENS[src_t]
        dst = raw[off:off + ADDR_LENS[dst_t]]
        off += ADDR_LENS[dst_t]
        path_end = off + 8 * path_units
        if path_end > len(raw):
            raise HeaderError("path region exceeds packet")
        parts, unit, starts = [], 0, []
        for _ in range(nparts):
            if off + INFO_LEN > path_end:
                raise HeaderError("info field outside path region")
            info = InfoField.unpack(raw[off:off + INFO_LEN])
            off += INFO_LEN
            if off + OF_LEN * info.hops > path_end:
                raise HeaderError("opaque fields outside path region")
            ofs = tuple(OpaqueField.unpack(raw[off + OF_LEN * i:off + OF_LEN * (i + 1)]) for i in range(info.hops))
            off += OF_LEN * info.hops
            starts.append(unit)
            unit += 1 + info.hops
            parts.append((info, ofs))
        if off != path_end:
            raise HeaderError("path length mismatch")
        info_idx = of_idx = 0
        if parts:
            if cur_inf not in starts:
                raise HeaderError("CurrINF does not point at an info field")
            info_idx = starts.index(cur_inf)
            of_idx = cur_hf - cur_inf - 1
            if not 0 <= of_idx < len(parts[info_idx][1]):
                raise HeaderError("CurrHF outside current segment")
        elif cur_inf or cur_hf:
            raise HeaderError("offsets set on empty path")
        return cls(tuple(parts), info_idx, of_idx, bytes(src), bytes(dst), bytes(raw[path_end:]), version)


def traversal(info: InfoField, ofs) -> list[int]:
    mask = verify_only_mask(info, ofs)
    idx = [i for i in range(len(ofs)) if not mask[i]]
    return idx if info.consdir else idx[::-1]


def first_position(parts) -> tuple[int, int]:
    for p, (info, ofs) in enumerate(parts):
        trav = traversal(info, ofs)
        if trav:
            return p, trav[0]
    return 0, 0


def header_for_path(path: EndToEndPath, src_addr: bytes = b"", dst_addr: bytes = b"",
                    payload: bytes = b"") -> PacketHeader:
    parts = tuple((p.info, p.ofs) for p in path.parts)
    info_idx, of_idx = first_position(parts)
    return PacketHeader(parts, info_idx, of_idx, src_addr, dst_addr, payload)


def encode_header(path: EndToEndPath, src_addr: bytes = b"", dst_addr: bytes = b"", payload: bytes = b"") -> bytes:
    return header_for_path(path, src_addr, dst_addr, payload).pack()


def decode_header(raw: bytes) -> PacketHeader:
    return PacketHeader.unpack(raw)


def reverse_header(hdr: PacketHeader, payload: bytes | None = None) -> PacketHeader:
    """Header for the reply: segments in reverse order, each traversed the other way."""
    parts = tuple((InfoField(i.timestamp, i.isd, i.flags ^ INFO_CONSDIR, i.hops), ofs)
                  for i, ofs in reversed(hdr.parts))
    info_idx, of_idx = first_position(parts)
    return PacketHeader(parts, info_idx, of_idx, hdr.dst_raw, hdr.src_raw,
                        hdr.payload if payload is None else payload, hdr.version)
