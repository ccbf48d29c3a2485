import pytest
from hypothesis import given, settings, strategies as st

from scionsim.crypto import AsSecrets
from scionsim.header import HeaderError, PacketHeader, decode_header, encode_header, reverse_header
from scionsim.opaque import (DEFAULT_EXPIRY_UNITS, INFO_CONSDIR, InfoField, OfRejected, OpaqueField, build_of,
                             verify_of)
from scionsim.topology import AsId

SECRETS = AsSecrets.generate(AsId(1, 13), 0)

ofs = st.builds(OpaqueField, st.integers(0, 255), st.integers(0, 255), st.integers(0, 4095),
                st.integers(0, 4095), st.integers(0, (1 << 24) - 1))
infos = st.builds(InfoField, st.integers(0, (1 << 32) - 1), st.integers(0, 0xFFFF), st.integers(0, 255),
                  st.just(0))
addrs = st.sampled_from([0, 4, 6, 16, 20]).flatmap(lambda n: st.binary(min_size=n, max_size=n))


@st.composite
def headers(draw):
    parts = []
    for _ in range(draw(st.integers(0, 3))):
        info = draw(infos)
        fields = tuple(draw(st.lists(ofs, min_size=1, max_size=6)))
        parts.append((InfoField(info.timestamp, info.isd, info.flags, len(fields)), fields))
    info_idx = draw(st.integers(0, len(parts) - 1)) if parts else 0
    of_idx = draw(st.integers(0, len(parts[info_idx][1]) - 1)) if parts else 0
    return PacketHeader(tuple(parts), info_idx, of_idx, draw(addrs), draw(addrs), draw(st.binary(max_size=32)))


@given(ofs)
def test_of_pack_round_trip(of):
    raw = of.pack()
    assert len(raw) == 8
    assert OpaqueField.unpack(raw) == of


@given(infos)
def test_info_pack_round_trip(info):
    assert InfoField.unpack(info.pack()) == info


@given(headers())
def test_header_round_trip(hdr):
    raw = hdr.pack()
    assert len(raw) == hdr.total_len
    assert decode_header(raw) == hdr


@given(headers())
def test_reverse_is_an_involution(hdr):
    twice = reverse_header(reverse_header(hdr))
    assert twice.parts == hdr.parts
    assert (twice.src_raw, twice.dst_raw) == (hdr.src_raw, hdr.dst_raw)


@settings(max_examples=300)
@given(st.binary(max_size=120))
def test_decoder_only_raises_header_error(raw):
    try:
        hdr = decode_header(raw)
    except HeaderError:
        return
    assert hdr.pack() == raw


def _valid(prior=None):
    return build_of(SECRETS, 0, DEFAULT_EXPIRY_UNITS, 3, 7, prior)


def test_valid_of_accepted():
    verify_of(SECRETS, _valid(), None, now=10.0, timestamp=0.0, arrival_if=3)
    verify_of(SECRETS, _valid(), None, now=10.0, timestamp=0.0, arrival_if=7, consdir=False)


@pytest.mark.parametrize("bit", range(64))
def test_every_single_bit_flip_rejected(bit):
    prior = build_of(AsSecrets.generate(AsId(1, 11), 0), 0, DEFAULT_EXPIRY_UNITS, 0, 3)
    raw = bytearray(_valid(prior).pack())
    raw[bit // 8] ^= 0x80 >> (bit % 8)
    with pytest.raises(OfRejected):
        verify_of(SECRETS, OpaqueField.unpack(bytes(raw)), prior, now=10.0, timestamp=0.0)


def test_prior_chaining_prevents_splicing():
    a = build_of(SECRETS, 0, DEFAULT_EXPIRY_UNITS, 0, 3)
    b = build_of(SECRETS, 0, DEFAULT_EXPIRY_UNITS, 0, 4)
    of = _valid(a)
    with pytest.raises(OfRejected, match="mac"):
        verify_of(SECRETS, of, b, now=1.0, timestamp=0.0)


def test_expired_and_wrong_interface():
    of = _valid()
    with pytest.raises(OfRejected, match="expired"):
        verify_of(SECRETS, of, None, now=of.expires_at(0.0), timestamp=0.0)
    with pytest.raises(OfRejected, match="wrong-interface"):
        verify_of(SECRETS, of, None, now=1.0, timestamp=0.0, arrival_if=7)


def test_other_as_key_rejected():
    with pytest.raises(OfRejected, match="mac"):
        verify_of(AsSecrets.generate(AsId(1, 14), 0), _valid(), None, now=1.0, timestamp=0.0)


def _region(n_parts, n_ofs):
    # independent size model: every info field and opaque field is 8 bytes
    return 8 * (n_parts + n_ofs)


def test_one_hop_path_region():
    hdr = PacketHeader(((InfoField(0, 1, INFO_CONSDIR, 1), (_valid(),)),))
    assert hdr.path_len == _region(1, 1) == 16


def test_peering_shortcut_region(fig, fig_engine):
    paths, _ = fig_engine.lookup_paths(fig.resolve("A"), fig.resolve("B"))
    hdr = decode_header(encode_header(paths[0]))
    n_ofs = sum(len(f) for _, f in hdr.parts)
    assert (len(hdr.parts), n_ofs) == (2, 4)
    assert hdr.path_len == _region(2, 4) == 48
