import random
from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from scionsim.crypto import AsSecrets, DrKeyCache, FetchError, KeyPair, VerifyCache, derive_drkey, sign, truncated_mac, verify
from scionsim.scmp import ScmpType, scmp_auth, scmp_verify
from scionsim.topology import AsId
from scionsim.trust import (IsdAuthority, TrcRejected, TrcStore, TrcUnavailable, cross_chain, cross_sign, update_trc,
                            validate_cert_chain)

A, B = AsId(1, 11), AsId(1, 14)


def test_sign_verify():
    kp = KeyPair.generate("t", 1)
    sig = sign(kp.private, b"msg")
    assert verify(kp.public, b"msg", sig)
    assert not verify(kp.public, b"msh", sig)


def test_verify_cache_agrees():
    kp = KeyPair.generate("t", 2)
    cache = VerifyCache()
    sig = sign(kp.private, b"x")
    assert cache.verify(kp.public, b"x", sig) and cache.verify(kp.public, b"x", sig)
    assert not cache.verify(kp.public, b"y", sig)


def test_keys_deterministic():
    assert AsSecrets.generate(A, 5).mac_secret == AsSecrets.generate(A, 5).mac_secret
    assert AsSecrets.generate(A, 5).mac_secret != AsSecrets.generate(A, 6).mac_secret


@given(st.binary(max_size=64))
def test_truncated_mac_is_24_bits(payload):
    assert 0 <= truncated_mac(bytes(16), payload) < 1 << 24


def test_drkey_symmetric_derivation():
    sa = AsSecrets.generate(A, 0)
    k1 = derive_drkey(sa, B).key
    assert k1 == derive_drkey(sa, B).key
    assert k1 != derive_drkey(sa, AsId(1, 15)).key


def test_drkey_cache_fetches_once():
    sa = AsSecrets.generate(A, 0)
    calls = []

    def fetch(origin, requester, now):
        calls.append(origin)
        return derive_drkey(sa, requester, now)

    cache = DrKeyCache(B, fetch)
    assert cache.fetch(A, 0.0).key == cache.fetch(A, 1.0).key == derive_drkey(sa, B).key
    assert len(calls) == 1


def _store(auth):
    store = TrcStore()
    store.bootstrap(auth.current)
    return store


def test_trc_update_quorum():
    auth = IsdAuthority(1, 0)
    store = _store(auth)
    with pytest.raises(TrcRejected, match="quorum"):
        update_trc(store, auth.next_trc(signers=3))
    update_trc(store, auth.next_trc(signers=4))
    assert store.current_version(1) == 2


def test_trc_rotation_chain():
    auth = IsdAuthority(1, 0)
    store = _store(auth)
    v2 = auth.next_trc(signers=4, rotate=2)
    update_trc(store, v2)
    auth.adopt(v2)
    update_trc(store, auth.next_trc(signers=4))
    assert store.current_version(1) == 3


def test_trc_same_version_idempotent_or_stale():
    auth = IsdAuthority(1, 0)
    store = _store(auth)
    update_trc(store, auth.current)
    with pytest.raises(TrcRejected, match="stale"):
        update_trc(store, IsdAuthority(1, 7).current)


def test_trc_skipping_a_version_rejected():
    auth = IsdAuthority(1, 0)
    store = _store(auth)
    auth.adopt(auth.next_trc(signers=5))
    with pytest.raises(TrcRejected, match="intermediate"):
        update_trc(store, auth.next_trc(signers=5))


def test_cert_chain():
    auth = IsdAuthority(1, 0)
    store = _store(auth)
    kp = KeyPair.generate("as", 1)
    assert validate_cert_chain(auth.issue_cert(A, kp.public), store, 0.0)
    assert not validate_cert_chain(auth.issue_cert(A, kp.public, signers=1), store, 0.0)
    other = IsdAuthority(1, 99)
    assert not validate_cert_chain(other.issue_cert(A, kp.public), store, 0.0)


def test_mac_keys_rarely_collide():
    # 24-bit tags: 1000 pairs collide with probability about 1000 / 2**24
    rng = random.Random(1)
    payload = bytes(13)
    collisions = sum(truncated_mac(rng.randbytes(16), payload) == truncated_mac(rng.randbytes(16), payload)
                     for _ in range(1000))
    assert collisions <= 1


def test_mac_covers_expiry_byte():
    rng = random.Random(2)
    same = 0
    for _ in range(1000):
        key, body = rng.randbytes(16), bytearray(rng.randbytes(13))
        tag = truncated_mac(key, bytes(body))
        body[1] ^= rng.randrange(1, 256)
        same += truncated_mac(key, bytes(body)) == tag
    assert same <= 1


def test_drkey_distinct_over_peers():
    keys = {derive_drkey(AsSecrets.generate(A, 0), AsId(1, n)).key for n in range(1, 200)}
    assert len(keys) == 199


def _counting_cache():
    sa = AsSecrets.generate(A, 0)
    return DrKeyCache(B, lambda origin, requester, now: derive_drkey(sa, requester, now))


def test_drkey_refetch_after_lifetime():
    cache = _counting_cache()
    cache.fetch(A, 0.0)
    cache.fetch(A, 10.0)
    assert cache.exchanges == 1
    cache.fetch(A, 4000.0)
    assert cache.exchanges == 2


def test_drkey_fetch_failure_leaves_cache():
    def unreachable(origin, requester, now):
        raise FetchError("down")

    cache = DrKeyCache(B, unreachable)
    with pytest.raises(FetchError):
        cache.fetch(A, 0.0)
    assert cache.keys == {}


def test_scmp_tag_verifies_with_shared_key():
    sa = AsSecrets.generate(A, 0)
    cache = DrKeyCache(B, lambda origin, requester, now: derive_drkey(sa, requester, now))
    msg = scmp_auth(sa, B, ScmpType.REVOKE_INTERFACE, (A, 3), 5.0)
    assert scmp_verify(B, msg, cache, 5.0)
    assert not scmp_verify(B, replace(msg, subject=(A, 4)), cache, 5.0)


def test_cross_signing(fig):
    adjacency = fig.isd_adjacency()
    auths = {isd: IsdAuthority(isd, 0) for isd in fig.isds}
    with pytest.raises(TrcRejected):
        cross_sign(auths[1].current, auths[1], adjacency)
    trcs = {isd: a.current for isd, a in auths.items()}
    trcs[1] = cross_sign(trcs[1], auths[2], adjacency)
    assert cross_chain(1, 2, trcs, adjacency) == [2, 1]
    trcs[2] = cross_sign(trcs[2], auths[4], adjacency)
    assert 4 not in adjacency[1]
    assert cross_chain(1, 4, trcs, adjacency) == [4, 2, 1]
    with pytest.raises(TrcUnavailable):
        cross_chain(1, 3, trcs, adjacency)
