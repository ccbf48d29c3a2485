"""
:mod:`crypto` --- signatures, MACs and DRKey derivation
=======================================================

Ed25519 for signatures, AES-CMAC as the PRF behind hop-field MACs and
DRKeys. Key material is derived from seeds so that every run is
reproducible.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey
from cryptography.hazmat.primitives.ciphers import algorithms
from cryptography.hazmat.primitives.cmac import CMAC

from .topology import AsId

ED25519 = 1
MAC_PAYLOAD_MAX = 32
DRKEY_LIFETIME = 3600.0

_RAW = dict(encoding=serialization.Encoding.Raw, format=serialization.PublicFormat.Raw)


class CryptoError(ValueError):
    pass


def seed_bytes(*parts, size=32) -> bytes:
    """Deterministic key material from an arbitrary tuple of labels."""
    h = hashlib.sha512("|".join(str(p) for p in parts).encode()).digest()
    return h[:size]


@dataclass(frozen=True)
class KeyPair:
    public: bytes
    private: bytes
    scheme_tag: int = ED25519

    @classmethod
    def generate(cls, *seed) -> "KeyPair":
        sk = Ed25519PrivateKey.from_private_bytes(seed_bytes("ed25519", *seed))
        return cls(sk.public_key().public_bytes(**_RAW), seed_bytes("ed25519", *seed))


_priv_cache: dict = {}
_pub_cache: dict = {}


def _private(key: bytes):
    sk = _priv_cache.get(key)
    if sk is None:
        if len(key) != 32:
            raise CryptoError("malformed private key")
        sk = _priv_cache[key] = Ed25519PrivateKey.from_private_bytes(key)
    return sk


def _public(key: bytes):
    pk = _pub_cache.get(key)
    if pk is None:
        if len(key) != 32:
            raise CryptoError("malformed public key")
        try:
            pk = _pub_cache[key] = Ed25519PublicKey.from_public_bytes(key)
        except ValueError as exc:
            raise CryptoError(str(exc)) from None
    return pk


def sign(private: bytes, message: bytes) -> bytes:
    return _private(private).sign(message)


def verify(public: bytes, message: bytes, signature: bytes) -> bool:
    try:
        _public(public).verify(signature, message)
    except InvalidSignature:
        return False
    return True


class VerifyCache:
    """Memoizes successful signature checks, as a certificate server would."""

    def __init__(self):
        self._ok = set()
        self.hits = 0
        self.misses = 0

    def verify(self, public, message, signature) -> bool:
        key = (public, hashlib.sha256(message).digest(), signature)
        if key in self._ok:
            self.hits += 1
            return True
        self.misses += 1
        if verify(public, message, signature):
            self._ok.add(key)
            return True
        return False


def cmac(key: bytes, payload: bytes) -> bytes:
    if len(key) != 16:
        raise CryptoError("CMAC key must be 16 bytes")
    c = CMAC(algorithms.AES(key))
    c.update(payload)
    return c.finalize()


def truncated_mac(mac_secret: bytes, payload: bytes, bits: int = 24) -> int:
    """Keyed PRF over ``payload`` truncated to its leading ``bits`` bits."""
    if len(payload) > MAC_PAYLOAD_MAX:
        raise CryptoError("MAC payload longer than %d bytes" % MAC_PAYLOAD_MAX)
    return int.from_bytes(cmac(mac_secret, payload), "big") >> (128 - bits)


@dataclass(frozen=True)
class AsSecrets:
    owner: AsId
    signing: KeyPair
    mac_secret: bytes
    drkey_secret: bytes

    @classmethod
    def generate(cls, owner: AsId, seed=0, epoch=0) -> "AsSecrets":
        return cls(
            owner,
            KeyPair.generate(seed, "as-sign", owner, epoch),
            seed_bytes(seed, "as-mac", owner, epoch, size=16),
            seed_bytes(seed, "as-drkey", owner, epoch, size=16),
        )


@dataclass(frozen=True)
class DrKey:
    from_as: AsId
    to_as: AsId
    key: bytes
    fetched_at: float = 0.0


def derive_drkey(secrets: AsSecrets, peer: AsId, now: float = 0.0) -> DrKey:
    return DrKey(secrets.owner, peer, cmac(secrets.drkey_secret, peer.pack()), now)


class FetchError(RuntimeError):
    pass


class DrKeyCache:
    """Per-AS cache of DRKeys obtained from other ASes.

    ``fetcher(origin, requester, now)`` performs the signed request/response
    exchange and returns the :class:`DrKey`; it raises :class:`FetchError`
    when the origin is unreachable.
    """

    def __init__(self, owner: AsId, fetcher, lifetime: float = DRKEY_LIFETIME):
        self.owner = owner
        self.fetcher = fetcher
        self.lifetime = lifetime
        self.keys: dict[AsId, DrKey] = {}
        self.exchanges = 0

    def fetch(self, origin: AsId, now: float) -> DrKey:
        cached = self.keys.get(origin)
        if cached is not None and now - cached.fetched_at < self.lifetime:
            return cached
        key = self.fetcher(origin, self.owner, now)
        self.exchanges += 1
        key = DrKey(key.from_as, key.to_as, key.key, now)
        self.keys[origin] = key
        return key


def fetch_drkey(requester: AsId, origin: AsId, now: float, cache: DrKeyCache) -> DrKey:
    if cache.owner != requester:
        raise ValueError("cache belongs to %s, not %s" % (cache.owner, requester))
    return cache.fetch(origin, now)
