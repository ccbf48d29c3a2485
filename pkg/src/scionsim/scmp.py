"""
:mod:`scmp` --- authenticated control messages
==============================================

Each message carries a 16-byte CMAC tag under the DRKey the issuer derives
for the verifying AS, so only the issuer (or the verifier after a key
fetch) can produce it.
"""
from __future__ import annotations

import enum
import hmac
import struct
from dataclasses import dataclass

from .crypto import AsSecrets, DrKeyCache, cmac, derive_drkey
from .topology import AsId


class ScmpType(enum.IntEnum):
    REVOKE_INTERFACE = 1
    ECHO = 2
    UNREACHABLE = 3


@dataclass(frozen=True)
class ScmpMessage:
    type: ScmpType
    issuer: AsId
    verifier: AsId
    subject: tuple | None  # (AsId, interface) for revocations
    timestamp: float
    tag: bytes = b""

    def body(self) -> bytes:
        subj = self.subject[0].pack() + struct.pack("!H", self.subject[1]) if self.subject else bytes(8)
        return struct.pack("!B", self.type) + self.issuer.pack() + self.verifier.pack() + subj + \
            struct.pack("!d", self.timestamp)


def scmp_auth(issuer: AsSecrets, verifier: AsId, type: ScmpType, subject=None, timestamp: float = 0.0) -> ScmpMessage:
    msg = ScmpMessage(ScmpType(type), issuer.owner, verifier, subject, timestamp)
    key = derive_drkey(issuer, verifier).key
    return ScmpMessage(msg.type, msg.issuer, msg.verifier, subject, timestamp, cmac(key, msg.body()))


def scmp_verify(verifier: AsId, msg: ScmpMessage, cache: DrKeyCache, now: float) -> bool:
    """Check the tag with the DRKey fetched (or cached) from the issuer.

    A revocation is only acceptable from the AS owning the revoked interface.
    :class:`~scionsim.crypto.FetchError` propagates when the key cannot be
    obtained, so the caller can quarantine the message.
    """
    if msg.verifier != verifier:
        return False
    if msg.type is ScmpType.REVOKE_INTERFACE and (msg.subject is None or msg.subject[0] != msg.issuer):
        return False
    key = cache.fetch(msg.issuer, now).key
    return hmac.compare_digest(cmac(key, msg.body()), msg.tag)
