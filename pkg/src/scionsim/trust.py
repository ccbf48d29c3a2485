"""
:mod:`trust` --- TRCs, AS certificates and cross-signing
========================================================

Canonical encodings are length-prefixed field concatenations in
declaration order; every signature covers the body without signature
lists, so any holder can re-verify bytewise.
"""
from __future__ import annotations

import struct
from collections import deque
from dataclasses import dataclass, field, replace

from .crypto import KeyPair, sign, verify
from .topology import AsId


class TrcRejected(Exception):
    def __init__(self, reason):
        self.reason = reason
        super().__init__(reason)


class TrcUnavailable(LookupError):
    pass


def _field(data: bytes) -> bytes:
    return struct.pack("!H", len(data)) + data


@dataclass(frozen=True)
class Trc:
    isd: int
    version: int
    trust_roots: tuple  # ((role label, public key), ...)
    quorum_cert: int
    quorum_trc: int
    signatures: tuple = ()  # ((root index in previous version, signature), ...)
    cross_signatures: dict = field(default_factory=dict, compare=False)  # isd -> (root index, sig)

    def __post_init__(self):
        if self.version < 1 or self.quorum_cert < 1 or self.quorum_trc < 1:
            raise ValueError("TRC version and quorums must be >= 1")

    def body(self) -> bytes:
        out = [_field(struct.pack("!H", self.isd)), _field(struct.pack("!I", self.version))]
        roots = b"".join(_field(role.encode()) + _field(key) for role, key in self.trust_roots)
        out.append(_field(struct.pack("!H", len(self.trust_roots)) + roots))
        out.append(_field(struct.pack("!H", self.quorum_cert)))
        out.append(_field(struct.pack("!H", self.quorum_trc)))
        return b"".join(out)

    def root_key(self, index: int) -> bytes | None:
        if 0 <= index < len(self.trust_roots):
            return self.trust_roots[index][1]
        return None


@dataclass(frozen=True)
class AsCert:
    subject: AsId
    public_key: bytes
    valid_from: float
    valid_until: float
    trc_version: int
    cert_version: int = 1
    signatures: tuple = ()  # ((root index, signature), ...)

    def body(self) -> bytes:
        return b"".join([
            _field(self.subject.pack()),
            _field(self.public_key),
            _field(struct.pack("!dd", self.valid_from, self.valid_until)),
            _field(struct.pack("!II", self.trc_version, self.cert_version)),
        ])


def count_valid(signatures, body: bytes, roots_of: Trc, check=verify) -> int:
    seen = set()
    for index, sig in signatures:
        if index in seen:
            continue
        key = roots_of.root_key(index)
        if key is not None and check(key, body, sig):
            seen.add(index)
    return len(seen)


class TrcStore:
    """All TRC versions known to one AS, per ISD."""

    def __init__(self):
        self._trcs: dict[int, dict[int, Trc]] = {}

    def bootstrap(self, trc: Trc) -> None:
        """Install an axiomatically trusted TRC (first version loaded from a scenario)."""
        versions = self._trcs.setdefault(trc.isd, {})
        if versions:
            raise TrcRejected("already bootstrapped")
        versions[trc.version] = trc

    def current(self, isd: int) -> Trc | None:
        versions = self._trcs.get(isd)
        if not versions:
            return None
        return versions[max(versions)]

    def current_version(self, isd: int) -> int:
        trc = self.current(isd)
        return trc.version if trc else 0

    def get(self, isd: int, version: int) -> Trc | None:
        return self._trcs.get(isd, {}).get(version)

    def isds(self):
        return sorted(self._trcs)

    def versions(self, isd: int) -> list[int]:
        return sorted(self._trcs.get(isd, {}))

    def put(self, trc: Trc) -> None:
        versions = self._trcs.setdefault(trc.isd, {})
        versions[trc.version] = trc

    def copy(self) -> "TrcStore":
        other = TrcStore()
        other._trcs = {isd: dict(v) for isd, v in self._trcs.items()}
        return other


def update_trc(store: TrcStore, new: Trc) -> None:
    """Install ``new`` if the previous version's roots reached the update quorum.

    Raises :class:`TrcRejected` with reason ``"missing intermediate"``,
    ``"quorum"`` or ``"stale"``.
    """
    current = store.current(new.isd)
    if current is None:
        if new.version != 1:
            raise TrcRejected("missing intermediate")
        store.bootstrap(new)
        return
    if new.version <= current.version:
        known = store.get(new.isd, new.version)
        if known is not None and known.body() == new.body():
            return
        raise TrcRejected("stale")
    if new.version > current.version + 1:
        raise TrcRejected("missing intermediate")
    if count_valid(new.signatures, new.body(), current) < current.quorum_trc:
        raise TrcRejected("quorum")
    store.put(new)


def validate_cert_chain(cert: AsCert, store: TrcStore, now: float, fetch=None, check=verify) -> bool:
    """True iff ``cert`` carries ``quorum_cert`` valid root signatures and is in its window.

    ``fetch(isd, version)`` is consulted once when the referenced TRC version
    is unknown; it must return the missing TRCs in ascending order.
    ``check`` verifies one signature (a caching verifier may be passed).
    """
    trc = store.get(cert.subject.isd, cert.trc_version)
    if trc is None and fetch is not None:
        try:
            for t in fetch(cert.subject.isd, cert.trc_version):
                try:
                    update_trc(store, t)
                except TrcRejected:
                    pass
        except TrcUnavailable:
            return False
        trc = store.get(cert.subject.isd, cert.trc_version)
    if trc is None:
        return False
    if not cert.valid_from <= now <= cert.valid_until:
        return False
    return count_valid(cert.signatures, cert.body(), trc, check) >= trc.quorum_cert


class IsdAuthority:
    """Holds the root private keys of one ISD; mints TRCs and AS certificates."""

    def __init__(self, isd: int, seed=0, n_roots: int = 5, quorum_cert: int = 2, quorum_trc: int = 4):
        self.isd = isd
        self.seed = seed
        self.roots = [KeyPair.generate(seed, "root", isd, 1, i) for i in range(n_roots)]
        self.trcs = [Trc(isd, 1, tuple(("root-%d" % i, kp.public) for i, kp in enumerate(self.roots)),
                         quorum_cert, quorum_trc)]
        self.trcs[0] = self._self_sign(self.trcs[0], self.roots)
        self._drafts: dict[int, list] = {}

    def _self_sign(self, trc, keys):
        body = trc.body()
        return replace(trc, signatures=tuple((i, sign(k.private, body)) for i, k in enumerate(keys)))

    @property
    def current(self) -> Trc:
        return self.trcs[-1]

    def next_trc(self, signers: int, rotate: int = 0, quorum_trc=None, quorum_cert=None) -> Trc:
        """Draft the next TRC version signed by the first ``signers`` current roots.

        ``rotate`` replaces that many roots (from the end) with fresh keys.
        The draft is not adopted until :meth:`adopt` is called.
        """
        cur = self.current
        version = cur.version + 1
        roots = list(self.roots)
        for j in range(rotate):
            idx = len(roots) - 1 - j
            roots[idx] = KeyPair.generate(self.seed, "root", self.isd, version, idx)
        draft = Trc(self.isd, version, tuple(("root-%d" % i, kp.public) for i, kp in enumerate(roots)),
                    quorum_cert or cur.quorum_cert, quorum_trc or cur.quorum_trc)
        body = draft.body()
        sigs = tuple((i, sign(self.roots[i].private, body)) for i in range(min(signers, len(self.roots))))
        self._drafts[version] = roots
        return replace(draft, signatures=sigs)

    def adopt(self, trc: Trc) -> None:
        self.roots = self._drafts.pop(trc.version, self.roots)
        self.trcs.append(trc)

    def issue_cert(self, subject: AsId, public_key: bytes, signers: int | None = None,
                   valid=(0.0, 1e9), cert_version: int = 1) -> AsCert:
        trc = self.current
        cert = AsCert(subject, public_key, valid[0], valid[1], trc.version, cert_version)
        body = cert.body()
        n = trc.quorum_cert if signers is None else signers
        return replace(cert, signatures=tuple((i, sign(self.roots[i].private, body)) for i in range(n)))

    def cross_sign(self, trc: Trc, root_index: int = 0) -> tuple:
        return (root_index, sign(self.roots[root_index].private, trc.body()))


def cross_sign(trc_a: Trc, authority_b: IsdAuthority, adjacency: dict, root_index: int = 0) -> Trc:
    """Return ``trc_a`` with an added signature under ISD b's roots."""
    b = authority_b.isd
    if b == trc_a.isd:
        raise TrcRejected("self cross-sign")
    if b not in adjacency.get(trc_a.isd, ()):
        raise TrcRejected("ISDs %d and %d share no link" % (trc_a.isd, b))
    sigs = dict(trc_a.cross_signatures)
    sigs[b] = authority_b.cross_sign(trc_a, root_index)
    return replace(trc_a, cross_signatures=sigs)


def cross_chain(target: int, anchor: int, trcs: dict[int, Trc], adjacency: dict) -> list[int]:
    """Shortest ISD chain ``anchor -> ... -> target`` along which cross-signatures verify.

    Breadth-first search over ISD adjacency; neighbors are explored in
    ascending ISD order, so the first shortest chain found is also the
    lexicographically smallest. Raises :class:`TrcUnavailable` if none.
    """
    if target == anchor:
        return [anchor]
    prev = {anchor: None}
    queue = deque([anchor])
    while queue:
        cur = queue.popleft()
        for nxt in sorted(adjacency.get(cur, ())):
            if nxt in prev or nxt not in trcs:
                continue
            sig = trcs[nxt].cross_signatures.get(cur)
            signer_trc = trcs.get(cur)
            if sig is None or signer_trc is None:
                continue
            key = signer_trc.root_key(sig[0])
            if key is None or not verify(key, trcs[nxt].body(), sig[1]):
                continue
            prev[nxt] = cur
            if nxt == target:
                chain = [nxt]
                while prev[chain[-1]] is not None:
                    chain.append(prev[chain[-1]])
                return chain[::-1]
            queue.append(nxt)
    raise TrcUnavailable("no cross-signature chain from ISD %d to ISD %d" % (anchor, target))
