"""
:mod:`adversary` --- forged control and data messages
=====================================================

Each function builds what a misbehaving AS (or a host inside it) could
produce with its own keys only. The engine injects the results like any
other message, so they meet exactly the checks honest traffic meets.
"""
from __future__ import annotations

import random
from dataclasses import replace

from .beaconing import HopEntry, Pcb, extend_pcb
from .combiner import EndToEndPath
from .crypto import AsSecrets, cmac, derive_drkey, sign
from .opaque import DEFAULT_EXPIRY_UNITS, OpaqueField, build_of
from .scmp import ScmpMessage, ScmpType
from .topology import AsId, Topology


def forge_pcbs(topo: Topology, attacker: AsSecrets, base: Pcb, arrival_if: int, egress_if: int, now: float,
               trc_version: int = 1) -> list[Pcb]:
    """PCBs claiming adjacencies that do not exist, leaving through ``egress_if`` (0: terminal).

    * a hop impersonating an AS the attacker is not linked to, signed and
      MAC'd with the attacker's keys, followed by the attacker's own hop;
    * the attacker's own hop entering through an interface it does not have;
    * the attacker's own hop announcing a peering link that does not exist.
    """
    me = attacker.owner
    if not base.hops:
        return []
    out = []
    bogus_if = max(topo.node(me).interfaces, default=0) + 50
    neighbours = {link.other(me)[0] for link in topo.node(me).interfaces.values()}
    fake = next((a for a in sorted(topo.ases) if a != me and a not in neighbours and a not in base.as_path()), None)
    if fake is not None:
        of = build_of(attacker, 0, DEFAULT_EXPIRY_UNITS, 1, 1, base.last.of)
        hop = HopEntry(fake, 1, 1, of, (), trc_version, 1)
        draft = Pcb(base.info, base.hops + (hop,))
        sig = sign(attacker.signing.private, draft.signing_material(len(draft.hops) - 1))
        forged = Pcb(base.info, base.hops + (replace(hop, signature=sig),))
        out.append(extend_pcb(forged, me, bogus_if, egress_if, (), now, attacker, trc_version))
    out.append(extend_pcb(base, me, bogus_if, egress_if, (), now, attacker, trc_version))
    out.append(extend_pcb(base, me, arrival_if, egress_if, ((fake or me, 7, bogus_if),), now, attacker, trc_version))
    return out


def hijack_pcb(attacker: AsSecrets, base: Pcb, arrival_if: int, egress_if: int, now: float,
               trc_version: int = 1) -> Pcb | None:
    """Drop the intermediate hops of ``base`` and append the attacker's own, re-signed hop.

    Returns None when ``base`` has nothing to cut.
    """
    if len(base.hops) < 2 or any(h.as_id == attacker.owner for h in base.hops[:1]):
        return None
    cut = Pcb(base.info, base.hops[:1])
    return extend_pcb(cut, attacker.owner, arrival_if, egress_if, (), now, attacker, trc_version)


def hijack_rewired(attacker: AsSecrets, base: Pcb, arrival_if: int, egress_if: int, now: float,
                   trc_version: int = 1) -> Pcb | None:
    """Like :func:`hijack_pcb` but also points the origin hop's egress at the attacker."""
    if len(base.hops) < 2 or any(h.as_id == attacker.owner for h in base.hops[:1]):
        return None
    first: HopEntry = base.hops[0]
    of = OpaqueField(first.of.flags, first.of.expiry, first.of.ingress, arrival_if, first.of.mac)
    cut = Pcb(base.info, (replace(first, egress_if=arrival_if, of=of),))
    return extend_pcb(cut, attacker.owner, arrival_if, egress_if, (), now, attacker, trc_version)


def random_mac_path(path: EndToEndPath, rng: random.Random) -> EndToEndPath:
    """The same path with every opaque field's MAC replaced by random bits."""
    parts = []
    for part in path.parts:
        ofs = tuple(OpaqueField(of.flags, of.expiry, of.ingress, of.egress, rng.getrandbits(24)) for of in part.ofs)
        parts.append(replace(part, ofs=ofs))
    return replace(path, parts=tuple(parts))


def forge_revocation(attacker: AsSecrets, claimed_issuer: AsId, subject: tuple, verifier: AsId,
                     now: float) -> ScmpMessage:
    """A revocation in the name of ``claimed_issuer``, tagged with the attacker's own DRKey."""
    msg = ScmpMessage(ScmpType.REVOKE_INTERFACE, claimed_issuer, verifier, subject, now)
    key = derive_drkey(attacker, verifier).key
    return replace(msg, tag=cmac(key, msg.body()))
