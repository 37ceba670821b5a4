"""Three-party simulated network: ownership, channels, isolation, metering.

The harness owns the joint quantum state, tracks which party holds each
register, enforces that the two servers never exchange anything, and meters
every communication-complexity quantity.  Entangled pairs promised in the
sharing step are metered immediately but materialized in the joint state
lazily, on first access, which keeps live dimensions small in multi-round
protocols.

A d-dimensional register counts log2(d) qubits (fractional for non-powers
of two), matching the complexity table's log-d entries read base 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernel import GlobalState

USER = "user"
SERVER1 = "server1"
SERVER2 = "server2"
PARTIES = (USER, SERVER1, SERVER2)


class AfterStartError(RuntimeError):
    """Entanglement sharing attempted after the query phase began."""


class ServerCollusionError(RuntimeError):
    """A server addressed the other server."""


class NotOwnerError(RuntimeError):
    pass


class AccessDeniedError(RuntimeError):
    pass


@dataclass
class Transcript:
    """Metered counters plus the ordered event log of one protocol run."""

    upload_bits: int = 0
    upload_qubits: float = 0.0
    download_qubits: float = 0.0
    ebits_consumed: float = 0.0
    rounds: int = 0
    success: bool = False
    messages: list[dict] = field(default_factory=list)

    def counters(self) -> dict:
        return {
            "upload_bits": self.upload_bits,
            "upload_qubits": self.upload_qubits,
            "download_qubits": self.download_qubits,
            "ebits_consumed": self.ebits_consumed,
            "rounds": self.rounds,
        }


class Network:
    """One protocol run's channels, ownership table and meters."""

    def __init__(self):
        self.state = GlobalState()
        self.owner: dict[str, str] = {}
        self.transcript = Transcript()
        self.started = False
        self._pending: dict[str, tuple[str, str, int]] = {}
        self._pending_ops: dict[str, list] = {}
        self._step = 0
        # checker hook: called with (party, labels, reduced_state) before a send
        self.before_send_hook = None

    # -- event log ----------------------------------------------------------

    def _log(self, actor: str, action: str, **info) -> None:
        event = {"step": self._step, "actor": actor, "action": action}
        event.update(info)
        self.transcript.messages.append(event)
        self._step += 1

    # -- setup --------------------------------------------------------------

    def share_entanglement(self, pairs: list[tuple[str, str, int]], defer_metering: bool = False) -> None:
        """Record maximally entangled pairs (label1 to server1, label2 to server2).

        Must precede the query phase.  Ebits are metered now (unless the
        caller defers metering to consumption time, as the adaptive protocol
        does for its "in average" accounting); each pair is materialized in
        the joint state on first access.
        """
        if self.started:
            raise AfterStartError("entanglement sharing after protocol start")
        for l1, l2, dim in pairs:
            self._pending[l1] = (l1, l2, dim)
            self._pending[l2] = (l1, l2, dim)
            self.owner[l1] = SERVER1
            self.owner[l2] = SERVER2
            if not defer_metering:
                self.transcript.ebits_consumed += math.log2(dim)
        self._log(
            "dealer",
            "share_entanglement",
            labels=[[l1, l2] for l1, l2, _ in pairs],
            dims=[dim for _, _, dim in pairs],
            deferred=defer_metering,
        )

    def meter_ebits(self, amount: float) -> None:
        """Deferred-consumption metering (one adaptive round's worth)."""
        self.transcript.ebits_consumed += amount

    def mark_started(self) -> None:
        self.started = True

    def materialize(self, labels) -> None:
        labels = [labels] if isinstance(labels, str) else list(labels)
        for lbl in labels:
            spec = self._pending.pop(lbl, None)
            if spec is None:
                continue
            l1, l2, dim = spec
            self._pending.pop(l1, None)
            self._pending.pop(l2, None)
            self.state.attach_pair(l1, l2, dim)
            for queued_label in (l1, l2):
                for op in self._pending_ops.pop(queued_label, []):
                    self.state.apply([queued_label], op)

    def discard_pending(self) -> None:
        """Forget promised pairs that were never touched (end of a run)."""
        self._pending.clear()
        self._pending_ops.clear()

    # -- ownership ----------------------------------------------------------

    def access_check(self, party: str, label: str) -> None:
        owner = self.owner.get(label)
        if owner != party:
            raise AccessDeniedError(f"{party} cannot touch {label} (owner: {owner})")

    def attach_local(self, party: str, label: str, dim: int, initial) -> None:
        """A party prepares a fresh local register (not metered)."""
        self.state.attach(label, dim, initial)
        self.owner[label] = party
        self._log(party, "prepare", labels=[label], dim=dim)

    # -- channels -----------------------------------------------------------

    @staticmethod
    def _check_edge(frm: str, to: str) -> None:
        if frm == to:
            raise ValueError("sender equals receiver")
        if {frm, to} == {SERVER1, SERVER2}:
            raise ServerCollusionError(f"{frm} -> {to} violates server isolation")

    def send_classical(self, frm: str, to: str, bits) -> None:
        """Transmit a bit string; uploads (user to server) are metered."""
        self._check_edge(frm, to)
        bits = list(int(b) for b in bits)
        if frm == USER:
            self.transcript.upload_bits += len(bits)
        self._log(frm, "send_classical", to=to, bits=bits)

    def send_quantum(self, frm: str, to: str, labels) -> None:
        """Transfer register ownership; qubit counts metered by direction."""
        self._check_edge(frm, to)
        labels = [labels] if isinstance(labels, str) else list(labels)
        for lbl in labels:
            if self.owner.get(lbl) != frm:
                raise NotOwnerError(f"{frm} does not own {lbl}")
        if self.before_send_hook is not None:
            self.before_send_hook(frm, labels, self._owned_snapshot(frm))
        qubits = sum(math.log2(self._dim_of(lbl)) for lbl in labels)
        if frm == USER:
            self.transcript.upload_qubits += qubits
        if to == USER:
            self.transcript.download_qubits += qubits
        for lbl in labels:
            self.owner[lbl] = to
        self._log(frm, "send_quantum", to=to, labels=labels)

    def _dim_of(self, label: str) -> int:
        if label in self._pending:
            return self._pending[label][2]
        return self.state.dim_of(label)

    def _owned_snapshot(self, party: str):
        owned = sorted(lbl for lbl, p in self.owner.items() if p == party)
        if not owned:
            return None
        self.materialize(owned)
        return self.state.partial_trace([lbl for lbl in owned if lbl in self.state.labels])

    # -- state operations (all routed through access checks) -----------------

    def apply(self, party: str, labels, op, out=None) -> None:
        labels = [labels] if isinstance(labels, str) else list(labels)
        for lbl in labels:
            self.access_check(party, lbl)
        if out is None and len(labels) == 1 and labels[0] in self._pending:
            # single-register ops on a promised pair commute with everything
            # touching other registers; queue until materialization
            self._pending_ops.setdefault(labels[0], []).append(np.asarray(op, dtype=complex))
            self._log(party, "apply", labels=labels, deferred=True)
            return
        self.materialize(labels)
        self.state.apply(labels, op, out=out)
        if out is not None:
            for lbl in labels:
                self.owner.pop(lbl, None)
            for name, _ in out:
                self.owner[name] = party
        self._log(party, "apply", labels=labels)

    def measure_computational(self, party, label, rng, remove=True, force=None):
        self.access_check(party, label)
        self.materialize([label])
        outcome, prob = self.state.measure_computational(label, rng, remove=remove, force=force)
        if remove:
            self.owner.pop(label, None)
        self._log(party, "measure", labels=[label], outcome=outcome)
        return outcome, prob

    def measure_bell(self, party, label_pair, rng, force=None):
        for lbl in label_pair:
            self.access_check(party, lbl)
        self.materialize(list(label_pair))
        (a, b), prob = self.state.measure_bell(tuple(label_pair), rng, force=force)
        for lbl in label_pair:
            self.owner.pop(lbl, None)
        self._log(party, "measure_bell", labels=list(label_pair), outcome=[a, b])
        return (a, b), prob

    def apply_instrument(self, party, labels, kraus_ops, rng, out=None, force=None):
        labels = [labels] if isinstance(labels, str) else list(labels)
        for lbl in labels:
            self.access_check(party, lbl)
        self.materialize(labels)
        idx, prob = self.state.apply_instrument(labels, kraus_ops, rng, out=out, force=force)
        if out is not None:
            for lbl in labels:
                self.owner.pop(lbl, None)
            for name, _ in out:
                self.owner[name] = party
        self._log(party, "instrument", labels=labels, outcome=idx)
        return idx, prob

    def ideal_merge(self, party, coarse, fine, out_label, expected=None):
        for lbl in (coarse, fine):
            self.access_check(party, lbl)
        self.materialize([coarse, fine])
        self.state.ideal_merge(coarse, fine, out_label, expected=expected)
        self.owner.pop(coarse, None)
        self.owner.pop(fine, None)
        self.owner[out_label] = party
        self._log(party, "merge", labels=[coarse, fine], out=out_label)

    def drop(self, party, labels) -> None:
        labels = [labels] if isinstance(labels, str) else list(labels)
        for lbl in labels:
            self.access_check(party, lbl)
        # a promised pair dropped whole never needs materializing; dropping
        # one half leaves the partner mixed, so that case materializes first
        remaining = []
        seen = set(labels)
        handled: set[str] = set()
        for lbl in labels:
            if lbl in handled:
                continue
            spec = self._pending.get(lbl)
            if spec is not None and spec[0] in seen and spec[1] in seen:
                for half in (spec[0], spec[1]):
                    self._pending.pop(half, None)
                    self._pending_ops.pop(half, None)
                    self.owner.pop(half, None)
                    handled.add(half)
                continue
            remaining.append(lbl)
        if remaining:
            self.materialize(remaining)
            for lbl in remaining:
                self.owner.pop(lbl, None)
            self.state.drop(remaining)
        self._log(party, "discard", labels=labels)
