"""Deterministic simulated network and mobile adversary.

Messages travel as addressed envelopes: sealed payloads reach only their
addressee (the secure channel is axiomatic), broadcasts and commitment
multicasts are public. Delivery is reliable and always lands within the
sending epoch, which is what the per-subtree synchronization assumption
demands of the transport.

The adversary hops between hosts at epoch boundaries, holding at most its
per-epoch budget of nodes at a time. On an occupied node it reads all
local state (share, registration token, round key) and controls outgoing
protocol messages; it cannot break the sealed channel toward anyone else.
Renewal counts as completing within the period, so an occupation exposes
the occupied epoch's share value, never an earlier one. Hardness of the
curve discrete log is not simulated: secrecy assertions are structural
(what the adversary state holds), not computational.

The world is a single state machine advanced by one logical thread;
independent scenarios can run in parallel with no shared state. Every run
is a pure function of (scenario, seed).
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace

from .config import ScenarioConfig, expand_tree
from .errors import InvariantViolation
from .hierarchy import ROOT_ID, HierarchyTree, RoundState
from .proactive import (
    ClaimRecord,
    EpochClock,
    RenewalBundle,
    file_claim,
    renewal_round,
)
from .sharing import (
    DealerState,
    EvalPointCollision,
    InsufficientShares,
    ShareRecord,
    StaleEpoch,
    distribute,
    knowledge_closure,
    minimal_reconstructing_set,
    reconstruct,
)

# Phase offsets inside an epoch: request, deliver, renew, resolve.
PHASE_REQUEST = 0
PHASE_DELIVER = 1
PHASE_RENEW = 2
PHASE_RESOLVE = 3
_KIND_PHASE = {
    "reqm": PHASE_REQUEST,
    "round-key": PHASE_REQUEST,
    "leave": PHASE_REQUEST,
    "share": PHASE_DELIVER,
    "renewal-delta": PHASE_RENEW,
    "commitments": PHASE_RENEW,
    "claim": PHASE_RESOLVE,
}

MESSAGE_KINDS = tuple(sorted(_KIND_PHASE))

# Toy-curve rounds collide often (9 usable x-coordinates, two of them on
# x = 0), so the retry budget is generous; each retry is one fresh round.
_DEAL_ATTEMPTS = 128


@dataclass(frozen=True)
class Envelope:
    """One addressed message; sealed payloads are opaque to everyone but
    the recipients (unless a recipient is currently compromised)."""

    kind: str
    sender: int
    recipients: tuple[int, ...]
    payload: object
    sealed: bool
    epoch: int
    sent_tick: int
    delivered_tick: int


@dataclass
class StolenShare:
    """A share value copied off a compromised host, tagged with the round
    and epoch it was valid for."""

    round_id: int
    epoch: int
    record: ShareRecord


@dataclass
class AdversaryState:
    """Mobile adversary: strategy, occupation, and accumulated knowledge.

    Stolen knowledge persists across cleanses (what was copied stays
    copied); tokens and shares may only ever belong to nodes that were
    compromised at some point, which the run asserts every epoch.
    """

    strategy: str
    budget: int
    targets: tuple[int, ...] = ()
    script: tuple[dict, ...] = ()
    occupied: set[int] = field(default_factory=set)
    compromise_epochs: dict[int, int] = field(default_factory=dict)
    stolen_shares: dict[tuple[int, int, int], StolenShare] = field(default_factory=dict)
    stolen_tokens: dict[int, int] = field(default_factory=dict)
    observed_commitments: int = 0
    cursor: int = 0

    @property
    def ever_compromised(self) -> set[int]:
        return set(self.compromise_epochs)


def adversary_observe(adv: AdversaryState, envelope: Envelope) -> None:
    """Let the adversary read an envelope: sealed payloads only when the
    addressee is currently occupied, public ones always (but commitments
    yield no coefficients — only the points are seen)."""
    if envelope.sealed:
        for recipient in envelope.recipients:
            if recipient in adv.occupied:
                if envelope.kind == "share" and isinstance(envelope.payload, ShareRecord):
                    record = envelope.payload
                    key = (record.round_id, record.epoch, record.owner)
                    adv.stolen_shares[key] = StolenShare(
                        round_id=record.round_id, epoch=record.epoch, record=record
                    )
    elif envelope.kind == "commitments":
        adv.observed_commitments += 1


def _script_for_epoch(adv: AdversaryState, epoch: int) -> dict:
    merged: dict = {"compromise": [], "tamper": [], "false_claims": []}
    for entry in adv.script:
        if entry["epoch"] != epoch:
            continue
        merged["compromise"].extend(entry.get("compromise", []))
        merged["tamper"].extend(entry.get("tamper", []))
        merged["false_claims"].extend(entry.get("false_claims", []))
    return merged


def adversary_hop(adv: AdversaryState, tree: HierarchyTree, epoch: int) -> None:
    """Pick the occupied set for the epoch: scripted sets verbatim, other
    strategies rotate deterministically through the target list."""
    if adv.strategy == "scripted":
        chosen = sorted(set(_script_for_epoch(adv, epoch)["compromise"]))
    else:
        pool = list(adv.targets) or sorted(tree.nodes)
        chosen = []
        if adv.budget > 0 and pool:
            for _ in range(min(adv.budget, len(pool))):
                chosen.append(pool[adv.cursor % len(pool)])
                adv.cursor += 1
    adv.occupied = set(chosen)
    for uid in chosen:
        adv.compromise_epochs.setdefault(uid, epoch)


def adversary_act(
    adv: AdversaryState, tree: HierarchyTree, shares: dict[int, ShareRecord], epoch: int
):
    """Protocol perturbations for the epoch: a tamper hook for renewal
    bundles plus any false claims. Passive strategies perturb nothing."""
    tampered_pairs: set[tuple[int, int]] = set()
    claims: list[ClaimRecord] = []

    if adv.strategy == "active-corruptor":
        for parent in sorted(adv.occupied):
            if parent in tree.nodes and tree.active_children(parent):
                for child in tree.active_children(parent):
                    tampered_pairs.add((parent, child))
    elif adv.strategy == "false-claimer":
        for uid in sorted(adv.occupied):
            if uid in tree.nodes and tree.nodes[uid].active and uid in shares:
                claims.append(file_claim(tree, uid, tree.nodes[uid].parent, epoch))
    elif adv.strategy == "scripted":
        entry = _script_for_epoch(adv, epoch)
        for tam in entry["tamper"]:
            kids = tam["children"] or tree.active_children(tam["parent"])
            for child in kids:
                tampered_pairs.add((tam["parent"], child))
        for fc in entry["false_claims"]:
            for claimer in fc["claimers"]:
                claims.append(file_claim(tree, claimer, fc["accused"], epoch))

    def perturb(bundle: RenewalBundle) -> RenewalBundle:
        if (bundle.sender, bundle.recipient) not in tampered_pairs:
            return bundle
        if bundle.sender not in adv.occupied:
            return bundle
        one = bundle.delta.params.one
        return replace(bundle, delta=bundle.delta + one)

    return (perturb if tampered_pairs else None), claims


@dataclass
class SimReport:
    """Per-epoch accounting plus the final outcome; a pure function of
    (scenario, seed)."""

    scenario: str
    seed: int
    rows: list[dict] = field(default_factory=list)
    final: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "report_schema": 1,
            "scenario": self.scenario,
            "seed": str(self.seed),
            "rows": self.rows,
            "final": self.final,
        }


class World:
    """The whole simulation: tree, dealer, shares, adversary, clock, log."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.curve = config.curve_params()
        self.field = config.field_params()
        self.rng = random.Random(config.seed)
        self.tree = HierarchyTree(self.curve, self.field)
        self.dealer = DealerState(secret=self.field.element(config.secret))
        self.shares: dict[int, ShareRecord] = {}
        self.clock = EpochClock()
        self.epoch = 0
        self.round_id = 0
        self.envelopes: list[Envelope] = []
        self.message_counts: dict[str, int] = {}
        self.report = SimReport(scenario=config.name, seed=config.seed)
        adv = config.adversary
        self.adversary = AdversaryState(
            strategy=adv.strategy,
            budget=adv.budget,
            targets=adv.targets,
            script=adv.script,
        )
        self._register_all()

    # -- construction -------------------------------------------------------

    def _register_all(self) -> None:
        for _uid, parent in expand_tree(self.config.tree):
            self.tree.register(parent, self.rng)

    # -- messaging ----------------------------------------------------------

    def _tick(self, kind: str) -> int:
        per = self.config.ticks_per_epoch
        return self.epoch * per + min(_KIND_PHASE[kind], per - 1)

    def send(self, kind: str, sender: int, recipients: tuple[int, ...], payload, sealed: bool) -> None:
        tick = self._tick(kind)
        envelope = Envelope(
            kind=kind,
            sender=sender,
            recipients=recipients,
            payload=payload,
            sealed=sealed,
            epoch=self.epoch,
            sent_tick=tick,
            delivered_tick=tick,
        )
        self.envelopes.append(envelope)
        self.message_counts[kind] = self.message_counts.get(kind, 0) + 1
        self.clock.tick = max(self.clock.tick, tick)
        adversary_observe(self.adversary, envelope)

    def _drain_counts(self) -> dict[str, int]:
        counts = self.message_counts
        self.message_counts = {}
        return counts

    # -- dealing ------------------------------------------------------------

    def _broadcast_round(self, round_state: RoundState) -> None:
        if self.curve is not None:
            self.send(
                "round-key", ROOT_ID, tuple(self.tree.active_users()),
                round_state.public_key, False,
            )

    def _request_messages(self) -> None:
        levels = self.tree.levels()
        for level in sorted(levels):
            for uid in levels[level]:
                node = self.tree.nodes[uid]
                self.send(
                    "reqm", uid, (ROOT_ID,),
                    (uid, node.parent, len(self.tree.active_children(uid))), False,
                )

    def _leave(self, uid: int) -> set[int]:
        self.send("leave", uid, tuple(self.tree.active_users()), uid, False)
        return self.tree.leave(uid)

    def deal(self, mid_round_leaves: tuple[int, ...] = ()) -> None:
        """One full distribution round, including the mid-round leave
        policy: 'abort' applies the leave and restarts cleanly, 'finish'
        completes dealing to the pre-leave membership first."""
        pending = list(mid_round_leaves)
        if pending and self.config.leave_policy == "abort":
            # The aborted partial round still produced traffic.
            aborted = self.tree.begin_round(self.rng)
            self._broadcast_round(aborted)
            for uid in pending:
                self._leave(uid)
            pending = []
        self._deal_once()
        for uid in pending:
            self._leave(uid)

    def _deal_once(self) -> None:
        last_error: Exception | None = None
        for _ in range(_DEAL_ATTEMPTS):
            round_state = self.tree.begin_round(self.rng)
            self._broadcast_round(round_state)
            self.tree.assign_round_keys(round_state)
            self._request_messages()
            try:
                shares = distribute(
                    self.tree, self.dealer, round_state, self.config.tf,
                    self.rng, self.config.eval_mode,
                )
            except EvalPointCollision as exc:
                last_error = exc
                continue
            self.shares = shares
            self.round_id = round_state.round_id
            self.clock = EpochClock(
                epochs={gid: 0 for gid in self._subtree_roots()}, tick=self.clock.tick
            )
            for record in [shares[uid] for uid in sorted(shares)]:
                self.send("share", ROOT_ID, (record.owner,), record, True)
            return
        raise last_error

    def _subtree_roots(self) -> list[int]:
        roots = [ROOT_ID] + [
            uid for uid in self.tree.active_users() if self.tree.active_children(uid)
        ]
        return [r for r in roots if any(c in self.shares for c in self.tree.active_children(r))]

    # -- epoch stepping -------------------------------------------------------

    def _process_events(self, epoch: int) -> list[str]:
        notes = []
        redeal = False
        mid_round: list[int] = []
        for event in self.config.events:
            if event["epoch"] != epoch:
                continue
            if event["kind"] == "leave":
                if event.get("mid_round"):
                    mid_round.append(event["user"])
                    notes.append(f"leave:{event['user']}:mid-round")
                else:
                    gone = self._leave(event["user"])
                    notes.append(f"leave:{event['user']}:deactivated={len(gone)}")
            elif event["kind"] == "rejoin":
                self.tree.rejoin(event["user"], self.rng)
                notes.append(f"rejoin:{event['user']}")
            elif event["kind"] == "redeal":
                redeal = True
        if redeal or mid_round:
            self.deal(mid_round_leaves=tuple(mid_round))
            notes.append(f"redeal:round={self.round_id}")
        return notes

    def adversary_can_reconstruct(self) -> bool:
        """Whether any single-(round, epoch) slice of the stolen shares
        reaches the secret via the knowledge closure."""
        slices: dict[tuple[int, int], dict[int, ShareRecord]] = {}
        for stolen in self.adversary.stolen_shares.values():
            slices.setdefault((stolen.round_id, stolen.epoch), {})[
                stolen.record.owner
            ] = stolen.record
        return any(
            knowledge_closure(self.tree, members)
            for _key, members in sorted(slices.items())
        )

    def step_epoch(self) -> dict:
        """Advance one epoch: events, adversary hop, renewal, claim
        resolution, cleanse, report row."""
        self.epoch += 1
        notes = self._process_events(self.epoch)
        adversary_hop(self.adversary, self.tree, self.epoch)
        perturb, false_claims = adversary_act(
            self.adversary, self.tree, self.shares, self.epoch
        )

        verdicts = []
        claims = []
        if self.config.renewal_enabled and self._subtree_roots():
            outcome = renewal_round(
                self.tree, self.shares, self.epoch, self.rng,
                perturb=perturb, extra_claims=false_claims,
                on_message=self.send,
            )
            self.shares = outcome.shares
            claims = list(outcome.claims)
            verdicts = list(outcome.verdicts)
            for gid in outcome.advanced:
                self.clock.advance(gid)

        self._steal_state()
        cleansed = self._cleanse(verdicts)
        self._check_invariants()

        row = {
            "epoch": self.epoch,
            "messages": dict(sorted(self._drain_counts().items())),
            "compromised": sorted(self.adversary.occupied),
            "claims": len(claims),
            "verdicts": [
                {
                    "accused": v.accused,
                    "outcome": v.outcome,
                    "claims": v.claim_count,
                    "claimers": list(v.claimers),
                }
                for v in verdicts
            ],
            "cleansed": cleansed,
            "adversary_can_reconstruct": self.adversary_can_reconstruct(),
            "herzberg_all_pairs": self._herzberg_count(),
            "secret_intact": self._secret_intact(),
            "events": notes,
        }
        row["messages_total"] = sum(row["messages"].values())
        self.report.rows.append(row)
        return row

    def _herzberg_count(self) -> int:
        """All-pairs renewal traffic of the flat baseline on the same
        membership: every node sends every other node a polynomial."""
        n = len(self.tree.active_users()) + 1
        return n * (n - 1)

    def _secret_intact(self) -> bool:
        participants = [uid for uid in self.tree.active_users() if uid in self.shares]
        try:
            return reconstruct(self.tree, self.shares, participants) == self.dealer.secret
        except (InsufficientShares, StaleEpoch):
            return False

    def _steal_state(self) -> None:
        for uid in sorted(self.adversary.occupied):
            if uid not in self.tree.nodes:
                continue
            node = self.tree.nodes[uid]
            if node.reg_token is not None:
                self.adversary.stolen_tokens[uid] = node.reg_token
            record = self.shares.get(uid)
            if record is not None:
                key = (record.round_id, record.epoch, uid)
                self.adversary.stolen_shares[key] = StolenShare(
                    round_id=record.round_id, epoch=record.epoch, record=record
                )

    def _cleanse(self, verdicts) -> list[int]:
        cleansed = []
        for verdict in verdicts:
            if verdict.outcome == "accused-compromised":
                suspects = [verdict.accused]
            else:
                suspects = list(verdict.claimers)
            for uid in suspects:
                if uid in self.adversary.occupied:
                    self.adversary.occupied.discard(uid)
                    cleansed.append(uid)
        return sorted(cleansed)

    # -- invariants ------------------------------------------------------------

    def _check_invariants(self) -> None:
        per = self.config.ticks_per_epoch
        for env in self.envelopes:
            if not (env.epoch * per <= env.delivered_tick < (env.epoch + 1) * per):
                raise InvariantViolation(
                    "within-epoch-delivery",
                    f"envelope {env.kind} delivered at tick {env.delivered_tick} "
                    f"outside epoch {env.epoch}",
                )
        owners = [rec.owner for rec in self.shares.values()]
        if len(owners) != len(set(owners)):
            raise InvariantViolation("single-share-per-user")
        for rec in self.shares.values():
            if rec.value.params != self.field or rec.eval_point.params != self.field:
                raise InvariantViolation("single-field-modulus")
        xs = [key.x for key in self.tree.server_group_keys.values()]
        if len(xs) != len(set(xs)):
            raise InvariantViolation("group-key-x-distinct")
        ever = self.adversary.ever_compromised
        if not set(self.adversary.stolen_tokens) <= ever:
            raise InvariantViolation(
                "no-oracle-leakage", "token of a never-compromised node"
            )
        for stolen in self.adversary.stolen_shares.values():
            if stolen.record.owner not in ever:
                raise InvariantViolation(
                    "no-oracle-leakage", "share of a never-compromised node"
                )
            if not isinstance(stolen.record, ShareRecord):
                raise InvariantViolation("no-oracle-leakage", "non-share payload")

    # -- orchestration -----------------------------------------------------------

    def initial_deal(self) -> None:
        """Epoch-0 row: registration is out of band, dealing is not. The
        adversary may already sit on hosts and read their sealed mail."""
        adversary_hop(self.adversary, self.tree, 0)
        mid_round = tuple(
            e["user"]
            for e in self.config.events
            if e["epoch"] == 0 and e["kind"] == "leave" and e.get("mid_round")
        )
        for event in self.config.events:
            if event["epoch"] == 0 and event["kind"] == "leave" and not event.get("mid_round"):
                self._leave(event["user"])
        self.deal(mid_round_leaves=mid_round)
        self._steal_state()
        self._check_invariants()
        row = {
            "epoch": 0,
            "messages": dict(sorted(self._drain_counts().items())),
            "compromised": sorted(self.adversary.occupied),
            "claims": 0,
            "verdicts": [],
            "cleansed": [],
            "adversary_can_reconstruct": self.adversary_can_reconstruct(),
            "herzberg_all_pairs": self._herzberg_count(),
            "secret_intact": self._secret_intact(),
            "events": [f"deal:round={self.round_id}"],
        }
        row["messages_total"] = sum(row["messages"].values())
        self.report.rows.append(row)

    def finalize(self) -> dict:
        """Final reconstruction check and adversary outcome."""
        participants = [
            uid for uid in self.tree.active_users() if uid in self.shares
        ]
        correct = False
        note = ""
        try:
            value = reconstruct(self.tree, self.shares, participants)
            correct = value == self.dealer.secret
        except (InsufficientShares, StaleEpoch) as exc:
            note = str(exc)
        self.report.final = {
            "reconstruction_correct": correct,
            "secret_recovered_by_adversary": self.adversary_can_reconstruct(),
            "epochs_run": self.epoch,
            "final_round": self.round_id,
        }
        if note:
            self.report.final["reconstruction_note"] = note
        return self.report.final

    def run(self) -> SimReport:
        self.initial_deal()
        for _ in range(self.config.epochs):
            self.step_epoch()
        self.finalize()
        return self.report


def adversary_target_minimal_coalition(world: World) -> tuple[int, ...]:
    """Deterministic target list covering a cheapest reconstructing set;
    what a knowledgeable adversary would walk with renewal disabled."""
    return tuple(minimal_reconstructing_set(world.tree, world.shares))
