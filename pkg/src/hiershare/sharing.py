"""Hierarchical threshold dealing and bottom-up reconstruction.

The dealer (root server) shares a secret down the tree: each sibling group
gets evaluations of its parent's polynomial, every internal node's
evaluation is split into a part the node keeps and a part the server
retains as the free coefficient of that node's own child polynomial, and
leaves keep their evaluation whole. Reconstruction runs the other way:
each sibling group interpolates the retained part of its parent, the
parent adds its own kept part, and the climb repeats until the root
recovers the secret.

Dealing is deterministic given (tree, seed) and re-entrant across
independent scenario instances; the dealer state belongs to the server
role inside the single-threaded simulation loop.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .algebra import (
    FieldElement,
    Polynomial,
    lagrange_at_zero,
    poly_eval,
    sample_polynomial,
)
from .errors import HierShareError
from .hierarchy import ROOT_ID, HierarchyTree, RoundState


class InactiveSubtree(HierShareError):
    """A leave left the tree in a state the round cannot be dealt over."""


class EvalPointCollision(HierShareError):
    """Sibling evaluation points collided or hit zero; resolved upstream by
    re-running the round, surfaced when retries are exhausted."""


class InsufficientShares(HierShareError):
    """A sibling group fell below its threshold during reconstruction."""

    def __init__(self, group_parent: int, have: int, need: int):
        self.group_parent = group_parent
        self.have = have
        self.need = need
        super().__init__(
            f"sibling group under node {group_parent}: "
            f"{have} participating, threshold {need}"
        )


class StaleEpoch(HierShareError):
    """Shares from different epochs were mixed inside one sibling group."""


class MixedEpochs(HierShareError):
    """A coalition analysis was asked to span epochs."""


EVAL_ROUND_KEY = "round-key"
EVAL_USER_ID = "user-id"


@dataclass(frozen=True)
class ThresholdFactor:
    """Exact rational in (0, 1]; the quorum for a group of n is ceil(tf*n)."""

    numerator: int
    denominator: int

    def __post_init__(self):
        if self.denominator <= 0:
            raise ValueError("TF denominator must be positive")
        if self.numerator <= 0 or self.numerator > self.denominator:
            raise ValueError("TF must be in (0,1]")

    def threshold(self, n: int) -> int:
        return compute_threshold(self, n)

    def __str__(self) -> str:
        return f"{self.numerator}/{self.denominator}"


def compute_threshold(tf: ThresholdFactor, n: int) -> int:
    """ceil(tf * n) in exact integer arithmetic; always in [1, n]."""
    if n < 1:
        raise ValueError(f"group size must be positive, got {n}")
    return -(-tf.numerator * n // tf.denominator)


def split(value: FieldElement, rng: random.Random) -> tuple[FieldElement, FieldElement]:
    """Decompose a field value into two nonzero parts that sum back to it.

    The first part is uniform over the nonzero elements whose complement is
    also nonzero; resampling always terminates for modulus > 2.
    """
    fp = value.params
    while True:
        first = fp.random_nonzero(rng)
        second = value - first
        if second.value != 0:
            return first, second


@dataclass(frozen=True)
class ShareRecord:
    """One user's share: the kept part plus the metadata needed to use it.

    ``threshold`` is the quorum size of the sibling group the owner belongs
    to; ``split`` records whether the owner's group evaluation was split
    (true for nodes dealt as internal), which the owner knows from the
    protocol itself.
    """

    owner: int
    eval_point: FieldElement
    value: FieldElement
    threshold: int
    round_id: int
    epoch: int = 0
    split: bool = False


@dataclass
class DealerState:
    """Server-side dealing state: the secret, per-group polynomials, and the
    retained halves of internal nodes' evaluations.

    Retained parts never leave the server except indirectly, through the
    shares dealt to the owning node's children.
    """

    secret: FieldElement
    threshold_root: int | None = None
    polynomials: dict[int, Polynomial] = field(default_factory=dict)
    retained: dict[int, FieldElement] = field(default_factory=dict)


def assign_eval_points(
    tree: HierarchyTree, mode: str = EVAL_ROUND_KEY
) -> dict[int, FieldElement]:
    """Evaluation point per active user.

    Round-key mode uses the x-coordinate of the user's round key reduced
    into the share field (giving round keys their per-round purpose);
    user-id mode uses the raw id. Zero points or collisions among siblings
    raise EvalPointCollision: in round-key mode a fresh round fixes it, in
    user-id mode it is a configuration error.
    """
    points: dict[int, FieldElement] = {}
    for uid in tree.active_users():
        if mode == EVAL_ROUND_KEY:
            key = tree.nodes[uid].round_key
            if key is None:
                raise InactiveSubtree(f"user {uid} has no round key")
            raw = key.x % tree.field.modulus
        elif mode == EVAL_USER_ID:
            raw = uid % tree.field.modulus
        else:
            raise ValueError(f"unknown eval-point mode {mode!r}")
        if raw == 0:
            raise EvalPointCollision(f"user {uid} drew evaluation point zero")
        points[uid] = tree.field.element(raw)

    for parent in [ROOT_ID] + tree.active_users():
        group = tree.active_children(parent)
        seen: dict[int, int] = {}
        for uid in group:
            x = points[uid].value
            if x in seen:
                raise EvalPointCollision(
                    f"siblings {seen[x]} and {uid} share evaluation point {x}"
                )
            seen[x] = uid
    return points


def distribute(
    tree: HierarchyTree,
    dealer: DealerState,
    round_state: RoundState,
    tf: ThresholdFactor,
    rng: random.Random,
    eval_mode: str = EVAL_ROUND_KEY,
) -> dict[int, ShareRecord]:
    """Deal the dealer's secret down the tree, level by level.

    Every active user ends up holding exactly one share; the field modulus
    is the same at every level. Raises InactiveSubtree when a leave has
    blocked the round (no level-1 users, or an internal node with children
    but none of them active).
    """
    level1 = tree.active_children(ROOT_ID)
    if not level1:
        raise InactiveSubtree("no active level-1 users")
    for uid in tree.active_users():
        node = tree.nodes[uid]
        if node.children and not tree.active_children(uid):
            raise InactiveSubtree(
                f"internal node {uid} has no active children; a leave blocked the round"
            )

    points = assign_eval_points(tree, eval_mode)

    dealer.threshold_root = compute_threshold(tf, len(level1))
    dealer.polynomials = {
        ROOT_ID: sample_polynomial(rng, dealer.threshold_root - 1, dealer.secret)
    }
    dealer.retained = {}
    group_threshold: dict[int, int] = {ROOT_ID: dealer.threshold_root}

    shares: dict[int, ShareRecord] = {}
    by_level = tree.levels()
    for level in sorted(by_level):
        for uid in by_level[level]:
            node = tree.nodes[uid]
            parent_poly = dealer.polynomials[node.parent]
            evaluation = poly_eval(parent_poly, points[uid])
            kids = tree.active_children(uid)
            if kids:
                kept, retained = split(evaluation, rng)
                dealer.retained[uid] = retained
                threshold = compute_threshold(tf, len(kids))
                group_threshold[uid] = threshold
                dealer.polynomials[uid] = sample_polynomial(
                    rng, threshold - 1, retained
                )
            else:
                kept = evaluation
            shares[uid] = ShareRecord(
                owner=uid,
                eval_point=points[uid],
                value=kept,
                threshold=group_threshold[node.parent],
                round_id=round_state.round_id,
                epoch=0,
                split=bool(kids),
            )
    return shares


def recover_group_secret(
    tree: HierarchyTree,
    shares: Mapping[int, ShareRecord],
    participating: Iterable[int],
    parent_id: int,
) -> FieldElement:
    """Recover the value jointly held by ``parent_id``'s children: the
    parent's retained part, or the original secret when parent_id is the
    root.

    Inactive users and users without shares are treated as not
    participating. Raises InsufficientShares naming the first sibling group
    that fell below threshold on the path that was needed, and StaleEpoch
    when a group's participants span epochs.
    """
    active = set(tree.active_users())
    participants = {
        uid for uid in participating if uid in shares and uid in active
    }
    failures: list[InsufficientShares] = []
    memo: dict[int, FieldElement | None] = {}

    def group_value(gid: int) -> FieldElement | None:
        if gid in memo:
            return memo[gid]
        kids = [c for c in tree.active_children(gid) if c in participants]
        available: list[tuple[ShareRecord, FieldElement]] = []
        for kid in kids:
            contribution = contribution_of(kid)
            if contribution is not None:
                available.append((shares[kid], contribution))
        epochs = {rec.epoch for rec, _ in available}
        if len(epochs) > 1:
            raise StaleEpoch(
                f"sibling group under {gid} mixes epochs {sorted(epochs)}"
            )
        thresholds = {rec.threshold for rec, _ in available}
        if len(thresholds) > 1:
            raise ValueError(f"inconsistent thresholds recorded under {gid}")
        need = thresholds.pop() if thresholds else 1
        if len(available) < need:
            failures.append(InsufficientShares(gid, len(available), need))
            memo[gid] = None
            return None
        quorum = sorted(available, key=lambda pair: pair[0].owner)[:need]
        value = lagrange_at_zero([(rec.eval_point, c) for rec, c in quorum])
        memo[gid] = value
        return value

    def contribution_of(uid: int) -> FieldElement | None:
        rec = shares[uid]
        if not rec.split:
            return rec.value
        below = group_value(uid)
        if below is None:
            return None
        return rec.value + below

    secret = group_value(parent_id)
    if secret is None:
        raise failures[0]
    return secret


def reconstruct(
    tree: HierarchyTree,
    shares: Mapping[int, ShareRecord],
    participating: Iterable[int],
) -> FieldElement:
    """Bottom-up reconstruction of the root secret from the given
    participants' shares."""
    return recover_group_secret(tree, shares, participating, ROOT_ID)


def knowledge_closure(
    tree: HierarchyTree, coalition: Mapping[int, ShareRecord]
) -> bool:
    """Whether a coalition can derive the root secret from its shares alone.

    Fixpoint over the derivation rules: a group's retained value becomes
    known once threshold-many child contributions are known; an internal
    member's contribution becomes known once both its kept part and its
    retained value are known. No server-retained values are assumed.
    """
    if not coalition:
        return False
    epochs = {rec.epoch for rec in coalition.values()}
    if len(epochs) > 1:
        raise MixedEpochs(f"coalition spans epochs {sorted(epochs)}")

    members = set(coalition)
    group_known: set[int] = set()
    candidates = {tree.node(uid).parent for uid in members} | {ROOT_ID}

    def contribution_known(uid: int) -> bool:
        rec = coalition.get(uid)
        if rec is None:
            return False
        return (not rec.split) or uid in group_known

    changed = True
    while changed:
        changed = False
        for gid in sorted(candidates):
            if gid in group_known:
                continue
            kids = [uid for uid in members if tree.node(uid).parent == gid]
            known = [uid for uid in kids if contribution_known(uid)]
            if not known:
                continue
            need = coalition[known[0]].threshold
            if len(known) >= need:
                group_known.add(gid)
                changed = True
    return ROOT_ID in group_known


def minimal_reconstructing_set(
    tree: HierarchyTree, shares: Mapping[int, ShareRecord]
) -> list[int]:
    """A cheapest participant set that reconstructs the secret: per group,
    the threshold-many children with the smallest subtree quorum cost.
    Deterministic (ties break by id); used by adversary targeting."""

    def cost(uid: int) -> tuple[int, list[int]]:
        rec = shares[uid]
        total, chosen = 1, [uid]
        if rec.split:
            sub = quorum_cost(uid)
            total += sub[0]
            chosen += sub[1]
        return total, chosen

    def quorum_cost(gid: int) -> tuple[int, list[int]]:
        kids = [c for c in tree.active_children(gid) if c in shares]
        need = shares[kids[0]].threshold
        priced = sorted((cost(c) for c in kids), key=lambda t: (t[0], t[1]))
        total, chosen = 0, []
        for sub_total, sub_chosen in priced[:need]:
            total += sub_total
            chosen += sub_chosen
        return total, chosen

    return sorted(quorum_cost(ROOT_ID)[1])
