"""The user tree: registration, group keys, round keys, leave and rejoin.

The server sits at the root (level 0) and every user hangs below it; a
child's level is its parent's plus one. Registration-token delivery is out
of band by definition (it never crosses the simulated network), so
``register`` writes the token straight into node and server state.

The tree is a single mutable state owned by the simulation loop; all
mutations happen on one logical thread.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .algebra import FieldParams
from .curve import CurveParams, CurvePoint, OffCurve, scalar_mul
from .errors import HierShareError

# Parent marker for level-1 users. The server is not a user; ids start at 1.
ROOT_ID = 0


class ParentInactive(HierShareError):
    """Registration under a missing or inactive parent."""


class TreeFull(HierShareError):
    """No fresh group-key x-coordinate is available (toy-scale id space)."""


class EmptyHierarchy(HierShareError):
    """A round was started with no active users."""


class UnknownUser(HierShareError):
    pass


class AlreadyInactive(HierShareError):
    pass


class InactiveUser(HierShareError):
    """An operation that requires an active node hit an inactive one."""


class PositionOccupied(HierShareError):
    """Rejoin attempted at a slot that is not vacant."""


@dataclass
class HierarchyNode:
    """One user slot: identity, secret token, keys, and tree links."""

    id: int
    parent: int
    children: list[int] = field(default_factory=list)
    reg_token: int | None = None
    group_key: CurvePoint | None = None
    round_key: CurvePoint | None = None
    active: bool = True
    departed: bool = False
    deactivated_by: int | None = None


@dataclass
class RoundState:
    """Server-side state for one distribution round.

    ``secret`` is the server's round scalar; it must never be serialized
    into any message or snapshot visible to non-server parties.
    """

    round_id: int
    secret: int | None
    public_key: CurvePoint | None


class HierarchyTree:
    """Server plus user nodes, keyed by id, with level-0 root semantics."""

    def __init__(self, curve: CurveParams | None, field_params: FieldParams):
        self.curve = curve
        self.field = field_params
        self.nodes: dict[int, HierarchyNode] = {}
        # The server's own copy of each member's group key; dropped on leave.
        self.server_group_keys: dict[int, CurvePoint] = {}
        self._next_id = 1
        self._round_count = 0

    @classmethod
    def for_curve(cls, curve: CurveParams) -> "HierarchyTree":
        return cls(curve, curve.scalar_field())

    @classmethod
    def without_curve(cls, prime: int) -> "HierarchyTree":
        """No-curve test mode: shares over a standalone prime, no keys,
        detection disabled."""
        return cls(None, FieldParams(prime))

    # -- queries ---------------------------------------------------------

    def node(self, user_id: int) -> HierarchyNode:
        try:
            return self.nodes[user_id]
        except KeyError:
            raise UnknownUser(f"no user {user_id}") from None

    def is_active(self, user_id: int) -> bool:
        return user_id == ROOT_ID or self.node(user_id).active

    def level(self, user_id: int) -> int:
        if user_id == ROOT_ID:
            return 0
        depth = 0
        cursor = user_id
        while cursor != ROOT_ID:
            cursor = self.node(cursor).parent
            depth += 1
        return depth

    def children_of(self, node_id: int) -> list[int]:
        if node_id == ROOT_ID:
            return sorted(n.id for n in self.nodes.values() if n.parent == ROOT_ID)
        return list(self.node(node_id).children)

    def active_children(self, node_id: int) -> list[int]:
        return [c for c in self.children_of(node_id) if self.nodes[c].active]

    def active_users(self) -> list[int]:
        return sorted(n.id for n in self.nodes.values() if n.active)

    def subtree(self, user_id: int) -> list[int]:
        """The node and all its descendants, in BFS order."""
        out = [user_id]
        queue = list(self.node(user_id).children)
        while queue:
            current = queue.pop(0)
            out.append(current)
            queue.extend(self.node(current).children)
        return out

    def levels(self) -> dict[int, list[int]]:
        """Active users grouped by level, each level sorted by id."""
        grouped: dict[int, list[int]] = {}
        for uid in self.active_users():
            grouped.setdefault(self.level(uid), []).append(uid)
        return grouped

    def used_x_coordinates(self) -> set[int]:
        return {key.x for key in self.server_group_keys.values()}

    # -- token sampling ---------------------------------------------------

    def _sample_token(self, rng: random.Random) -> tuple[int, CurvePoint | None]:
        """Draw a registration token; in curve mode, resample until the
        group key's x-coordinate is unused tree-wide."""
        if self.curve is None:
            return rng.randrange(1, self.field.modulus), None
        used = self.used_x_coordinates()
        # Each x serves at most two points, so 2*order draws without a fresh
        # x means the space is effectively exhausted at toy scale.
        for _ in range(2 * self.curve.order):
            token = rng.randrange(1, self.curve.order)
            key = scalar_mul(token, self.curve.base_point)
            if key.x not in used:
                return token, key
        raise TreeFull(
            f"no unused group-key x-coordinate left on curve {self.curve.name!r}"
        )

    # -- membership operations --------------------------------------------

    def register(self, parent: int, rng: random.Random) -> HierarchyNode:
        """Join under ``parent``: fresh id, fresh secret token, group key
        stored by both the node and the server."""
        if parent != ROOT_ID:
            node = self.node(parent)
            if not node.active:
                raise ParentInactive(f"parent {parent} is inactive")
        token, key = self._sample_token(rng)
        user_id = self._next_id
        self._next_id += 1
        fresh = HierarchyNode(id=user_id, parent=parent, reg_token=token, group_key=key)
        self.nodes[user_id] = fresh
        if parent != ROOT_ID:
            self.nodes[parent].children.append(user_id)
        if key is not None:
            self.server_group_keys[user_id] = key
        return fresh

    def leave(self, user_id: int) -> set[int]:
        """Process a leave broadcast: the leaver and every node in its
        subtree stop participating; the server drops the leaver's key."""
        leaver = self.node(user_id)
        if not leaver.active:
            raise AlreadyInactive(f"user {user_id} is already inactive")
        deactivated: set[int] = set()
        for uid in self.subtree(user_id):
            node = self.nodes[uid]
            if node.active:
                node.active = False
                node.deactivated_by = user_id
                node.round_key = None
                deactivated.add(uid)
        leaver.departed = True
        leaver.reg_token = None
        leaver.group_key = None
        self.server_group_keys.pop(user_id, None)
        return deactivated

    def rejoin(self, position: int, rng: random.Random) -> int:
        """Fill a vacated slot with a fresh member; the subtree that was
        blocked by that leave becomes active again."""
        slot = self.node(position)
        if not slot.departed:
            raise PositionOccupied(f"slot {position} is not vacant")
        token, key = self._sample_token(rng)
        slot.reg_token = token
        slot.group_key = key
        slot.departed = False
        if key is not None:
            self.server_group_keys[position] = key
        for node in self.nodes.values():
            if node.deactivated_by == position:
                node.active = True
                node.deactivated_by = None
        return position

    # -- rounds and keys ----------------------------------------------------

    def begin_round(self, rng: random.Random) -> RoundState:
        """Start a distribution round; in curve mode the server samples a
        round scalar and broadcasts its public round key."""
        if not self.active_users():
            raise EmptyHierarchy("no active users to deal to")
        self._round_count += 1
        if self.curve is None:
            return RoundState(self._round_count, None, None)
        secret = rng.randrange(1, self.curve.order)
        public = scalar_mul(secret, self.curve.base_point)
        return RoundState(self._round_count, secret, public)

    def derive_round_key_user(self, user_id: int, public_round_key: CurvePoint) -> CurvePoint:
        """User-side round key: token * serverPublic."""
        node = self.node(user_id)
        if not node.active:
            raise InactiveUser(f"user {user_id} cannot derive a round key")
        if public_round_key.curve != self.curve:
            raise OffCurve("round key broadcast from a different curve")
        return scalar_mul(node.reg_token, public_round_key)

    def derive_round_key_server(self, round_state: RoundState, group_key: CurvePoint) -> CurvePoint:
        """Server-side round key: roundSecret * groupKey. Agrees with the
        user-side derivation because both equal token*secret*G."""
        if group_key.curve != self.curve:
            raise OffCurve("group key from a different curve")
        return scalar_mul(round_state.secret, group_key)

    def assign_round_keys(self, round_state: RoundState) -> None:
        """Store each active user's round key for the round (curve mode)."""
        if self.curve is None:
            return
        for uid in self.active_users():
            node = self.nodes[uid]
            node.round_key = self.derive_round_key_user(uid, round_state.public_key)
