"""World snapshots: versioned, checksummed, resumable at epoch boundaries.

A snapshot embeds the scenario, the RNG state, and every piece of world
state a continuation needs, so a resumed run produces a report identical
to an uninterrupted one. Snapshots are only taken (and only accepted)
at epoch boundaries.

When the scenario marks secrets redacted, registration tokens are stored
XOR-masked with a SHA-256 keystream derived from the scenario seed and
the snapshot epoch. That is reversible obfuscation against casual
disclosure, not encryption (the file is self-decrypting by design so the
round trip stays exact); a round's server scalar is never persisted at
all, since it dies when its round completes.
"""

from __future__ import annotations

import hashlib
import json
import random

from .config import parse_scenario, serialize_scenario
from .curve import CurvePoint
from .errors import HierShareError
from .hierarchy import HierarchyNode, HierarchyTree
from .proactive import EpochClock
from .sharing import DealerState, Polynomial, ShareRecord
from .simnet import AdversaryState, SimReport, StolenShare, World

SNAPSHOT_VERSION = 1


class VersionMismatch(HierShareError):
    """Snapshot written by an incompatible format version."""


class CorruptSnapshot(HierShareError):
    """Snapshot failed its checksum or cannot be decoded."""


class ResumeRefused(HierShareError):
    """Snapshot is not at an epoch boundary."""


def _mask(value: int, seed: int, salt: int, label: str) -> int:
    stream = int.from_bytes(
        hashlib.sha256(f"{seed}:{salt}:{label}".encode()).digest(), "big"
    )
    return value ^ stream


def _point_out(point: CurvePoint | None) -> list[str] | None:
    if point is None:
        return None
    if point.is_identity:
        return []
    return [str(point.x), str(point.y)]


def _point_in(data, world: World) -> CurvePoint | None:
    if data is None:
        return None
    if data == []:
        return world.curve.identity()
    return CurvePoint(world.curve, int(data[0]), int(data[1]))


def _record_out(rec: ShareRecord) -> dict:
    return {
        "owner": rec.owner,
        "eval_point": str(rec.eval_point.value),
        "value": str(rec.value.value),
        "threshold": rec.threshold,
        "round_id": rec.round_id,
        "epoch": rec.epoch,
        "split": rec.split,
    }


def _record_in(data: dict, world: World) -> ShareRecord:
    return ShareRecord(
        owner=data["owner"],
        eval_point=world.field.element(int(data["eval_point"])),
        value=world.field.element(int(data["value"])),
        threshold=data["threshold"],
        round_id=data["round_id"],
        epoch=data["epoch"],
        split=data["split"],
    )


def world_to_dict(world: World) -> dict:
    """Serializable epoch-boundary state; excludes the per-epoch envelope
    scratch log (those messages were already invariant-checked)."""
    config = world.config
    redact = config.redact_secrets
    salt = world.epoch

    def token_out(uid: int, token: int | None) -> str | None:
        if token is None:
            return None
        if redact:
            return str(_mask(token, config.seed, salt, f"token:{uid}"))
        return str(token)

    nodes = []
    for uid in sorted(world.tree.nodes):
        node = world.tree.nodes[uid]
        nodes.append(
            {
                "id": node.id,
                "parent": node.parent,
                "children": list(node.children),
                "reg_token": token_out(uid, node.reg_token),
                "group_key": _point_out(node.group_key),
                "round_key": _point_out(node.round_key),
                "active": node.active,
                "departed": node.departed,
                "deactivated_by": node.deactivated_by,
            }
        )
    adv = world.adversary
    rng_version, rng_internal, rng_gauss = world.rng.getstate()
    return {
        "snapshot_version": SNAPSHOT_VERSION,
        "phase": "epoch-boundary",
        "redacted": redact,
        "epoch": world.epoch,
        "round_id": world.round_id,
        "scenario": serialize_scenario(config),
        "rng_state": [rng_version, list(rng_internal), rng_gauss],
        "tree": {
            "nodes": nodes,
            "server_group_keys": {
                str(uid): _point_out(key)
                for uid, key in sorted(world.tree.server_group_keys.items())
            },
            "next_id": world.tree._next_id,
            "round_count": world.tree._round_count,
        },
        "dealer": {
            "secret": str(world.dealer.secret.value),
            "threshold_root": world.dealer.threshold_root,
            "polynomials": {
                str(gid): [str(c.value) for c in poly.coefficients]
                for gid, poly in sorted(world.dealer.polynomials.items())
            },
            "retained": {
                str(uid): str(value.value)
                for uid, value in sorted(world.dealer.retained.items())
            },
        },
        "shares": {str(uid): _record_out(rec) for uid, rec in sorted(world.shares.items())},
        "clock": {"epochs": {str(k): v for k, v in sorted(world.clock.epochs.items())}, "tick": world.clock.tick},
        "adversary": {
            "occupied": sorted(adv.occupied),
            "compromise_epochs": {str(k): v for k, v in sorted(adv.compromise_epochs.items())},
            "stolen_shares": [
                {"round_id": s.round_id, "epoch": s.epoch, "record": _record_out(s.record)}
                for _key, s in sorted(adv.stolen_shares.items())
            ],
            "stolen_tokens": {
                str(uid): token_out(uid, tok) for uid, tok in sorted(adv.stolen_tokens.items())
            },
            "observed_commitments": adv.observed_commitments,
            "cursor": adv.cursor,
        },
        "report_rows": world.report.rows,
    }


def world_from_dict(data: dict) -> World:
    config = parse_scenario(data["scenario"], source="<snapshot scenario>")
    world = World.__new__(World)
    world.config = config
    world.curve = config.curve_params()
    world.field = config.field_params()
    world.epoch = data["epoch"]
    world.round_id = data["round_id"]
    world.envelopes = []
    world.message_counts = {}

    redact = data.get("redacted", False)
    salt = data["epoch"]

    def token_in(uid, raw):
        if raw is None:
            return None
        value = int(raw)
        if redact:
            return _mask(value, config.seed, salt, f"token:{uid}")
        return value

    rng_version, rng_internal, rng_gauss = data["rng_state"]
    world.rng = random.Random()
    world.rng.setstate((rng_version, tuple(rng_internal), rng_gauss))

    tree = HierarchyTree(world.curve, world.field)
    for node_data in data["tree"]["nodes"]:
        uid = node_data["id"]
        tree.nodes[uid] = HierarchyNode(
            id=uid,
            parent=node_data["parent"],
            children=list(node_data["children"]),
            reg_token=token_in(uid, node_data["reg_token"]),
            group_key=_point_in(node_data["group_key"], world),
            round_key=_point_in(node_data["round_key"], world),
            active=node_data["active"],
            departed=node_data["departed"],
            deactivated_by=node_data["deactivated_by"],
        )
    tree.server_group_keys = {
        int(uid): _point_in(key, world)
        for uid, key in data["tree"]["server_group_keys"].items()
    }
    tree._next_id = data["tree"]["next_id"]
    tree._round_count = data["tree"]["round_count"]
    world.tree = tree

    dealer_data = data["dealer"]
    dealer = DealerState(secret=world.field.element(int(dealer_data["secret"])))
    dealer.threshold_root = dealer_data["threshold_root"]
    dealer.polynomials = {
        int(gid): Polynomial(tuple(world.field.element(int(c)) for c in coeffs))
        for gid, coeffs in dealer_data["polynomials"].items()
    }
    dealer.retained = {
        int(uid): world.field.element(int(v))
        for uid, v in dealer_data["retained"].items()
    }
    world.dealer = dealer

    world.shares = {
        int(uid): _record_in(rec, world) for uid, rec in data["shares"].items()
    }
    world.clock = EpochClock(
        epochs={int(k): v for k, v in data["clock"]["epochs"].items()},
        tick=data["clock"]["tick"],
    )

    adv_data = data["adversary"]
    adversary = AdversaryState(
        strategy=config.adversary.strategy,
        budget=config.adversary.budget,
        targets=config.adversary.targets,
        script=config.adversary.script,
    )
    adversary.occupied = set(adv_data["occupied"])
    adversary.compromise_epochs = {
        int(k): v for k, v in adv_data["compromise_epochs"].items()
    }
    for item in adv_data["stolen_shares"]:
        record = _record_in(item["record"], world)
        key = (item["round_id"], item["epoch"], record.owner)
        adversary.stolen_shares[key] = StolenShare(
            round_id=item["round_id"], epoch=item["epoch"], record=record
        )
    adversary.stolen_tokens = {
        int(uid): token_in(int(uid), tok) for uid, tok in adv_data["stolen_tokens"].items()
    }
    adversary.observed_commitments = adv_data["observed_commitments"]
    adversary.cursor = adv_data["cursor"]
    world.adversary = adversary

    world.report = SimReport(scenario=config.name, seed=config.seed)
    world.report.rows = list(data["report_rows"])
    return world


def _canonical(body: dict) -> str:
    return json.dumps(body, sort_keys=True, separators=(",", ":"))


def save_world(world: World, path: str) -> None:
    body = world_to_dict(world)
    checksum = hashlib.sha256(_canonical(body).encode()).hexdigest()
    with open(path, "w", encoding="utf-8") as handle:
        json.dump({"checksum": checksum, "body": body}, handle, indent=1)
        handle.write("\n")


def load_world(path: str) -> World:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            wrapper = json.load(handle)
        body = wrapper["body"]
        stored = wrapper["checksum"]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CorruptSnapshot(f"{path}: {exc}") from None
    actual = hashlib.sha256(_canonical(body).encode()).hexdigest()
    if actual != stored:
        raise CorruptSnapshot(f"{path}: checksum mismatch")
    if body.get("snapshot_version") != SNAPSHOT_VERSION:
        raise VersionMismatch(
            f"{path}: snapshot version {body.get('snapshot_version')}, "
            f"supported {SNAPSHOT_VERSION}"
        )
    if body.get("phase") != "epoch-boundary":
        raise ResumeRefused(f"{path}: snapshot phase {body.get('phase')!r}")
    return world_from_dict(body)
