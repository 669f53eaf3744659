"""Renewal, commitment verification, claims, and epoch bookkeeping."""

import random
from dataclasses import replace

import pytest
from conftest import deal, make_tree, tf

from hiershare.curve import scalar_mul
from hiershare.hierarchy import ROOT_ID
from hiershare.proactive import (
    ACCUSED_COMPROMISED,
    CLAIMERS_COMPROMISED,
    ClaimRecord,
    EpochClock,
    EpochSkew,
    MixedAccused,
    NoChildren,
    RenewalBundle,
    UnverifiedBundle,
    apply_renewal,
    file_claim,
    generate_renewal,
    renewal_round,
    resolve_claims,
    verify_renewal,
)
from hiershare.sharing import reconstruct


def toy_dealt_tree(rng, spec, factor, secret_value=7):
    from hiershare.curve import TOY_CURVE

    tree = make_tree(spec, rng, curve=TOY_CURVE)
    secret = tree.field.element(secret_value)
    dealer, state, shares = deal(tree, secret, factor, rng)
    return tree, dealer, shares, secret


class TestGenerateRenewal:
    def test_threshold_one_group_gets_zero_polynomial(self, rng):
        tree, _dealer, shares, _secret = toy_dealt_tree(rng, [[]], tf(1, 1))
        bundles = generate_renewal(tree, shares, ROOT_ID, 0, rng)
        assert len(bundles) == 1
        assert bundles[0].delta.value == 0
        assert bundles[0].commitments == ()

    def test_degree_two_group_has_two_commitments(self, rng):
        tree, _dealer, shares, _secret = toy_dealt_tree(
            rng, [[], [], []], tf(1, 1)
        )
        bundles = generate_renewal(tree, shares, ROOT_ID, 0, rng)
        assert len(bundles) == 3
        assert all(len(b.commitments) == 2 for b in bundles)
        assert all(b.epoch == 1 for b in bundles)

    def test_deterministic_under_seed(self, rng):
        tree, _dealer, shares, _secret = toy_dealt_tree(rng, [[], []], tf(1, 1))
        first = generate_renewal(tree, shares, ROOT_ID, 0, random.Random(9))
        second = generate_renewal(tree, shares, ROOT_ID, 0, random.Random(9))
        assert first == second

    def test_no_children(self, rng):
        tree, _dealer, shares, _secret = toy_dealt_tree(rng, [[]], tf(1, 1))
        with pytest.raises(NoChildren):
            generate_renewal(tree, shares, 1, 0, rng)

    def test_epoch_skew_detected(self, rng):
        tree, _dealer, shares, _secret = toy_dealt_tree(rng, [[]], tf(1, 1))
        with pytest.raises(EpochSkew):
            generate_renewal(tree, shares, ROOT_ID, 4, rng)

    def test_no_curve_mode_has_no_commitments(self, rng):
        tree = make_tree([[], []], rng, prime=31)
        _dealer, _state, shares = deal(tree, tree.field.element(5), tf(1, 1), rng)
        bundles = generate_renewal(tree, shares, ROOT_ID, 0, rng)
        assert all(b.commitments == () for b in bundles)


class TestVerifyRenewal:
    def test_honest_bundles_verify(self, rng):
        tree, _dealer, shares, _secret = toy_dealt_tree(
            rng, [[], [], [], []], tf(1, 2)
        )
        bundles = generate_renewal(tree, shares, ROOT_ID, 0, rng)
        for bundle in bundles:
            point = shares[bundle.recipient].eval_point
            assert verify_renewal(bundle, point, tree.curve) is True

    def test_tampered_delta_fails(self, rng):
        tree, _dealer, shares, _secret = toy_dealt_tree(rng, [[], [], []], tf(1, 1))
        for bundle in generate_renewal(tree, shares, ROOT_ID, 0, rng):
            point = shares[bundle.recipient].eval_point
            bad = replace(bundle, delta=bundle.delta + tree.field.one)
            assert verify_renewal(bad, point, tree.curve) is False

    def test_tampered_commitment_fails(self, rng):
        tree, _dealer, shares, _secret = toy_dealt_tree(rng, [[], [], []], tf(1, 1))
        G = tree.curve.base_point
        for bundle in generate_renewal(tree, shares, ROOT_ID, 0, rng):
            point = shares[bundle.recipient].eval_point
            moved = bundle.commitments[0] + G
            bad = replace(bundle, commitments=(moved,) + bundle.commitments[1:])
            assert verify_renewal(bad, point, tree.curve) is False

    def test_nonzero_free_coefficient_fails(self, toy):
        """A polynomial with a smuggled constant term but honest
        commitments over its nonconstant part shifts the check by c*G."""
        fp = toy.scalar_field()
        coeff = fp.element(4)
        commitments = (scalar_mul(coeff, toy.base_point),)
        for c in range(1, 19):
            for j in range(1, 19):
                point = fp.element(j)
                delta = fp.element(c) + coeff * point
                bundle = RenewalBundle(
                    sender=ROOT_ID, recipient=1, epoch=1,
                    delta=delta, commitments=commitments,
                )
                assert verify_renewal(bundle, point, toy) is False

    def test_random_tamperings_all_fail(self, rng):
        tree, _dealer, shares, _secret = toy_dealt_tree(
            rng, [[], [], [], []], tf(3, 4)
        )
        bundles = generate_renewal(tree, shares, ROOT_ID, 0, rng)
        G = tree.curve.base_point
        for _ in range(200):
            bundle = rng.choice(bundles)
            point = shares[bundle.recipient].eval_point
            if rng.random() < 0.5:
                offset = tree.field.element(rng.randrange(1, 19))
                bad = replace(bundle, delta=bundle.delta + offset)
            else:
                idx = rng.randrange(len(bundle.commitments))
                shift = scalar_mul(rng.randrange(1, 19), G)
                new = (
                    bundle.commitments[:idx]
                    + (bundle.commitments[idx] + shift,)
                    + bundle.commitments[idx + 1 :]
                )
                bad = replace(bundle, commitments=new)
            assert verify_renewal(bad, point, tree.curve) is False


class TestApplyRenewal:
    def test_zero_delta_keeps_value(self, rng):
        tree, _dealer, shares, _secret = toy_dealt_tree(rng, [[]], tf(1, 1))
        bundle = generate_renewal(tree, shares, ROOT_ID, 0, rng)[0]
        renewed = apply_renewal(shares[1], bundle, tree.curve)
        assert renewed.value == shares[1].value
        assert renewed.epoch == 1
        assert renewed.eval_point == shares[1].eval_point

    def test_round_trip_after_renewal(self, rng):
        tree, _dealer, shares, secret = toy_dealt_tree(
            rng, [[], [], []], tf(2, 3)
        )
        for bundle in generate_renewal(tree, shares, ROOT_ID, 0, rng):
            shares[bundle.recipient] = apply_renewal(
                shares[bundle.recipient], bundle, tree.curve
            )
        assert reconstruct(tree, shares, list(shares)) == secret

    def test_epoch_mismatch(self, rng):
        tree, _dealer, shares, _secret = toy_dealt_tree(rng, [[]], tf(1, 1))
        bundle = generate_renewal(tree, shares, ROOT_ID, 0, rng)[0]
        stale = replace(bundle, epoch=5)
        with pytest.raises(EpochSkew):
            apply_renewal(shares[1], stale, tree.curve)

    def test_wrong_recipient(self, rng):
        tree, _dealer, shares, _secret = toy_dealt_tree(rng, [[], []], tf(1, 1))
        bundles = generate_renewal(tree, shares, ROOT_ID, 0, rng)
        with pytest.raises(ValueError):
            apply_renewal(shares[2], bundles[0], tree.curve)

    def test_unverified_bundle_rejected(self, rng):
        tree, _dealer, shares, _secret = toy_dealt_tree(rng, [[], []], tf(1, 1))
        bundle = generate_renewal(tree, shares, ROOT_ID, 0, rng)[0]
        bad = replace(bundle, delta=bundle.delta + tree.field.one)
        with pytest.raises(UnverifiedBundle):
            apply_renewal(shares[bundle.recipient], bad, tree.curve)


class TestClaims:
    def test_file_claim_requires_parentage(self, rng):
        tree, _dealer, _shares, _secret = toy_dealt_tree(rng, [[], []], tf(1, 1))
        claim = file_claim(tree, 1, ROOT_ID, 3)
        assert claim == ClaimRecord(claimer=1, accused=ROOT_ID, epoch=3)
        with pytest.raises(ValueError):
            file_claim(tree, 1, 2, 3)

    def test_resolution_branches(self):
        claims = [ClaimRecord(i, 9, 1) for i in (1, 2, 3)]
        verdict = resolve_claims(claims, n_children=5, k=2)
        assert verdict.outcome == ACCUSED_COMPROMISED
        assert verdict.claim_count == 3
        verdict = resolve_claims(claims[:2], n_children=5, k=2)
        assert verdict.outcome == CLAIMERS_COMPROMISED

    def test_no_claims_no_verdict(self):
        assert resolve_claims([], n_children=5, k=2) is None

    def test_mixed_accused_rejected(self):
        claims = [ClaimRecord(1, 9, 1), ClaimRecord(2, 8, 1)]
        with pytest.raises(MixedAccused):
            resolve_claims(claims, n_children=5, k=2)


class TestRenewalRound:
    def test_message_count_and_secret_preserved(self, rng):
        tree, _dealer, shares, secret = toy_dealt_tree(
            rng, [[[], []], [[], []]], tf(1, 2), secret_value=3
        )
        outcome = renewal_round(tree, shares, 1, rng)
        # 6 users -> 6 sealed deltas; 3 subtree roots -> 3 multicasts.
        assert outcome.message_count == 6 + 3
        assert outcome.verdicts == ()
        assert outcome.claims == ()
        assert sorted(outcome.advanced) == [ROOT_ID, 1, 2]
        assert reconstruct(tree, outcome.shares, list(outcome.shares)) == secret
        assert all(rec.epoch == 1 for rec in outcome.shares.values())

    def test_twenty_honest_rounds_preserve_secret(self, rng):
        tree, _dealer, shares, secret = toy_dealt_tree(
            rng, [[[], []], []], tf(1, 2), secret_value=16
        )
        for epoch in range(1, 21):
            outcome = renewal_round(tree, shares, epoch, rng)
            shares = outcome.shares
            assert not outcome.verdicts
        assert reconstruct(tree, shares, list(shares)) == secret
        assert all(rec.epoch == 20 for rec in shares.values())

    def test_subtree_order_independence(self, rng):
        tree, _dealer, shares, _secret = toy_dealt_tree(
            rng, [[[], []], [[], []]], tf(1, 2)
        )
        straight = renewal_round(tree, dict(shares), 1, random.Random(31))
        shuffled = renewal_round(
            tree, dict(shares), 1, random.Random(31),
            subtree_order=[2, ROOT_ID, 1],
        )
        assert straight.shares == shuffled.shares
        assert straight.message_count == shuffled.message_count

    def test_corrupting_parent_detected_and_discarded(self, rng):
        tree, _dealer, shares, secret = toy_dealt_tree(
            rng, [[[], [], []]], tf(2, 3), secret_value=5
        )

        def corrupt_node_one(bundle):
            if bundle.sender == 1:
                return replace(bundle, delta=bundle.delta + tree.field.one)
            return bundle

        outcome = renewal_round(tree, shares, 1, rng, perturb=corrupt_node_one)
        assert outcome.discarded == (1,)
        assert len(outcome.verdicts) == 1
        verdict = outcome.verdicts[0]
        # 3 honest children, n=3, k=1: 3 >= 2 claims convict the parent.
        assert verdict.accused == 1
        assert verdict.outcome == ACCUSED_COMPROMISED
        assert verdict.claim_count == 3
        # The victimized group kept its old shares; everyone else moved on.
        for uid in (2, 3, 4):
            assert outcome.shares[uid].epoch == 0
        assert outcome.shares[1].epoch == 1
        assert reconstruct(tree, outcome.shares, list(outcome.shares)) == secret

    def test_false_claims_below_bound_blame_claimers(self, rng):
        tree, _dealer, shares, _secret = toy_dealt_tree(
            rng, [[], [], [], []], tf(1, 2)
        )
        lies = [file_claim(tree, 2, ROOT_ID, 1)]
        outcome = renewal_round(tree, shares, 1, rng, extra_claims=lies)
        assert len(outcome.verdicts) == 1
        verdict = outcome.verdicts[0]
        # n=4, threshold 2, k=1: one claim < n-k=3 blames the claimer.
        assert verdict.outcome == CLAIMERS_COMPROMISED
        assert verdict.claimers == (2,)

    def test_no_curve_round_counts_deltas_only(self, rng):
        tree = make_tree([[[], []], []], rng, prime=1009)
        secret = tree.field.element(400)
        _dealer, _state, shares = deal(tree, secret, tf(1, 2), rng)
        outcome = renewal_round(tree, shares, 1, rng)
        assert outcome.message_count == len(shares)
        assert reconstruct(tree, outcome.shares, list(outcome.shares)) == secret


class TestStalenessAcrossEpochs:
    def test_mixed_epoch_pair_cannot_reconstruct(self, rng):
        """Threshold-2 group: one pre-renewal plus one post-renewal share.

        Brute force over F_31: the true group value stays hidden among 30
        equally consistent candidates. (Exactly one candidate is excluded:
        the exact-degree rule makes a degree-1 renewal delta never zero, so
        the naive mixed interpolation is knowably wrong. Reconstruction
        stays impossible.)"""
        tree = make_tree([[], []], rng, prime=31)
        secret = tree.field.element(23)
        _dealer, _state, shares = deal(tree, secret, tf(1, 1), rng)
        outcome = renewal_round(tree, dict(shares), 1, rng)

        x1 = shares[1].eval_point.value
        v1 = shares[1].value.value            # epoch 0
        x2 = outcome.shares[2].eval_point.value
        v2 = outcome.shares[2].value.value    # epoch 1
        counts = {c: 0 for c in range(31)}
        for c in range(31):
            for a1 in range(31):
                for d1 in range(1, 31):
                    # q = c + a1*x; renewal adds d1*x (exact degree 1).
                    if (c + a1 * x1) % 31 != v1:
                        continue
                    if (c + (a1 + d1) * x2) % 31 == v2:
                        counts[c] += 1
        true_count = counts[secret.value]
        assert true_count >= 1
        tied = [c for c, n in counts.items() if n == true_count]
        assert len(tied) >= 30

    def test_mixed_epoch_shares_flat_at_degree_two(self, rng):
        """Threshold-3 group, two old shares plus one renewed share: every
        candidate group value is exactly equally consistent."""
        tree = make_tree([[], [], []], rng, prime=31)
        secret = tree.field.element(14)
        _dealer, _state, shares = deal(tree, secret, tf(1, 1), rng)
        outcome = renewal_round(tree, dict(shares), 1, rng)

        old = [(shares[u].eval_point.value, shares[u].value.value) for u in (1, 2)]
        x3 = outcome.shares[3].eval_point.value
        v3 = outcome.shares[3].value.value
        counts = {c: 0 for c in range(31)}
        for c in range(31):
            for a1 in range(31):
                for a2 in range(31):
                    if any((c + a1 * x + a2 * x * x) % 31 != v for x, v in old):
                        continue
                    for d1 in range(31):
                        for d2 in range(1, 31):
                            got = (c + (a1 + d1) * x3 + (a2 + d2) * x3 * x3) % 31
                            if got == v3:
                                counts[c] += 1
        assert len(set(counts.values())) == 1
        assert counts[secret.value] > 0


class TestEpochClock:
    def test_advance_per_subtree(self):
        clock = EpochClock()
        clock.advance(ROOT_ID)
        clock.advance(ROOT_ID)
        clock.advance(4)
        assert clock.epochs == {ROOT_ID: 2, 4: 1}
