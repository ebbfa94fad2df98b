"""Protocol tests: steps 1-7, error checks, key derivation, full sessions."""

import json

import pytest

from sqkd2dof import (
    BASIS_XX,
    BASIS_ZZ,
    BobAction,
    FixedState,
    InsufficientSiftError,
    InterceptResend,
    NoAttack,
    RandomSource,
    RoundUse,
    SessionConfig,
    SessionStatus,
    alice_measure,
    alice_prepare,
    bob_act,
    ctrl_error_rate,
    derive_raw_key,
    ket,
    run_session,
    sift_error_check,
    transcript_rows,
    transcript_to_csv,
    transcript_to_json,
)
from sqkd2dof.protocol import RawKey, RoundRecord, build_round_draws, simulate_round


class TestSessionConfig:
    def test_round_count_small(self):
        assert SessionConfig(L=1, delta=0.25).n_rounds == 5

    def test_round_count_spec_example(self):
        # ceil(4*100*1.1) must be 440, not a float-rounding 441
        assert SessionConfig(L=100, delta=0.1).n_rounds == 440

    def test_round_count_default_delta(self):
        assert SessionConfig(L=100).n_rounds == 500

    def test_at_least_4l(self):
        for L in (1, 3, 17):
            for delta in (0.01, 0.25, 1.0):
                assert SessionConfig(L=L, delta=delta).n_rounds >= 4 * L

    def test_validation(self):
        with pytest.raises(ValueError):
            SessionConfig(L=0)
        with pytest.raises(ValueError):
            SessionConfig(L=1, delta=0.0)
        with pytest.raises(ValueError):
            SessionConfig(L=1, tau_ctrl=1.0)
        with pytest.raises(ValueError):
            SessionConfig(L=1, tau_sift=-0.1)


class TestPrepare:
    def test_every_photon_is_the_prepared_state(self):
        states = alice_prepare(SessionConfig(L=16))
        assert len(states) == 80
        assert all(st is ket("S", "s") for st in states)


class TestBobAct:
    def test_reflection_returns_state_unchanged(self):
        rng = RandomSource(3)
        for _ in range(200):
            action, resent, outcome = bob_act(ket("S", "s"), rng)
            if action is BobAction.CTRL:
                assert resent is ket("S", "s")
                assert outcome is None

    def test_measurement_of_computational_ket_is_faithful(self):
        rng = RandomSource(4)
        seen_sift = False
        for _ in range(100):
            action, resent, outcome = bob_act(ket("H", "b2"), rng)
            if action is BobAction.SIFT:
                seen_sift = True
                assert resent is ket("H", "b2")
                assert outcome.label == "Hb2"
        assert seen_sift

    def test_measurement_splits_prepared_state_uniformly(self):
        rng = RandomSource(5)
        counts = {}
        sifts = 0
        n = 8000
        for _ in range(n):
            action, resent, outcome = bob_act(ket("S", "s"), rng)
            if action is BobAction.SIFT:
                sifts += 1
                counts[outcome.label] = counts.get(outcome.label, 0) + 1
        assert abs(sifts / n - 0.5) < 0.05
        for label in ("Hb1", "Hb2", "Vb1", "Vb2"):
            assert abs(counts[label] / sifts - 0.25) < 0.05

    def test_bob_only_ever_resends_computational_kets(self):
        """The classical-party constraint: no basis but Z x Z, no superpositions."""
        rng = RandomSource(6)
        zz = set(BASIS_ZZ.vectors)
        for state in (ket("S", "s"), ket("H", "s"), ket("A", "a")):
            for _ in range(100):
                action, resent, _ = bob_act(state, rng)
                if action is BobAction.SIFT:
                    assert resent in zz
                else:
                    assert resent is state


class TestAliceMeasure:
    def test_reflected_prepared_state_is_certain(self):
        rng = RandomSource(7)
        for _ in range(100):
            out = alice_measure(ket("S", "s"), BobAction.CTRL, rng)
            assert out.label == "Ss"

    def test_reflected_fake_splits_evenly(self):
        rng = RandomSource(8)
        labels = [alice_measure(ket("H", "s"), BobAction.CTRL, rng).label for _ in range(4000)]
        frac_ss = labels.count("Ss") / len(labels)
        assert set(labels) == {"Ss", "As"}
        assert abs(frac_ss - 0.5) < 0.05

    def test_measured_round_is_faithful(self):
        rng = RandomSource(9)
        for _ in range(100):
            out = alice_measure(ket("V", "b1"), BobAction.SIFT, rng)
            assert out.label == "Vb1"


def _records_from_session(seed=0, L=32, attack=NoAttack()):
    return run_session(SessionConfig(L=L, seed=seed), attack).records


class TestChecks:
    def test_honest_ctrl_error_rate_is_zero(self):
        assert ctrl_error_rate(_records_from_session()) == 0.0

    def test_ctrl_error_rate_needs_ctrl_rounds(self):
        records = [r for r in _records_from_session() if r.bob_action is BobAction.SIFT]
        with pytest.raises(ValueError, match="no CTRL rounds"):
            ctrl_error_rate(records)

    def test_honest_sift_check_is_clean(self):
        config = SessionConfig(L=32, seed=1)
        records = run_session(config).records
        sampled, mismatch, hist = sift_error_check(records, config, RandomSource(1, 99))
        assert mismatch == 0.0
        assert len(sampled) == 32
        assert sum(hist) == 32

    def test_sift_check_needs_2l_records(self):
        config = SessionConfig(L=32, seed=1)
        records = [r for r in run_session(config).records if r.bob_action is BobAction.CTRL]
        with pytest.raises(InsufficientSiftError):
            sift_error_check(records, config, RandomSource(1, 99))


class TestKeyDerivation:
    def _record(self, i, label):
        out = BASIS_ZZ.vectors.index(ket(label))
        from sqkd2dof import Outcome

        outcome = Outcome(BASIS_ZZ, out)
        return RoundRecord(i, BobAction.SIFT, outcome, BASIS_ZZ, outcome, RoundUse.DISCARDED)

    def test_table_mapping(self):
        """Hb1 -> 00, Hb2 -> 01, Vb1 -> 10, Vb2 -> 11."""
        records = [self._record(0, "Hb1"), self._record(1, "Vb2")]
        alice, bob = derive_raw_key(records, SessionConfig(L=2))
        assert alice.as_str() == "0011"
        assert bob.as_str() == "0011"

    def test_single_symbol(self):
        alice, _ = derive_raw_key([self._record(0, "Hb2")], SessionConfig(L=1))
        assert alice.as_str() == "01"

    def test_rounds_taken_in_ascending_order(self):
        records = [self._record(5, "Vb1"), self._record(2, "Hb2")]
        alice, _ = derive_raw_key(records, SessionConfig(L=1))
        assert alice.as_str() == "01"  # round 2 comes first

    def test_too_few_records(self):
        with pytest.raises(InsufficientSiftError):
            derive_raw_key([self._record(0, "Hb1")], SessionConfig(L=2))

    def test_rawkey_validation(self):
        with pytest.raises(ValueError):
            RawKey((0, 2, 1))


class TestRunSession:
    def test_honest_session_is_perfect_for_every_seed(self):
        """Completed honest sessions have exactly zero error and equal keys;
        the only permitted aborts are SIFT-count shortfalls (~3% at L=16)."""
        completed = 0
        for seed in range(30):
            res = run_session(SessionConfig(L=16, seed=seed))
            assert res.ctrl_error_rate == 0.0
            if res.status is SessionStatus.COMPLETED:
                completed += 1
                assert res.sift_error_rate == 0.0
                assert res.alice_key == res.bob_key
                assert len(res.alice_key) == 32
            else:
                assert res.status is SessionStatus.ABORTED_INSUFFICIENT_SIFT
        assert completed >= 27

    def test_round_accounting(self):
        config = SessionConfig(L=64, seed=3)
        res = run_session(config)
        ctrl = [r for r in res.records if r.bob_action is BobAction.CTRL]
        sift = [r for r in res.records if r.bob_action is BobAction.SIFT]
        assert len(ctrl) + len(sift) == config.n_rounds
        assert all(r.bob_outcome is None for r in ctrl)
        assert all(r.bob_outcome is not None for r in sift)
        assert all(r.alice_basis == BASIS_XX for r in ctrl)
        assert all(r.alice_basis == BASIS_ZZ for r in sift)

    def test_check_and_key_rounds_disjoint(self):
        config = SessionConfig(L=64, seed=4)
        res = run_session(config)
        checked = {r.round for r in res.records if r.used_for is RoundUse.SIFT_CHECK}
        keyed = {r.round for r in res.records if r.used_for is RoundUse.KEY}
        assert len(checked) == 64
        assert len(keyed) == 64
        assert not checked & keyed

    def test_key_rounds_are_first_remaining(self):
        res = run_session(SessionConfig(L=16, seed=5))
        sift_rounds = [
            r.round
            for r in res.records
            if r.bob_action is BobAction.SIFT and r.used_for is not RoundUse.SIFT_CHECK
        ]
        keyed = [r.round for r in res.records if r.used_for is RoundUse.KEY]
        assert keyed == sorted(sift_rounds)[:16]

    def test_intercept_resend_aborts_step5(self):
        """Per-reflected-round detection is 1/2, so ~160 checks always trip."""
        attack = InterceptResend(FixedState(ket("H", "s")))
        res = run_session(SessionConfig(L=64, seed=6, tau_ctrl=0.05), attack)
        assert res.status is SessionStatus.ABORTED_STEP5
        assert res.alice_key is None

    def test_same_seed_reproduces_everything(self):
        config = SessionConfig(L=32, seed=7)
        attack = InterceptResend(FixedState(ket("S", "s")), backward="measure-zz")
        a = run_session(config, attack)
        b = run_session(config, attack)
        assert a == b

    def test_rounds_independent_of_execution_order(self):
        """Round i's result is a pure function of (seed, i)."""
        config = SessionConfig(L=8, seed=8)
        draws = build_round_draws(config.seed, config.n_rounds)
        attack = NoAttack()
        forward = [simulate_round(attack, ket("S", "s"), draws, i) for i in range(config.n_rounds)]
        backward = [simulate_round(attack, ket("S", "s"), draws, i) for i in reversed(range(config.n_rounds))]
        assert forward == backward[::-1]

    def test_insufficient_sift_status(self):
        # hunt deterministically for a seed whose SIFT count falls below 2L
        for seed in range(200):
            res = run_session(SessionConfig(L=8, delta=0.01, seed=seed))
            if res.status is SessionStatus.ABORTED_INSUFFICIENT_SIFT:
                assert res.alice_key is None
                assert res.ctrl_error_rate == 0.0
                break
        else:
            pytest.fail("no low-SIFT seed found in 200 tries")

    def test_completed_requires_rates_within_thresholds(self):
        res = run_session(SessionConfig(L=16, seed=9))
        assert res.ctrl_error_rate <= res.config.tau_ctrl
        assert res.sift_error_rate <= res.config.tau_sift


class TestTranscript:
    def test_rows_shape(self):
        res = run_session(SessionConfig(L=8, seed=10))
        rows = transcript_rows(res)
        assert len(rows) == res.config.n_rounds
        for row in rows:
            assert set(row) == {"round", "bob_action", "bob_outcome", "alice_basis", "alice_outcome", "used_for"}
            if row["bob_action"] == "CTRL":
                assert row["bob_outcome"] is None
                assert row["alice_basis"] == "XpXs"
            else:
                assert row["bob_outcome"] in ("Hb1", "Hb2", "Vb1", "Vb2")
                assert row["alice_basis"] == "ZpZs"

    def test_csv_format(self):
        res = run_session(SessionConfig(L=8, seed=10))
        text = transcript_to_csv(res)
        lines = text.splitlines()
        assert lines[0] == "round,bob_action,bob_outcome,alice_basis,alice_outcome,used_for"
        assert len(lines) == res.config.n_rounds + 1
        first_ctrl = next(l for l in lines[1:] if ",CTRL," in l)
        assert ",CTRL,," in first_ctrl  # empty bob_outcome field

    def test_json_round_trip(self):
        res = run_session(SessionConfig(L=8, seed=10))
        data = json.loads(transcript_to_json(res))
        assert data == json.loads(json.dumps(transcript_rows(res)))

    def test_export_deterministic(self):
        a = transcript_to_csv(run_session(SessionConfig(L=8, seed=11)))
        b = transcript_to_csv(run_session(SessionConfig(L=8, seed=11)))
        assert a == b
