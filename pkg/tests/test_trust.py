import io
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from proxtrust.trust import (
    DEFAULT_PROFILE,
    HEALTH_PROFILE,
    FactorInputs,
    InteractionEvent,
    InteractionKind,
    SessionContext,
    TrustModelParams,
    TrustStore,
    apply_interaction,
    decay,
    get_score,
    initial_trust,
    overlap_score,
    proximity_score,
    session_start_score,
    transitive_trust,
    update_on_interaction,
    verify_authority,
)

from . import oracles

P = TrustModelParams()
unit = st.floats(0.0, 1.0, allow_nan=False)


def full_quality_event(quality=1.0, t=0):
    # a long exposure at zero distance makes the proximity factor 1 to machine precision
    return InteractionEvent(1, 2, t, duration=1e6, distance=0.0, kind=InteractionKind.HEALTH_CONSULT, quality=quality)


class TestProximity:
    def test_zero_duration(self):
        assert proximity_score(0, 3.0, P) == 0.0

    def test_one_saturation_time_at_zero_distance(self):
        assert proximity_score(30, 0.0, P) == pytest.approx(1 - math.exp(-1), abs=1e-12)
        assert proximity_score(30, 0.0, P) == pytest.approx(0.6321, abs=1e-4)

    def test_one_saturation_time_at_one_distance_scale(self):
        assert proximity_score(30, 5.0, P) == pytest.approx(oracles.prox_closed_form(30, 5.0), abs=1e-12)
        assert proximity_score(30, 5.0, P) == pytest.approx(0.2325, abs=1e-4)

    @given(st.floats(0, 1e5), st.floats(0, 1e3))
    def test_bounds_and_closed_form(self, duration, distance):
        s = proximity_score(duration, distance, P)
        assert 0.0 <= s <= 1.0
        assert s == pytest.approx(oracles.prox_closed_form(duration, distance), abs=1e-12)


class TestOverlap:
    def test_examples(self):
        assert overlap_score(set(), set()) == 0.0
        assert overlap_score({"coffee"}, {"coffee"}) == 1.0
        assert overlap_score({"a", "b", "c"}, {"b", "c", "d"}) == 0.5

    @given(st.sets(st.sampled_from("abcdefgh")), st.sets(st.sampled_from("abcdefgh")))
    def test_matches_jaccard(self, a, b):
        assert overlap_score(a, b) == oracles.jaccard(a, b)
        assert overlap_score(a, b) == overlap_score(b, a)


def make_store(entries, params=P):
    store = TrustStore(params)
    for (a, b), s in entries.items():
        store.set(a, b, s)
    return store


class TestTransitive:
    def test_no_mutual_peers(self):
        store = make_store({(1, 3): 0.9, (4, 2): 0.9})
        assert transitive_trust(store, 1, 2) is None

    def test_weighted_mean_of_peers(self):
        entries = {(1, 10): 0.8, (10, 2): 0.5, (1, 11): 0.6, (11, 2): 1.0}
        got = transitive_trust(make_store(entries), 1, 2)
        assert got == pytest.approx(oracles.brute_transitive(entries, 1, 2, 0.5), abs=1e-15)
        assert got == pytest.approx(1.0 / 1.4, abs=1e-12)
        assert got == pytest.approx(0.7143, abs=1e-4)

    def test_cutoff_excludes_weak_peer(self):
        store = make_store({(1, 10): 0.4, (10, 2): 1.0})
        assert transitive_trust(store, 1, 2) is None

    def test_self_pair_rejected(self):
        with pytest.raises(ValueError):
            transitive_trust(TrustStore(), 1, 1)

    @given(
        st.dictionaries(
            st.tuples(st.integers(0, 19), st.integers(0, 19)).filter(lambda p: p[0] != p[1]),
            unit,
            max_size=120,
        ),
        st.integers(0, 19),
        st.integers(0, 19),
        st.floats(0.0, 1.0),
    )
    def test_brute_force_equivalence(self, entries, a, b, cutoff):
        if a == b:
            return
        params = TrustModelParams(peer_cutoff=cutoff)
        got = transitive_trust(make_store(entries, params), a, b)
        want = oracles.brute_transitive(entries, a, b, cutoff)
        if want is None:
            assert got is None
        else:
            assert got == want


class TestInitialTrust:
    def test_nothing_present_gives_baseline(self):
        assert initial_trust(FactorInputs(), P) == 0.0
        assert initial_trust(FactorInputs(), TrustModelParams(baseline=0.3)) == 0.3

    def test_single_factor(self):
        assert initial_trust(FactorInputs(prev_score=0.8), P) == pytest.approx(0.8, abs=1e-15)

    def test_prev_and_peer(self):
        peer = 1.0 / 1.4
        want = oracles.weighted_mean([(0.35, 0.8), (0.25, peer)])
        got = initial_trust(FactorInputs(prev_score=0.8, peer_score=peer), P)
        assert got == pytest.approx(want, abs=1e-12)
        assert got == pytest.approx(0.7643, abs=1e-4)

    @given(
        st.tuples(*[st.one_of(st.none(), unit) for _ in range(6)]),
        st.floats(1e-3, 1e3),
    )
    def test_invariant_to_weight_scaling(self, values, c):
        inputs = FactorInputs(*values)
        scaled = TrustModelParams(**{f"w_{n}": c * w for n, w in zip(("prev", "peer", "int", "app", "prox", "phys"), P.weights())})
        a, b = initial_trust(inputs, P), initial_trust(inputs, scaled)
        assert 0.0 <= a <= 1.0
        assert abs(a - b) <= 1e-12

    def test_out_of_range_factor_rejected(self):
        with pytest.raises(ValueError):
            FactorInputs(prev_score=1.5)


class TestUpdate:
    def test_fixed_point(self):
        ev = full_quality_event(0.6)
        assert update_on_interaction(0.6, ev, P) == pytest.approx(0.6, abs=1e-15)

    def test_learning_rate_step(self):
        assert update_on_interaction(0.5, full_quality_event(1.0), P) == pytest.approx(0.6, abs=1e-12)

    def test_saturation(self):
        assert update_on_interaction(1.0, full_quality_event(1.0), P) == 1.0

    @given(unit, unit, unit, st.floats(0, 1e4), st.floats(0, 50), st.floats(0.01, 1.0))
    def test_contraction(self, s1, s2, q, duration, distance, eta):
        params = TrustModelParams(learning_rate=eta)
        ev = InteractionEvent(1, 2, 0, duration, distance, quality=q)
        u1, u2 = update_on_interaction(s1, ev, params), update_on_interaction(s2, ev, params)
        assert 0.0 <= u1 <= 1.0 and 0.0 <= u2 <= 1.0
        assert abs(u1 - u2) == pytest.approx((1 - eta) * abs(s1 - s2), abs=1e-15)


class TestDecay:
    def test_zero_elapsed(self):
        assert decay(0.7, 0, P) == 0.7

    def test_one_half_life(self):
        params = TrustModelParams(half_life=30)
        assert decay(0.8, 30, params) == pytest.approx(0.4, abs=1e-15)

    def test_baseline_fixed_point(self):
        params = TrustModelParams(baseline=0.25, half_life=10)
        assert decay(0.25, 1234, params) == pytest.approx(0.25, abs=1e-15)

    @given(unit, st.floats(0, 1), st.floats(0, 1e5), st.floats(0, 1e5), st.floats(1, 1e5))
    def test_semigroup(self, s, base, t1, t2, h):
        params = TrustModelParams(baseline=base, half_life=h)
        assert abs(decay(decay(s, t1, params), t2, params) - decay(s, t1 + t2, params)) <= 1e-12

    @given(unit, st.floats(0, 1), st.floats(0, 1e5), st.floats(1, 1e5))
    def test_closed_form(self, s, base, t, h):
        params = TrustModelParams(baseline=base, half_life=h)
        assert decay(s, t, params) == pytest.approx(oracles.half_life(s, base, h, t), abs=1e-12)


class TestStore:
    def test_get_score_examples(self):
        params = TrustModelParams(half_life=30)
        store = TrustStore(params)
        assert get_score(store, 1, 2, DEFAULT_PROFILE, 0) == 0.0
        store.set(1, 2, 0.8, now=0)
        assert get_score(store, 1, 2, DEFAULT_PROFILE, 0) == 0.8
        assert get_score(store, 1, 2, DEFAULT_PROFILE, 30) == pytest.approx(0.4, abs=1e-15)

    @given(unit, unit)
    def test_asymmetry(self, x, y):
        store = TrustStore()
        store.set(2, 1, y)
        store.set(1, 2, x)
        assert store.score(2, 1) == y
        assert store.score(1, 2) == x

    def test_profile_isolation(self):
        store = TrustStore()
        store.set(1, 2, 0.9, profile=HEALTH_PROFILE)
        assert store.score(1, 2, DEFAULT_PROFILE) == 0.0
        assert transitive_trust(store, 1, 3, DEFAULT_PROFILE) is None
        store.set(1, 2, 0.1, profile=DEFAULT_PROFILE)
        assert store.score(1, 2, HEALTH_PROFILE) == 0.9

    def test_rejects_bad_scores(self):
        store = TrustStore()
        with pytest.raises(ValueError):
            store.set(1, 2, 1.2)
        with pytest.raises(ValueError):
            store.set(1, 1, 0.5)

    def test_jsonl_round_trip(self):
        store = TrustStore()
        store.set(1, 2, 0.3, now=5, interaction_count=2)
        store.set(2, 1, 0.7, now=9, profile=HEALTH_PROFILE)
        buf = io.StringIO()
        store.dump_jsonl(buf)
        back = TrustStore.load_jsonl(io.StringIO(buf.getvalue()))
        assert back.records() == store.records()
        assert set(back.records()[0]) == {"from", "to", "profile", "score", "last_updated", "interaction_count"}


class TestAuthority:
    def test_threshold_rule(self):
        store = TrustStore()
        store.set(1, 2, 0.9)
        store.set(1, 3, 0.79999)
        assert verify_authority(store, 1, 2, DEFAULT_PROFILE, 0.8, 0)
        assert not verify_authority(store, 1, 3, DEFAULT_PROFILE, 0.8, 0)

    def test_doctor_after_twenty_consults(self):
        q = 0.9
        s = 0.0
        for _ in range(20):
            s = update_on_interaction(s, full_quality_event(q), P)
        want = oracles.ema_iterate(0.0, q, 0.2, 20)
        assert s == pytest.approx(want, abs=1e-12)
        assert want == pytest.approx(q * (1 - 0.8**20), abs=1e-12)
        store = TrustStore()
        store.set(1, 2, s, profile=HEALTH_PROFILE)
        assert verify_authority(store, 1, 2, HEALTH_PROFILE, 0.8, 0)
        assert not verify_authority(store, 1, 2, DEFAULT_PROFILE, 0.8, 0)


class TestSessions:
    def test_new_pair_uses_observable_factors(self):
        store = TrustStore()
        ctx = SessionContext(frozenset({"a", "b"}), frozenset({"b"}), frozenset(), frozenset())
        ev = InteractionEvent(1, 2, 0, 30, 0.0, InteractionKind.CONVERSATION, quality=0.7)
        got = session_start_score(store, 1, 2, DEFAULT_PROFILE, 0, ev, ctx)
        want = oracles.weighted_mean([(0.10, 0.5), (0.15, 1 - math.exp(-1)), (0.05, 0.7)])
        assert got == pytest.approx(want, abs=1e-12)

    def test_stale_entry_is_used_after_decay(self):
        params = TrustModelParams(half_life=100, session_window=50)
        store = TrustStore(params)
        store.set(1, 2, 0.8, now=0)
        assert session_start_score(store, 1, 2, DEFAULT_PROFILE, 100) == pytest.approx(0.4, abs=1e-15)

    def test_apply_interaction_writes_one_direction(self):
        store = TrustStore()
        ev = InteractionEvent(1, 2, 10, 60, 1.0, quality=1.0)
        rec = apply_interaction(store, 1, 2, ev)
        assert rec.last_updated == 10 and rec.interaction_count == 1
        assert store.entry(2, 1) is None
        assert 0.0 < store.score(1, 2) <= 1.0

    @given(st.lists(st.tuples(st.floats(1, 500), st.floats(0, 10), unit), min_size=1, max_size=30))
    def test_scores_stay_in_bounds(self, steps):
        store = TrustStore()
        t = 0
        for duration, distance, q in steps:
            t += int(duration) + 1
            apply_interaction(store, 1, 2, InteractionEvent(1, 2, t, duration, distance, quality=q))
            assert 0.0 <= store.score(1, 2, now=t) <= 1.0


def test_params_validation():
    with pytest.raises(ValueError):
        TrustModelParams(learning_rate=0)
    with pytest.raises(ValueError):
        TrustModelParams(w_prev=-1)
    assert TrustModelParams.from_dict(P.to_dict()) == P
    with pytest.raises(ValueError):
        TrustModelParams.from_dict({"bogus": 1})
