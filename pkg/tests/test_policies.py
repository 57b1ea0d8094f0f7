"""Policy tables, threshold compression, serialization."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from semsched.core import Action, AgentState, MetricKind, SystemParams, params_stamp
from semsched.policies import (
    NotThresholdStructured,
    PolicyTable,
    StateOutOfRange,
    ThresholdPolicy,
    extract_thresholds,
    format_policy,
    format_thresholds,
    greedy_policy,
    parse_policy,
    parse_thresholds,
    policy_action,
    state_count,
    state_index,
)

PARAMS = SystemParams(B=2, delta_max=4, allow_tight_truncation=True)


def make_table(actions):
    return PolicyTable(
        kind=MetricKind.VAOI,
        params_stamp=params_stamp(PARAMS),
        delta_max=PARAMS.delta_max,
        B=PARAMS.B,
        actions=np.asarray(actions, dtype=np.int8),
    )


class TestIndexing:
    def test_canonical_order(self):
        # metric-major, then battery, then query
        assert state_index(4, 2, AgentState(0, 0, 0)) == 0
        assert state_index(4, 2, AgentState(0, 0, 1)) == 1
        assert state_index(4, 2, AgentState(0, 1, 0)) == 2
        assert state_index(4, 2, AgentState(1, 0, 0)) == 6
        assert state_count(4, 2) == 30

    @given(
        m=st.integers(0, 4), b=st.integers(0, 2), q=st.integers(0, 1)
    )
    def test_index_bijective(self, m, b, q):
        i = state_index(4, 2, AgentState(m, b, q))
        assert 0 <= i < state_count(4, 2)
        assert i == (m * 3 + b) * 2 + q


class TestPolicyTable:
    def test_rejects_wrong_shape(self):
        with pytest.raises(ValueError, match="shape"):
            make_table(np.zeros(7, dtype=np.int8))

    def test_rejects_transmit_on_empty_battery(self):
        actions = np.zeros(state_count(4, 2), dtype=np.int8)
        actions[state_index(4, 2, AgentState(2, 0, 1))] = 1
        with pytest.raises(ValueError, match="empty battery"):
            make_table(actions)

    def test_actions_frozen(self):
        t = make_table(np.zeros(30, dtype=np.int8))
        with pytest.raises(ValueError):
            t.actions[3] = 1

    def test_lookup_out_of_range(self):
        t = make_table(np.zeros(30, dtype=np.int8))
        with pytest.raises(StateOutOfRange):
            policy_action(t, AgentState(5, 0, 0))
        with pytest.raises(StateOutOfRange):
            policy_action(t, AgentState(0, 3, 0))


class TestGreedy:
    def test_transmits_iff_battery(self):
        g = greedy_policy(PARAMS)
        for m in range(5):
            for q in (0, 1):
                assert g.action(AgentState(m, 0, q)) == Action.IDLE
                assert g.action(AgentState(m, 1, q)) == Action.TRANSMIT
                assert g.action(AgentState(m, 2, q)) == Action.TRANSMIT

    def test_stamped(self):
        assert greedy_policy(PARAMS).params_stamp == params_stamp(PARAMS)


class TestThresholds:
    def test_greedy_compresses(self):
        tp = extract_thresholds(greedy_policy(PARAMS))
        # battery 0: never; battery >= 1: always (threshold 0)
        assert tp.thresholds[(0, 0)] == PARAMS.delta_max + 1
        assert tp.thresholds[(1, 1)] == 0
        assert tp.thresholds[(2, 0)] == 0

    def test_round_trip_table(self):
        tp = extract_thresholds(greedy_policy(PARAMS))
        assert np.array_equal(tp.to_table().actions, greedy_policy(PARAMS).actions)

    def test_violating_slice_reported(self):
        actions = np.zeros(30, dtype=np.int8)
        # transmit at metric 1 but idle at metric 2: not a threshold
        actions[state_index(4, 2, AgentState(1, 2, 1))] = 1
        actions[state_index(4, 2, AgentState(3, 2, 1))] = 1
        with pytest.raises(NotThresholdStructured) as err:
            extract_thresholds(make_table(actions))
        assert (2, 1) in err.value.slices

    def test_inclusive_switch_point(self):
        actions = np.zeros(30, dtype=np.int8)
        for m in (2, 3, 4):
            actions[state_index(4, 2, AgentState(m, 1, 0))] = 1
        tp = extract_thresholds(make_table(actions))
        assert tp.thresholds[(1, 0)] == 2
        assert policy_action(tp, AgentState(2, 1, 0)) == Action.TRANSMIT
        assert policy_action(tp, AgentState(1, 1, 0)) == Action.IDLE

    @given(st.integers(0, 2**30 - 1))
    def test_threshold_tables_agree_with_origin(self, bits):
        actions = np.array([(bits >> i) & 1 for i in range(30)], dtype=np.int8)
        battery = (np.arange(30) // 2) % 3
        actions[battery == 0] = 0
        table = make_table(actions)
        try:
            tp = extract_thresholds(table)
        except NotThresholdStructured:
            return
        assert np.array_equal(tp.to_table().actions, table.actions)


class TestSerialization:
    def test_policy_round_trip(self):
        g = greedy_policy(PARAMS)
        back = parse_policy(format_policy(g))
        assert back.kind == g.kind
        assert back.params_stamp == g.params_stamp
        assert np.array_equal(back.actions, g.actions)

    def test_threshold_round_trip(self):
        tp = extract_thresholds(greedy_policy(PARAMS))
        back = parse_thresholds(format_thresholds(tp))
        assert back == tp
