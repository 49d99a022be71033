import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oneclean import problems, protocol, qstate, simulator, transforms
from oneclean.errors import BackendLimitError, DomainError, ShapeError
from oneclean.protocol import (
    ALICE,
    BOB,
    ComposedU,
    ControlledU,
    Measurement,
    ProtocolSpec,
    RegisterLayout,
    RoundAction,
    explicit,
)

from helpers import random_trace_form, random_two_clean

TOL = 1e-9


def test_ip2_clocked_accepts_zero_with_certainty():
    p = problems.ip2_clocked(2)
    rep = simulator.run_density(p, {ALICE: "11", BOB: "11"})  # IP = 0
    assert 1.0 - rep.acceptance == pytest.approx(1.0, abs=TOL)  # P(output 0) = 1


def test_ip2_one_clean_correct_answer_five_eighths():
    p = problems.ip2_one_clean(2)
    for inp, label in problems.ip2_inputs(2):
        acc = simulator.run_density(p, inp).acceptance
        correct = acc if label == 1 else 1.0 - acc
        assert correct == pytest.approx(5 / 8, abs=TOL)


def test_all_identity_protocol_accepts():
    p = ProtocolSpec(
        name="idle",
        players=2,
        layout=RegisterLayout(clean=1, mixed=1),
        initial_owner=(ALICE, ALICE),
        rounds=(RoundAction(ALICE, explicit(qstate.I2), (0,), frozenset(), None),),
        measurement=Measurement(single_qubit=0),
    )
    assert simulator.run_density(p).acceptance == pytest.approx(1.0, abs=TOL)


def test_density_backend_limit():
    p = ProtocolSpec(
        name="big",
        players=2,
        layout=RegisterLayout(clean=1, mixed=12),
        initial_owner=(ALICE,) * 13,
        rounds=(),
        measurement=Measurement(single_qubit=0),
    )
    with pytest.raises(BackendLimitError, match="trace backend"):
        simulator.run_density(p)


def test_ensemble_equals_density_without_mixed_qubits():
    p = problems.middle_protocol(2)  # m = 0: a single pure branch
    inp = {ALICE: "10", BOB: "11"}
    d = simulator.run_density(p, inp).acceptance
    e = simulator.run_ensemble(p, inp, sample="all").acceptance
    assert e == pytest.approx(d, abs=1e-12)


def test_ensemble_ip2_one_clean_four_branches():
    p = problems.ip2_one_clean(2)
    inp = {ALICE: "11", BOB: "01"}  # IP = 1
    rep = simulator.run_ensemble(p, inp, sample="all")
    assert rep.acceptance == pytest.approx(5 / 8, abs=TOL)


@given(st.integers(0, 10**6))
@settings(max_examples=10, deadline=None)
def test_ensemble_matches_density_random_protocol(seed):
    p = random_two_clean(seed, mixed=2)  # 4 qubits
    inp = {ALICE: "1", BOB: ""}
    d = simulator.run_density(p, inp).acceptance
    e = simulator.run_ensemble(p, inp, sample="all").acceptance
    assert abs(d - e) < TOL


def test_ensemble_sampled_records_seed():
    p = problems.ip2_one_clean(2)
    inp = {ALICE: "11", BOB: "01"}
    rep = simulator.run_ensemble(p, inp, sample=16, seed=9)
    assert rep.seed == 9
    rep2 = simulator.run_ensemble(p, inp, sample=16, seed=9)
    assert rep.acceptance == rep2.acceptance


def _trace_form_with_piece(m, width):
    owners = (BOB,) + (BOB,) * width + (BOB,)  # control, piece register, channel
    ch = width + 1
    pieces = [
        (explicit(m), tuple(range(1, width + 1))),
        (explicit(np.eye(2, dtype=complex)), (ch,)),
    ]
    return transforms.hadamard_test_protocol(pieces, owners, ch)


def test_run_trace_identity_piece():
    p = _trace_form_with_piece(np.eye(8, dtype=complex), 3)
    assert simulator.run_trace(p).acceptance == pytest.approx(1.0, abs=TOL)


def test_run_trace_traceless_piece():
    m = qstate.tensor_all([qstate.X, qstate.I2, qstate.I2])
    p = _trace_form_with_piece(m, 3)
    assert simulator.run_trace(p).acceptance == pytest.approx(0.5, abs=TOL)


@given(st.integers(0, 10**6))
@settings(max_examples=10, deadline=None)
def test_run_trace_matches_density(seed):
    p = random_trace_form(seed, pairs=2, slots_a=2, slots_b=1)
    t = simulator.run_trace(p).acceptance
    d = simulator.run_density(p).acceptance
    assert abs(t - d) < TOL


def test_run_trace_requires_plan():
    with pytest.raises(ShapeError):
        simulator.run_trace(problems.ip2_clocked(1))


def test_oneway_bias_identity_pair():
    eye = np.eye(8, dtype=complex)
    assert simulator.oneway_bias(eye, eye) == pytest.approx(0.5, abs=TOL)
    assert simulator.oneway_bias(eye, -eye) == pytest.approx(-0.5, abs=TOL)


def _oneway_protocol(ua, targets_a, ub, targets_b, m):
    alice = ComposedU(
        1 + len(targets_a),
        (
            (explicit(qstate.H), (0,)),
            (ControlledU(explicit(ua)), tuple(range(1 + len(targets_a)))),
        ),
    )
    bob = ComposedU(
        1 + len(targets_b),
        (
            (ControlledU(explicit(ub)), tuple(range(1 + len(targets_b)))),
            (explicit(qstate.H), (0,)),
        ),
    )
    owners = [ALICE] * (1 + m)
    for t in targets_b:
        if t not in targets_a:
            owners[1 + t] = BOB
    msg = frozenset({0} | {1 + t for t in targets_b if owners[1 + t] == ALICE})
    return ProtocolSpec(
        name="oneway",
        players=2,
        layout=RegisterLayout(clean=1, mixed=m),
        initial_owner=tuple(owners),
        rounds=(
            RoundAction(ALICE, alice, (0,) + tuple(1 + t for t in targets_a), msg | frozenset({1 + t for t in targets_a if 1 + t in msg}), BOB),
            RoundAction(BOB, bob, (0,) + tuple(1 + t for t in targets_b), frozenset(), None),
        ),
        measurement=Measurement(single_qubit=0),
    )


@given(st.integers(0, 10**6))
@settings(max_examples=15, deadline=None)
def test_oneway_bias_matches_density(seed):
    rng = np.random.default_rng(seed)
    m = 3
    ta = tuple(sorted(rng.choice(m, size=2, replace=False).tolist()))
    tb = tuple(sorted(rng.choice(m, size=2, replace=False).tolist()))
    ua = qstate.haar_unitary(4, rng)
    ub = qstate.haar_unitary(4, rng)
    p = _oneway_protocol(ua, ta, ub, tb, m)
    assert protocol.validate(p) == []
    acc = simulator.run_density(p).acceptance
    bias = simulator.oneway_bias(
        qstate.embed_operator(ua, ta, m), qstate.embed_operator(ub, tb, m)
    )
    assert abs((acc - 0.5) - bias) < TOL
    assert abs(bias) <= 0.5 + TOL


def test_measure_bias_values():
    p = problems.ip2_one_clean(2)
    eps = simulator.measure_bias(p, problems.ip2_inputs(2), Fraction(1, 2))
    assert eps == pytest.approx(1 / 8, abs=TOL)


def test_measure_bias_perfect_and_coin():
    pc = problems.ip2_clocked(1)
    assert simulator.measure_bias(pc, problems.ip2_inputs(1), Fraction(1, 2)) == pytest.approx(
        0.5, abs=TOL
    )
    coin = ProtocolSpec(
        name="coin",
        players=2,
        layout=RegisterLayout(clean=1, mixed=1),
        initial_owner=(ALICE, ALICE),
        rounds=(),
        measurement=Measurement(single_qubit=1),
    )
    labeled = [({}, 0), ({}, 1)]
    assert simulator.measure_bias(coin, labeled, Fraction(1, 2)) == pytest.approx(0.0, abs=TOL)


def test_measure_bias_empty_inputs():
    with pytest.raises(DomainError):
        simulator.measure_bias(problems.ip2_clocked(1), [], Fraction(1, 2))


def _binomial_tail_oracle(t, k_min, prob):
    """P[Bin(t, prob) >= k_min] by direct summation with exact binomials."""
    return sum(
        math.comb(t, k) * prob**k * (1 - prob) ** (t - k) for k in range(k_min, t + 1)
    )


def test_amplify_extreme_bias_is_errorless():
    assert simulator.amplify(0, 1, Fraction(1, 2), Fraction(1, 2)) == 0.0
    assert simulator.repetition_plan(Fraction(1, 2), Fraction(1, 2)).t == 16


def test_amplify_matches_binomial_oracle():
    for eps, acc0, acc1 in [
        (Fraction(1, 8), Fraction(3, 8), Fraction(5, 8)),
        (Fraction(1, 4), Fraction(1, 4), Fraction(3, 4)),
    ]:
        plan = simulator.repetition_plan(eps, Fraction(1, 2))
        err = simulator.amplify(acc0, acc1, Fraction(1, 2), eps)
        want1 = 1.0 - _binomial_tail_oracle(plan.t, plan.threshold, float(acc1))
        want0 = _binomial_tail_oracle(plan.t, plan.threshold, float(acc0))
        assert err == pytest.approx(max(want0, want1), rel=1e-9)
        assert err <= 1 / 3


def test_amplify_error_bound_across_biases():
    for eps in (Fraction(1, 2), Fraction(1, 4), Fraction(1, 8), Fraction(1, 16)):
        err = simulator.amplify(
            Fraction(1, 2) - eps, Fraction(1, 2) + eps, Fraction(1, 2), eps
        )
        assert err <= 1 / 3


def test_amplify_precondition():
    with pytest.raises(DomainError):
        simulator.amplify(0.5, 0.6, Fraction(1, 2), Fraction(1, 4))


def test_acceptance_stays_in_unit_interval():
    p = problems.ip2_one_clean(3)
    for inp, _ in problems.ip2_inputs(3)[:8]:
        acc = simulator.run_density(p, inp).acceptance
        assert -TOL <= acc <= 1 + TOL
