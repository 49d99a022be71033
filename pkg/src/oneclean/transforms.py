"""Protocol-to-protocol constructions with their exact acceptance arithmetic.

Every transform returns the rewritten protocol together with a
TransformCert whose affine map alpha*a + beta predicts the output's
acceptance from the base acceptance a, exactly (rational arithmetic).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from . import qstate
from .errors import DomainError, ShapeError
from .protocol import (
    ALICE,
    BOB,
    AdjointU,
    ComposedU,
    ControlledU,
    DispatchU,
    ExplicitU,
    FIXED,
    FlagStateU,
    GenU,
    Measurement,
    ProtocolSpec,
    RegisterLayout,
    RoundAction,
    SEMI_UNCLOCKED,
    TracePlan,
    assert_valid,
    communication_cost,
    explicit,
    measuring_player,
    ownership_schedule,
    register_generator,
)


@dataclass(frozen=True)
class TransformCert:
    """Exact prediction attached to a transform's output.

    The output's acceptance on any input equals
    ``acceptance_slope * a + acceptance_offset`` where a is the base
    protocol's acceptance on that input.
    """

    input_bias: object
    predicted_bias: object
    acceptance_slope: Fraction
    acceptance_offset: Fraction
    communication_before: int
    communication_after: int
    reference_before: object = None
    reference_after: object = None
    q1_bound: object = None
    notes: str = ""

    def predict(self, acceptance):
        return self.acceptance_slope * acceptance + self.acceptance_offset

    def to_obj(self) -> dict:
        def enc(x):
            if x is None:
                return None
            if isinstance(x, (int, Fraction)):
                return str(Fraction(x))
            return float(x)

        return {
            "input_bias": enc(self.input_bias),
            "predicted_bias": enc(self.predicted_bias),
            "acceptance_map": {
                "slope": enc(self.acceptance_slope),
                "offset": enc(self.acceptance_offset),
            },
            "communication_before": self.communication_before,
            "communication_after": self.communication_after,
            "reference_before": enc(self.reference_before),
            "reference_after": enc(self.reference_after),
            "q1_bound": enc(self.q1_bound),
            "notes": self.notes,
        }


def _affine(x, slope: Fraction, offset: Fraction):
    if x is None:
        return None
    if isinstance(x, (int, Fraction)):
        return slope * x + offset
    return float(slope) * x + float(offset)


def _shift_round(r: RoundAction, shift: int) -> RoundAction:
    return RoundAction(
        player=r.player,
        unitary=r.unitary,
        targets=tuple(t + shift for t in r.targets),
        message=frozenset(q + shift for q in r.message),
        to=r.to,
    )


def _measurement_projector(meas: Measurement) -> tuple[np.ndarray, tuple]:
    if meas.single_qubit is not None:
        return qstate.basis_projector(0), (meas.single_qubit,)
    return meas.projector, meas.qubits


# ---------------------------------------------------------------------------
# Clocked k-clean -> clocked one-clean: bias eps/2^k behind a flag qubit
# ---------------------------------------------------------------------------


def _flip_if_zero(k: int) -> np.ndarray:
    """Bit flip on the first qubit iff the next k qubits are all |0>."""
    dim = 1 << (k + 1)
    m = np.eye(dim, dtype=complex)
    m[[0, 1 << k]] = m[[1 << k, 0]]
    return m


def k_to_one_clean(p: ProtocolSpec) -> tuple[ProtocolSpec, TransformCert]:
    """Demote the k clean qubits to mixed ones behind a flag qubit.

    The prepended unitary flips the new clean flag exactly when the
    demoted register is all-zero, so with probability 2^-k the original
    run happens under the flag; otherwise the measurement falls back to a
    coin toss on a fresh mixed qubit that no unitary ever touches (the
    fresh qubit keeps the coin exactly fair). Acceptance maps to
    (1 - 2^-k)/2 + 2^-k * a, hence bias eps/2^k; communication grows by
    one only when somebody other than the starting player measures.
    """
    assert_valid(p)
    k = p.layout.clean
    if k < 1:
        raise DomainError("base protocol has no clean qubits")
    if p.players != 2:
        raise ShapeError("k-to-one-clean handles two-player protocols")
    if not p.rounds:
        raise ShapeError("base protocol has no rounds")
    starter = p.rounds[0].player
    if any(p.initial_owner[q] != starter for q in range(k)):
        raise ShapeError("the starting player must own every clean qubit initially")
    measurer = measuring_player(p)

    total = p.layout.total
    coin = total + 1  # after the shift below
    rounds = [
        RoundAction(starter, explicit(_flip_if_zero(k)), tuple(range(k + 1)), frozenset(), None)
    ]
    rounds.extend(_shift_round(r, 1) for r in p.rounds)

    comm = sum(len(r.message) for r in p.rounds)
    if measurer != starter:
        # carry the flag with the starter's last message to the measurer
        for i in range(len(rounds) - 1, 0, -1):
            r = rounds[i]
            if r.player == starter and r.message and r.to == measurer:
                rounds[i] = RoundAction(r.player, r.unitary, r.targets, r.message | {0}, r.to)
                break
        else:
            raise ShapeError("no message from the starter to the measurer can carry the flag")
        comm += 1

    base_proj, base_support = _measurement_projector(p.measurement)
    support = (0,) + tuple(q + 1 for q in base_support) + (coin,)
    dim_base = base_proj.shape[0]
    accept_heads = qstate.basis_projector(1)
    proj = np.kron(
        qstate.basis_projector(1), np.kron(base_proj, qstate.I2)
    ) + np.kron(qstate.basis_projector(0), np.kron(np.eye(dim_base), accept_heads))

    slope = Fraction(1, 1 << k)
    offset = (1 - slope) / 2
    out = ProtocolSpec(
        name=p.name + "+k1",
        players=2,
        layout=RegisterLayout(clean=1, mixed=p.layout.mixed + k + 1),
        initial_owner=(starter,) + p.initial_owner + (measurer,),
        rounds=tuple(rounds),
        measurement=Measurement(qubits=support, projector=proj),
        mode=p.mode,
        channel=p.channel,
        declared_p=_affine(p.declared_p, slope, offset),
        declared_eps=_affine(p.declared_eps, slope, Fraction(0)),
    )
    cert = TransformCert(
        input_bias=p.declared_eps,
        predicted_bias=_affine(p.declared_eps, slope, Fraction(0)),
        acceptance_slope=slope,
        acceptance_offset=offset,
        communication_before=sum(len(r.message) for r in p.rounds),
        communication_after=comm,
        reference_before=p.declared_p,
        reference_after=out.declared_p,
        notes=f"k={k}; flag + coin qubit added; acceptance a -> {offset} + a/{1 << k}",
    )
    return out, cert


# ---------------------------------------------------------------------------
# Arbitrary projective measurement -> single-qubit measurement
# ---------------------------------------------------------------------------


def projective_to_single_qubit(p: ProtocolSpec) -> ProtocolSpec:
    """Replace the final measurement by a flip unitary plus one-qubit readout.

    A new clean qubit is prepended and flipped on the rejecting subspace
    (X (x) (I-P) + I (x) P), so measuring the new qubit in the standard
    basis accepts on |0> with exactly the original probability.
    """
    assert_valid(p)
    measurer = measuring_player(p)
    base_proj, base_support = _measurement_projector(p.measurement)
    dim = base_proj.shape[0]
    u_s = np.kron(qstate.X, np.eye(dim) - base_proj) + np.kron(qstate.I2, base_proj)
    rounds = [_shift_round(r, 1) for r in p.rounds]
    targets = (0,) + tuple(q + 1 for q in base_support)
    rounds.append(RoundAction(measurer, explicit(u_s), targets, frozenset(), None))
    return ProtocolSpec(
        name=p.name + "+sq",
        players=p.players,
        layout=RegisterLayout(clean=p.layout.clean + 1, mixed=p.layout.mixed),
        initial_owner=(measurer,) + p.initial_owner,
        rounds=tuple(rounds),
        measurement=Measurement(single_qubit=0),
        mode=p.mode,
        channel=p.channel,
        declared_p=p.declared_p,
        declared_eps=p.declared_eps,
    )


# ---------------------------------------------------------------------------
# Ghosted -> fixed channel (courier construction)
# ---------------------------------------------------------------------------


@dataclass
class FixedChannelForm:
    protocol: ProtocolSpec
    starter: int
    measurer: int
    channel: int
    rounds: int  # power of two, even; round t player: starter if t odd


def _merge_consecutive(p: ProtocolSpec) -> ProtocolSpec:
    """Fold empty-message rounds into the next round by the same player."""
    rounds = list(p.rounds)
    i = 0
    while i + 1 < len(rounds):
        a, b = rounds[i], rounds[i + 1]
        if a.player == b.player and not a.message:
            targets = tuple(sorted(set(a.targets) | set(b.targets)))
            pos = {q: j for j, q in enumerate(targets)}
            merged = ComposedU(
                len(targets),
                (
                    (a.unitary, tuple(pos[q] for q in a.targets)),
                    (b.unitary, tuple(pos[q] for q in b.targets)),
                ),
            )
            rounds[i : i + 2] = [RoundAction(a.player, merged, targets, b.message, b.to)]
        else:
            i += 1
    return ProtocolSpec(
        name=p.name,
        players=p.players,
        layout=p.layout,
        initial_owner=p.initial_owner,
        rounds=tuple(rounds),
        measurement=p.measurement,
        mode=p.mode,
        channel=p.channel,
        declared_p=p.declared_p,
        declared_eps=p.declared_eps,
        trace_plan=p.trace_plan,
    )


def to_fixed_channel(p: ProtocolSpec) -> FixedChannelForm:
    """Reroute every transfer through one bouncing channel qubit.

    Original qubits become fixed slots owned by their initial holder;
    message content travels via SWAPs into the courier, with receiver-side
    guest slots allocated on demand. Rounds strictly alternate, each
    sending exactly the courier, and the count is padded to a power of
    two. Acceptance is exactly preserved (pure wire bookkeeping).
    """
    p = _merge_consecutive(p)
    assert_valid(p)
    if p.players != 2:
        raise ShapeError("fixed-channel conversion handles two-player protocols")
    support = p.measurement.support()
    measurer = measuring_player(p)
    starter = 1 - measurer
    for q in support:
        if p.initial_owner[q] != measurer:
            raise ShapeError("measured qubits must start with the measuring player")
    for r in p.rounds:
        if r.message & set(support):
            raise ShapeError("a measured qubit is communicated; not in courier shape")

    total = p.layout.total
    ch = total
    pos = {q: q for q in range(total)}
    free: dict[int, list] = {0: [], 1: []}
    factors: dict[int, list] = {}
    guest_owner: list[int] = []

    def player_of(t: int) -> int:
        return starter if t % 2 == 1 else measurer

    def next_round_for(player: int, at_least: int) -> int:
        t = max(at_least, 1)
        return t if player_of(t) == player else t + 1

    def add(t: int, ref, slots) -> None:
        factors.setdefault(t, []).append((ref, tuple(slots)))

    cur = 1
    for orig in p.rounds:
        t_u = next_round_for(orig.player, cur)
        add(t_u, orig.unitary, (pos[q] for q in orig.targets))
        cur = t_u
        for q in sorted(orig.message):
            t_s = next_round_for(orig.player, cur)
            add(t_s, explicit(qstate.SWAP2), (pos[q], ch))
            free[orig.player].append(pos[q])
            free[orig.player].sort()
            if free[orig.to]:
                dest = free[orig.to].pop(0)
            else:
                dest = total + 1 + len(guest_owner)
                guest_owner.append(orig.to)
            add(t_s + 1, explicit(qstate.SWAP2), (ch, dest))
            pos[q] = dest
            cur = t_s + 1

    last = max(factors) if factors else 1
    r_fc = max(2, 1 << (last - 1).bit_length())

    rounds = []
    for t in range(1, r_fc + 1):
        player = player_of(t)
        fl = factors.get(t, [])
        if fl:
            targets = tuple(sorted({s for _, slots in fl for s in slots}))
            local = {q: i for i, q in enumerate(targets)}
            ref = ComposedU(
                len(targets),
                tuple((r, tuple(local[s] for s in slots)) for r, slots in fl),
            )
        else:
            targets = (ch,)
            ref = explicit(qstate.I2)
        rounds.append(
            RoundAction(player, ref, targets, frozenset({ch}), 1 - player)
        )

    fc = ProtocolSpec(
        name=p.name + "+fc",
        players=2,
        layout=RegisterLayout(p.layout.clean, p.layout.mixed + 1 + len(guest_owner)),
        initial_owner=p.initial_owner + (starter,) + tuple(guest_owner),
        rounds=tuple(rounds),
        measurement=p.measurement,
        mode=p.mode,
        channel=FIXED,
        declared_p=p.declared_p,
        declared_eps=p.declared_eps,
    )
    return FixedChannelForm(
        protocol=fc, starter=starter, measurer=measurer, channel=ch, rounds=r_fc
    )


# ---------------------------------------------------------------------------
# Trace-estimation wrap: Hadamard test around the back-and-forth operator
# ---------------------------------------------------------------------------


def to_trace_form(
    p: ProtocolSpec, base_bias=None, k: Optional[int] = None
) -> tuple[ProtocolSpec, TransformCert]:
    """Wrap a single-qubit-measuring protocol into a Hadamard test.

    The controlled operator runs the fixed-channel form backwards and
    forwards with one CNOT onto a fresh mixed ancilla per clean slot plus
    one for the measured slot; each CNOT realizes a |0><0| projector
    inside the trace, so with j clean qubits the acceptance becomes
    p0 = 1/2 + a / 2^(j+1)  (j = 2 along the standard chain: 1/2 + a/8,
    i.e. 1/2 + 1/16 + eps/2^(k+3) at a = 1/2 + eps/2^k).

    ``base_bias``/``k`` only annotate the cert; the map itself is exact.
    """
    if p.measurement.single_qubit is None:
        raise ShapeError("trace form needs a single-qubit measurement; apply sq-measure first")
    j = p.layout.clean
    fc = to_fixed_channel(p)
    fcp = fc.protocol
    r = fc.rounds
    measured = p.measurement.single_qubit
    n_fc = fcp.layout.total

    # wrapper register: control 0, fc slots shifted by one, then the CNOT
    # ancillas (one per clean slot + one for the measured slot's final
    # projector). Everything but the control starts totally mixed.
    clean_slots = list(range(fcp.layout.clean))
    anc_base = 1 + n_fc
    init_anc = {c: anc_base + i for i, c in enumerate(clean_slots)}
    end_anc = anc_base + len(clean_slots)
    n_total = end_anc + 1

    owners = list(fcp.initial_owner)
    m_cleans = [c for c in clean_slots if owners[c] == fc.measurer]
    s_cleans = [c for c in clean_slots if owners[c] == fc.starter]

    def cnot_factor(src_slot: int, anc: int):
        return (explicit(qstate.CNOT), (1 + src_slot, anc))

    def round_ref(r_: RoundAction):
        # fc round unitary lifted to wrapper coordinates
        targets = tuple(t + 1 for t in r_.targets)
        return r_.unitary, targets

    def compose(pieces):
        targets = tuple(sorted({t for _, tg in pieces for t in tg}))
        local = {q: i for i, q in enumerate(targets)}
        return (
            ComposedU(len(targets), tuple((ref, tuple(local[t] for t in tg)) for ref, tg in pieces)),
            targets,
        )

    pieces: list[tuple] = []
    # piece 0 (measurer): initial projectors for measurer-owned clean slots
    head = [cnot_factor(c, init_anc[c]) for c in m_cleans]
    if not head:
        head = [(explicit(qstate.I2), (1 + fc.channel,))]
    pieces.append(compose(head))
    # forward pass, with the end projector folded into U_r
    for t in range(1, r):
        ref, tg = round_ref(fcp.rounds[t - 1])
        pieces.append((ref, tg))
    last_ref, last_tg = round_ref(fcp.rounds[r - 1])
    pieces.append(
        compose(
            [
                (last_ref, last_tg),
                cnot_factor(measured, end_anc),
                (AdjointU(last_ref), last_tg),
            ]
        )
    )
    # backward pass
    for t in range(r - 1, 1, -1):
        ref, tg = round_ref(fcp.rounds[t - 1])
        pieces.append((AdjointU(ref), tg))
    first_ref, first_tg = round_ref(fcp.rounds[0])
    tail = [(AdjointU(first_ref), first_tg)]
    tail.extend(cnot_factor(c, init_anc[c]) for c in s_cleans)
    pieces.append(compose(tail))
    assert len(pieces) == 2 * r

    ch = 1 + fc.channel
    rounds = []
    for idx, (ref, tg) in enumerate(pieces):
        player = fc.measurer if idx % 2 == 0 else fc.starter
        ctrl = (ControlledU(ref), (0,) + tg)
        if idx == 0:
            unitary, targets = compose([((explicit(qstate.H)), (0,)), ctrl])
        elif idx == 2 * r - 1:
            unitary, targets = compose([ctrl, ((explicit(qstate.H)), (0,))])
        else:
            unitary, targets = ControlledU(ref), (0,) + tg
        rounds.append(
            RoundAction(player, unitary, targets, frozenset({0, ch}), 1 - player)
        )

    new_owner = [fc.measurer]  # control
    new_owner.extend(owners)
    new_owner[1 + fc.channel] = fc.measurer  # courier starts with round 1's sender
    for c in clean_slots:
        new_owner.append(owners[c])  # init ancilla sits with its slot's owner
    new_owner.append(fc.measurer)  # end ancilla

    slope = Fraction(1, 1 << (j + 1))
    offset = Fraction(1, 2)
    out = ProtocolSpec(
        name=p.name + "+trace",
        players=2,
        layout=RegisterLayout(clean=1, mixed=n_total - 1),
        initial_owner=tuple(new_owner),
        rounds=tuple(rounds),
        measurement=Measurement(single_qubit=0),
        channel=FIXED,
        declared_p=_affine(p.declared_p, slope, offset),
        declared_eps=_affine(p.declared_eps, slope, Fraction(0)),
        trace_plan=TracePlan(control=0, channel=ch, pieces=tuple(pieces)),
    )
    eps_in = base_bias if base_bias is not None else p.declared_eps
    notes = f"j={j} clean slots -> p0 = 1/2 + a/{1 << (j + 1)}; {2 * r} rounds of 2 qubits"
    if k is not None and eps_in is not None:
        notes += f"; at a = 1/2 + eps/2^{k}: p0 = 1/2 + 1/{1 << (j + 2)} + eps/2^{k + j + 1}"
    cert = TransformCert(
        input_bias=eps_in,
        predicted_bias=_affine(eps_in, slope, Fraction(0)) if eps_in is not None else None,
        acceptance_slope=slope,
        acceptance_offset=offset,
        communication_before=communication_cost(p),
        communication_after=4 * r,
        reference_before=p.declared_p,
        reference_after=out.declared_p,
        notes=notes,
    )
    return out, cert


def hadamard_test_protocol(
    pieces, owners, channel: int, name: str = "hadamard-test"
) -> ProtocolSpec:
    """Assemble a trace-form protocol from explicit controlled pieces.

    ``pieces[i]`` is (ref, targets) on non-control qubits; qubit 0 is the
    clean control, everything else starts mixed. Piece i is applied by the
    control's owner when i is even and by the other player when odd, with
    {control, channel} sent every round, so the acceptance is
    1/2 + Re Tr(prod pieces) / 2^(d+1) with d = len(owners) - 1.
    """
    pieces = [(ref, tuple(tg)) for ref, tg in pieces]
    if len(pieces) % 2:
        raise ShapeError("need an even number of pieces (players alternate)")
    first = owners[0]
    rounds = []
    for idx, (ref, tg) in enumerate(pieces):
        player = first if idx % 2 == 0 else 1 - first
        ctrl = (ControlledU(ref), (0,) + tg)
        if idx == 0:
            targets = tuple(sorted({0, *ctrl[1]}))
            local = {q: i for i, q in enumerate(targets)}
            unitary = ComposedU(
                len(targets),
                (
                    (explicit(qstate.H), (local[0],)),
                    (ctrl[0], tuple(local[t] for t in ctrl[1])),
                ),
            )
        elif idx == len(pieces) - 1:
            targets = tuple(sorted({0, *ctrl[1]}))
            local = {q: i for i, q in enumerate(targets)}
            unitary = ComposedU(
                len(targets),
                (
                    (ctrl[0], tuple(local[t] for t in ctrl[1])),
                    (explicit(qstate.H), (local[0],)),
                ),
            )
        else:
            unitary, targets = ctrl[0], ctrl[1]
        rounds.append(
            RoundAction(player, unitary, targets, frozenset({0, channel}), 1 - player)
        )
    return ProtocolSpec(
        name=name,
        players=2,
        layout=RegisterLayout(clean=1, mixed=len(owners) - 1),
        initial_owner=tuple(owners),
        rounds=tuple(rounds),
        measurement=Measurement(single_qubit=0),
        channel=FIXED,
        trace_plan=TracePlan(control=0, channel=channel, pieces=tuple(pieces)),
    )


# ---------------------------------------------------------------------------
# Clocked trace form -> semi-unclocked via a counter register
# ---------------------------------------------------------------------------


def unclock(p: ProtocolSpec, r: Optional[int] = None) -> tuple[ProtocolSpec, TransformCert]:
    """One fixed unitary per player, dispatched on a mixed counter.

    Round pairs become branches of a counter-conditioned dispatch wrapped
    in (H (x) I) sandwiches on the control; the second player of each pair
    increments the counter mod 2^w. The pair count is a power of two (the
    fixed-channel padding guarantees it), so every counter start runs the
    pieces in a cyclic rotation and by the cyclic property of the trace
    the acceptance is exactly that of the clocked input.
    """
    plan = p.trace_plan
    if plan is None or plan.counter:
        raise ShapeError("unclock expects a clocked trace-form protocol")
    n_rounds = len(p.rounds)
    if r is not None and r != n_rounds:
        raise ShapeError(f"protocol has {n_rounds} rounds, not {r}")
    if n_rounds % 2:
        raise ShapeError("trace-form protocol must have an even round count")
    pairs = n_rounds // 2
    if pairs & (pairs - 1):
        raise ShapeError(f"round pair count {pairs} is not a power of two")
    w = pairs.bit_length() - 1

    first = p.rounds[0].player
    second = p.rounds[1].player
    base = p.layout.total
    counter = tuple(range(base, base + w))
    ch = plan.channel
    message = frozenset({plan.control, ch} | set(counter))

    def dispatch_for(parity: int, increment: int):
        branch_pieces = [plan.pieces[2 * i + parity] for i in range(pairs)]
        targets = sorted(
            {plan.control} | set(counter) | {t for _, tg in branch_pieces for t in tg}
        )
        local = {q: i for i, q in enumerate(targets)}
        branches = []
        for ref, tg in branch_pieces:
            ctrl_targets = (plan.control,) + tg
            branches.append(
                (ControlledU(ref), tuple(local[t] for t in ctrl_targets))
            )
        disp = DispatchU(
            width=len(targets),
            selector=tuple(local[q] for q in counter),
            branches=tuple(branches),
            increment=increment,
        )
        cpos = (local[plan.control],)
        ref = ComposedU(
            len(targets),
            (
                (explicit(qstate.H), cpos),
                (disp, tuple(range(len(targets)))),
                (explicit(qstate.H), cpos),
            ),
        )
        return ref, tuple(targets)

    ref_a, tg_a = dispatch_for(0, 0)
    ref_b, tg_b = dispatch_for(1, 1)
    rounds = []
    for t in range(n_rounds):
        if t % 2 == 0:
            rounds.append(RoundAction(first, ref_a, tg_a, message, second))
        else:
            rounds.append(RoundAction(second, ref_b, tg_b, message, first))

    out = ProtocolSpec(
        name=p.name + "+unclocked",
        players=2,
        layout=RegisterLayout(clean=1, mixed=p.layout.mixed + w),
        initial_owner=p.initial_owner + (first,) * w,
        rounds=tuple(rounds),
        measurement=p.measurement,
        mode=SEMI_UNCLOCKED,
        channel=FIXED,
        declared_p=p.declared_p,
        declared_eps=p.declared_eps,
        trace_plan=TracePlan(
            control=plan.control,
            channel=ch,
            pieces=plan.pieces,
            counter=counter,
            pairs=pairs,
        ),
    )
    cert = TransformCert(
        input_bias=p.declared_eps,
        predicted_bias=p.declared_eps,
        acceptance_slope=Fraction(1),
        acceptance_offset=Fraction(0),
        communication_before=communication_cost(p),
        communication_after=n_rounds * (2 + w),
        reference_before=p.declared_p,
        reference_after=p.declared_p,
        notes=f"{w} counter qubits over {pairs} pairs; acceptance unchanged for every start",
    )
    return out, cert


# ---------------------------------------------------------------------------
# Two-round k-clean -> two-round one-clean: acceptance a/2^k
# ---------------------------------------------------------------------------


def two_round_one_clean(p: ProtocolSpec) -> tuple[ProtocolSpec, TransformCert]:
    """Replace Alice's prepared state |phi_x> by a flag on it.

    Alice's first unitary becomes "flip a fresh clean qubit exactly on
    |phi_x>" over the now-mixed message register; the measurement accepts
    only under the flag, which singles out the |phi_x> member of any
    orthonormal basis completing it. Acceptance scales by exactly 2^-k on
    every input and the communication (2k) is unchanged.
    """
    assert_valid(p)
    if p.players != 2:
        raise ShapeError("two-round construction handles two-player protocols")
    msg_rounds = [r for r in p.rounds if r.message]
    if len(msg_rounds) != 2 or len(p.rounds) not in (2, 3):
        raise ShapeError("expected exactly two messages (Alice -> Bob -> Alice)")
    r1, r2 = msg_rounds
    k = p.layout.clean
    clean = frozenset(range(k))
    alice, bob = r1.player, r2.player
    if alice == bob:
        raise ShapeError("both messages sent by the same player")
    if r1.message != clean or r2.message != clean:
        raise ShapeError("both messages must be exactly the k clean qubits")
    if set(r1.targets) != set(clean):
        raise ShapeError("Alice's first unitary must act on exactly the k clean qubits")
    if measuring_player(p) != alice:
        raise ShapeError("the first player must measure")

    # |phi_x> is prepared from |0^k>; lift W1 to the k qubits in index order
    if r1.targets == tuple(range(k)):
        w1 = r1.unitary
    else:
        w1 = ComposedU(k, ((r1.unitary, r1.targets),))

    flag_ref = FlagStateU(w1)
    rounds = [RoundAction(alice, flag_ref, (0,) + tuple(range(1, k + 1)), frozenset(range(1, k + 1)), bob)]
    for r in p.rounds[1:]:
        rounds.append(_shift_round(r, 1))

    base_proj, base_support = _measurement_projector(p.measurement)
    proj = np.kron(qstate.basis_projector(1), base_proj)
    support = (0,) + tuple(q + 1 for q in base_support)

    slope = Fraction(1, 1 << k)
    out = ProtocolSpec(
        name=p.name + "+lemma1",
        players=2,
        layout=RegisterLayout(clean=1, mixed=p.layout.mixed + k),
        initial_owner=(alice,) + p.initial_owner,
        rounds=tuple(rounds),
        measurement=Measurement(qubits=support, projector=proj),
        declared_p=_affine(p.declared_p, slope, Fraction(0)),
        declared_eps=_affine(p.declared_eps, slope, Fraction(0)),
    )
    cert = TransformCert(
        input_bias=p.declared_eps,
        predicted_bias=out.declared_eps,
        acceptance_slope=slope,
        acceptance_offset=Fraction(0),
        communication_before=communication_cost(p),
        communication_after=2 * k,
        reference_before=p.declared_p,
        reference_after=out.declared_p,
        notes=f"two-round flag construction at k={k}; acceptance a -> a/{1 << k}",
    )
    return out, cert


# ---------------------------------------------------------------------------
# Classical weakly-unbounded-error protocol -> one-way one-clean protocol
# ---------------------------------------------------------------------------


@register_generator("pp_alice_flag")
def _gen_pp_alice_flag(params, x):
    """Swap |0>|T(x)> with |1>|T(x)>; identity elsewhere."""
    c = int(params["c"])
    table = params["table"]
    if x not in table:
        raise DomainError(f"no message defined for input {x!r}")
    z = int(table[x], 2)
    dim = 1 << (c + 1)
    m = np.eye(dim, dtype=complex)
    m[[z, z + (1 << c)]] = m[[z + (1 << c), z]]
    return m


@register_generator("pp_bob_decide")
def _gen_pp_bob_decide(params, y):
    """Bob's combined coin-toss / decision permutation.

    Flag 0: right-rotate (message, fresh qubit) so the fresh mixed qubit
    lands on the measured slot (a fair coin). Flag 1: a permutation of
    (z1, fresh, coins) that puts 1 on the measured slot for exactly
    2 * b(z,y) * 2^s of the 2^(s+1) (fresh, coins) values; pairwise
    balance b(0 z') + b(1 z') = 1 makes the counts match a bijection.
    """
    c, s = int(params["c"]), int(params["coins"])
    btable = {z: Fraction(v) for z, v in params["btable"][y].items()}
    nz = 1 << c
    sub = 1 << (c + 1 + s)  # (z block, fresh, coins)
    rot = np.zeros((sub, sub), dtype=complex)
    for v in range(sub):
        coins_v = v & ((1 << s) - 1)
        zw = v >> s  # c+1 bits: z then fresh
        zw_rot = ((zw & 1) << c) | (zw >> 1)
        rot[(zw_rot << s) | coins_v, v] = 1.0
    dec = np.zeros((sub, sub), dtype=complex)
    for zp in range(nz >> 1):  # z' = low c-1 bits of z
        t = {}
        for z1 in (0, 1):
            z = (z1 << (c - 1)) | zp
            b = btable[format(z, f"0{c}b")]
            tz = b * (1 << s)
            if tz.denominator != 1:
                raise DomainError(f"acceptance {b} is not dyadic with {s} coins")
            t[z1] = int(tz)
        if t[0] + t[1] != 1 << s:
            raise DomainError("acceptance table is not pairwise balanced")
        outs = {0: 0, 1: 0}
        for z1 in (0, 1):
            for w in (0, 1):
                for coins_v in range(1 << s):
                    beta = 1 if coins_v < t[z1] else 0
                    slot = outs[beta]
                    outs[beta] += 1
                    vin = (((z1 << (c - 1)) | zp) << (s + 1)) | (w << s) | coins_v
                    vout = ((beta << (c - 1)) | zp) << (s + 1) | slot
                    dec[vout, vin] = 1.0
    full = np.zeros((2 * sub, 2 * sub), dtype=complex)
    full[:sub, :sub] = rot
    full[sub:, sub:] = dec
    return full


def pp_to_oneway(
    t_map: dict, accept_table: dict, c: int, eps
) -> tuple[ProtocolSpec, TransformCert]:
    """Embed a deterministic-message PP protocol into one quantum message.

    Alice flags the correct message z = T(x) inside a mixed c-qubit
    register and sends flag plus register (c+1 qubits); Bob either applies
    his decision (under the flag, probability 2^-c) or tosses a fair coin,
    giving acceptance exactly 1/2 + (b(T(x), y) - 1/2)/2^c, i.e.
    1/2 + eps/2^c on 1-inputs. The cert carries the resulting cost bound
    (c+1) * 2^(2c) / eps^2.
    """
    eps = Fraction(eps)
    if not 0 <= eps < Fraction(1, 2):
        raise DomainError(f"bias {eps} outside [0, 1/2)")
    for x, z in t_map.items():
        if not isinstance(z, str):
            raise ShapeError(f"message map is not deterministic at input {x!r}")
        if len(z) != c or any(ch not in "01" for ch in z):
            raise DomainError(f"message {z!r} is not a {c}-bit string")
    denom = 1
    btable = {}
    for y, row in accept_table.items():
        btable[y] = {z: Fraction(v) for z, v in row.items()}
        if set(btable[y]) != {format(v, f"0{c}b") for v in range(1 << c)}:
            raise DomainError(f"acceptance table row {y!r} must cover all {1 << c} messages")
        for b in btable[y].values():
            if not 0 <= b <= 1:
                raise DomainError(f"acceptance probability {b} outside [0, 1]")
            denom = max(denom, b.denominator)
    if denom & (denom - 1):
        raise DomainError("acceptance probabilities must be dyadic (denominator a power of two)")
    s = denom.bit_length() - 1
    for y, row in btable.items():
        for zp in range(1 << (c - 1)):
            z0 = format(zp, f"0{c}b")
            z1 = format(zp | (1 << (c - 1)), f"0{c}b")
            if row[z0] + row[z1] != 1:
                raise DomainError(
                    "acceptance table must be pairwise balanced: "
                    "b(0z',y) + b(1z',y) = 1 (unitarity of Bob's decision)"
                )

    ser_btable = {y: {z: str(b) for z, b in row.items()} for y, row in btable.items()}
    total = 1 + c + 1 + s
    alice_u = GenU("pp_alice_flag", {"c": c, "table": dict(t_map)}, ALICE)
    bob_u = GenU("pp_bob_decide", {"c": c, "coins": s, "btable": ser_btable}, BOB)
    accept_one = np.array([[0, 0], [0, 1]], dtype=complex)
    out = ProtocolSpec(
        name=f"pp-oneway(c={c})",
        players=2,
        layout=RegisterLayout(clean=1, mixed=c + 1 + s),
        initial_owner=(ALICE,) * (c + 1) + (BOB,) * (1 + s),
        rounds=(
            RoundAction(ALICE, alice_u, tuple(range(c + 1)), frozenset(range(c + 1)), BOB),
            RoundAction(BOB, bob_u, tuple(range(total)), frozenset(), None),
        ),
        measurement=Measurement(qubits=(1,), projector=accept_one),
        declared_p=Fraction(1, 2),
        declared_eps=(eps / (1 << c)) or None,
    )
    slope = Fraction(1, 1 << c)
    cert = TransformCert(
        input_bias=eps,
        predicted_bias=eps / (1 << c),
        acceptance_slope=slope,
        acceptance_offset=(1 - slope) / 2,
        communication_before=c,
        communication_after=c + 1,
        reference_before=Fraction(1, 2),
        reference_after=Fraction(1, 2),
        q1_bound=Fraction(c + 1) * (1 << (2 * c)) / eps**2 if eps else None,
        notes=f"acceptance = 1/2 + (b(T(x),y) - 1/2)/2^{c}",
    )
    return out, cert
