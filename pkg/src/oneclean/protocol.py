"""Protocol intermediate representation.

A protocol is a register layout (clean qubits first, then totally mixed
ones), an ownership assignment, an ordered list of rounds (local unitary
plus an optional message), a final input-independent measurement, and
cost metadata. Round unitaries are either explicit matrices or small
expression trees over named input-parameterized generators, so the same
protocol object describes the whole input-indexed family.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Optional

import numpy as np

from . import qstate
from .errors import DomainError, ParseError, ValidationError

CLOCKED = "clocked"
SEMI_UNCLOCKED = "semi-unclocked"
GHOSTED = "ghosted"
FIXED = "fixed"

ALICE, BOB, CHARLIE = 0, 1, 2


# ---------------------------------------------------------------------------
# Unitary references
# ---------------------------------------------------------------------------

_GENERATORS: dict[str, Any] = {}


def register_generator(name: str):
    """Register an input-parameterized unitary generator.

    A generator is a callable ``fn(params: dict, player_input) -> ndarray``.
    The registry is write-once: built-ins register at import time and the
    table is read-only afterwards.
    """

    def deco(fn):
        if name in _GENERATORS and _GENERATORS[name] is not fn:
            raise ValueError(f"generator {name!r} already registered")
        _GENERATORS[name] = fn
        return fn

    return deco


def generator(name: str):
    if name not in _GENERATORS:
        raise ParseError(f"unknown unitary generator {name!r}")
    return _GENERATORS[name]


@dataclass(frozen=True, eq=False)
class ExplicitU:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True, eq=False)
class GenU:
    """Named generator; resolved with ``input_player``'s input at run time."""

    name: str
    params: dict
    input_player: int


@dataclass(frozen=True, eq=False)
class AdjointU:
    inner: Any


@dataclass(frozen=True, eq=False)
class ControlledU:
    """Controlled version of ``inner``; the control is the first target."""

    inner: Any


@dataclass(frozen=True, eq=False)
class ComposedU:
    """Product of factors applied in time order (first factor acts first).

    Each factor carries the local positions (indices into the enclosing
    target tuple) its unitary acts on.
    """

    width: int
    factors: tuple  # ((ref, (pos, ...)), ...)


@dataclass(frozen=True, eq=False)
class DispatchU:
    """Counter-conditioned dispatch with optional increment.

    Acts as sum_i |i + inc mod 2^w><i| on the selector qubits tensored
    with branch i on the remaining qubits. ``branches[i] is None`` means
    identity. ``selector``/branch positions are local indices.
    """

    width: int
    selector: tuple
    branches: tuple  # entries: None or (ref, (pos, ...))
    increment: int = 0


@dataclass(frozen=True, eq=False)
class FlagStateU:
    """Flip local qubit 0 exactly on the state ``inner |0...0>``.

    Resolves to X (x) P + I (x) (I-P) with P the projector on the state
    the inner unitary prepares from all-zeros.
    """

    inner: Any


def resolve_ref(ref, inputs, width: int) -> np.ndarray:
    """Resolve a unitary reference to a dense 2^width x 2^width matrix."""
    if isinstance(ref, ExplicitU):
        m = ref.matrix
        if m.shape[0] != 1 << width:
            raise DomainError(f"explicit matrix dim {m.shape[0]} != 2^{width}")
        return m
    if isinstance(ref, GenU):
        fn = generator(ref.name)
        player_input = None if inputs is None else inputs.get(ref.input_player)
        m = np.asarray(fn(ref.params, player_input), dtype=complex)
        if m.shape[0] != 1 << width:
            raise DomainError(
                f"generator {ref.name!r} produced dim {m.shape[0]}, expected 2^{width}"
            )
        return m
    if isinstance(ref, AdjointU):
        return resolve_ref(ref.inner, inputs, width).conj().T
    if isinstance(ref, ControlledU):
        inner = resolve_ref(ref.inner, inputs, width - 1)
        d = inner.shape[0]
        out = np.eye(2 * d, dtype=complex)
        out[d:, d:] = inner
        return out
    if isinstance(ref, ComposedU):
        if ref.width != width:
            raise DomainError(f"composed width {ref.width} != {width}")
        out = np.eye(1 << width, dtype=complex)
        for sub, pos in ref.factors:
            m = resolve_ref(sub, inputs, len(pos))
            out = qstate.embed_unitary(m, pos, width) @ out
        return out
    if isinstance(ref, DispatchU):
        return _resolve_dispatch(ref, inputs, width)
    if isinstance(ref, FlagStateU):
        k = width - 1
        u = resolve_ref(ref.inner, inputs, k)
        phi = u[:, 0]
        p = np.outer(phi, phi.conj())
        return np.kron(qstate.X, p) + np.kron(qstate.I2, np.eye(1 << k) - p)
    raise DomainError(f"unknown unitary reference {type(ref).__name__}")


def _resolve_dispatch(ref: DispatchU, inputs, width: int) -> np.ndarray:
    w = len(ref.selector)
    if len(ref.branches) != 1 << w:
        raise DomainError(
            f"dispatch needs {1 << w} branches for a {w}-qubit selector, "
            f"got {len(ref.branches)}"
        )
    nonsel = [p for p in range(width) if p not in ref.selector]
    nb = len(nonsel)
    full = np.zeros((2,) * (2 * width), dtype=complex)
    for i, branch in enumerate(ref.branches):
        if branch is None:
            bfull = np.eye(1 << nb, dtype=complex)
        else:
            sub, pos = branch
            m = resolve_ref(sub, inputs, len(pos))
            local = tuple(nonsel.index(p) for p in pos)
            bfull = qstate.embed_unitary(m, local, nb)
        j = (i + ref.increment) % (1 << w)
        idx: list = [slice(None)] * (2 * width)
        for axpos, bit in zip(ref.selector, _bits(j, w)):
            idx[axpos] = bit
        for axpos, bit in zip(ref.selector, _bits(i, w)):
            idx[width + axpos] = bit
        full[tuple(idx)] = bfull.reshape((2,) * (2 * nb))
    return full.reshape(1 << width, 1 << width)


def _bits(value: int, width: int) -> tuple:
    return tuple((value >> (width - 1 - i)) & 1 for i in range(width))


def ref_equal(a, b) -> bool:
    if type(a) is not type(b):
        return False
    if isinstance(a, ExplicitU):
        return a.matrix.shape == b.matrix.shape and bool(np.array_equal(a.matrix, b.matrix))
    if isinstance(a, GenU):
        return a.name == b.name and a.params == b.params and a.input_player == b.input_player
    if isinstance(a, (AdjointU, ControlledU, FlagStateU)):
        return ref_equal(a.inner, b.inner)
    if isinstance(a, ComposedU):
        return (
            a.width == b.width
            and len(a.factors) == len(b.factors)
            and all(
                pa == pb and ref_equal(ra, rb)
                for (ra, pa), (rb, pb) in zip(a.factors, b.factors)
            )
        )
    if isinstance(a, DispatchU):
        if (a.width, a.selector, a.increment) != (b.width, b.selector, b.increment):
            return False
        if len(a.branches) != len(b.branches):
            return False
        for ba, bb in zip(a.branches, b.branches):
            if (ba is None) != (bb is None):
                return False
            if ba is not None and not (ba[1] == bb[1] and ref_equal(ba[0], bb[0])):
                return False
        return True
    return False


def _walk_explicit(ref, width: int):
    """Yield (matrix, width) for every explicit matrix with its expected size."""
    if isinstance(ref, ExplicitU):
        yield ref.matrix, width
    elif isinstance(ref, AdjointU):
        yield from _walk_explicit(ref.inner, width)
    elif isinstance(ref, ControlledU):
        yield from _walk_explicit(ref.inner, width - 1)
    elif isinstance(ref, FlagStateU):
        yield from _walk_explicit(ref.inner, width - 1)
    elif isinstance(ref, ComposedU):
        for sub, pos in ref.factors:
            yield from _walk_explicit(sub, len(pos))
    elif isinstance(ref, DispatchU):
        for branch in ref.branches:
            if branch is not None:
                yield from _walk_explicit(branch[0], len(branch[1]))


# ---------------------------------------------------------------------------
# Protocol data types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegisterLayout:
    """k clean qubits (indices 0..k-1) followed by m totally mixed ones."""

    clean: int
    mixed: int

    @property
    def total(self) -> int:
        return self.clean + self.mixed

    def role(self, qubit: int) -> str:
        return "clean" if qubit < self.clean else "mixed"


@dataclass(frozen=True, eq=False)
class RoundAction:
    player: int
    unitary: Any
    targets: tuple
    message: frozenset
    to: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        object.__setattr__(self, "message", frozenset(int(q) for q in self.message))


@dataclass(frozen=True, eq=False)
class Measurement:
    """Accepting projector. ``single_qubit`` means accept on |0> there."""

    single_qubit: Optional[int] = None
    qubits: Optional[tuple] = None
    projector: Optional[np.ndarray] = None

    def __post_init__(self):
        if (self.single_qubit is None) == (self.projector is None):
            raise DomainError("measurement needs either single_qubit or projector")
        if self.projector is not None:
            object.__setattr__(
                self, "projector", np.asarray(self.projector, dtype=complex)
            )
            object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))

    def support(self) -> tuple:
        if self.single_qubit is not None:
            return (self.single_qubit,)
        return self.qubits


@dataclass(frozen=True, eq=False)
class TracePlan:
    """Hadamard-test structure of a trace-form protocol.

    ``pieces`` are the uncontrolled operators whose product's trace sets
    the acceptance probability: p0 = 1/2 + Re Tr(prod)/2^(d+1), with d the
    number of non-control, non-counter qubits. For semi-unclocked
    protocols ``counter`` lists the counter qubits and ``pairs`` the
    number of dispatch pairs (pieces come in (even, odd) pairs).
    """

    control: int
    channel: int
    pieces: tuple  # ((ref, targets), ...) targets exclude the control
    counter: tuple = ()
    pairs: int = 0


@dataclass(frozen=True, eq=False)
class ProtocolSpec:
    name: str
    players: int
    layout: RegisterLayout
    initial_owner: tuple
    rounds: tuple
    measurement: Measurement
    mode: str = CLOCKED
    channel: str = GHOSTED
    declared_p: Any = Fraction(1, 2)
    declared_eps: Any = None
    trace_plan: Optional[TracePlan] = None

    def __post_init__(self):
        object.__setattr__(self, "initial_owner", tuple(int(o) for o in self.initial_owner))
        object.__setattr__(self, "rounds", tuple(self.rounds))

    @property
    def qubits(self) -> int:
        return self.layout.total


@dataclass(frozen=True)
class CostReport:
    communication: int
    bias: Any
    q1_cost: Any
    pp_cost: Any
    qubits: int

    CSV_HEADER = "communication,bias,q1_cost,pp_cost,qubits"

    def csv_row(self) -> str:
        return f"{self.communication},{self.bias},{self.q1_cost},{self.pp_cost},{self.qubits}"


# ---------------------------------------------------------------------------
# Validation and cost accounting
# ---------------------------------------------------------------------------


def ownership_schedule(p: ProtocolSpec) -> list:
    """Owner tuple before round 0, after round 0, ..., after the last round."""
    owners = list(p.initial_owner)
    out = [tuple(owners)]
    for r in p.rounds:
        for q in r.message:
            owners[q] = r.to
        out.append(tuple(owners))
    return out


def validate(p: ProtocolSpec) -> list:
    """Check every ProtocolSpec invariant; return the list of violations."""
    v: list[str] = []
    if p.players not in (2, 3):
        v.append(f"players must be 2 or 3, got {p.players}")
    total = p.layout.total
    if p.layout.clean < 0 or p.layout.mixed < 0:
        v.append("negative register counts")
    if len(p.initial_owner) != total:
        v.append(f"initial_owner has {len(p.initial_owner)} entries for {total} qubits")
    elif any(not 0 <= o < p.players for o in p.initial_owner):
        v.append("initial owner out of player range")
    if p.mode not in (CLOCKED, SEMI_UNCLOCKED):
        v.append(f"unknown mode {p.mode!r}")
    if p.channel not in (GHOSTED, FIXED):
        v.append(f"unknown channel {p.channel!r}")
    if p.declared_eps is not None and not (0 < p.declared_eps <= Fraction(1, 2)):
        v.append(f"declared bias {p.declared_eps} outside (0, 1/2]")
    if not (0 < p.declared_p < 1):
        v.append(f"declared reference point {p.declared_p} outside (0, 1)")

    owners = list(p.initial_owner)
    for i, r in enumerate(p.rounds):
        if not 0 <= r.player < p.players:
            v.append(f"round {i}: player {r.player} out of range")
            continue
        seen = set()
        for t in r.targets:
            if not 0 <= t < total:
                v.append(f"round {i}: target {t} out of range")
            elif t in seen:
                v.append(f"round {i}: repeated target {t}")
            elif owners[t] != r.player:
                v.append(
                    f"round {i}: unitary touches qubit {t} owned by player {owners[t]}"
                )
            seen.add(t)
        for q in sorted(r.message):
            if not 0 <= q < total:
                v.append(f"round {i}: message qubit {q} out of range")
            elif owners[q] != r.player:
                v.append(f"round {i}: message qubit {q} not owned by sender")
        if r.message:
            if r.to is None or not 0 <= r.to < p.players or r.to == r.player:
                v.append(f"round {i}: bad receiver {r.to}")
            else:
                for q in r.message:
                    if 0 <= q < total:
                        owners[q] = r.to
        for mat, width in _walk_explicit(r.unitary, len(r.targets)):
            if mat.shape != (1 << width, 1 << width):
                v.append(f"round {i}: explicit matrix has dim {mat.shape[0]}, expected {1 << width}")
            elif not qstate.is_unitary(mat):
                v.append(f"round {i}: explicit matrix is not unitary within 1e-9")

    support = p.measurement.support()
    for q in support:
        if not 0 <= q < total:
            v.append(f"measurement qubit {q} out of range")
    in_range = [q for q in support if 0 <= q < total]
    if in_range and len({owners[q] for q in in_range}) > 1:
        v.append("measurement qubits not all owned by one player at the end")
    if p.measurement.projector is not None:
        d = 1 << len(p.measurement.qubits)
        if p.measurement.projector.shape != (d, d):
            v.append("measurement projector dim does not match its qubit list")
        elif not qstate.is_projector(p.measurement.projector):
            v.append("measurement matrix is not a projector within 1e-9")

    if p.mode == SEMI_UNCLOCKED:
        v.extend(_validate_semi_unclocked(p))
    if p.channel == FIXED:
        msgs = [r.message for r in p.rounds if r.message]
        if msgs and any(m != msgs[0] for m in msgs[1:]):
            v.append("fixed channel but message sets differ across rounds")
    return v


def _validate_semi_unclocked(p: ProtocolSpec) -> list:
    v = []
    if not p.rounds:
        return ["semi-unclocked protocol has no rounds"]
    players = [r.player for r in p.rounds]
    if len(set(players)) != 2:
        v.append("semi-unclocked rounds must alternate between exactly two players")
    for i in range(1, len(p.rounds)):
        if players[i] == players[i - 1]:
            v.append(f"semi-unclocked rounds {i - 1},{i} have the same player")
            break
    msgs = [r.message for r in p.rounds]
    if any(m != msgs[0] for m in msgs[1:]):
        v.append("semi-unclocked message sets differ across rounds")
    per_player: dict = {}
    for i, r in enumerate(p.rounds):
        if r.player in per_player:
            ref0, tg0 = per_player[r.player]
            if tg0 != r.targets or not ref_equal(ref0, r.unitary):
                v.append(f"semi-unclocked round {i} unitary differs from earlier rounds")
                break
        else:
            per_player[r.player] = (r.unitary, r.targets)
    if p.channel != FIXED:
        v.append("semi-unclocked protocols require a fixed channel")
    return v


def assert_valid(p: ProtocolSpec) -> None:
    violations = validate(p)
    if violations:
        raise ValidationError(violations)


def measuring_player(p: ProtocolSpec) -> int:
    owners = ownership_schedule(p)[-1]
    support = p.measurement.support()
    return owners[support[0]]


def communication_cost(p: ProtocolSpec) -> int:
    """Total qubits transferred: sum of message sizes over rounds."""
    assert_valid(p)
    return sum(len(r.message) for r in p.rounds)


def floor_log2(eps) -> int:
    """Exact floor(log2 eps) for Fractions; frexp-based for floats."""
    if eps <= 0:
        raise DomainError(f"floor_log2 needs a positive argument, got {eps}")
    if isinstance(eps, (int, Fraction)):
        f = Fraction(eps)
        k = f.numerator.bit_length() - f.denominator.bit_length()
        # bracket: adjust so 2^k <= f < 2^(k+1)
        while _cmp_pow2(f, k) < 0:
            k -= 1
        while _cmp_pow2(f, k + 1) >= 0:
            k += 1
        return k
    m, e = math.frexp(float(eps))  # eps = m * 2^e with 0.5 <= m < 1
    return e - 1


def _cmp_pow2(f: Fraction, k: int) -> int:
    """Sign of f - 2^k using integer arithmetic."""
    if k >= 0:
        lhs, rhs = f.numerator, f.denominator << k
    else:
        lhs, rhs = f.numerator << (-k), f.denominator
    return (lhs > rhs) - (lhs < rhs)


def q1_cost(c: int, eps):
    """c / eps^2; exact rational when eps is a Fraction (or int)."""
    if not 0 < eps <= Fraction(1, 2):
        raise DomainError(f"bias {eps} outside (0, 1/2]")
    if isinstance(eps, (int, Fraction)):
        return Fraction(c) / (Fraction(eps) * Fraction(eps))
    return c / (eps * eps)


def pp_cost(c: int, eps) -> int:
    """Weakly unbounded-error cost c - floor(log2 eps)."""
    if not 0 < eps < Fraction(1, 2):
        raise DomainError(f"bias {eps} outside (0, 1/2)")
    return c - floor_log2(eps)


def cost_report(p: ProtocolSpec) -> CostReport:
    if p.declared_eps is None:
        raise DomainError("protocol declares no bias; cannot build a cost report")
    c = communication_cost(p)
    eps = p.declared_eps
    return CostReport(
        communication=c,
        bias=eps,
        q1_cost=q1_cost(c, eps),
        pp_cost=c - floor_log2(eps),
        qubits=p.layout.total,
    )


# ---------------------------------------------------------------------------
# Descriptor serialization (exact round trip, floats via shortest repr)
# ---------------------------------------------------------------------------

DESCRIPTOR_VERSION = 1


def _num_to_obj(x):
    if x is None:
        return None
    if isinstance(x, (int, Fraction)):
        return str(Fraction(x))
    return float(x)


def _num_from_obj(x, where: str):
    if x is None:
        return None
    if isinstance(x, str):
        try:
            return Fraction(x)
        except ValueError as e:
            raise ParseError(f"{where}: bad rational {x!r}") from e
    if isinstance(x, (int, float)):
        return float(x)
    raise ParseError(f"{where}: expected number or rational string")


def _ref_to_obj(ref) -> dict:
    if isinstance(ref, ExplicitU):
        return {"kind": "explicit", "matrix": qstate.matrix_to_obj(ref.matrix)}
    if isinstance(ref, GenU):
        return {
            "kind": "generator",
            "name": ref.name,
            "params": ref.params,
            "input_player": ref.input_player,
        }
    if isinstance(ref, AdjointU):
        return {"kind": "adjoint", "inner": _ref_to_obj(ref.inner)}
    if isinstance(ref, ControlledU):
        return {"kind": "controlled", "inner": _ref_to_obj(ref.inner)}
    if isinstance(ref, FlagStateU):
        return {"kind": "flag_state", "inner": _ref_to_obj(ref.inner)}
    if isinstance(ref, ComposedU):
        return {
            "kind": "composed",
            "width": ref.width,
            "factors": [
                {"ref": _ref_to_obj(sub), "pos": list(pos)} for sub, pos in ref.factors
            ],
        }
    if isinstance(ref, DispatchU):
        return {
            "kind": "dispatch",
            "width": ref.width,
            "selector": list(ref.selector),
            "increment": ref.increment,
            "branches": [
                None if b is None else {"ref": _ref_to_obj(b[0]), "pos": list(b[1])}
                for b in ref.branches
            ],
        }
    raise ParseError(f"cannot serialize unitary reference {type(ref).__name__}")


def _ref_from_obj(obj, where: str):
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ParseError(f"{where}: unitary reference needs a 'kind'")
    kind = obj["kind"]
    try:
        if kind == "explicit":
            return ExplicitU(qstate.matrix_from_obj(obj["matrix"]))
        if kind == "generator":
            return GenU(obj["name"], obj.get("params") or {}, int(obj["input_player"]))
        if kind == "adjoint":
            return AdjointU(_ref_from_obj(obj["inner"], where))
        if kind == "controlled":
            return ControlledU(_ref_from_obj(obj["inner"], where))
        if kind == "flag_state":
            return FlagStateU(_ref_from_obj(obj["inner"], where))
        if kind == "composed":
            return ComposedU(
                int(obj["width"]),
                tuple(
                    (_ref_from_obj(f["ref"], where), tuple(int(x) for x in f["pos"]))
                    for f in obj["factors"]
                ),
            )
        if kind == "dispatch":
            return DispatchU(
                int(obj["width"]),
                tuple(int(x) for x in obj["selector"]),
                tuple(
                    None
                    if b is None
                    else (_ref_from_obj(b["ref"], where), tuple(int(x) for x in b["pos"]))
                    for b in obj["branches"]
                ),
                int(obj.get("increment", 0)),
            )
    except KeyError as e:
        raise ParseError(f"{where}: missing field {e.args[0]!r}") from e
    raise ParseError(f"{where}: unknown unitary kind {kind!r}")


def to_descriptor(p: ProtocolSpec) -> dict:
    obj = {
        "version": DESCRIPTOR_VERSION,
        "name": p.name,
        "players": p.players,
        "layout": {"clean": p.layout.clean, "mixed": p.layout.mixed},
        "initial_owner": list(p.initial_owner),
        "mode": p.mode,
        "channel": p.channel,
        "rounds": [
            {
                "player": r.player,
                "unitary": _ref_to_obj(r.unitary),
                "targets": list(r.targets),
                "message": sorted(r.message),
                "to": r.to,
            }
            for r in p.rounds
        ],
        "declared": {"p": _num_to_obj(p.declared_p), "eps": _num_to_obj(p.declared_eps)},
    }
    if p.measurement.single_qubit is not None:
        obj["measurement"] = {"single_qubit": p.measurement.single_qubit}
    else:
        obj["measurement"] = {
            "qubits": list(p.measurement.qubits),
            "projector": qstate.matrix_to_obj(p.measurement.projector),
        }
    if p.trace_plan is not None:
        tp = p.trace_plan
        obj["trace_plan"] = {
            "control": tp.control,
            "channel": tp.channel,
            "pieces": [
                {"ref": _ref_to_obj(ref), "targets": list(tg)} for ref, tg in tp.pieces
            ],
            "counter": list(tp.counter),
            "pairs": tp.pairs,
        }
    return obj


def serialize(p: ProtocolSpec) -> str:
    return json.dumps(to_descriptor(p), indent=1)


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ParseError(f"{where}: missing field {key!r}")
    return obj[key]


def from_descriptor(obj: dict) -> ProtocolSpec:
    where = "descriptor"
    if not isinstance(obj, dict):
        raise ParseError("descriptor must be an object")
    layout_obj = _require(obj, "layout", where)
    layout = RegisterLayout(
        int(_require(layout_obj, "clean", "layout")),
        int(_require(layout_obj, "mixed", "layout")),
    )
    rounds = []
    for i, r in enumerate(_require(obj, "rounds", where)):
        rw = f"rounds[{i}]"
        rounds.append(
            RoundAction(
                player=int(_require(r, "player", rw)),
                unitary=_ref_from_obj(_require(r, "unitary", rw), rw),
                targets=tuple(int(t) for t in _require(r, "targets", rw)),
                message=frozenset(int(q) for q in _require(r, "message", rw)),
                to=None if r.get("to") is None else int(r["to"]),
            )
        )
    mobj = _require(obj, "measurement", where)
    if "single_qubit" in mobj:
        meas = Measurement(single_qubit=int(mobj["single_qubit"]))
    else:
        meas = Measurement(
            qubits=tuple(int(q) for q in _require(mobj, "qubits", "measurement")),
            projector=qstate.matrix_from_obj(_require(mobj, "projector", "measurement")),
        )
    declared = obj.get("declared") or {}
    plan = None
    if obj.get("trace_plan") is not None:
        tp = obj["trace_plan"]
        plan = TracePlan(
            control=int(_require(tp, "control", "trace_plan")),
            channel=int(_require(tp, "channel", "trace_plan")),
            pieces=tuple(
                (_ref_from_obj(pc["ref"], "trace_plan"), tuple(int(t) for t in pc["targets"]))
                for pc in _require(tp, "pieces", "trace_plan")
            ),
            counter=tuple(int(q) for q in tp.get("counter", [])),
            pairs=int(tp.get("pairs", 0)),
        )
    return ProtocolSpec(
        name=str(obj.get("name", "protocol")),
        players=int(_require(obj, "players", where)),
        layout=layout,
        initial_owner=tuple(int(o) for o in _require(obj, "initial_owner", where)),
        rounds=tuple(rounds),
        measurement=meas,
        mode=str(_require(obj, "mode", where)),
        channel=str(_require(obj, "channel", where)),
        declared_p=_num_from_obj(declared.get("p", "1/2"), "declared.p"),
        declared_eps=_num_from_obj(declared.get("eps"), "declared.eps"),
        trace_plan=plan,
    )


def deserialize(text: str) -> ProtocolSpec:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"descriptor is not valid JSON at line {e.lineno}, column {e.colno}") from e
    return from_descriptor(obj)


def protocol_equal(a: ProtocolSpec, b: ProtocolSpec) -> bool:
    """Entrywise equality (exact, including float bits in matrices)."""
    if (
        a.name != b.name
        or a.players != b.players
        or a.layout != b.layout
        or a.initial_owner != b.initial_owner
        or a.mode != b.mode
        or a.channel != b.channel
        or a.declared_p != b.declared_p
        or a.declared_eps != b.declared_eps
        or len(a.rounds) != len(b.rounds)
    ):
        return False
    for ra, rb in zip(a.rounds, b.rounds):
        if (ra.player, ra.targets, ra.message, ra.to) != (rb.player, rb.targets, rb.message, rb.to):
            return False
        if not ref_equal(ra.unitary, rb.unitary):
            return False
    ma, mb = a.measurement, b.measurement
    if ma.single_qubit != mb.single_qubit:
        return False
    if ma.projector is not None:
        if mb.projector is None or ma.qubits != mb.qubits:
            return False
        if not np.array_equal(ma.projector, mb.projector):
            return False
    elif mb.projector is not None:
        return False
    ta, tb = a.trace_plan, b.trace_plan
    if (ta is None) != (tb is None):
        return False
    if ta is not None:
        if (ta.control, ta.channel, ta.counter, ta.pairs) != (
            tb.control,
            tb.channel,
            tb.counter,
            tb.pairs,
        ):
            return False
        if len(ta.pieces) != len(tb.pieces):
            return False
        for (ra, tga), (rb, tgb) in zip(ta.pieces, tb.pieces):
            if tga != tgb or not ref_equal(ra, rb):
                return False
    return True


# Convenience constructors used by transforms and built-ins.


def composed(width: int, *factors) -> ComposedU:
    """Build a ComposedU from (ref, positions) pairs in time order."""
    return ComposedU(width, tuple((ref, tuple(pos)) for ref, pos in factors))


def explicit(matrix) -> ExplicitU:
    return ExplicitU(np.asarray(matrix, dtype=complex))
