"""Exact acceptance-probability backends and the amplification harness.

Three backends compute the same number three ways:

* ``run_density`` evolves the full density matrix (<= 12 qubits),
* ``run_ensemble`` averages pure-state runs over the mixed register's
  basis states (<= 20 qubits; exact with ``sample="all"``),
* ``run_trace`` evaluates the Hadamard-test formula
  1/2 + Re Tr(product of pieces) / 2^(d+1) for trace-form protocols.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy.stats import binom

from . import qstate
from .errors import BackendLimitError, DimensionError, DomainError, ShapeError
from .protocol import ProtocolSpec, assert_valid, resolve_ref

DENSITY_QUBIT_LIMIT = 12
ENSEMBLE_QUBIT_LIMIT = 20
TRACE_CORE_LIMIT = 14


@dataclass(frozen=True)
class RunReport:
    """Result of one protocol evaluation on one input."""

    acceptance: float
    backend: str
    seed: Optional[int] = None
    elapsed: float = 0.0
    bias_measured: Optional[float] = None

    CSV_HEADER = "input,acceptance,backend,seed,elapsed"


@dataclass(frozen=True)
class RepetitionPlan:
    """Repeat t times, accept iff at least ``threshold`` runs accepted."""

    t: int
    threshold: int


def _resolved_rounds(p: ProtocolSpec, inputs):
    for r in p.rounds:
        yield resolve_ref(r.unitary, inputs, len(r.targets)), r.targets


def _measurement_projector(p: ProtocolSpec) -> tuple[np.ndarray, tuple]:
    m = p.measurement
    if m.single_qubit is not None:
        return qstate.basis_projector(0), (m.single_qubit,)
    return m.projector, m.qubits


def initial_density(p: ProtocolSpec, pin: Optional[dict] = None) -> np.ndarray:
    """|0><0|^k (x) I/2^m, with pinned mixed qubits fixed to basis states."""
    pin = pin or {}
    factors = []
    for q in range(p.layout.total):
        if q < p.layout.clean:
            factors.append(qstate.basis_projector(0))
        elif q in pin:
            factors.append(qstate.basis_projector(pin[q]))
        else:
            factors.append(qstate.I2 / 2.0)
    return qstate.tensor_all(factors)


def run_density(p: ProtocolSpec, inputs=None, pin: Optional[dict] = None) -> RunReport:
    """Exact acceptance probability via density-matrix evolution."""
    t0 = time.perf_counter()
    assert_valid(p)
    if p.layout.total > DENSITY_QUBIT_LIMIT:
        raise BackendLimitError(
            f"{p.layout.total} qubits exceed the density backend limit "
            f"({DENSITY_QUBIT_LIMIT}); try the trace backend"
        )
    rho = initial_density(p, pin)
    for u, targets in _resolved_rounds(p, inputs):
        rho = qstate.apply_on_subset(rho, u, targets)
    proj, support = _measurement_projector(p)
    acc = qstate.accept_probability(rho, qstate.embed_operator(proj, support, p.layout.total))
    return RunReport(acc, "density", elapsed=time.perf_counter() - t0)


def _branch_vector(p: ProtocolSpec, mixed_bits: dict) -> np.ndarray:
    bits = [0] * p.layout.total
    for q, b in mixed_bits.items():
        bits[q] = b
    index = 0
    for b in bits:
        index = (index << 1) | b
    psi = np.zeros(1 << p.layout.total, dtype=complex)
    psi[index] = 1.0
    return psi


def run_ensemble(
    p: ProtocolSpec,
    inputs=None,
    sample="all",
    seed: Optional[int] = None,
    pin: Optional[dict] = None,
) -> RunReport:
    """Average pure-state runs over the mixed register's basis states.

    ``sample="all"`` enumerates every branch (exact; agrees with
    run_density within 1e-9); an integer draws that many branches
    uniformly with replacement from the root seed.
    """
    t0 = time.perf_counter()
    assert_valid(p)
    total = p.layout.total
    if total > ENSEMBLE_QUBIT_LIMIT:
        raise BackendLimitError(
            f"{total} qubits exceed the ensemble backend limit ({ENSEMBLE_QUBIT_LIMIT})"
        )
    pin = pin or {}
    free_mixed = [q for q in range(p.layout.clean, total) if q not in pin]
    resolved = list(_resolved_rounds(p, inputs))
    proj, support = _measurement_projector(p)

    def one_branch(assign: dict) -> float:
        psi = _branch_vector(p, {**pin, **assign})
        for u, targets in resolved:
            psi = qstate.apply_to_vector(psi, u, targets)
        pv = qstate.apply_to_vector(psi, proj, support)
        val = complex(np.vdot(psi, pv))
        return val.real

    if sample == "all":
        if len(free_mixed) > 22:
            raise BackendLimitError(
                f"2^{len(free_mixed)} ensemble branches are too many; sample instead"
            )
        branches = itertools.product((0, 1), repeat=len(free_mixed))
        accs = [one_branch(dict(zip(free_mixed, bits))) for bits in branches]
        acc = float(np.mean(accs)) if accs else one_branch({})
        used_seed = None
    else:
        count = int(sample)
        if count < 1:
            raise DomainError(f"sample count must be >= 1, got {sample}")
        rng = np.random.default_rng(seed)
        accs = []
        for _ in range(count):
            bits = rng.integers(0, 2, size=len(free_mixed))
            accs.append(one_branch(dict(zip(free_mixed, bits))))
        acc = float(np.mean(accs))
        used_seed = seed
    acc = float(min(max(acc, 0.0), 1.0))
    return RunReport(acc, "ensemble", seed=used_seed, elapsed=time.perf_counter() - t0)


def run_trace(p: ProtocolSpec, inputs=None, counter_start: int = 0) -> RunReport:
    """Acceptance of a trace-form protocol: 1/2 + Re Tr(prod)/2^(d+1).

    The product runs over the plan's pieces; for a semi-unclocked plan a
    counter start of j rotates the piece sequence by j pairs, which by the
    cyclic property of the trace never changes the result.
    """
    t0 = time.perf_counter()
    plan = p.trace_plan
    if plan is None:
        raise ShapeError("protocol is not in trace form (no plan attached)")
    assert_valid(p)
    core = [
        q
        for q in range(p.layout.total)
        if q != plan.control and q not in plan.counter
    ]
    d = len(core)
    if d > TRACE_CORE_LIMIT:
        raise BackendLimitError(f"trace backend limit is {TRACE_CORE_LIMIT} core qubits, got {d}")
    local = {q: i for i, q in enumerate(core)}

    order = list(range(len(plan.pieces)))
    if plan.counter:
        pairs = plan.pairs
        if not 0 <= counter_start < pairs:
            raise DomainError(f"counter start {counter_start} outside [0, {pairs})")
        order = [(2 * counter_start + t) % (2 * pairs) for t in range(2 * pairs)]
    elif counter_start:
        raise DomainError("counter start given but the plan has no counter")

    resolved = []
    for idx in order:
        ref, targets = plan.pieces[idx]
        m = resolve_ref(ref, inputs, len(targets))
        resolved.append((m, tuple(local[t] for t in targets)))

    dim = 1 << d
    # one full pass when the workspace fits comfortably; column blocks above
    block = dim if d <= 12 else 1 << 10
    tr = 0.0 + 0.0j
    for start in range(0, dim, block):
        b = min(block, dim - start)
        arr = np.zeros((dim, b), dtype=complex)
        arr[start : start + b, :] = np.eye(b, dtype=complex)
        arr = arr.reshape((2,) * d + (b,))
        for m, axes in resolved:
            arr = qstate._contract(arr, m, axes)
        arr = arr.reshape(dim, b)
        tr += np.trace(arr[start : start + b, :])
    acc = 0.5 + tr.real / (1 << (d + 1))
    acc = float(min(max(acc, 0.0), 1.0))
    return RunReport(acc, "trace", elapsed=time.perf_counter() - t0)


BACKENDS = {
    "density": run_density,
    "ensemble": run_ensemble,
    "trace": run_trace,
}


def run(p: ProtocolSpec, inputs=None, backend: str = "density", **kw) -> RunReport:
    if backend not in BACKENDS:
        raise DomainError(f"unknown backend {backend!r}")
    return BACKENDS[backend](p, inputs, **kw)


def oneway_bias(ua, ub) -> float:
    """Signed bias of a one-way one-clean protocol: Re tr(U_B U_A)/2^(m+1).

    Both operands must already be identity-padded onto the same global
    m-qubit space. Reading the unitaries as vectors this is their
    normalized inner product over 2, so its magnitude never exceeds 1/2.
    """
    ua = np.asarray(getattr(ua, "mat", ua), dtype=complex)
    ub = np.asarray(getattr(ub, "mat", ub), dtype=complex)
    if ua.shape != ub.shape or ua.ndim != 2 or ua.shape[0] != ua.shape[1]:
        raise DimensionError(f"operand shapes {ua.shape} and {ub.shape} do not match")
    m = qstate.num_qubits(ua.shape[0])
    val = complex(np.einsum("ij,ji->", ub, ua))
    return float(val.real / (1 << (m + 1)))


def measure_bias(p: ProtocolSpec, labeled_inputs, ref, backend: str = "density") -> float:
    """min over 1-inputs of (acc - ref) and over 0-inputs of (ref - acc).

    Negative results mean the protocol fails its declared contract.
    ``labeled_inputs`` is a sequence of (inputs, label) with label 0 or 1.
    """
    labeled_inputs = list(labeled_inputs)
    if not labeled_inputs:
        raise DomainError("measure_bias needs a nonempty input set")
    ref = float(ref)
    eps = math.inf
    for inputs, label in labeled_inputs:
        if label not in (0, 1):
            raise DomainError(f"input label must be 0 or 1, got {label}")
        acc = run(p, inputs, backend=backend).acceptance
        margin = acc - ref if label == 1 else ref - acc
        eps = min(eps, margin)
    return eps


def repetition_plan(eps, ref) -> RepetitionPlan:
    """t = ceil(4/eps^2) repetitions; accept iff at least ref*t successes."""
    if not 0 < eps <= Fraction(1, 2):
        raise DomainError(f"bias {eps} outside (0, 1/2]")
    if isinstance(eps, (int, Fraction)):
        t = int(math.ceil(4 / (Fraction(eps) * Fraction(eps))))
        threshold = int(math.ceil(Fraction(ref) * t))
    else:
        t = int(math.ceil(4.0 / (eps * eps)))
        threshold = int(math.ceil(ref * t))
    return RepetitionPlan(t=t, threshold=threshold)


def amplify(acc0, acc1, ref, eps) -> float:
    """Exact two-sided binomial error after t = ceil(4/eps^2) repetitions.

    Returns max(Pr[Bin(t, acc1) < ref*t], Pr[Bin(t, acc0) >= ref*t]); the
    standard Chernoff argument makes this at most 1/3.
    """
    if not (acc0 <= ref - eps and ref + eps <= acc1):
        raise DomainError(
            f"need acc0 <= ref-eps <= ref+eps <= acc1, got ({acc0}, {ref}, {eps}, {acc1})"
        )
    plan = repetition_plan(eps, ref)
    err1 = float(binom.cdf(plan.threshold - 1, plan.t, float(acc1)))
    err0 = float(1.0 - binom.cdf(plan.threshold - 1, plan.t, float(acc0)))
    return max(err0, err1)
