import math

import numpy as np
import pytest

from oneclean import classical, problems, qstate
from oneclean.errors import BackendLimitError, DomainError


def test_knr_identical_vectors():
    rng = np.random.default_rng(0)
    a = qstate.haar_unit_vector(16, rng)
    hits = 0
    for seed in range(40):
        est, _ = classical.knr_estimate(a, a, 0.1, seed=seed)
        hits += int(1 - 0.1 <= est <= 1)
    assert hits >= 36  # >= 0.9 success


def test_knr_orthogonal_vectors():
    a = np.zeros(8)
    b = np.zeros(8)
    a[0] = 1.0
    b[1] = 1.0
    hits = 0
    for seed in range(40):
        est, _ = classical.knr_estimate(a, b, 0.1, seed=seed)
        hits += int(abs(est) <= 0.1)
    assert hits >= 36


def test_knr_failure_rate_battery():
    rng = np.random.default_rng(1)
    a = qstate.haar_unit_vector(32, rng)
    b = qstate.haar_unit_vector(32, rng)
    true = float(a @ b)
    fails = sum(
        abs(classical.knr_estimate(a, b, 0.15, seed=s)[0] - true) > 0.15
        for s in range(200)
    )
    assert fails / 200 <= 0.1


def test_knr_failure_rate_at_spec_accuracy():
    # n=32, eps=0.05, 10^3 seeds: empirical failure rate <= 0.1
    rng = np.random.default_rng(8)
    a = qstate.haar_unit_vector(32, rng)
    b = qstate.haar_unit_vector(32, rng)
    true = float(a @ b)
    fails = sum(
        abs(classical.knr_estimate(a, b, 0.05, seed=s)[0] - true) > 0.05
        for s in range(1000)
    )
    assert fails / 1000 <= 0.1


def test_knr_transcript_deterministic():
    rng = np.random.default_rng(2)
    a = qstate.haar_unit_vector(8, rng)
    b = qstate.haar_unit_vector(8, rng)
    totals = {classical.knr_estimate(a, b, 0.2, seed=s)[1].total for s in range(5)}
    assert totals == {math.ceil(classical.KNR_CONSTANT / 0.04)}


def test_knr_agreement_frequency_unbiased():
    # empirical mean of the agreement frequency ~ 1 - arccos(<a,b>)/pi
    rng = np.random.default_rng(3)
    a = qstate.haar_unit_vector(8, rng)
    b = qstate.haar_unit_vector(8, rng)
    q = 1.0 - math.acos(float(a @ b)) / math.pi
    eps = 0.3
    s = classical.knr_sketch_rounds(eps)
    n_seeds = 1000
    freqs = []
    for seed in range(n_seeds):
        est, _ = classical.knr_estimate(a, b, eps, seed=seed)
        freqs.append(1.0 - math.acos(est) / math.pi)
    sigma = math.sqrt(q * (1 - q) / (s * n_seeds))
    assert abs(np.mean(freqs) - q) < 3 * sigma + 1e-12


def test_knr_rejects_non_unit():
    with pytest.raises(DomainError):
        classical.knr_estimate(np.ones(4), np.ones(4) / 2.0, 0.1, seed=0)


def test_cap_codebook_sizes_and_norms():
    assert classical.codebook_size(2) == 2471  # ceil(32 sqrt2 e^4)
    assert classical.codebook_size(1) == 237  # ceil(32 e^2)
    book = classical.cap_codebook(4, 1, seed=0)
    assert book.size == 237
    assert np.max(np.abs(np.linalg.norm(book.vectors, axis=1) - 1.0)) < 1e-9


def test_cap_codebook_hits_the_cap():
    rng = np.random.default_rng(4)
    for seed in range(5):
        book = classical.cap_codebook(8, 1, seed=seed)
        v = qstate.haar_unit_vector(8, rng)
        assert np.max(book.vectors @ v) >= math.sqrt(1 / 8)


def test_cap_codebook_domain():
    with pytest.raises(DomainError):
        classical.cap_codebook(4, 2, seed=0)  # k > n/4


def test_cap_probability_closed_form():
    est = classical.cap_probability_mc(4, 1, 10**5, seed=1)
    closed = (4 / math.pi) * (math.pi / 6 - math.sqrt(3) / 8)
    assert abs(est - closed) < 0.01
    assert est > classical.caps_lower_bound(1)


def test_cap_probability_beats_bound():
    for n, k in [(8, 2), (16, 2), (8, 1)]:
        est = classical.cap_probability_mc(n, k, 2 * 10**4, seed=2)
        assert est >= classical.caps_lower_bound(k)


def test_cap_probability_preconditions():
    with pytest.raises(DomainError):
        classical.cap_probability_mc(2, 1, 10**5, seed=0)  # k > n/4
    with pytest.raises(DomainError):
        classical.cap_probability_mc(8, 1, 100, seed=0)  # too few samples


def test_abc_classical_both_labels():
    for label in (1, -1):
        ok = 0
        for seed in range(10):
            inst = problems.abc_instance(16, label, seed=seed)
            ans, tr = classical.abc_classical(inst, k=2, seed=seed)
            ok += int(ans == (1 if label == 1 else 0))
        assert ok >= 9


def test_abc_classical_transcript_deterministic():
    inst = problems.abc_instance(16, 1, seed=0)
    totals = set()
    for seed in range(3):
        _, tr = classical.abc_classical(inst, k=2, seed=seed)
        totals.add((tr.bits_sent[2], tr.total))
    eps = math.sqrt(2 / 16) / 100
    sketch = math.ceil(classical.KNR_CONSTANT / eps**2)
    assert totals == {(12, 12 + sketch)}  # ceil(log2 2471) = 12 index bits


def test_abc_classical_separation_invariant():
    # |<A_i, B W_max>| >= sqrt(k/n) whenever the codebook hits the cap
    for seed in range(5):
        inst = problems.abc_instance(16, -1, seed=seed)
        book = classical.cap_codebook(16, 2, seed=seed)
        alignment = classical.true_alignment(inst, 0, book)
        cap = float(np.max(book.vectors @ inst.c[:, 0]))
        if cap >= math.sqrt(2 / 16):
            assert abs(alignment) >= math.sqrt(2 / 16)
        assert alignment == pytest.approx(inst.label * cap, abs=1e-9)


def test_abc_classical_domain_checks():
    inst = problems.abc_instance(16, 1, seed=0)
    with pytest.raises(DomainError):
        classical.abc_classical(inst, k=8, seed=0)
    with pytest.raises(DomainError):
        classical.abc_classical(inst, i=99, k=2, seed=0)


# ----------------------------------------------------------- discrepancy


def _disc_oracle(m: classical.SignMatrix):
    """Independent recursive enumerator over subset pairs."""
    rows, cols = m.entries.shape
    signed = m.entries * m.weights
    best, witness = -1.0, ((), ())

    def rec_rows(i, chosen):
        nonlocal best, witness
        if i == rows:
            rec_cols(0, chosen, ())
            return
        rec_rows(i + 1, chosen)  # counter order: bit i unset first
        rec_rows(i + 1, chosen + (i,))

    def rec_cols(j, rs, cs):
        nonlocal best, witness
        if j == cols:
            val = abs(sum(signed[r, c] for r in rs for c in cs))
            if val > best:
                best, witness = val, (rs, cs)
            return
        rec_cols(j + 1, rs, cs)
        rec_cols(j + 1, rs, cs + (j,))

    rec_rows(0, ())
    return best, witness


def _counter_oracle(m: classical.SignMatrix):
    """Second enumerator in exactly the binary-counter order."""
    rows, cols = m.entries.shape
    signed = m.entries * m.weights
    best, witness = -1.0, ((), ())
    for rm in range(1 << rows):
        rs = tuple(i for i in range(rows) if (rm >> i) & 1)
        for cm in range(1 << cols):
            cs = tuple(j for j in range(cols) if (cm >> j) & 1)
            val = abs(sum(signed[r, c] for r in rs for c in cs))
            if val > best:
                best, witness = val, (rs, cs)
    return best, witness


def test_disc_equality_matrix():
    m = classical.SignMatrix.uniform([[1, -1], [-1, 1]])
    val, rows, cols = classical.disc_bruteforce(m)
    assert val == pytest.approx(0.25, abs=1e-15)
    assert (rows, cols) == ((0,), (0,))


def test_disc_all_ones():
    m = classical.SignMatrix.uniform(np.ones((3, 4)))
    val, rows, cols = classical.disc_bruteforce(m)
    assert val == pytest.approx(1.0, abs=1e-12)
    assert rows == (0, 1, 2) and cols == (0, 1, 2, 3)


def test_disc_ip2_matrix_matches_recursive_oracle():
    n = 2
    entries = [
        [(-1) ** (bin(x & y).count("1") % 2) for y in range(1 << n)]
        for x in range(1 << n)
    ]
    m = classical.SignMatrix.uniform(entries)
    val, rows, cols = classical.disc_bruteforce(m)
    oval, (orows, ocols) = _disc_oracle(m)
    assert val == pytest.approx(oval, abs=1e-12)


def test_disc_random_matches_counter_oracle_with_witness():
    rng = np.random.default_rng(5)
    for _ in range(5):
        entries = rng.choice([-1.0, 1.0], size=(4, 4))
        w = rng.dirichlet(np.ones(16)).reshape(4, 4)
        m = classical.SignMatrix(entries=entries, weights=w)
        val, rows, cols = classical.disc_bruteforce(m)
        oval, (orows, ocols) = _counter_oracle(m)
        assert val == pytest.approx(oval, abs=1e-12)
        assert (rows, cols) == (orows, ocols)


def test_disc_invariant_under_joint_permutations():
    rng = np.random.default_rng(6)
    entries = rng.choice([-1.0, 1.0], size=(5, 5))
    w = rng.dirichlet(np.ones(25)).reshape(5, 5)
    m = classical.SignMatrix(entries=entries, weights=w)
    val, _, _ = classical.disc_bruteforce(m)
    pr = rng.permutation(5)
    pc = rng.permutation(5)
    m2 = classical.SignMatrix(entries=entries[np.ix_(pr, pc)], weights=w[np.ix_(pr, pc)])
    val2, _, _ = classical.disc_bruteforce(m2)
    assert val2 == pytest.approx(val, abs=1e-12)


def test_disc_size_limit():
    m = classical.SignMatrix.uniform(np.ones((17, 3)))
    with pytest.raises(BackendLimitError):
        classical.disc_bruteforce(m)


def test_sign_matrix_validation():
    with pytest.raises(DomainError):
        classical.SignMatrix.uniform([[1, 2], [1, -1]])
    with pytest.raises(DomainError):
        classical.SignMatrix(entries=[[1, -1]], weights=[[0.9, 0.2]])
