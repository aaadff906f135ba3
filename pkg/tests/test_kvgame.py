import itertools
import math

import numpy as np
import pytest

from pennet.errors import CapacityError, ContractError
from pennet.kvgame import (
    DeterministicStrategy,
    classical_value,
    game_report,
    hadamard_code,
    kv_game,
    quantum_value_full,
    quantum_value_mes,
    star_game,
    star_normalization_exhaustive,
    strategy_value,
)


def quantum_closed_form(v, eta):
    """E[(1 - 2|z|/v)**2] for |z| ~ Binomial(v, eta)."""
    return sum(math.comb(v, w) * eta**w * (1 - eta) ** (v - w) * (1 - 2 * w / v) ** 2 for w in range(v + 1))


def test_hadamard_code_is_walsh_rows():
    for v in (2, 4, 8):
        code = hadamard_code(v)
        for a, word in enumerate(code):
            for i in range(v):
                # Sylvester ordering: sign of H[a, i] is (-1)^{a.i}
                sign = np.prod([(-1) ** ((a >> k) & (i >> k) & 1) for k in range(v.bit_length())])
                assert ((word >> i) & 1) == (sign < 0)


@pytest.mark.parametrize("v", [2, 4, 8])
def test_code_is_a_group(v):
    code = set(hadamard_code(v))
    assert len(code) == v
    assert 0 in code
    assert all(a ^ b in code for a in code for b in code)


@pytest.mark.parametrize("v", [2, 4, 8])
def test_cosets_partition(v):
    g = kv_game(v, 0.1)
    members = [s for c in g.cosets for s in c]
    assert sorted(members) == list(range(1 << v))
    assert len(g.cosets) == (1 << v) // v
    assert all(len(c) == v for c in g.cosets)
    for s in range(1 << v):
        assert all(g.coset_of[s ^ c] == g.coset_of[s] for c in g.code)


def test_game_contract():
    with pytest.raises(ContractError):
        kv_game(3, 0.1)
    with pytest.raises(CapacityError):
        kv_game(32, 0.1)
    with pytest.raises(ContractError):
        kv_game(4, 0.6)
    with pytest.raises(ContractError):
        star_game(kv_game(4, 0.1), 0)


@pytest.mark.parametrize("eta", [0.0, 0.05, 0.1, 0.2, 0.5])
def test_normalization_v4(eta):
    # cosets of the length-4 code have minimum weights 0, 1, 1, 2
    g = kv_game(4, eta)
    expected = (1 - eta) ** 4 + 2 * eta * (1 - eta) ** 3 + eta**2 * (1 - eta) ** 2
    assert g.normalization() == pytest.approx(expected, abs=1e-15)
    assert g.normalization() <= 1


def test_coefficient_zero_outside_cosets():
    g = kv_game(4, 0.1)
    a = g.cosets[0][0]
    b = g.cosets[1][0]
    assert g.coefficient(a, b, 0, 0) == 0
    assert g.coefficient(a, b, 0, 1) > 0


def test_classical_matches_two_sided_enumeration():
    g = kv_game(4, 0.1)
    best = max(strategy_value(g, DeterministicStrategy(a, b))
               for a in itertools.product(range(4), repeat=4)
               for b in itertools.product(range(4), repeat=4))
    val, strat = classical_value(g)
    assert val == pytest.approx(best, abs=1e-15)
    assert strategy_value(g, strat) == pytest.approx(val, abs=1e-15)


@pytest.mark.parametrize("eta", [0.05, 0.1, 0.2])
def test_classical_below_bound(eta):
    g = kv_game(4, eta)
    val, _ = classical_value(g)
    assert val <= g.classical_bound() + 1e-12
    assert val <= g.normalization() + 1e-12


def test_classical_extremes():
    assert classical_value(kv_game(4, 0.0))[0] == pytest.approx(1.0)
    assert classical_value(kv_game(4, 0.5))[0] == pytest.approx(1 / 4)


def test_heuristic_is_lower_bound_and_seeded():
    g = kv_game(4, 0.1)
    exact, _ = classical_value(g)
    h1, s1 = classical_value(g, "heuristic", seed=7)
    h2, s2 = classical_value(g, "heuristic", seed=7)
    assert h1 <= exact + 1e-15
    assert (h1, s1) == (h2, s2)
    with pytest.raises(ContractError):
        classical_value(g, "bogus")


def test_exhaustive_capacity():
    with pytest.raises(CapacityError):
        classical_value(kv_game(8, 0.1))


@pytest.mark.parametrize("v,eta", [(2, 0.1), (4, 0.05), (4, 0.2), (8, 0.1), (8, 0.3)])
def test_quantum_value_closed_form(v, eta):
    g = kv_game(v, eta)
    assert quantum_value_mes(g) == pytest.approx(quantum_closed_form(v, eta), abs=1e-12)
    assert quantum_value_full(g) == pytest.approx(quantum_closed_form(v, eta), abs=1e-12)
    assert quantum_value_mes(g) >= g.quantum_bound() - 1e-15


def test_quantum_extremes():
    assert quantum_value_mes(kv_game(4, 0.0)) == pytest.approx(1.0)
    assert quantum_value_mes(kv_game(8, 0.5)) == pytest.approx(1 / 8)


def test_quantum_full_capacity():
    with pytest.raises(CapacityError):
        quantum_value_full(kv_game(16, 0.1))


def test_star_normalization():
    g = kv_game(4, 0.1)
    sg = star_game(g, 2)
    assert sg.normalization() == pytest.approx(g.normalization() ** 2)
    assert star_normalization_exhaustive(g, 2) == pytest.approx(sg.normalization(), abs=1e-12)


def test_game_report():
    r = game_report(4, 0.1, K=2)
    assert r["classical_mode"] == "exhaustive"
    assert r["normalized"] is True
    assert r["quantum_value"] >= r["quantum_bound"]
    assert game_report(8, 0.1)["classical_mode"] == "heuristic"
