import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_cosafe_formula(rng, atoms=("a", "b", "c"), depth=4):
    """Random co-safe formula AST; negation only on atoms."""
    from semplan.ltl import TRUE, Formula

    def gen(d):
        if d == 0:
            return Formula("atom", name=atoms[rng.integers(len(atoms))])
        k = ["atom", "not", "and", "or", "until", "ev"][rng.integers(6)]
        if k == "atom":
            return Formula("atom", name=atoms[rng.integers(len(atoms))])
        if k == "not":
            return Formula("not", name=atoms[rng.integers(len(atoms))])
        if k in ("and", "or"):
            return Formula(k, children=(gen(d - 1), gen(d - 1)))
        if k == "until":
            return Formula("until", children=(gen(d - 1), gen(d - 1)))
        return Formula("until", children=(TRUE, gen(d - 1)))

    return gen(int(rng.integers(1, depth + 1)))


def random_word(rng, atoms=("a", "b", "c"), max_len=5):
    out = []
    for _ in range(int(rng.integers(0, max_len + 1))):
        out.append(frozenset(a for a in atoms if rng.random() < 0.4))
    return out
