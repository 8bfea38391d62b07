import sys
from pathlib import Path

import numpy as np
import pytest

# Add src directory to Python path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from dirac_system import SignatureSpec, constant_j_potential, random_unitary_potential  # noqa: E402
from gbdt_engine import gbdt_iterate, make_triple  # noqa: E402
from linalg_core import smallest_singular_value  # noqa: E402

DATA_DIR = Path(__file__).parent.parent / "data"


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture
def scalar_signature():
    return SignatureSpec(1, 1)


@pytest.fixture
def scalar_triple():
    """n=1, m=2: α = [2i], S₀ = [1], Λ₀ = [2, 0]."""
    return make_triple([[2j]], [[1.0]], [[2.0, 0.0]])


@pytest.fixture
def scalar_sequence(scalar_triple, scalar_signature):
    return gbdt_iterate(scalar_triple, constant_j_potential(scalar_signature, 3), 3)


@pytest.fixture
def zero_triple():
    """α = I, S₀ = I, Λ₀ = 0 with n=2, m=3."""
    return make_triple(np.eye(2), np.eye(2), np.zeros((2, 3)))


def _random_strict_triple(seed: int, n: int, m: int):
    rng = np.random.default_rng(seed)
    while True:
        x = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        s0 = np.eye(n) + 0.1 * (x @ x.conj().T) / n
        lam = 0.5 * (rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))) / np.sqrt(m)
        q, _ = np.linalg.qr(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
        eigenvalues = rng.uniform(2.0, 3.0, n) * rng.choice([-1.0, 1.0], n)
        h = (q * eigenvalues) @ q.conj().T
        alpha = (h + 0.5j * lam @ lam.conj().T) @ np.linalg.inv(s0)
        if smallest_singular_value(alpha) > 0.5 and smallest_singular_value(alpha - 1j * np.eye(n)) > 0.5:
            return make_triple(alpha, s0, lam)


@pytest.fixture
def strict_case():
    """Factory: (triple, potential) for a seeded strict-admissible triple and random-unitary potential."""

    def build(seed: int, n: int, m: int, steps: int):
        triple = _random_strict_triple(seed, n, m)
        signature = SignatureSpec(max(1, m // 2), m - max(1, m // 2))
        return triple, random_unitary_potential(signature, steps, seed=1000 + seed)

    return build
