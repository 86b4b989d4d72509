"""Dense complex operator algebra for small n-qubit systems.

Everything here works on plain ``numpy`` arrays: operators are dense
``(2**n, 2**n)`` complex matrices, states are Hermitian unit-trace density
matrices in the computational basis |0⟩=ground, |1⟩=excited (so ``SIGMA_MINUS``
de-excites, |1⟩ → |0⟩). Systems of interest are 2-4 qubits, so no sparsity.
"""

import numpy as np

I2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
SIGMA_MINUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
SIGMA_PLUS = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)

PAULI_LABELS = ("I", "X", "Y", "Z")
PAULI_MATRICES = {"I": I2, "X": SIGMA_X, "Y": SIGMA_Y, "Z": SIGMA_Z}

# Projective products (global phases discarded): conjugation kills them.
_PAULI_PRODUCT = {
    ("I", "I"): "I", ("I", "X"): "X", ("I", "Y"): "Y", ("I", "Z"): "Z",
    ("X", "I"): "X", ("X", "X"): "I", ("X", "Y"): "Z", ("X", "Z"): "Y",
    ("Y", "I"): "Y", ("Y", "X"): "Z", ("Y", "Y"): "I", ("Y", "Z"): "X",
    ("Z", "I"): "Z", ("Z", "X"): "Y", ("Z", "Y"): "X", ("Z", "Z"): "I",
}


class InvariantViolation(RuntimeError):
    """A state or operator left its numerical tolerance envelope."""


def embed(op: np.ndarray, qubit: int, n_qubits: int) -> np.ndarray:
    """Tensor-embed a single-qubit operator at slot ``qubit`` (slot 0 leftmost)."""
    if op.shape != (2, 2):
        raise ValueError(f"expected a 2x2 operator, got shape {op.shape}")
    if not 0 <= qubit < n_qubits:
        raise IndexError(f"qubit index {qubit} out of range for {n_qubits} qubits")
    out = np.array([[1.0 + 0.0j]])
    for slot in range(n_qubits):
        out = np.kron(out, op if slot == qubit else I2)
    return out


def dissipator(c: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Lindblad dissipator c rho c† - (1/2){c†c, rho}. Hermitian and traceless."""
    if c.shape != rho.shape:
        raise ValueError(f"dimension mismatch: operator {c.shape} vs state {rho.shape}")
    cc = c.conj().T @ c
    return c @ rho @ c.conj().T - 0.5 * (cc @ rho + rho @ cc)


def hermitian_eigenvalues(m: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Real eigenvalues of a Hermitian matrix, sorted descending."""
    dev = np.max(np.abs(m - m.conj().T))
    if dev > tol:
        raise ValueError(f"matrix is not Hermitian (max deviation {dev:.3e} > {tol:.1e})")
    return np.linalg.eigvalsh(m)[::-1]


def pauli_multiply(a: str, b: str) -> str:
    """Projective Pauli product; every label squares to I."""
    try:
        return _PAULI_PRODUCT[(a, b)]
    except KeyError:
        raise ValueError(f"not Pauli labels: {a!r}, {b!r}") from None


def pauli_matrix(label: str) -> np.ndarray:
    try:
        return PAULI_MATRICES[label]
    except KeyError:
        raise ValueError(f"not a Pauli label: {label!r}") from None


def computational_ket(bits: str) -> np.ndarray:
    """Basis vector for a bit string, e.g. ``'01'`` -> |01>."""
    n = len(bits)
    ket = np.zeros(2**n, dtype=complex)
    ket[int(bits, 2)] = 1.0
    return ket


def bell_state() -> np.ndarray:
    """The maximally entangled pair (|01> + |10>)/sqrt(2)."""
    return (computational_ket("01") + computational_ket("10")) / np.sqrt(2.0)


def density(psi: np.ndarray) -> np.ndarray:
    """Density matrix |psi><psi| of a (normalized) ket."""
    return np.outer(psi, psi.conj())


def validate_density_matrix(
    rho: np.ndarray,
    herm_tol: float = 1e-10,
    trace_tol: float = 1e-10,
    eig_floor: float = -1e-9,
    context: str = "state",
) -> None:
    """Check Hermiticity, unit trace and positivity; raise InvariantViolation."""
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvariantViolation(f"{context}: not a square matrix, shape {rho.shape}")
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > herm_tol:
        raise InvariantViolation(f"{context}: Hermiticity violated by {herm:.3e}")
    tr = rho.trace()
    if abs(tr - 1.0) > trace_tol:
        raise InvariantViolation(f"{context}: trace {tr:.15g} deviates from 1")
    lo = np.linalg.eigvalsh(rho)[0]
    if lo < eig_floor:
        raise InvariantViolation(f"{context}: negative eigenvalue {lo:.3e}")


def random_density_matrix(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Random full-rank density matrix (Wishart construction); exactly Hermitian."""
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rho = a @ a.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return rho / rho.trace().real


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-ish random unitary from QR of a complex Gaussian matrix."""
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(a)
    # fix the phase ambiguity of QR so the result is deterministic
    return q * (np.diagonal(r) / np.abs(np.diagonal(r)))
