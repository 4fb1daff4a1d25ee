"""Dense density-matrix engine for small qubit registers.

This module is the numerical core of the simulator: a minimal, explicitly
dense representation of 1--4 qubit mixed states with the handful of
operations the network protocols need (unitaries, Kraus channels, projective
measurement, partial trace, fidelities, Pauli expectations).

Conventions
-----------
* Qubit ordering is little-endian and fixed at the module boundary: qubit
  ``k`` corresponds to bit ``k`` of the computational-basis index, with bit 0
  the least significant.  The basis state ``|q3 q2 q1 q0>`` therefore has
  index ``q0 + 2*q1 + 4*q2 + 8*q3``.
* ``PauliString`` text reads in qubit order: ``symbols[k]`` acts on qubit
  ``k`` (so the leftmost character is qubit 0).
* States are immutable; every operation returns a new ``DensityMatrix``.
  Dense matrices are used throughout -- at four qubits (16 x 16) sparsity
  buys nothing and density keeps the algebra auditable.

Numerical tolerances are centralized in :data:`TOLERANCES` so property tests
have a single tuning point.  Negative eigenvalues within tolerance are never
clipped in the stored state; clipping happens only when reporting fidelities.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "TOLERANCES",
    "Tolerances",
    "DensityMatrix",
    "KrausChannel",
    "PauliString",
    "PAULI",
    "apply_unitary",
    "apply_channel",
    "measure_projective",
    "partial_trace",
    "fidelity_with_pure",
    "pauli_expectation",
    "embed_operator",
    "bell_state",
    "ghz_state",
    "bell_fidelity_signs",
    "GHZ_STABILIZER_TERMS",
]


@dataclass(frozen=True)
class Tolerances:
    """Numerical tolerance constants shared by all state checks.

    Attributes
    ----------
    hermiticity : float
        Maximum allowed ``|rho - rho^dagger|`` element.
    trace : float
        Maximum allowed ``|tr(rho) - 1|``.
    psd : float
        Most negative eigenvalue accepted as numerical noise.
    unitarity : float
        Maximum allowed ``|U U^dagger - I|`` element for gate inputs.
    trace_preserving : float
        Maximum allowed ``|sum K^dagger K - I|`` element for channels.
    """

    hermiticity: float = 1e-12
    trace: float = 1e-10
    psd: float = -1e-9
    unitarity: float = 1e-10
    trace_preserving: float = 1e-10


TOLERANCES = Tolerances()

MAX_QUBITS = 4

# Single-qubit Pauli matrices, keyed by symbol.
PAULI: dict[str, np.ndarray] = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True)
class DensityMatrix:
    """Immutable dense density matrix over ``n_qubits`` qubits.

    Parameters
    ----------
    matrix : numpy.ndarray
        Complex ``2**n x 2**n`` matrix.  Hermiticity and unit trace are
        verified on construction; positive semidefiniteness (an O(dim^3)
        eigendecomposition) is checked on demand via :meth:`validate`.
    n_qubits : int
        Number of qubits, in ``[1, 4]``.
    """

    matrix: np.ndarray
    n_qubits: int

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=complex)
        if not (1 <= self.n_qubits <= MAX_QUBITS):
            raise ValueError(f"n_qubits must be in [1, {MAX_QUBITS}], got {self.n_qubits}")
        dim = 2**self.n_qubits
        if m.shape != (dim, dim):
            raise ValueError(f"matrix shape {m.shape} does not match {self.n_qubits} qubits")
        if np.max(np.abs(m - m.conj().T)) > TOLERANCES.hermiticity:
            raise ValueError("matrix is not Hermitian within tolerance")
        if abs(np.trace(m).real - 1.0) > TOLERANCES.trace or abs(np.trace(m).imag) > TOLERANCES.trace:
            raise ValueError(f"trace {np.trace(m)} is not 1 within tolerance")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_statevector(cls, psi: np.ndarray) -> "DensityMatrix":
        """Build the pure state ``|psi><psi|`` from a normalized vector."""
        psi = np.asarray(psi, dtype=complex).ravel()
        n = _n_qubits_for_dim(psi.size)
        norm = np.linalg.norm(psi)
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"state vector norm {norm} is not 1")
        return cls(np.outer(psi, psi.conj()), n)

    @classmethod
    def maximally_mixed(cls, n_qubits: int) -> "DensityMatrix":
        """Return ``I / 2**n`` on ``n_qubits`` qubits."""
        dim = 2**n_qubits
        return cls(np.eye(dim, dtype=complex) / dim, n_qubits)

    def diagonal(self) -> np.ndarray:
        """Real part of the computational-basis populations."""
        return np.real(np.diag(self.matrix)).copy()

    def validate(self) -> None:
        """Run the full invariant check, including positive semidefiniteness.

        Raises
        ------
        ValueError
            If any eigenvalue lies below the PSD tolerance.
        """
        eigvals = np.linalg.eigvalsh(self.matrix)
        if eigvals.min() < TOLERANCES.psd:
            raise ValueError(f"state has eigenvalue {eigvals.min()} below PSD tolerance")


@dataclass(frozen=True)
class KrausChannel:
    """Trace-preserving channel given by a tuple of Kraus operators.

    All operators act on the same ``k = n_target_qubits`` qubits and must
    satisfy ``sum K^dagger K = I`` within :data:`TOLERANCES`.
    """

    operators: tuple[np.ndarray, ...]
    n_target_qubits: int

    def __post_init__(self) -> None:
        ops = tuple(np.asarray(k, dtype=complex) for k in self.operators)
        if not ops:
            raise ValueError("channel needs at least one Kraus operator")
        dim = 2**self.n_target_qubits
        for k in ops:
            if k.shape != (dim, dim):
                raise ValueError(f"Kraus operator shape {k.shape} does not match {self.n_target_qubits} qubits")
        total = sum(k.conj().T @ k for k in ops)
        if np.max(np.abs(total - np.eye(dim))) > TOLERANCES.trace_preserving:
            raise ValueError("channel is not trace-preserving within tolerance")
        object.__setattr__(self, "operators", ops)

    @classmethod
    def from_unitary(cls, u: np.ndarray) -> "KrausChannel":
        """Wrap a single unitary as a one-operator channel."""
        u = np.asarray(u, dtype=complex)
        return cls((u,), _n_qubits_for_dim(u.shape[0]))


@dataclass(frozen=True)
class PauliString:
    """A tensor product of single-qubit Paulis, e.g. ``PauliString("XZI")``.

    ``symbols[k]`` acts on qubit ``k`` (text reads in qubit order, leftmost
    character is qubit 0).
    """

    symbols: str

    def __post_init__(self) -> None:
        if not self.symbols or any(s not in PAULI for s in self.symbols):
            raise ValueError(f"invalid Pauli string {self.symbols!r}; symbols must be in I, X, Y, Z")

    def __len__(self) -> int:
        return len(self.symbols)

    def matrix(self) -> np.ndarray:
        """Full operator in the little-endian convention (qubit 0 = LSB)."""
        op = np.array([[1.0 + 0.0j]])
        for s in self.symbols:  # qubit 0 first -> it must be the last kron factor
            op = np.kron(PAULI[s], op)
        return op


def _n_qubits_for_dim(dim: int) -> int:
    n = int(round(math.log2(dim)))
    if 2**n != dim or not (1 <= n <= MAX_QUBITS):
        raise ValueError(f"dimension {dim} is not 2**n for n in [1, {MAX_QUBITS}]")
    return n


def embed_operator(op: np.ndarray, targets: tuple[int, ...] | list[int], n_qubits: int) -> np.ndarray:
    """Embed a k-qubit operator into the full ``2**n`` register space.

    Parameters
    ----------
    op : numpy.ndarray
        ``2**k x 2**k`` operator.  Its own qubit 0 maps to ``targets[0]``,
        qubit 1 to ``targets[1]``, and so on.
    targets : sequence of int
        Distinct register qubit indices.
    n_qubits : int
        Register size.

    Returns
    -------
    numpy.ndarray
        The ``2**n x 2**n`` embedded operator.
    """
    targets = tuple(targets)
    k = len(targets)
    if len(set(targets)) != k:
        raise ValueError(f"duplicate target qubits in {targets}")
    for t in targets:
        if not (0 <= t < n_qubits):
            raise ValueError(f"target qubit {t} out of range for {n_qubits} qubits")
    op = np.asarray(op, dtype=complex)
    if op.shape != (2**k, 2**k):
        raise ValueError(f"operator shape {op.shape} does not match {k} targets")

    rest = [q for q in range(n_qubits) if q not in targets]
    dim = 2**n_qubits
    full = np.zeros((dim, dim), dtype=complex)
    for gout in range(2**k):
        for gin in range(2**k):
            if op[gout, gin] == 0:
                continue
            for r in range(2 ** len(rest)):
                row = _compose_index(gout, targets, r, rest)
                col = _compose_index(gin, targets, r, rest)
                full[row, col] = op[gout, gin]
    return full


def _compose_index(gate_bits: int, targets: tuple[int, ...], rest_bits: int, rest: list[int]) -> int:
    idx = 0
    for j, t in enumerate(targets):
        idx |= ((gate_bits >> j) & 1) << t
    for j, q in enumerate(rest):
        idx |= ((rest_bits >> j) & 1) << q
    return idx


def apply_unitary(rho: DensityMatrix, u: np.ndarray, targets: tuple[int, ...] | list[int]) -> DensityMatrix:
    """Apply a unitary to the given target qubits.

    Parameters
    ----------
    rho : DensityMatrix
        Input state.
    u : numpy.ndarray
        ``2**k x 2**k`` unitary; verified to :data:`TOLERANCES`.
    targets : sequence of int
        Register qubits the unitary acts on; ``u``'s qubit 0 maps to
        ``targets[0]``.

    Returns
    -------
    DensityMatrix
        ``(U (x) I) rho (U (x) I)^dagger``.
    """
    u = np.asarray(u, dtype=complex)
    if np.max(np.abs(u @ u.conj().T - np.eye(u.shape[0]))) > TOLERANCES.unitarity:
        raise ValueError("operator is not unitary within tolerance")
    full = embed_operator(u, targets, rho.n_qubits)
    return DensityMatrix(full @ rho.matrix @ full.conj().T, rho.n_qubits)


def apply_channel(rho: DensityMatrix, channel: KrausChannel, targets: tuple[int, ...] | list[int]) -> DensityMatrix:
    """Apply a Kraus channel to the given target qubits.

    Returns
    -------
    DensityMatrix
        ``sum_i K_i rho K_i^dagger`` with each operator embedded on
        ``targets``.
    """
    out = np.zeros_like(rho.matrix)
    for k in channel.operators:
        full = embed_operator(k, targets, rho.n_qubits)
        out = out + full @ rho.matrix @ full.conj().T
    return DensityMatrix(out, rho.n_qubits)


def measure_projective(
    rho: DensityMatrix,
    qubit: int,
    basis: str | PauliString,
    rng: np.random.Generator,
) -> tuple[int, DensityMatrix, float]:
    """Projectively measure one qubit along a Pauli axis.

    Parameters
    ----------
    rho : DensityMatrix
        Input state.
    qubit : int
        Register qubit to measure.
    basis : str or PauliString
        Single Pauli axis (``"X"``, ``"Y"`` or ``"Z"``).  Outcome 0 is the
        +1 eigenstate.
    rng : numpy.random.Generator
        Source of randomness for the Born sample.

    Returns
    -------
    tuple
        ``(outcome, post_state, probability)`` where ``post_state`` is the
        renormalized projection and ``probability`` is the Born probability
        of the sampled outcome.
    """
    axis = basis.symbols if isinstance(basis, PauliString) else basis
    if axis not in ("X", "Y", "Z"):
        raise ValueError(f"basis must be a single Pauli axis, got {axis!r}")
    sigma = embed_operator(PAULI[axis], (qubit,), rho.n_qubits)
    eye = np.eye(2**rho.n_qubits)
    projectors = ((eye + sigma) / 2.0, (eye - sigma) / 2.0)

    p0 = float(np.real(np.trace(projectors[0] @ rho.matrix)))
    p0 = min(max(p0, 0.0), 1.0)
    outcome = 0 if rng.random() < p0 else 1
    prob = p0 if outcome == 0 else 1.0 - p0
    if prob <= 0.0:
        raise ValueError(f"sampled zero-probability branch (outcome {outcome})")
    proj = projectors[outcome]
    post = proj @ rho.matrix @ proj / prob
    return outcome, DensityMatrix(post, rho.n_qubits), prob


def partial_trace(rho: DensityMatrix, keep: tuple[int, ...] | list[int]) -> DensityMatrix:
    """Trace out all qubits not listed in ``keep``.

    Parameters
    ----------
    rho : DensityMatrix
        Input state.
    keep : sequence of int
        Qubits to retain.  The reduced state's qubit ``i`` is ``keep[i]``,
        so the order of ``keep`` fixes the output labeling.

    Returns
    -------
    DensityMatrix
        Reduced state over ``len(keep)`` qubits.
    """
    keep = tuple(keep)
    if not keep:
        raise ValueError("keep must list at least one qubit")
    if len(set(keep)) != len(keep):
        raise ValueError(f"duplicate qubits in keep={keep}")
    n = rho.n_qubits
    for q in keep:
        if not (0 <= q < n):
            raise ValueError(f"qubit {q} out of range for {n} qubits")

    # Tensor axes are most-significant first: axis j <-> qubit (n - 1 - j).
    t = rho.matrix.reshape([2] * (2 * n))
    labels = list(range(n - 1, -1, -1))  # labels[axis] = qubit index
    for q in sorted(set(range(n)) - set(keep), reverse=True):
        ax = labels.index(q)
        t = np.trace(t, axis1=ax, axis2=ax + len(labels))
        labels.pop(ax)
    # Reorder remaining axes so the output's qubit i is keep[i].
    m = len(keep)
    perm = [labels.index(q) for q in reversed(keep)]  # MSB-first output order
    t = np.transpose(t, perm + [p + m for p in perm])
    return DensityMatrix(t.reshape(2**m, 2**m), m)


def fidelity_with_pure(rho: DensityMatrix, psi: np.ndarray) -> float:
    """Fidelity ``<psi| rho |psi>`` of a state with a pure target.

    The imaginary residue must vanish within tolerance; tiny negative values
    from numerical noise are clipped to 0 in the returned value only.
    """
    psi = np.asarray(psi, dtype=complex).ravel()
    if psi.size != rho.matrix.shape[0]:
        raise ValueError(f"state vector dimension {psi.size} does not match {rho.n_qubits} qubits")
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"state vector norm {norm} is not 1")
    val = complex(psi.conj() @ rho.matrix @ psi)
    if abs(val.imag) > TOLERANCES.trace:
        raise ValueError(f"fidelity has imaginary part {val.imag}")
    return float(min(max(val.real, 0.0), 1.0))


def pauli_expectation(rho: DensityMatrix, pauli: str | PauliString) -> float:
    """Expectation value ``tr(rho P)`` of a Pauli string.

    Parameters
    ----------
    rho : DensityMatrix
        Input state.
    pauli : str or PauliString
        One symbol per qubit, ``symbols[k]`` acting on qubit ``k``.
    """
    ps = pauli if isinstance(pauli, PauliString) else PauliString(pauli)
    if len(ps) != rho.n_qubits:
        raise ValueError(f"Pauli string length {len(ps)} does not match {rho.n_qubits} qubits")
    val = complex(np.trace(rho.matrix @ ps.matrix()))
    if abs(val.imag) > TOLERANCES.trace:
        raise ValueError(f"expectation has imaginary part {val.imag}")
    return float(val.real)


def bell_state(label: str) -> np.ndarray:
    """Return a Bell state vector (little-endian, qubit 0 = first qubit).

    Labels: ``"phi+"``, ``"phi-"`` for ``(|00> +/- |11>)/sqrt(2)`` and
    ``"psi+"``, ``"psi-"`` for ``(|01> +/- |10>)/sqrt(2)``, where ``|q0 q1>``
    is written in qubit order (state ``|01>`` has qubit 0 in 0, qubit 1 in 1).
    """
    s = 1.0 if label.endswith("+") else -1.0
    v = np.zeros(4, dtype=complex)
    if label.startswith("phi"):
        v[0b00], v[0b11] = 1.0, s
    elif label.startswith("psi"):
        # qubit 0 = 0, qubit 1 = 1 -> index 0b10; and the mirror image.
        v[0b10], v[0b01] = 1.0, s
    else:
        raise ValueError(f"unknown Bell label {label!r}")
    return v / math.sqrt(2.0)


def ghz_state(n_qubits: int = 3) -> np.ndarray:
    """Return the ``(|0...0> + |1...1>)/sqrt(2)`` state vector."""
    v = np.zeros(2**n_qubits, dtype=complex)
    v[0] = v[-1] = 1.0 / math.sqrt(2.0)
    return v


# Stabilizer-sum decompositions used for fidelity-from-correlators identities.
# F(Bell) = (1 + sum sign * <PP>) / 4 and F(GHZ3) = (1 + sum sign * <PQR>) / 8.
BELL_SIGNS: dict[str, dict[str, int]] = {
    "phi+": {"XX": +1, "YY": -1, "ZZ": +1},
    "phi-": {"XX": -1, "YY": +1, "ZZ": +1},
    "psi+": {"XX": +1, "YY": +1, "ZZ": -1},
    "psi-": {"XX": -1, "YY": -1, "ZZ": -1},
}

GHZ_STABILIZER_TERMS: dict[str, int] = {
    "IZZ": +1,
    "ZIZ": +1,
    "ZZI": +1,
    "XXX": +1,
    "XYY": -1,
    "YXY": -1,
    "YYX": -1,
}


def bell_fidelity_signs(label: str) -> dict[str, int]:
    """Correlator signs entering the Bell-state fidelity identity."""
    try:
        return dict(BELL_SIGNS[label])
    except KeyError:
        raise ValueError(f"unknown Bell label {label!r}") from None
