"""Three-node entanglement distribution protocols.

The network register is fixed at four qubits in little-endian order:

======  =========================================
qubit   role
======  =========================================
0       node A communication/storage spin
1       node B long-lived memory (nuclear spin)
2       node B communication spin
3       node C communication/storage spin
======  =========================================

A delivery sequence runs in cycles: charge/resonance preparation, heralded
A-B entanglement attempts until success, a swap of B's half onto the memory,
then up to ``bc_timeout_attempts`` heralded B-C attempts.  A timeout starts a
new cycle; a herald within the block completes the delivery.  During the B-C
block the memory dephases with the attempt count and precesses; the
precession is undone by a quantized feed-forward rotation whose residual is
bounded by the rotation resolution.

On top of a delivered double link, :func:`run_ghz` entangles B's two qubits
and reads out the communication spin to project A-M-C into a GHZ-class
state, and :func:`run_swap` Bell-measures both of B's qubits to swap the
entanglement to an A-C pair.  In both protocols the communication spin is
flipped right before the entangling gate, so the herald outcome 0 is the
branch that needs no X correction; outcome and herald-sign parity travel to
node C over a serial classical channel and select the Pauli frame there.

Every protocol comes in two flavors: an analytic branch enumeration (exact
expectation values, used by the error budgets) and a vectorized Monte Carlo
that samples herald signs, optical phases, attempt counts, readout errors,
and feed-forward corrections per run.  Monte Carlo runs are seeded per
512-run block from one root seed, so results are bit-identical for any
``jobs`` setting.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .linkmodel import (
    ErrorBudget,
    LinkParams,
    block_success_probability,
    heralded_state,
    success_probability,
    truncated_geometric_mean,
)
from .noise import (
    MemoryDecayParams,
    NuclearSpinParams,
    ReadoutModel,
    depolarizing_channel,
    depolarizing_strength_for_infidelity,
)
from .qstate import PAULI, DensityMatrix, bell_state, embed_operator, ghz_state

__all__ = [
    "REGISTER",
    "BLOCK_SIZE",
    "ClassicalMessage",
    "DeliveredMessage",
    "FeedforwardRotation",
    "MemoryCoherence",
    "ProtocolConfig",
    "ProtocolEvent",
    "RunResult",
    "serial_comm",
    "nuclear_phase_feedforward",
    "expected_memory_coherence",
    "expected_delivery_time_s",
    "run_double_link",
    "run_ghz",
    "run_swap",
    "ghz_final_state",
    "swap_final_state",
    "ghz_error_budget",
    "swap_error_budget",
]

#: Register roles by qubit index.
REGISTER = ("node A spin", "node B memory", "node B comm", "node C spin")

#: Monte Carlo seeding granularity: each block of this many runs draws from
#: its own spawned child stream, making results independent of ``jobs``.
BLOCK_SIZE = 512

_QUBIT_A, _QUBIT_M, _QUBIT_B, _QUBIT_C = 0, 1, 2, 3

# Fixed operators of the protocol circuit (built once).
_CNOT_PAIR = np.zeros((4, 4), dtype=complex)  # control = gate qubit 0
for _c in range(2):
    for _t in range(2):
        _CNOT_PAIR[_c | ((_t ^ _c) << 1), _c | (_t << 1)] = 1.0
_HADAMARD = (PAULI["X"] + PAULI["Z"]) / math.sqrt(2.0)

_X_PAIR_FIRST = embed_operator(PAULI["X"], (0,), 2)  # X on a pair's first qubit
_X_PAIR_SECOND = embed_operator(PAULI["X"], (1,), 2)
_X_COMM = embed_operator(PAULI["X"], (_QUBIT_B,), 4)
_ENTANGLE = embed_operator(_CNOT_PAIR, (_QUBIT_M, _QUBIT_B), 4)  # CNOT, control = memory
_HAD_MEM = embed_operator(_HADAMARD, (_QUBIT_M,), 4)

_GHZ_TARGET = ghz_state(3)
_PAIR_TARGET = bell_state("phi+")

# Projection index maps: keeping (A, M, C) after fixing the comm bit t, and
# (A, C) after fixing both measured bits (tm, tb).  Little-endian throughout.
_GHZ_KEEP = {
    t: np.array([(i & 1) | (((i >> 1) & 1) << 1) | (t << 2) | (((i >> 2) & 1) << 3) for i in range(8)])
    for t in (0, 1)
}
_SWAP_KEEP = {
    (tm, tb): np.array([(i & 1) | (tm << 1) | (tb << 2) | (((i >> 1) & 1) << 3) for i in range(4)])
    for tm in (0, 1)
    for tb in (0, 1)
}

# Pauli-frame corrections on the reduced states: X/Z on node C's qubit.
_GHZ_CORR = {
    (x, z): (embed_operator(PAULI["Z"], (2,), 3) if z else np.eye(8))
    @ (embed_operator(PAULI["X"], (2,), 3) if x else np.eye(8))
    for x in (0, 1)
    for z in (0, 1)
}
_SWAP_CORR = {
    (x, z): (embed_operator(PAULI["Z"], (1,), 2) if z else np.eye(4))
    @ (embed_operator(PAULI["X"], (1,), 2) if x else np.eye(4))
    for x in (0, 1)
    for z in (0, 1)
}

# Memory-qubit bit value of each 2-qubit pair index, for the diagonal
# dephasing/rotation mask.
_MEM_BIT = np.array([(i >> 1) & 1 for i in range(4)], dtype=float)
_MEM_DELTA = _MEM_BIT[:, None] - _MEM_BIT[None, :]


@dataclass(frozen=True)
class ProtocolConfig:
    """Everything needed to run the three-node protocols.

    Attributes
    ----------
    link_ab, link_bc : LinkParams
        Heralded-link parameters of the two elementary links.
    memory : MemoryDecayParams
        Attempt-driven memory decoherence.
    nuclear : NuclearSpinParams
        Memory precession frequencies for the phase feed-forward.
    readout_bob : ReadoutModel
        Single-shot readout of node B's communication spin.
    bc_timeout_attempts : int
        B-C attempts allowed per cycle before restarting.
    prep_delay_s : float
        Charge/resonance preparation overhead per cycle.
    feedforward_resolution_s : float
        Timing resolution of the quantized feed-forward rotation.
    gate_infidelity_ghz, gate_infidelity_swap : float
        Fidelity cost of the local two-qubit gate block in each protocol,
        applied as a depolarizing lump on the memory qubit (a lump of
        strength ``4/3 * cost`` costs exactly that fidelity).
    swap_acceptance_duty : float
        Calibrated fraction of deliveries accepted into the swapping
        sequence (sequence dead time); only rescales expected periods.
    bit_time_s, decode_time_s : float
        Serial classical channel timing.
    """

    link_ab: LinkParams
    link_bc: LinkParams
    memory: MemoryDecayParams
    nuclear: NuclearSpinParams
    readout_bob: ReadoutModel
    bc_timeout_attempts: int = 450
    prep_delay_s: float = 1.5
    feedforward_resolution_s: float = 2e-9
    gate_infidelity_ghz: float = 0.083
    gate_infidelity_swap: float = 0.082
    swap_acceptance_duty: float = 0.9
    bit_time_s: float = 60e-9
    decode_time_s: float = 2e-6

    def __post_init__(self) -> None:
        if self.bc_timeout_attempts < 1:
            raise ValueError(f"bc_timeout_attempts must be >= 1, got {self.bc_timeout_attempts}")
        if self.prep_delay_s < 0.0:
            raise ValueError(f"prep_delay_s must be >= 0, got {self.prep_delay_s}")
        if self.feedforward_resolution_s <= 0.0:
            raise ValueError("feedforward_resolution_s must be > 0")
        for name in ("gate_infidelity_ghz", "gate_infidelity_swap"):
            v = getattr(self, name)
            if not (0.0 <= v < 0.75):
                raise ValueError(f"{name} must be in [0, 0.75), got {v}")
        if not (0.0 < self.swap_acceptance_duty <= 1.0):
            raise ValueError(f"swap_acceptance_duty must be in (0, 1], got {self.swap_acceptance_duty}")
        if self.bit_time_s <= 0.0:
            raise ValueError("bit_time_s must be > 0")
        if not (0.0 < self.decode_time_s <= 2e-6):
            raise ValueError(f"decode_time_s must be in (0, 2e-6], got {self.decode_time_s}")


@dataclass(frozen=True)
class ClassicalMessage:
    """A classical payload requested on the shared serial line."""

    sender: str
    recipient: str
    payload_bits: int
    t_request_s: float

    def __post_init__(self) -> None:
        if self.payload_bits < 1:
            raise ValueError(f"payload_bits must be >= 1, got {self.payload_bits}")
        if self.t_request_s < 0.0:
            raise ValueError(f"t_request_s must be >= 0, got {self.t_request_s}")


@dataclass(frozen=True)
class DeliveredMessage:
    """Serial-line schedule entry for one message."""

    message: ClassicalMessage
    t_start_s: float
    t_sent_s: float
    t_delivered_s: float


def serial_comm(
    messages: list[ClassicalMessage] | tuple[ClassicalMessage, ...],
    bit_time_s: float = 60e-9,
    decode_time_s: float = 2e-6,
) -> tuple[DeliveredMessage, ...]:
    """Schedule messages on the shared serial line, first come first served.

    The line carries one bit per ``bit_time_s``; a message occupies the line
    for ``payload_bits * bit_time_s`` and is available to the recipient
    ``decode_time_s`` after its last bit.  Messages requested while the line
    is busy wait; ties keep the input order.

    Parameters
    ----------
    messages : sequence of ClassicalMessage
        Requested transmissions (any order).
    bit_time_s : float
        Serial bit duration.
    decode_time_s : float
        Decoding latency, at most 2 microseconds.

    Returns
    -------
    tuple of DeliveredMessage
        One entry per message, in transmission order.
    """
    if bit_time_s <= 0.0:
        raise ValueError(f"bit_time_s must be > 0, got {bit_time_s}")
    if not (0.0 < decode_time_s <= 2e-6):
        raise ValueError(f"decode_time_s must be in (0, 2e-6], got {decode_time_s}")
    order = sorted(range(len(messages)), key=lambda i: (messages[i].t_request_s, i))
    line_free = 0.0
    out = []
    for i in order:
        msg = messages[i]
        t_start = max(msg.t_request_s, line_free)
        t_sent = t_start + msg.payload_bits * bit_time_s
        line_free = t_sent
        out.append(DeliveredMessage(msg, t_start, t_sent, t_sent + decode_time_s))
    return tuple(out)


@dataclass(frozen=True)
class FeedforwardRotation:
    """Quantized rotation that undoes the memory precession.

    ``residual_rad`` is the part the quantization cannot remove; its
    magnitude never exceeds ``pi * resolution / tau_larmor``.
    """

    phase_rad: float
    applied_rad: float
    residual_rad: float
    n_steps: int


def nuclear_phase_feedforward(
    n_attempts: int,
    nuclear: NuclearSpinParams,
    resolution_s: float,
    attempt_duration_s: float,
) -> FeedforwardRotation:
    """Compute the feed-forward rotation after ``n_attempts`` network attempts.

    The memory precesses by ``2 pi f0 * attempt_duration`` per attempt; the
    compensating rotation is implemented by timing with ``resolution_s``
    granularity, so it comes in steps of ``2 pi * resolution / tau_larmor``.

    Parameters
    ----------
    n_attempts : int
        Attempt count since the memory was loaded (>= 0).
    nuclear : NuclearSpinParams
        Precession parameters; ``omega0_hz`` drives the accumulated phase.
    resolution_s : float
        Rotation timing resolution.
    attempt_duration_s : float
        Duration of one network attempt.

    Returns
    -------
    FeedforwardRotation
        Accumulated phase (mod ``2 pi``), quantized correction, and residual.
    """
    if n_attempts < 0:
        raise ValueError(f"n_attempts must be >= 0, got {n_attempts}")
    if resolution_s <= 0.0 or attempt_duration_s <= 0.0:
        raise ValueError("resolution_s and attempt_duration_s must be > 0")
    phase = (2.0 * math.pi * nuclear.omega0_hz * attempt_duration_s * n_attempts) % (2.0 * math.pi)
    step = 2.0 * math.pi * resolution_s / nuclear.tau_larmor_s
    n_steps = int(round(phase / step))
    applied = n_steps * step
    return FeedforwardRotation(phase, applied, phase - applied, n_steps)


def _feedforward_residuals(n_attempts: np.ndarray, cfg: ProtocolConfig) -> np.ndarray:
    """Vectorized residual rotation after the quantized feed-forward."""
    phase = (
        2.0 * math.pi * cfg.nuclear.omega0_hz * cfg.link_bc.attempt_duration_s * n_attempts
    ) % (2.0 * math.pi)
    step = 2.0 * math.pi * cfg.feedforward_resolution_s / cfg.nuclear.tau_larmor_s
    return phase - np.round(phase / step) * step


def _coherence_factors(n_attempts: np.ndarray, cfg: ProtocolConfig) -> np.ndarray:
    """Vectorized ``c(N)`` of the memory decay."""
    mem = cfg.memory
    return np.exp(-((n_attempts / mem.n_1e) ** mem.exponent_n))


@dataclass(frozen=True)
class MemoryCoherence:
    """Expected memory coherence over the B-C heralding block.

    ``zeta`` is the mean of ``c(N) exp(i residual(N))`` over the truncated
    geometric distribution of the successful attempt count; its magnitude is
    the effective dephasing factor and its argument the mean uncompensated
    rotation.
    """

    zeta: complex
    mean_coherence: float
    mean_attempts: float
    block_success_probability: float


def expected_memory_coherence(cfg: ProtocolConfig) -> MemoryCoherence:
    """Average the memory coherence over the B-C attempt distribution.

    Conditions on a herald inside the timeout block, where attempt ``n``
    occurs with the truncated geometric weight ``(1-p)^(n-1) p / q``.
    """
    p = success_probability(cfg.link_bc)
    timeout = cfg.bc_timeout_attempts
    q = block_success_probability(cfg.link_bc, timeout)
    n = np.arange(1, timeout + 1, dtype=float)
    pmf = (1.0 - p) ** (n - 1.0) * p / q
    c = _coherence_factors(n, cfg)
    resid = _feedforward_residuals(n, cfg)
    zeta = complex(np.sum(pmf * c * np.exp(1j * resid)))
    return MemoryCoherence(
        zeta=zeta,
        mean_coherence=float(np.sum(pmf * c)),
        mean_attempts=float(np.sum(pmf * n)),
        block_success_probability=float(q),
    )


def expected_delivery_time_s(cfg: ProtocolConfig) -> float:
    """Expected wall-clock time per delivered double link.

    Each cycle costs the preparation delay, a geometric number of A-B
    attempts, and the B-C block (full on timeout, the successful attempt
    count on herald); the number of cycles is geometric in the block
    success probability.
    """
    p1 = success_probability(cfg.link_ab)
    p2 = success_probability(cfg.link_bc)
    timeout = cfg.bc_timeout_attempts
    q = block_success_probability(cfg.link_bc, timeout)
    t1 = cfg.link_ab.attempt_duration_s
    t2 = cfg.link_bc.attempt_duration_s
    cycles = 1.0 / q
    bc_attempts = (cycles - 1.0) * timeout + truncated_geometric_mean(p2, timeout)
    return cycles * (cfg.prep_delay_s + t1 / p1) + bc_attempts * t2


@dataclass(frozen=True)
class ProtocolEvent:
    """One time-stamped entry of a delivery-sequence event log."""

    time_s: float
    node: str
    description: str


@dataclass
class RunResult:
    """Outcome of one protocol evaluation (analytic or Monte Carlo).

    ``fidelity`` is the mean state fidelity against the protocol's target
    (GHZ class, A-C pair, or the sign-resolved double-link product state);
    for the swapping protocol it averages over all reported Bell outcomes,
    with the per-outcome breakdown in ``outcome_fidelities``.  ``details``
    carries flat numeric diagnostics, and ``events`` a per-run event log of
    the first Monte Carlo run.
    """

    kind: str
    analytic: bool
    n_runs: int
    seed: int | None
    fidelity: float
    fidelity_std_error: float
    herald_probability: float
    mean_period_s: float
    outcome_probabilities: dict[str, float] = field(default_factory=dict)
    outcome_fidelities: dict[str, float] = field(default_factory=dict)
    details: dict[str, float] = field(default_factory=dict)
    events: tuple[ProtocolEvent, ...] = ()

    def to_dict(self) -> dict:
        """Plain-types view for serialization."""
        return {
            "kind": self.kind,
            "analytic": self.analytic,
            "n_runs": self.n_runs,
            "seed": self.seed,
            "fidelity": self.fidelity,
            "fidelity_std_error": self.fidelity_std_error,
            "herald_probability": self.herald_probability,
            "mean_period_s": self.mean_period_s,
            "outcome_probabilities": dict(sorted(self.outcome_probabilities.items())),
            "outcome_fidelities": dict(sorted(self.outcome_fidelities.items())),
            "details": dict(sorted(self.details.items())),
            "events": [[e.time_s, e.node, e.description] for e in self.events],
        }


# ---------------------------------------------------------------------------
# State construction shared by the analytic and Monte Carlo paths
# ---------------------------------------------------------------------------


def _memory_mask(coherence: np.ndarray | float, rotation_rad: np.ndarray | float) -> np.ndarray:
    """Elementwise factor applying dephasing and Z rotation to the memory.

    Both maps are diagonal in the index basis, so acting on the pair state
    reduces to multiplying entry ``(i, j)`` by
    ``c**|b_i - b_j| * exp(i theta (b_i - b_j))`` with ``b`` the memory bit.
    """
    c = np.asarray(coherence, dtype=float)[..., None, None]
    theta = np.asarray(rotation_rad, dtype=float)[..., None, None]
    return np.power(c, np.abs(_MEM_DELTA)) * np.exp(1j * theta * _MEM_DELTA)


def _pair_batch(
    params: LinkParams,
    signs: np.ndarray,
    phases_rad: np.ndarray | None,
    ideal: bool,
) -> np.ndarray:
    """Batch of heralded pair states, shape ``(m, 4, 4)``.

    ``ideal=True`` replaces the physical link by the sign-matched Bell
    state.  With ``phases_rad`` given, each run carries its sampled optical
    phase on the coherence; otherwise the Gaussian-averaged damping applies.
    """
    m = signs.size
    out = np.zeros((m, 4, 4), dtype=complex)
    if ideal:
        for s, label in ((+1, "psi+"), (-1, "psi-")):
            sel = signs == s
            if sel.any():
                psi = bell_state(label)
                out[sel] = np.outer(psi, psi.conj())
        return out
    base = heralded_state(params, +1).state.matrix
    out[:] = np.diag(np.diag(base))
    if phases_rad is None:
        coh = signs * base[2, 1].real
    else:
        # Undamped magnitude: the sampled phase replaces the averaging.
        undamped = heralded_state(params, +1, sampled_phase_rad=0.0).state.matrix[2, 1].real
        coh = signs * undamped * np.exp(1j * phases_rad)
    out[:, 2, 1] = coh
    out[:, 1, 2] = np.conj(coh)
    return out


def _register_batch(
    cfg: ProtocolConfig,
    s1: np.ndarray,
    s2: np.ndarray,
    phases_ab: np.ndarray | None,
    phases_bc: np.ndarray | None,
    mem_coherence: np.ndarray | float,
    mem_rotation: np.ndarray | float,
    depol_p: float,
    ab_ideal: bool = False,
    bc_ideal: bool = False,
) -> np.ndarray:
    """Four-qubit register states right before the entangling gate.

    Applies the herald-sign X flips at nodes A and C, the gate depolarizing
    lump and the memory dephasing/rotation on the memory qubit, and tensors
    the two pairs into the (A, M, B, C) register.
    """
    rho_ab = _pair_batch(cfg.link_ab, s1, phases_ab, ab_ideal)
    rho_ab = _X_PAIR_FIRST @ rho_ab @ _X_PAIR_FIRST
    if depol_p > 0.0:
        ops = depolarizing_channel(depol_p, 1).operators
        acc = np.zeros_like(rho_ab)
        for k in ops:
            kb = embed_operator(k, (1,), 2)
            acc += kb @ rho_ab @ kb.conj().T
        rho_ab = acc
    rho_ab = rho_ab * _memory_mask(mem_coherence, mem_rotation)
    rho_bc = _pair_batch(cfg.link_bc, s2, phases_bc, bc_ideal)
    rho_bc = _X_PAIR_SECOND @ rho_bc @ _X_PAIR_SECOND
    # kron(BC, AB): the B-C pair supplies the high-order qubits (2, 3).
    m = s1.size
    return np.einsum("nij,nkl->nikjl", rho_bc, rho_ab).reshape(m, 16, 16)


def _sign_parity(s1: np.ndarray, s2: np.ndarray) -> np.ndarray:
    """Herald-sign parity driving the Z correction."""
    return ((s1 < 0) ^ (s2 < 0)).astype(int)


def _apply_corrections(
    blocks: np.ndarray,
    x_flags: np.ndarray,
    z_flags: np.ndarray,
    table: dict[tuple[int, int], np.ndarray],
) -> np.ndarray:
    """Conjugate each batch entry by its selected Pauli-frame correction."""
    out = np.empty_like(blocks)
    for (x, z), corr in table.items():
        sel = (x_flags == x) & (z_flags == z)
        if sel.any():
            out[sel] = corr @ blocks[sel] @ corr.conj().T
    return out


def _readout_matrix(readout: ReadoutModel | None) -> np.ndarray:
    return np.eye(2) if readout is None else readout.matrix


# ---------------------------------------------------------------------------
# Analytic branch enumeration
# ---------------------------------------------------------------------------

_SIGN_COMBOS = [(+1, +1), (+1, -1), (-1, +1), (-1, -1)]


def _ghz_analytic(
    cfg: ProtocolConfig,
    zeta: complex,
    depol_p: float,
    readout: ReadoutModel | None,
    herald_outcome: int,
    ab_ideal: bool = False,
    bc_ideal: bool = False,
) -> tuple[float, float]:
    """Exact (acceptance probability, fidelity) of the GHZ protocol.

    Enumerates the four equiprobable herald-sign combinations and both
    physical readout branches, weighting each by the probability that the
    reported outcome equals ``herald_outcome``.
    """
    r_mat = _readout_matrix(readout)
    total_p = 0.0
    total_pf = 0.0
    for s1v, s2v in _SIGN_COMBOS:
        s1 = np.array([s1v])
        s2 = np.array([s2v])
        rho = _register_batch(
            cfg, s1, s2, None, None, abs(zeta), math.atan2(zeta.imag, zeta.real), depol_p, ab_ideal, bc_ideal
        )[0]
        rho = _X_COMM @ rho @ _X_COMM
        rho = _ENTANGLE @ rho @ _ENTANGLE.conj().T
        parity = _sign_parity(s1, s2)[0]
        for t in (0, 1):
            keep = _GHZ_KEEP[t]
            sub = rho[np.ix_(keep, keep)]
            p_t = float(np.real(np.trace(sub)))
            if p_t < 1e-15:
                continue
            corr = _GHZ_CORR[(1 if herald_outcome == 0 else 0, parity)]
            final = corr @ sub @ corr.conj().T
            fid = float(np.real(_GHZ_TARGET.conj() @ final @ _GHZ_TARGET)) / p_t
            weight = 0.25 * p_t * r_mat[herald_outcome, t]
            total_p += weight
            total_pf += weight * fid
    return total_p, total_pf / total_p


def _swap_analytic(
    cfg: ProtocolConfig,
    zeta: complex,
    depol_p: float,
    readout: ReadoutModel | None,
    ab_ideal: bool = False,
    bc_ideal: bool = False,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact swap tables ``(P_reported, F_reported, P_true)``, each 2x2.

    Indices are ``[memory outcome, comm outcome]``; the reported tables
    average over readout errors, and corrections follow the reported bits.
    """
    r_mat = _readout_matrix(readout)
    p_rep = np.zeros((2, 2))
    pf_rep = np.zeros((2, 2))
    p_true = np.zeros((2, 2))
    for s1v, s2v in _SIGN_COMBOS:
        s1 = np.array([s1v])
        s2 = np.array([s2v])
        rho = _register_batch(
            cfg, s1, s2, None, None, abs(zeta), math.atan2(zeta.imag, zeta.real), depol_p, ab_ideal, bc_ideal
        )[0]
        rho = _X_COMM @ rho @ _X_COMM
        rho = _ENTANGLE @ rho @ _ENTANGLE.conj().T
        rho = _HAD_MEM @ rho @ _HAD_MEM.conj().T
        parity = _sign_parity(s1, s2)[0]
        for tm in (0, 1):
            for tb in (0, 1):
                keep = _SWAP_KEEP[(tm, tb)]
                sub = rho[np.ix_(keep, keep)]
                p_t = float(np.real(np.trace(sub)))
                if p_t < 1e-15:
                    continue
                p_true[tm, tb] += 0.25 * p_t
                for rm in (0, 1):
                    for rb in (0, 1):
                        weight = 0.25 * p_t * r_mat[rm, tm] * r_mat[rb, tb]
                        if weight < 1e-18:
                            continue
                        corr = _SWAP_CORR[(1 if rb == 0 else 0, rm ^ parity)]
                        final = corr @ sub @ corr.conj().T
                        fid = float(np.real(_PAIR_TARGET.conj() @ final @ _PAIR_TARGET)) / p_t
                        p_rep[rm, rb] += weight
                        pf_rep[rm, rb] += weight * fid
    return p_rep, pf_rep / p_rep, p_true


def _double_link_analytic(cfg: ProtocolConfig, zeta: complex) -> float:
    """Exact mean fidelity of the delivered double link (no gate lump)."""
    total = 0.0
    for s1v, s2v in _SIGN_COMBOS:
        s1 = np.array([s1v])
        s2 = np.array([s2v])
        rho = _register_batch(cfg, s1, s2, None, None, abs(zeta), math.atan2(zeta.imag, zeta.real), 0.0)[0]
        psi = _double_link_target(s1v, s2v)
        total += 0.25 * float(np.real(psi.conj() @ rho @ psi))
    return total


def _double_link_target(s1: int, s2: int) -> np.ndarray:
    """Sign-resolved ideal register state after the two X flips."""
    psi_ab = _X_PAIR_FIRST @ bell_state("psi+" if s1 > 0 else "psi-")
    psi_bc = _X_PAIR_SECOND @ bell_state("psi+" if s2 > 0 else "psi-")
    return np.kron(psi_bc, psi_ab)


def ghz_final_state(cfg: ProtocolConfig, herald_outcome: int = 0) -> tuple[float, DensityMatrix]:
    """Exact post-selected three-qubit state of the GHZ protocol.

    Averages the Pauli-corrected (A, memory, C) register over the four
    herald-sign combinations and both physical readout branches, weighting
    each branch by the probability that node B reports ``herald_outcome``.

    Returns
    -------
    tuple
        ``(acceptance probability, state)``.  The state's overlap with the
        GHZ target equals the analytic fidelity reported by
        :func:`run_ghz`, and its Pauli expectation values are the model
        predictions for the measured stabilizer correlators.
    """
    coh = expected_memory_coherence(cfg)
    zeta = coh.zeta
    depol_p = depolarizing_strength_for_infidelity(cfg.gate_infidelity_ghz)
    r_mat = _readout_matrix(cfg.readout_bob)
    total_p = 0.0
    acc = np.zeros((8, 8), dtype=complex)
    for s1v, s2v in _SIGN_COMBOS:
        s1 = np.array([s1v])
        s2 = np.array([s2v])
        rho = _register_batch(
            cfg, s1, s2, None, None, abs(zeta), math.atan2(zeta.imag, zeta.real), depol_p
        )[0]
        rho = _X_COMM @ rho @ _X_COMM
        rho = _ENTANGLE @ rho @ _ENTANGLE.conj().T
        parity = _sign_parity(s1, s2)[0]
        for t in (0, 1):
            keep = _GHZ_KEEP[t]
            sub = rho[np.ix_(keep, keep)]
            p_t = float(np.real(np.trace(sub)))
            if p_t < 1e-15:
                continue
            corr = _GHZ_CORR[(1 if herald_outcome == 0 else 0, parity)]
            final = corr @ sub @ corr.conj().T
            acc += 0.25 * r_mat[herald_outcome, t] * final
            total_p += 0.25 * r_mat[herald_outcome, t] * p_t
    avg = acc / total_p
    avg = (avg + avg.conj().T) / 2.0
    return total_p, DensityMatrix(avg, 3)


def swap_final_state(cfg: ProtocolConfig, postselect: str = "00") -> tuple[float, DensityMatrix]:
    """Exact post-selected A-C pair state of the swapping protocol.

    ``postselect`` is a reported Bell-measurement pattern (``"00"`` ...
    ``"11"``, memory bit first) or ``"any"`` for the average over all four
    reported outcomes, each corrected in its own Pauli frame.

    Returns
    -------
    tuple
        ``(acceptance probability, state)``.  The state's overlap with the
        Bell target equals the corresponding analytic fidelity reported by
        :func:`run_swap`.
    """
    if postselect != "any" and postselect not in ("00", "01", "10", "11"):
        raise ValueError(f"postselect must be 'any' or a 2-bit pattern, got {postselect!r}")
    coh = expected_memory_coherence(cfg)
    zeta = coh.zeta
    depol_p = depolarizing_strength_for_infidelity(cfg.gate_infidelity_swap)
    r_mat = _readout_matrix(cfg.readout_bob)
    total_p = 0.0
    acc = np.zeros((4, 4), dtype=complex)
    for s1v, s2v in _SIGN_COMBOS:
        s1 = np.array([s1v])
        s2 = np.array([s2v])
        rho = _register_batch(
            cfg, s1, s2, None, None, abs(zeta), math.atan2(zeta.imag, zeta.real), depol_p
        )[0]
        rho = _X_COMM @ rho @ _X_COMM
        rho = _ENTANGLE @ rho @ _ENTANGLE.conj().T
        rho = _HAD_MEM @ rho @ _HAD_MEM.conj().T
        parity = _sign_parity(s1, s2)[0]
        for tm in (0, 1):
            for tb in (0, 1):
                keep = _SWAP_KEEP[(tm, tb)]
                sub = rho[np.ix_(keep, keep)]
                p_t = float(np.real(np.trace(sub)))
                if p_t < 1e-15:
                    continue
                for rm in (0, 1):
                    for rb in (0, 1):
                        if postselect != "any" and (rm, rb) != (int(postselect[0]), int(postselect[1])):
                            continue
                        weight = r_mat[rm, tm] * r_mat[rb, tb]
                        if weight < 1e-18:
                            continue
                        corr = _SWAP_CORR[(1 if rb == 0 else 0, rm ^ parity)]
                        acc += 0.25 * weight * (corr @ sub @ corr.conj().T)
                        total_p += 0.25 * weight * p_t
    avg = acc / total_p
    avg = (avg + avg.conj().T) / 2.0
    return total_p, DensityMatrix(avg, 2)


# ---------------------------------------------------------------------------
# Error budgets
# ---------------------------------------------------------------------------


def ghz_error_budget(cfg: ProtocolConfig, herald_outcome: int = 0) -> ErrorBudget:
    """Per-source infidelity budget of the GHZ protocol.

    Each single-source row isolates one source (both links ideal otherwise,
    no memory decay, no gate lump, perfect readout); ``links_combined`` is
    the partial budget with both real links but everything else ideal, and
    the combined row enables everything at once.
    """
    coh = expected_memory_coherence(cfg)
    depol = depolarizing_strength_for_infidelity(cfg.gate_infidelity_ghz)
    ideal = dict(zeta=1.0 + 0.0j, depol_p=0.0, readout=None, herald_outcome=herald_outcome)
    rows = {
        "link_ab": 1.0 - _ghz_analytic(cfg, bc_ideal=True, **ideal)[1],
        "link_bc": 1.0 - _ghz_analytic(cfg, ab_ideal=True, **ideal)[1],
        "memory_dephasing": 1.0
        - _ghz_analytic(cfg, **{**ideal, "zeta": complex(coh.mean_coherence)}, ab_ideal=True, bc_ideal=True)[1],
        "depolarizing": 1.0
        - _ghz_analytic(cfg, **{**ideal, "depol_p": depol}, ab_ideal=True, bc_ideal=True)[1],
        "readout_feedforward": 1.0
        - _ghz_analytic(cfg, **{**ideal, "readout": cfg.readout_bob}, ab_ideal=True, bc_ideal=True)[1],
        "links_combined": 1.0 - _ghz_analytic(cfg, **ideal)[1],
    }
    _, fid = _ghz_analytic(cfg, coh.zeta, depol, cfg.readout_bob, herald_outcome)
    return ErrorBudget(contributions=rows, combined=1.0 - fid)


def swap_error_budget(cfg: ProtocolConfig, postselect: str = "00") -> ErrorBudget:
    """Per-source infidelity budget of the swapping protocol.

    ``postselect`` is either a reported Bell pattern (``"00"``) or
    ``"any"`` for the average over all four reported outcomes.
    """
    if postselect != "any" and postselect not in ("00", "01", "10", "11"):
        raise ValueError(f"postselect must be 'any' or a 2-bit pattern, got {postselect!r}")

    def infidelity(p_rep: np.ndarray, f_rep: np.ndarray) -> float:
        if postselect == "any":
            return 1.0 - float(np.sum(p_rep * f_rep) / np.sum(p_rep))
        i, j = int(postselect[0]), int(postselect[1])
        return 1.0 - float(f_rep[i, j])

    coh = expected_memory_coherence(cfg)
    depol = depolarizing_strength_for_infidelity(cfg.gate_infidelity_swap)
    ideal = dict(zeta=1.0 + 0.0j, depol_p=0.0, readout=None)
    rows = {
        "link_ab": infidelity(*_swap_analytic(cfg, bc_ideal=True, **ideal)[:2]),
        "link_bc": infidelity(*_swap_analytic(cfg, ab_ideal=True, **ideal)[:2]),
        "memory_dephasing": infidelity(
            *_swap_analytic(cfg, **{**ideal, "zeta": complex(coh.mean_coherence)}, ab_ideal=True, bc_ideal=True)[:2]
        ),
        "depolarizing": infidelity(
            *_swap_analytic(cfg, **{**ideal, "depol_p": depol}, ab_ideal=True, bc_ideal=True)[:2]
        ),
        "readout_feedforward": infidelity(
            *_swap_analytic(cfg, **{**ideal, "readout": cfg.readout_bob}, ab_ideal=True, bc_ideal=True)[:2]
        ),
    }
    p_rep, f_rep, _ = _swap_analytic(cfg, coh.zeta, depol, cfg.readout_bob)
    return ErrorBudget(contributions=rows, combined=infidelity(p_rep, f_rep))


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


def _run_blocks(n_runs: int, seed: int, jobs: int, block_fn) -> dict[str, np.ndarray]:
    """Evaluate ``block_fn(generator, size)`` over seeded blocks and merge.

    Each block of :data:`BLOCK_SIZE` runs draws from its own child of the
    root seed sequence, and blocks merge in index order, so the combined
    arrays do not depend on ``jobs``.
    """
    if n_runs < 1:
        raise ValueError(f"n_runs must be >= 1, got {n_runs}")
    if jobs < 1:
        raise ValueError(f"jobs must be >= 1, got {jobs}")
    n_blocks = math.ceil(n_runs / BLOCK_SIZE)
    children = np.random.SeedSequence(seed).spawn(n_blocks)
    sizes = [min(BLOCK_SIZE, n_runs - i * BLOCK_SIZE) for i in range(n_blocks)]

    def one(i: int) -> dict[str, np.ndarray]:
        return block_fn(np.random.Generator(np.random.PCG64(children[i])), sizes[i])

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(one, range(n_blocks)))
    else:
        parts = [one(i) for i in range(n_blocks)]
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


def _sample_delivery(cfg: ProtocolConfig, gen: np.random.Generator, m: int) -> dict[str, np.ndarray]:
    """Sample the per-run delivery variables in a fixed draw order."""
    p1 = success_probability(cfg.link_ab)
    p2 = success_probability(cfg.link_bc)
    timeout = cfg.bc_timeout_attempts
    q = block_success_probability(cfg.link_bc, timeout)
    t1 = cfg.link_ab.attempt_duration_s
    t2 = cfg.link_bc.attempt_duration_s

    s1 = np.where(gen.random(m) < 0.5, 1, -1)
    s2 = np.where(gen.random(m) < 0.5, 1, -1)
    phi1 = gen.normal(0.0, math.radians(cfg.link_ab.phase_sigma_deg), m)
    phi2 = gen.normal(0.0, math.radians(cfg.link_bc.phase_sigma_deg), m)
    # Cycles until a B-C block heralds, then the A-B attempt total across
    # those cycles (a sum of geometrics) and the successful B-C attempt.
    cycles = np.ceil(np.log1p(-gen.random(m)) / math.log1p(-q)).astype(np.int64)
    cycles = np.maximum(cycles, 1)
    n_ab = cycles + gen.negative_binomial(cycles, p1)
    n_bc = np.ceil(np.log1p(-gen.random(m) * q) / math.log1p(-p2)).astype(np.int64)
    n_bc = np.clip(n_bc, 1, timeout)
    elapsed = cycles * cfg.prep_delay_s + n_ab * t1 + ((cycles - 1) * timeout + n_bc) * t2
    return {
        "s1": s1,
        "s2": s2,
        "phi1": phi1,
        "phi2": phi2,
        "cycles": cycles,
        "n_ab": n_ab,
        "n_bc": n_bc,
        "elapsed": elapsed,
        "coherence": _coherence_factors(n_bc.astype(float), cfg),
        "residual": _feedforward_residuals(n_bc.astype(float), cfg),
    }


def _traces(blocks: np.ndarray) -> np.ndarray:
    return np.real(np.trace(blocks, axis1=-2, axis2=-1))


def _pure_overlaps(blocks: np.ndarray, psi: np.ndarray) -> np.ndarray:
    return np.real(np.einsum("i,nij,j->n", psi.conj(), blocks, psi))


def _ghz_block(cfg: ProtocolConfig, gen: np.random.Generator, m: int, herald_outcome: int) -> dict[str, np.ndarray]:
    """One Monte Carlo block of the GHZ protocol."""
    d = _sample_delivery(cfg, gen, m)
    depol = depolarizing_strength_for_infidelity(cfg.gate_infidelity_ghz)
    rho = _register_batch(cfg, d["s1"], d["s2"], d["phi1"], d["phi2"], d["coherence"], d["residual"], depol)
    rho = _X_COMM @ rho @ _X_COMM
    rho = _ENTANGLE @ rho @ _ENTANGLE.conj().T

    sub0 = rho[:, _GHZ_KEEP[0][:, None], _GHZ_KEEP[0][None, :]]
    sub1 = rho[:, _GHZ_KEEP[1][:, None], _GHZ_KEEP[1][None, :]]
    p0 = _traces(sub0)
    t = (gen.random(m) >= p0).astype(int)
    sub = np.where((t == 0)[:, None, None], sub0, sub1)
    p_sel = np.where(t == 0, p0, 1.0 - p0)

    r_mat = _readout_matrix(cfg.readout_bob)
    p_report0 = np.where(t == 0, r_mat[0, 0], r_mat[0, 1])
    r = (gen.random(m) >= p_report0).astype(int)

    parity = _sign_parity(d["s1"], d["s2"])
    x = (r == 0).astype(int)
    final = _apply_corrections(sub, x, parity, _GHZ_CORR)
    fid = _pure_overlaps(final, _GHZ_TARGET) / p_sel
    return {**d, "t": t, "r": r, "kept": (r == herald_outcome), "fidelity": fid}


def _swap_block(cfg: ProtocolConfig, gen: np.random.Generator, m: int) -> dict[str, np.ndarray]:
    """One Monte Carlo block of the swapping protocol."""
    d = _sample_delivery(cfg, gen, m)
    depol = depolarizing_strength_for_infidelity(cfg.gate_infidelity_swap)
    rho = _register_batch(cfg, d["s1"], d["s2"], d["phi1"], d["phi2"], d["coherence"], d["residual"], depol)
    rho = _X_COMM @ rho @ _X_COMM
    rho = _ENTANGLE @ rho @ _ENTANGLE.conj().T
    rho = _HAD_MEM @ rho @ _HAD_MEM.conj().T

    subs = np.stack(
        [rho[:, _SWAP_KEEP[(tm, tb)][:, None], _SWAP_KEEP[(tm, tb)][None, :]] for tm, tb in ((0, 0), (0, 1), (1, 0), (1, 1))]
    )
    probs = _traces(subs).T  # (m, 4), outcome order 00, 01, 10, 11
    cum = np.cumsum(probs, axis=1)
    u = gen.random(m) * cum[:, -1]
    cat = np.sum(u[:, None] >= cum[:, :-1], axis=1)
    sub = subs[cat, np.arange(m)]
    p_sel = probs[np.arange(m), cat]
    tm = cat >> 1
    tb = cat & 1

    r_mat = _readout_matrix(cfg.readout_bob)
    rm = (gen.random(m) >= np.where(tm == 0, r_mat[0, 0], r_mat[0, 1])).astype(int)
    rb = (gen.random(m) >= np.where(tb == 0, r_mat[0, 0], r_mat[0, 1])).astype(int)

    parity = _sign_parity(d["s1"], d["s2"])
    x = (rb == 0).astype(int)
    z = rm ^ parity
    final = _apply_corrections(sub, x, z, _SWAP_CORR)
    fid = _pure_overlaps(final, _PAIR_TARGET) / p_sel
    return {**d, "tm": tm, "tb": tb, "rm": rm, "rb": rb, "fidelity": fid}


def _double_link_block(cfg: ProtocolConfig, gen: np.random.Generator, m: int) -> dict[str, np.ndarray]:
    """One Monte Carlo block of the bare double-link delivery."""
    d = _sample_delivery(cfg, gen, m)
    rho = _register_batch(cfg, d["s1"], d["s2"], d["phi1"], d["phi2"], d["coherence"], d["residual"], 0.0)
    fid = np.empty(m)
    for s1v, s2v in _SIGN_COMBOS:
        sel = (d["s1"] == s1v) & (d["s2"] == s2v)
        if sel.any():
            fid[sel] = _pure_overlaps(rho[sel], _double_link_target(s1v, s2v))
    return {**d, "fidelity": fid}


def _delivery_events(cfg: ProtocolConfig, d: dict[str, np.ndarray], i: int = 0) -> list[ProtocolEvent]:
    """Event log of run ``i`` up to the delivered double link."""
    cycles = int(d["cycles"][i])
    n_ab = int(d["n_ab"][i])
    n_bc = int(d["n_bc"][i])
    elapsed = float(d["elapsed"][i])
    t_ab = elapsed - n_bc * cfg.link_bc.attempt_duration_s
    rot = nuclear_phase_feedforward(
        n_bc, cfg.nuclear, cfg.feedforward_resolution_s, cfg.link_bc.attempt_duration_s
    )
    events = [
        ProtocolEvent(0.0, "B", f"delivery sequence start ({cycles} cycle(s) sampled)"),
        ProtocolEvent(
            t_ab,
            "A-B",
            f"link heralded, sign {int(d['s1'][i]):+d}, after {n_ab} attempt(s) total; stored in memory",
        ),
        ProtocolEvent(
            elapsed,
            "B-C",
            f"link heralded, sign {int(d['s2'][i]):+d}, attempt {n_bc} of {cfg.bc_timeout_attempts}",
        ),
        ProtocolEvent(
            elapsed,
            "B",
            f"feed-forward rotation {rot.applied_rad:.4f} rad ({rot.n_steps} step(s), "
            f"residual {rot.residual_rad:+.2e} rad)",
        ),
    ]
    return events


def _correction_events(
    cfg: ProtocolConfig, t_ready: float, payload_bits: int, x: int, z: int
) -> list[ProtocolEvent]:
    """Readout announcement and Pauli-frame correction at node C."""
    delivered = serial_comm(
        [ClassicalMessage("B", "C", payload_bits, t_ready)], cfg.bit_time_s, cfg.decode_time_s
    )[0]
    return [
        ProtocolEvent(t_ready, "B", f"readout announced ({payload_bits} bit(s)) on serial line"),
        ProtocolEvent(delivered.t_delivered_s, "C", f"message decoded; correction X^{x} Z^{z} applied"),
    ]


# ---------------------------------------------------------------------------
# Public protocol runners
# ---------------------------------------------------------------------------


def run_double_link(
    cfg: ProtocolConfig,
    n_runs: int | None = None,
    seed: int = 0,
    jobs: int = 1,
) -> RunResult:
    """Deliver the memory-stored A-B pair plus a fresh B-C pair.

    With ``n_runs`` unset, returns the exact expectation values; otherwise
    Monte Carlo samples the delivery (herald signs, optical phases, attempt
    counts, memory decay) per run.

    Parameters
    ----------
    cfg : ProtocolConfig
        Protocol configuration.
    n_runs : int, optional
        Number of Monte Carlo runs; ``None`` selects the analytic path.
    seed : int
        Root seed for the per-block random streams.
    jobs : int
        Worker threads over seeded blocks; does not affect results.

    Returns
    -------
    RunResult
        ``fidelity`` is against the sign-resolved ideal product of the two
        pairs (with the memory channel applied to the stored half).
    """
    coh = expected_memory_coherence(cfg)
    details = _common_details(cfg, coh)
    if n_runs is None:
        return RunResult(
            kind="double-link",
            analytic=True,
            n_runs=0,
            seed=None,
            fidelity=_double_link_analytic(cfg, coh.zeta),
            fidelity_std_error=0.0,
            herald_probability=coh.block_success_probability,
            mean_period_s=expected_delivery_time_s(cfg),
            details=details,
        )
    data = _run_blocks(n_runs, seed, jobs, lambda gen, m: _double_link_block(cfg, gen, m))
    fid = data["fidelity"]
    events = _delivery_events(cfg, data)
    details.update(
        mean_bc_attempts_mc=float(np.mean(data["n_bc"])),
        mean_cycles_mc=float(np.mean(data["cycles"])),
    )
    return RunResult(
        kind="double-link",
        analytic=False,
        n_runs=n_runs,
        seed=seed,
        fidelity=float(np.mean(fid)),
        fidelity_std_error=_std_error(fid),
        herald_probability=coh.block_success_probability,
        mean_period_s=float(np.mean(data["elapsed"])),
        details=details,
        events=tuple(events),
    )


def run_ghz(
    cfg: ProtocolConfig,
    n_runs: int | None = None,
    seed: int = 0,
    jobs: int = 1,
    herald_outcome: int = 0,
) -> RunResult:
    """Distribute an A-M-C GHZ-class state, postselecting the herald readout.

    The communication spin is read out after the entangling gate; runs whose
    *reported* outcome equals ``herald_outcome`` are accepted and carry the
    feed-forward X correction (applied when the report is 0) and the
    herald-parity Z correction at node C.

    Parameters
    ----------
    cfg : ProtocolConfig
        Protocol configuration.
    n_runs : int, optional
        Monte Carlo run count; ``None`` selects the exact enumeration.
    seed : int
        Root seed for the per-block random streams.
    jobs : int
        Worker threads over seeded blocks; does not affect results.
    herald_outcome : int
        Reported readout value (0 or 1) accepted by the postselection.

    Returns
    -------
    RunResult
        ``fidelity`` against the three-qubit GHZ target on (A, M, C);
        ``herald_probability`` is the acceptance probability and
        ``mean_period_s`` the expected time per accepted state.
    """
    if herald_outcome not in (0, 1):
        raise ValueError(f"herald_outcome must be 0 or 1, got {herald_outcome}")
    coh = expected_memory_coherence(cfg)
    depol = depolarizing_strength_for_infidelity(cfg.gate_infidelity_ghz)
    details = _common_details(cfg, coh)
    if n_runs is None:
        p_herald, fid = _ghz_analytic(cfg, coh.zeta, depol, cfg.readout_bob, herald_outcome)
        return RunResult(
            kind="ghz",
            analytic=True,
            n_runs=0,
            seed=None,
            fidelity=fid,
            fidelity_std_error=0.0,
            herald_probability=p_herald,
            mean_period_s=expected_delivery_time_s(cfg) / p_herald,
            outcome_probabilities={str(herald_outcome): p_herald},
            details=details,
        )
    data = _run_blocks(n_runs, seed, jobs, lambda gen, m: _ghz_block(cfg, gen, m, herald_outcome))
    kept = data["kept"]
    fid = data["fidelity"][kept]
    n_kept = int(np.sum(kept))
    if n_kept == 0:
        raise ValueError("no Monte Carlo run passed the herald postselection; increase n_runs")
    events = _delivery_events(cfg, data)
    t_ready = float(data["elapsed"][0])
    events.append(
        ProtocolEvent(t_ready, "B", f"entangling gate + comm readout (reported {int(data['r'][0])})")
    )
    events += _correction_events(
        cfg, t_ready, 2, int(data["r"][0] == 0), int(_sign_parity(data["s1"], data["s2"])[0])
    )
    details.update(acceptance_runs=float(n_kept))
    return RunResult(
        kind="ghz",
        analytic=False,
        n_runs=n_runs,
        seed=seed,
        fidelity=float(np.mean(fid)),
        fidelity_std_error=_std_error(fid),
        herald_probability=n_kept / n_runs,
        mean_period_s=float(np.sum(data["elapsed"]) / n_kept),
        outcome_probabilities={
            "0": float(np.mean(data["r"] == 0)),
            "1": float(np.mean(data["r"] == 1)),
        },
        details=details,
        events=tuple(events),
    )


def run_swap(
    cfg: ProtocolConfig,
    n_runs: int | None = None,
    seed: int = 0,
    jobs: int = 1,
) -> RunResult:
    """Swap entanglement to an A-C pair via a Bell measurement at node B.

    Both of B's qubits are measured after the entangling gate and a basis
    rotation on the memory; the two reported bits travel to node C and
    select the Pauli frame (X when the comm report is 0, Z from the memory
    report and the herald-sign parity).  All four reported outcomes deliver
    a pair; ``outcome_fidelities`` breaks the quality down per outcome.

    Parameters
    ----------
    cfg : ProtocolConfig
        Protocol configuration.
    n_runs : int, optional
        Monte Carlo run count; ``None`` selects the exact enumeration.
    seed : int
        Root seed for the per-block random streams.
    jobs : int
        Worker threads over seeded blocks; does not affect results.

    Returns
    -------
    RunResult
        ``fidelity`` is the all-outcome average against the A-C pair
        target; ``outcome_probabilities`` holds the reported Bell-outcome
        shares and ``details`` the postselected-on-``00`` numbers.
    """
    coh = expected_memory_coherence(cfg)
    depol = depolarizing_strength_for_infidelity(cfg.gate_infidelity_swap)
    details = _common_details(cfg, coh)
    period = expected_delivery_time_s(cfg) / cfg.swap_acceptance_duty
    if n_runs is None:
        p_rep, f_rep, p_true = _swap_analytic(cfg, coh.zeta, depol, cfg.readout_bob)
        fid_any = float(np.sum(p_rep * f_rep))
        details.update(
            fidelity_reported_00=float(f_rep[0, 0]),
            period_reported_00_s=period / float(p_rep[0, 0]),
            true_share_00=float(p_true[0, 0]),
            true_share_01=float(p_true[0, 1]),
            true_share_10=float(p_true[1, 0]),
            true_share_11=float(p_true[1, 1]),
        )
        return RunResult(
            kind="swap",
            analytic=True,
            n_runs=0,
            seed=None,
            fidelity=fid_any,
            fidelity_std_error=0.0,
            herald_probability=1.0,
            mean_period_s=period,
            outcome_probabilities={f"{i}{j}": float(p_rep[i, j]) for i in (0, 1) for j in (0, 1)},
            outcome_fidelities={f"{i}{j}": float(f_rep[i, j]) for i in (0, 1) for j in (0, 1)},
            details=details,
        )
    data = _run_blocks(n_runs, seed, jobs, lambda gen, m: _swap_block(cfg, gen, m))
    fid = data["fidelity"]
    shares: dict[str, float] = {}
    per_outcome: dict[str, float] = {}
    for i in (0, 1):
        for j in (0, 1):
            sel = (data["rm"] == i) & (data["rb"] == j)
            shares[f"{i}{j}"] = float(np.mean(sel))
            per_outcome[f"{i}{j}"] = float(np.mean(fid[sel])) if sel.any() else float("nan")
    sel00 = (data["rm"] == 0) & (data["rb"] == 0)
    events = _delivery_events(cfg, data)
    t_ready = float(data["elapsed"][0])
    events.append(
        ProtocolEvent(
            t_ready,
            "B",
            f"Bell measurement (reported {int(data['rm'][0])}{int(data['rb'][0])})",
        )
    )
    events += _correction_events(
        cfg,
        t_ready,
        2,
        int(data["rb"][0] == 0),
        int(data["rm"][0] ^ _sign_parity(data["s1"], data["s2"])[0]),
    )
    details.update(
        fidelity_reported_00=float(np.mean(fid[sel00])) if sel00.any() else float("nan"),
        period_reported_00_s=(
            float(np.mean(data["elapsed"]) / (cfg.swap_acceptance_duty * np.mean(sel00)))
            if sel00.any()
            else float("nan")
        ),
    )
    return RunResult(
        kind="swap",
        analytic=False,
        n_runs=n_runs,
        seed=seed,
        fidelity=float(np.mean(fid)),
        fidelity_std_error=_std_error(fid),
        herald_probability=1.0,
        mean_period_s=float(np.mean(data["elapsed"]) / cfg.swap_acceptance_duty),
        outcome_probabilities=shares,
        outcome_fidelities=per_outcome,
        details=details,
        events=tuple(events),
    )


def _std_error(samples: np.ndarray) -> float:
    if samples.size < 2:
        return float("nan")
    return float(np.std(samples, ddof=1) / math.sqrt(samples.size))


def _common_details(cfg: ProtocolConfig, coh: MemoryCoherence) -> dict[str, float]:
    return {
        "raw_rate_ab_hz": success_probability(cfg.link_ab) / cfg.link_ab.attempt_duration_s,
        "raw_rate_bc_hz": success_probability(cfg.link_bc) / cfg.link_bc.attempt_duration_s,
        "block_success_probability": coh.block_success_probability,
        "mean_bc_attempts": coh.mean_attempts,
        "mean_memory_coherence": coh.mean_coherence,
        "zeta_magnitude": abs(coh.zeta),
        "zeta_phase_rad": math.atan2(coh.zeta.imag, coh.zeta.real),
        "expected_delivery_time_s": expected_delivery_time_s(cfg),
    }
