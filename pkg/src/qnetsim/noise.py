"""Decoherence and measurement-error models.

Contains the memory-dephasing channel driven by network activity, the lumped
depolarizing channel for local gate/initialization/readout imperfections,
single-shot readout (SSRO) error maps, and the stretched-exponential decay
fit used to extract memory parameters from data.

Memory model
------------
A qubit stored in the nuclear-spin memory while the network keeps generating
entanglement loses coherence as a stretched exponential in the number of
attempts ``N``:

    c(N) = exp(-(N / N_1e) ** n)

The channel scales the X and Y Bloch components by ``c(N)`` and leaves Z
exactly invariant (memory eigenstate populations do not decay on these
timescales).  The fitted amplitude ``A`` of decay data reflects state
preparation and measurement and is deliberately *not* part of the channel;
it belongs to the depolarizing/readout error budget, which avoids double
counting.  The "network idle" variant maps elapsed time onto equivalent
attempts and uses its own fitted ``(N_1e, n)`` pair.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .qstate import PAULI, KrausChannel

__all__ = [
    "MemoryDecayParams",
    "ReadoutModel",
    "NuclearSpinParams",
    "MemoryDecayFit",
    "coherence_factor",
    "memory_dephasing_channel",
    "depolarizing_channel",
    "depolarizing_strength_for_infidelity",
    "apply_readout_error",
    "fit_memory_decay",
]


@dataclass(frozen=True)
class MemoryDecayParams:
    """Stretched-exponential memory decay parameters.

    Attributes
    ----------
    amplitude_a : float
        Fitted Bloch-vector length at ``N = 0`` in (0, 1]; limited by state
        preparation and measurement, not applied by the dephasing channel.
    n_1e : float
        Attempt count at which the coherence factor reaches ``1/e``.
    exponent_n : float
        Stretching exponent.
    t2_star_s : float, optional
        Intrinsic free-evolution dephasing time in seconds, kept for
        reference alongside the attempt-driven parameters.
    """

    amplitude_a: float
    n_1e: float
    exponent_n: float
    t2_star_s: float | None = None

    def __post_init__(self) -> None:
        if not (0.0 < self.amplitude_a <= 1.0):
            raise ValueError(f"amplitude_a must be in (0, 1], got {self.amplitude_a}")
        if self.n_1e <= 0.0:
            raise ValueError(f"n_1e must be > 0, got {self.n_1e}")
        if self.exponent_n <= 0.0:
            raise ValueError(f"exponent_n must be > 0, got {self.exponent_n}")
        if self.t2_star_s is not None and self.t2_star_s <= 0.0:
            raise ValueError(f"t2_star_s must be > 0, got {self.t2_star_s}")


@dataclass(frozen=True)
class ReadoutModel:
    """Single-shot readout fidelities of one qubit.

    ``f0`` (``f1``) is the probability of reporting 0 (1) when the qubit is
    in ``|0>`` (``|1>``).  ``f0 + f1 > 1`` keeps the readout matrix
    invertible.  The sigmas quantify calibration uncertainty of the
    fidelities themselves.
    """

    f0: float
    f1: float
    sigma_f0: float = 0.0
    sigma_f1: float = 0.0

    def __post_init__(self) -> None:
        for name in ("f0", "f1"):
            v = getattr(self, name)
            if not (0.5 < v <= 1.0):
                raise ValueError(f"{name} must be in (0.5, 1], got {v}")
        if self.f0 + self.f1 <= 1.0:
            raise ValueError(f"f0 + f1 must exceed 1 for invertibility, got {self.f0 + self.f1}")
        if self.sigma_f0 < 0.0 or self.sigma_f1 < 0.0:
            raise ValueError("readout fidelity sigmas must be >= 0")

    @property
    def matrix(self) -> np.ndarray:
        """Column-stochastic readout matrix ``R[reported, true]``."""
        return np.array(
            [[self.f0, 1.0 - self.f1], [1.0 - self.f0, self.f1]],
            dtype=float,
        )

    def sample_reported(self, true_outcome: int, rng: np.random.Generator) -> int:
        """Sample the reported bit for a given true outcome."""
        p_correct = self.f0 if true_outcome == 0 else self.f1
        return true_outcome if rng.random() < p_correct else 1 - true_outcome


@dataclass(frozen=True)
class NuclearSpinParams:
    """Nuclear-spin precession parameters used by the phase feed-forward.

    Frequencies are given as ``omega / 2 pi`` in Hz.  The hyperfine
    splitting must be consistent with the difference of the two precession
    frequencies within 5%.
    """

    omega0_hz: float
    omega1_hz: float
    a_par_hz: float
    tau_larmor_s: float

    def __post_init__(self) -> None:
        if self.tau_larmor_s <= 0.0:
            raise ValueError(f"tau_larmor_s must be > 0, got {self.tau_larmor_s}")
        if self.a_par_hz <= 0.0:
            raise ValueError(f"a_par_hz must be > 0, got {self.a_par_hz}")
        diff = self.omega1_hz - self.omega0_hz
        if abs(diff - self.a_par_hz) > 0.05 * self.a_par_hz:
            raise ValueError(
                "hyperfine coupling inconsistent with precession difference: "
                f"omega1 - omega0 = {diff}, a_par = {self.a_par_hz}"
            )


def coherence_factor(n_attempts: float, params: MemoryDecayParams) -> float:
    """Coherence scaling ``c(N) = exp(-(N/N_1e)**n)``; ``c(0) = 1``."""
    if n_attempts < 0:
        raise ValueError(f"n_attempts must be >= 0, got {n_attempts}")
    if n_attempts == 0:
        return 1.0
    return float(math.exp(-((n_attempts / params.n_1e) ** params.exponent_n)))


def memory_dephasing_channel(n_attempts: float, params: MemoryDecayParams) -> KrausChannel:
    """Dephasing channel after ``n_attempts`` of network activity.

    Scales the X and Y Bloch components by ``c(N)`` and leaves Z exactly
    invariant.  ``N = 0`` yields the identity channel.
    """
    c = coherence_factor(n_attempts, params)
    k0 = math.sqrt((1.0 + c) / 2.0) * PAULI["I"]
    k1 = math.sqrt((1.0 - c) / 2.0) * PAULI["Z"]
    return KrausChannel((k0, k1), 1)


def depolarizing_channel(p: float, k_qubits: int = 1) -> KrausChannel:
    """Standard ``k``-qubit depolarizing channel.

    Maps ``rho -> (1 - p) rho + p I / 2**k``; at ``p = 0`` the identity, at
    ``p = 1`` everything becomes maximally mixed.
    """
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"p must be in [0, 1], got {p}")
    if not (1 <= k_qubits <= 4):
        raise ValueError(f"k_qubits must be in [1, 4], got {k_qubits}")
    n_paulis = 4**k_qubits
    ops = []
    for i, symbols in enumerate(itertools.product("IXYZ", repeat=k_qubits)):
        op = np.array([[1.0 + 0.0j]])
        for s in symbols:  # symbols[j] acts on gate qubit j -> last kron factor
            op = np.kron(PAULI[s], op)
        if i == 0:
            weight = math.sqrt(1.0 - p * (n_paulis - 1) / n_paulis)
        else:
            weight = math.sqrt(p / n_paulis)
        ops.append(weight * op)
    return KrausChannel(tuple(ops), k_qubits)


def depolarizing_strength_for_infidelity(target_infidelity: float) -> float:
    """Depolarizing ``p`` whose standalone fidelity cost equals the target.

    A single-qubit depolarizing lump applied to one qubit of a maximally
    entangled pair (or of a GHZ-class state) lowers the state fidelity by
    exactly ``3p/4``, so ``p = 4/3 * target``.
    """
    p = 4.0 * target_infidelity / 3.0
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"target infidelity {target_infidelity} maps outside [0, 1]")
    return p


def apply_readout_error(true_probs: np.ndarray, models: list[ReadoutModel] | tuple[ReadoutModel, ...]) -> np.ndarray:
    """Forward readout-error map ``M = (kron R_i) P``.

    Parameters
    ----------
    true_probs : numpy.ndarray
        True outcome probabilities over ``2**k`` bitstrings; bit ``k`` of the
        index is qubit ``k`` (little-endian, matching the state engine).
    models : sequence of ReadoutModel
        One model per qubit, qubit 0 first.

    Returns
    -------
    numpy.ndarray
        Measured-outcome probabilities; sums to 1 within 1e-12.
    """
    p = np.asarray(true_probs, dtype=float)
    k = len(models)
    if p.shape != (2**k,):
        raise ValueError(f"probability vector shape {p.shape} does not match {k} qubits")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"probabilities must sum to 1, got {p.sum()}")
    r_total = np.array([[1.0]])
    for model in models:  # qubit 0 first -> it must be the last kron factor
        r_total = np.kron(model.matrix, r_total)
    return r_total @ p


@dataclass(frozen=True)
class MemoryDecayFit:
    """Result of a stretched-exponential decay fit.

    Parameter order in ``covariance`` is ``(amplitude_a, n_1e, exponent_n)``.
    """

    amplitude_a: float
    n_1e: float
    exponent_n: float
    sigma_amplitude_a: float
    sigma_n_1e: float
    sigma_exponent_n: float
    covariance: np.ndarray
    n_points: int
    cost: float

    def as_params(self, t2_star_s: float | None = None) -> MemoryDecayParams:
        """Package the fitted values as :class:`MemoryDecayParams`."""
        return MemoryDecayParams(
            amplitude_a=self.amplitude_a,
            n_1e=self.n_1e,
            exponent_n=self.exponent_n,
            t2_star_s=t2_star_s,
        )


def _decay_model(n: np.ndarray, a: float, n_1e: float, expo: float) -> np.ndarray:
    return a * np.exp(-((n / n_1e) ** expo))


def _decay_jacobian(n: np.ndarray, a: float, n_1e: float, expo: float) -> np.ndarray:
    u = n / n_1e
    un = u**expo
    f = np.exp(-un)
    d_a = f
    d_n1e = a * f * un * expo / n_1e
    with np.errstate(divide="ignore", invalid="ignore"):
        log_u = np.where(u > 0, np.log(np.where(u > 0, u, 1.0)), 0.0)
    d_expo = -a * f * un * log_u
    return np.column_stack([d_a, d_n1e, d_expo])


def fit_memory_decay(
    data: list[tuple[float, float, float]] | np.ndarray,
) -> MemoryDecayFit:
    """Weighted least-squares fit of ``A * exp(-(N/N_1e)**n)`` to decay data.

    Parameters
    ----------
    data : sequence of (attempts, bloch_length, sigma)
        At least 4 points with positive uncertainties and at least 3
        distinct attempt values.

    Returns
    -------
    MemoryDecayFit
        Parameter estimates with 1-sigma uncertainties from the Jacobian at
        the optimum.

    Raises
    ------
    ValueError
        On under-determined or degenerate input.
    RuntimeError
        If the optimizer does not converge within its iteration budget.
    """
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError("data must be rows of (attempts, bloch_length, sigma)")
    if arr.shape[0] < 4:
        raise ValueError(f"need at least 4 points for a 3-parameter fit, got {arr.shape[0]}")
    n, y, sig = arr[:, 0], arr[:, 1], arr[:, 2]
    if np.any(n < 0):
        raise ValueError("attempt counts must be >= 0")
    if np.any(sig <= 0):
        raise ValueError("uncertainties must be > 0")
    if np.unique(n).size < 3:
        raise ValueError("degenerate data: need at least 3 distinct attempt values")

    def residuals(theta: np.ndarray) -> np.ndarray:
        return (_decay_model(n, *theta) - y) / sig

    def jac(theta: np.ndarray) -> np.ndarray:
        return _decay_jacobian(n, *theta) / sig[:, None]

    a0 = float(np.clip(np.max(y), 0.05, 1.2))
    # First attempt count where the curve falls below a0/e, as an N_1e guess.
    below = n[y < a0 / math.e]
    n1e0 = float(below.min()) if below.size else float(np.median(n[n > 0])) if np.any(n > 0) else 1.0
    n1e0 = max(n1e0, 1e-6)
    theta0 = np.array([a0, n1e0, 1.0])

    result = scipy.optimize.least_squares(
        residuals,
        theta0,
        jac=jac,
        bounds=([1e-9, 1e-9, 0.5], [1.2, np.inf, 3.0]),
        method="trf",
        max_nfev=2000,
    )
    if not result.success:
        raise RuntimeError(f"decay fit did not converge: {result.message}")

    j = result.jac
    try:
        cov = np.linalg.inv(j.T @ j)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("decay fit Jacobian is singular at the optimum") from exc
    sigmas = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return MemoryDecayFit(
        amplitude_a=float(result.x[0]),
        n_1e=float(result.x[1]),
        exponent_n=float(result.x[2]),
        sigma_amplitude_a=float(sigmas[0]),
        sigma_n_1e=float(sigmas[1]),
        sigma_exponent_n=float(sigmas[2]),
        covariance=cov,
        n_points=int(arr.shape[0]),
        cost=float(result.cost),
    )
