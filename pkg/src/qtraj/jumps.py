"""Quantum-jump trajectory engine.

A trajectory alternates detector clicks (jumps) with no-jump evolution. Jump
operators are stored with their rate prefactor but without the time step:
``matrix = sqrt(gamma) * sigma``, so click probabilities over a step are
``p_i = tr(J_i† J_i rho) * dt`` and the no-jump operator is
``M = 1 - (dt/2) * sum_i J_i† J_i``.

The canonical set uses the bare decay/pump operators; detecting one of those
clicks projects a qubit and kills entanglement. Mixing the two channels of a
qubit with a left-unitary transform is free (the ensemble dynamics is
unchanged), and the balanced-rate mix (1/sqrt(2))[[1, 1], [i, -i]] turns both
jumps into local Paulis: clicks then hop the state between maximally entangled
states, and the initial state is recoverable from the click record alone.

Detector inefficiency is a per-click Bernoulli(eta) "detected" flag: the jump
still happens physically, the observer just may not see it.

Sampling spends one uniform per step, partitioned over sub-segments
[eta*p_1, (1-eta)*p_1, eta*p_2, ...] in fixed operator order (qubit-major,
label-minor), so runs are reproducible bit-for-bit for a given seed. When the
no-jump operator is proportional to the identity (balanced rates) the engine
skips ahead between clicks over a pre-drawn uniform array; this is outcome-
and stream-identical to the reference per-step loop.
"""

from dataclasses import dataclass, field

import numpy as np

from .master import LindbladModel
from .qcore import (
    SIGMA_MINUS,
    SIGMA_PLUS,
    InvariantViolation,
    embed,
    validate_density_matrix,
)

MAX_STEP_PROB = 0.1  # at most one jump per step needs sum(p) well below 1

_CANONICAL_LABELS = ("minus", "plus")
_CANONICAL_OPS = {"minus": SIGMA_MINUS, "plus": SIGMA_PLUS}


@dataclass(frozen=True)
class JumpOperator:
    """One monitored channel: sqrt(rate)-weighted operator on a single qubit."""

    matrix: np.ndarray
    qubit: int
    label: str


@dataclass(frozen=True)
class UnravelingTransform:
    """Left-unitary mix of the jump operators of one qubit (U†U = 1)."""

    u_matrix: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u_matrix, dtype=complex)
        object.__setattr__(self, "u_matrix", u)
        gram = u.conj().T @ u
        dev = np.max(np.abs(gram - np.eye(u.shape[1])))
        if dev > 1e-12:
            raise ValueError(f"transform is not left-unitary: max|U†U - 1| = {dev:.3e}")


@dataclass(frozen=True)
class JumpEvent:
    time: float
    qubit: int
    label: str
    detected: bool


@dataclass
class TrajectoryRecord:
    events: list[JumpEvent]
    final_state: np.ndarray
    seed: int
    samples: list[np.ndarray] | None = field(default=None, repr=False)
    sample_times: np.ndarray | None = None


def canonical_jumps(model: LindbladModel, drop_zero: bool = True) -> list[JumpOperator]:
    """sqrt(gm)*sigma_minus and sqrt(gp)*sigma_plus per qubit, qubit-major order."""
    jumps = []
    for alpha in range(model.n_qubits):
        for label, rate in (
            ("minus", model.gamma_minus[alpha]),
            ("plus", model.gamma_plus[alpha]),
        ):
            if drop_zero and rate == 0.0:
                continue
            op = np.sqrt(rate) * embed(_CANONICAL_OPS[label], alpha, model.n_qubits)
            jumps.append(JumpOperator(op, alpha, label))
    return jumps


def transform_jumps(
    jumps: list[JumpOperator],
    transform: UnravelingTransform,
    labels: tuple[str, ...] | None = None,
) -> list[JumpOperator]:
    """New jumps J~_k = sum_i U_ki J_i over the jumps of one qubit.

    Unitarity guarantees sum J~†J~ = sum J†J, so the no-jump operator -- and
    the ensemble dynamics -- are unchanged.
    """
    if not jumps:
        raise ValueError("no jumps to transform")
    qubit = jumps[0].qubit
    if any(j.qubit != qubit for j in jumps):
        raise ValueError("transform_jumps mixes jumps of a single qubit only")
    u = transform.u_matrix
    if u.shape[1] != len(jumps):
        raise ValueError(f"transform has {u.shape[1]} columns for {len(jumps)} jumps")
    if labels is not None and len(labels) != u.shape[0]:
        raise ValueError("one label per transformed jump required")
    stack = np.stack([j.matrix for j in jumps])
    mixed = np.einsum("ki,iab->kab", u, stack)
    out = []
    for k in range(u.shape[0]):
        label = labels[k] if labels is not None else "custom"
        out.append(JumpOperator(mixed[k], qubit, label))
    return out


def protecting_transform() -> UnravelingTransform:
    """The balanced-rate mix sending (J_minus, J_plus) to Pauli x/y jumps."""
    return UnravelingTransform(np.array([[1.0, 1.0], [1.0j, -1.0j]]) / np.sqrt(2.0))


def protecting_jumps(model: LindbladModel) -> list[JumpOperator]:
    """Pauli x/y jumps, sqrt(gamma/2)-weighted, per qubit. Requires balanced rates."""
    if not model.balanced:
        raise ValueError(
            "protecting jumps require gamma_minus == gamma_plus on every qubit"
        )
    if min(model.gamma_minus) <= 0.0:
        raise ValueError("protecting jumps require strictly positive rates")
    u = protecting_transform()
    out = []
    for alpha in range(model.n_qubits):
        pair = [
            JumpOperator(
                np.sqrt(model.gamma_minus[alpha]) * embed(_CANONICAL_OPS[label], alpha, model.n_qubits),
                alpha,
                label,
            )
            for label in _CANONICAL_LABELS
        ]
        out.extend(transform_jumps(pair, u, labels=("x", "y")))
    return out


def _stacks(jumps: list[JumpOperator]):
    j = np.stack([op.matrix for op in jumps])
    e = np.einsum("kba,kbc->kac", j.conj(), j)  # J†J per jump
    return j, e


def no_jump_operator(jumps: list[JumpOperator], dt: float) -> np.ndarray:
    """M = 1 - (dt/2) sum_i J_i† J_i."""
    _, e = _stacks(jumps)
    dim = e.shape[1]
    return np.eye(dim, dtype=complex) - 0.5 * dt * e.sum(axis=0)


def jump_probabilities(
    jumps: list[JumpOperator], rho: np.ndarray, dt: float
) -> tuple[np.ndarray, float]:
    """Click probabilities p_i = tr(J_i† J_i rho) dt and p_nj = 1 - sum(p)."""
    _, e = _stacks(jumps)
    if e.shape[1] != rho.shape[0]:
        raise ValueError(f"jump dim {e.shape[1]} does not match state dim {rho.shape[0]}")
    p = np.einsum("kab,ba->k", e, rho).real * dt
    if np.any(p < -1e-12):
        raise InvariantViolation(f"negative jump probability: {p.min():.3e}")
    p = np.maximum(p, 0.0)
    total = p.sum()
    if total > MAX_STEP_PROB:
        raise ValueError(
            f"sum of jump probabilities {total:.3g} > {MAX_STEP_PROB}: reduce dt"
        )
    return p, 1.0 - total


class _JumpKernel:
    """Precomputed operator stacks plus the shared outcome-sampling rule."""

    def __init__(self, jumps: list[JumpOperator], model: LindbladModel, dt: float):
        self.jumps = jumps
        self.model = model
        self.dt = dt
        self.dim = model.dim
        eye = np.eye(self.dim, dtype=complex)
        if jumps:
            self.j_stack, self.e_stack = _stacks(jumps)
            if self.j_stack.shape[1] != self.dim:
                raise ValueError("jump operators do not match the model dimension")
            # tr(E rho) = sum_ab E[a,b] rho[b,a]: transpose once so the hot loop
            # can use rho.ravel() (a view) instead of copying rho.T
            self.e_flat = np.ascontiguousarray(
                self.e_stack.transpose(0, 2, 1).reshape(len(jumps), -1)
            )
            self.m_op = eye - 0.5 * dt * self.e_stack.sum(axis=0)
        else:  # all rates zero: nothing to monitor, evolution is trivial
            self.e_stack = np.zeros((0, self.dim, self.dim), dtype=complex)
            self.e_flat = np.zeros((0, self.dim * self.dim), dtype=complex)
            self.m_op = eye.copy()
        # balanced rates make M proportional to the identity: no-jump is a no-op
        self.m_scalar = np.max(np.abs(self.m_op - self.m_op[0, 0] * eye)) < 1e-15
        off = ~np.eye(self.dim, dtype=bool)
        self.m_diagonal = (
            not np.any(self.m_op[off])
            and not self.e_stack[:, off].any()
            and abs(self.m_op.diagonal().imag).max(initial=0.0) < 1e-15
        )

    def probabilities(self, rho: np.ndarray) -> np.ndarray:
        p = (self.e_flat @ rho.ravel()).real * self.dt
        if p.sum() > MAX_STEP_PROB:
            raise ValueError(
                f"sum of jump probabilities {p.sum():.3g} > {MAX_STEP_PROB}: reduce dt"
            )
        return p

    def cumulative(self, p: np.ndarray) -> np.ndarray:
        """Detected/undetected sub-segments in fixed operator order."""
        eta = self.model.eta
        sub = np.empty(2 * len(p))
        sub[0::2] = eta * np.maximum(p, 0.0)
        sub[1::2] = (1.0 - eta) * np.maximum(p, 0.0)
        return np.cumsum(sub)

    def apply_jump(self, rho: np.ndarray, k: int) -> np.ndarray:
        j = self.j_stack[k]
        new = j @ rho @ j.conj().T
        tr = new.trace().real
        if tr < 1e-14:
            raise InvariantViolation(f"normalization failure after jump {k}: trace {tr:.2e}")
        return new / tr

    def apply_no_jump(self, rho: np.ndarray) -> np.ndarray:
        if self.m_scalar:
            return rho
        new = self.m_op @ rho @ self.m_op
        tr = new.ravel()[:: self.dim + 1].sum().real
        if tr < 1e-14:
            raise InvariantViolation(f"normalization failure in no-jump step: trace {tr:.2e}")
        new *= 1.0 / tr
        return new

    def sample(self, p: np.ndarray, u: float) -> tuple[int, bool] | None:
        """Map one uniform draw to (jump index, detected) or None for no jump.

        The jump/no-jump boundary is sum(p); the sub-segment search only runs
        on the rare hits.
        """
        if p.size == 0 or u >= p.sum():
            return None
        cum = self.cumulative(p)
        seg = min(int(np.searchsorted(cum, u, side="right")), 2 * len(p) - 1)
        return seg // 2, seg % 2 == 0

    def event_for(self, k: int, detected: bool, time: float) -> JumpEvent:
        op = self.jumps[k]
        return JumpEvent(time, op.qubit, op.label, detected)


def step_jump(
    state: np.ndarray,
    jumps: list[JumpOperator],
    model: LindbladModel,
    dt: float,
    rng: np.random.Generator,
    time: float = 0.0,
) -> tuple[np.ndarray, JumpEvent | None]:
    """Advance one step: click with probability p_i (Bernoulli-eta detected), else no-jump."""
    kernel = _JumpKernel(jumps, model, dt)
    out = kernel.sample(kernel.probabilities(state), rng.random())
    if out is None:
        return kernel.apply_no_jump(state.copy()), None
    k, detected = out
    return kernel.apply_jump(state, k), kernel.event_for(k, detected, time + dt)


def trajectory_seed(master_seed: int, index: int) -> int:
    """Derive the counter-based per-trajectory stream key from (master_seed, index)."""
    return int(np.random.SeedSequence((master_seed, index)).generate_state(1, np.uint64)[0])


def _trajectory_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed))


def _sample_steps(sample_times, dt: float, n_steps: int) -> list[int]:
    if sample_times is None:
        return []
    steps = []
    for t in np.atleast_1d(np.asarray(sample_times, dtype=float)):
        k = int(round(t / dt))
        if not 0 <= k <= n_steps or abs(k * dt - t) > 1e-9 + 1e-9 * abs(t):
            raise ValueError(f"sample time {t} is not on the step grid (dt={dt})")
        steps.append(k)
    if steps != sorted(steps):
        raise ValueError("sample times must be increasing")
    return steps


def run_jump_trajectory(
    model: LindbladModel,
    jumps: list[JumpOperator],
    rho0: np.ndarray,
    dt: float,
    t_max: float,
    seed: int,
    sample_times=None,
    force_generic: bool = False,
) -> TrajectoryRecord:
    """Integrate one monitored trajectory; deterministic for a given seed.

    ``sample_times`` (optional, on the step grid) collects state snapshots into
    the returned record. The uniform draws for all steps are generated up
    front from the trajectory's own Philox stream, so results are independent
    of how trajectories are scheduled across workers.
    """
    if dt <= 0 or t_max < dt:
        raise ValueError(f"need 0 < dt <= t_max, got dt={dt}, t_max={t_max}")
    if model.max_rate * dt > 0.01 + 1e-15:
        raise ValueError(f"gamma_max*dt = {model.max_rate * dt:.3g} too large for jump stepping")
    kernel = _JumpKernel(jumps, model, dt)
    n_steps = int(round(t_max / dt))
    sample_steps = _sample_steps(sample_times, dt, n_steps)

    rng = _trajectory_rng(seed)
    us = rng.random(n_steps)

    state = rho0.astype(complex).copy()
    events: list[JumpEvent] = []
    samples: list[np.ndarray] = []
    si = 0  # next sample index

    if kernel.m_scalar and not force_generic:
        # state only changes at clicks; scan the pre-drawn uniforms between them
        pos = 0
        p = kernel.probabilities(state)
        total = p.sum() if p.size else 0.0
        while pos < n_steps:
            hits = np.flatnonzero(us[pos:] < total)
            nxt = pos + int(hits[0]) if hits.size else n_steps
            while si < len(sample_steps) and sample_steps[si] <= nxt:
                samples.append(state.copy())
                si += 1
            if nxt == n_steps:
                break
            k, detected = kernel.sample(p, us[nxt])
            state = kernel.apply_jump(state, k)
            events.append(kernel.event_for(k, detected, (nxt + 1) * dt))
            pos = nxt + 1
            p = kernel.probabilities(state)
            total = p.sum() if p.size else 0.0
        while si < len(sample_steps):
            samples.append(state.copy())
            si += 1
    elif kernel.m_diagonal and not force_generic:
        # diagonal M and E (canonical sets): between clicks populations scale
        # by elementwise powers of diag(M)^2, so the click search over a whole
        # no-jump run is one vectorized scan
        m2 = (kernel.m_op.diagonal().real) ** 2
        e_diag = kernel.e_stack.diagonal(axis1=1, axis2=2).real  # (k, dim)
        pos = 0
        while pos < n_steps:
            horizon = n_steps - pos
            d = state.diagonal().real
            # powers[o] = m2**o for o = 0..horizon
            powers = np.empty((horizon + 1, kernel.dim))
            powers[0] = 1.0
            np.multiply.accumulate(
                np.broadcast_to(m2, (horizon, kernel.dim)), axis=0, out=powers[1:]
            )
            ptot = (powers[:-1] @ (e_diag.sum(axis=0) * d)) * (
                kernel.dt / (powers[:-1] @ d)
            )
            if ptot.max(initial=0.0) > MAX_STEP_PROB:
                raise ValueError(
                    f"sum of jump probabilities {ptot.max():.3g} > {MAX_STEP_PROB}: reduce dt"
                )
            hits = np.flatnonzero(us[pos : pos + horizon] < ptot)
            off = int(hits[0]) if hits.size else horizon

            def _state_at(o):
                if o == 0:
                    return state
                scaled = state * np.outer(powers[o], powers[o]) ** 0.5
                return scaled / scaled.trace().real

            while si < len(sample_steps) and sample_steps[si] <= pos + off:
                samples.append(_state_at(sample_steps[si] - pos).copy())
                si += 1
            if not hits.size:
                state = _state_at(horizon).copy()
                pos = n_steps
                break
            at_hit = _state_at(off)
            k, detected = kernel.sample(kernel.probabilities(at_hit), us[pos + off])
            state = kernel.apply_jump(at_hit, k)
            events.append(kernel.event_for(k, detected, (pos + off + 1) * dt))
            pos = pos + off + 1
        while si < len(sample_steps):
            samples.append(state.copy())
            si += 1
    else:
        if sample_steps and sample_steps[0] == 0:
            samples.append(state.copy())
            si += 1
        for step in range(n_steps):
            p = kernel.probabilities(state)
            out = kernel.sample(p, us[step])
            if out is None:
                state = kernel.apply_no_jump(state)
            else:
                k, detected = out
                state = kernel.apply_jump(state, k)
                events.append(kernel.event_for(k, detected, (step + 1) * dt))
            if si < len(sample_steps) and sample_steps[si] == step + 1:
                samples.append(state.copy())
                si += 1

    validate_density_matrix(state, context="trajectory final state")
    return TrajectoryRecord(
        events=events,
        final_state=state,
        seed=seed,
        samples=samples if sample_times is not None else None,
        sample_times=np.asarray(sample_times, dtype=float) if sample_times is not None else None,
    )
