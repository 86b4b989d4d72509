"""Diffusive (homodyne-like) stochastic master equation engine.

The conditioned state evolves as

    drho = sum_i gamma_i D[sigma_i] rho dt
         + sum_i sqrt(gamma_i) [ (sigma_i - <sigma_i>) rho dxi_i* + h.c. ]

with complex Wiener increments correlated per qubit by a complex symmetric
matrix u (channel indices {-, +}):

    dxi_i dxi_j* = delta_ij dt,      dxi_i dxi_j = u_ij dt,     ||u||_2 <= 1.

The u = [[0, -1], [-1, 0]] choice makes the noise term a commutator with a
local stochastic Hamiltonian, so every trajectory evolves by local unitaries:
purity and entanglement are exactly preserved and the accumulated unitary can
be undone at the end. That exact path is ``step_protecting_unitary``; the
general engine handles any admissible u.

The general stepper adds the symmetric second-order noise correction to the
Euler-Maruyama update (a Milstein-type scheme; the omitted Levy-area terms
point along local-unitary directions for the protecting u and do not affect
entanglement). This is what makes per-trajectory concurrence deviations shrink
proportionally to dt; the plain first-order scheme only achieves sqrt(dt).

Measurement currents per channel:

    Y_i dt = sqrt(gamma) <sigma_i + sum_j u_ij sigma_j†> dt + dxi_i

For the protecting u the deterministic part cancels identically
(<sigma_- - sigma_-> = 0): the records are pure noise. The two real
photocurrent differences relate to the complex pair by the exact linear
bijection Y_- = I12 + i I34, Y_+ = -I12 + i I34.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .jumps import _sample_steps, _trajectory_rng
from .master import LindbladModel
from .qcore import (
    SIGMA_MINUS,
    SIGMA_PLUS,
    SIGMA_X,
    SIGMA_Y,
    InvariantViolation,
    embed,
    validate_density_matrix,
)
from .recovery import LocalUnitaryFrame

PROTECTING_U = np.array([[0.0, -1.0], [-1.0, 0.0]], dtype=complex)

# the stochastic scheme transiently produces eigenvalues of order -(gamma dt);
# this guard only catches genuine blow-ups
_EIG_GUARD = -0.05

_REUNITARIZE_EVERY = 1000


@dataclass(frozen=True)
class CurrentSample:
    """One qubit's measurement record over one step (units of sqrt(rate)).

    ``i12``/``i34`` are the real homodyne difference currents; the complex
    pair is recovered exactly via combine_currents whenever y_plus = -y_minus*
    (true for protecting-u records, where the currents are real).
    """

    y_minus: complex
    y_plus: complex
    i12: float
    i34: float


@dataclass
class DiffusiveRecord:
    final_state: np.ndarray
    seed: int
    frame: LocalUnitaryFrame | None = None
    samples: list[np.ndarray] | None = field(default=None, repr=False)
    sample_times: np.ndarray | None = None
    sample_frames: list[LocalUnitaryFrame] | None = field(default=None, repr=False)
    currents: list | None = field(default=None, repr=False)


def check_noise_correlation(u: np.ndarray) -> np.ndarray:
    """Validate symmetry and the two-norm bound; returns the array as complex."""
    u = np.asarray(u, dtype=complex)
    if u.shape != (2, 2):
        raise ValueError(f"noise correlation must be 2x2 (channels -, +), got {u.shape}")
    sym = np.max(np.abs(u - u.T))
    if sym > 1e-12:
        raise ValueError(f"noise correlation must be symmetric, max|u - u^T| = {sym:.3e}")
    norm = np.linalg.norm(u, 2)
    if norm > 1.0 + 1e-12:
        raise ValueError(f"noise correlation two-norm {norm:.12g} exceeds 1")
    return u


def _real_covariance(u: np.ndarray) -> np.ndarray:
    """Covariance (unit dt) of (Re dxi_-, Im dxi_-, Re dxi_+, Im dxi_+)."""
    c = np.zeros((4, 4))
    for i in range(2):
        a, b = 2 * i, 2 * i + 1
        c[a, a] = 0.5 * (1.0 + u[i, i].real)
        c[b, b] = 0.5 * (1.0 - u[i, i].real)
        c[a, b] = c[b, a] = 0.5 * u[i, i].imag
    c[0, 2] = c[2, 0] = 0.5 * u[0, 1].real
    c[1, 3] = c[3, 1] = -0.5 * u[0, 1].real
    c[0, 3] = c[3, 0] = 0.5 * u[0, 1].imag
    c[1, 2] = c[2, 1] = 0.5 * u[0, 1].imag
    return c


def noise_factor(u: np.ndarray) -> np.ndarray:
    """Factor L with L L^T equal to the real covariance implied by u.

    Stacking real/imaginary parts of (dxi_-, dxi_+) as L @ (independent
    standard increments) reproduces dxi_i dxi_j* = delta_ij dt and
    dxi_i dxi_j = u_ij dt. Failure of positive semidefiniteness is exactly the
    ||u||_2 > 1 diagnostic.
    """
    u = np.asarray(u, dtype=complex)
    if u.shape != (2, 2):
        raise ValueError(f"noise correlation must be 2x2, got {u.shape}")
    if np.max(np.abs(u - u.T)) > 1e-12:
        raise ValueError("noise correlation must be symmetric")
    cov = _real_covariance(u)
    w, v = np.linalg.eigh(cov)
    if w[0] < -1e-10:
        raise ValueError(
            f"noise covariance is not positive semidefinite (eigenvalue {w[0]:.3e}): "
            "the correlation two-norm exceeds 1"
        )
    return v @ np.diag(np.sqrt(np.maximum(w, 0.0)))


def _per_qubit_u(u, n_qubits: int) -> list[np.ndarray]:
    if u is None:
        u = PROTECTING_U
    if isinstance(u, (list, tuple)):
        if len(u) != n_qubits:
            raise ValueError(f"need one noise correlation per qubit, got {len(u)}")
        return [check_noise_correlation(x) for x in u]
    return [check_noise_correlation(u)] * n_qubits


class _SMEContext:
    """Precomputed channel operators and noise coefficients for one model + u."""

    def __init__(self, model: LindbladModel, u=None, c_blocks: list[np.ndarray] | None = None):
        if model.eta != 1.0:
            raise ValueError(
                "the diffusive engine models perfect detection (eta = 1); "
                "inefficiency curves come from the jump engine"
            )
        self.model = model
        n = model.n_qubits
        self.n_qubits = n
        self.dim = model.dim
        sig, gamma = [], []
        for alpha in range(n):
            sig.append(embed(SIGMA_MINUS, alpha, n))
            sig.append(embed(SIGMA_PLUS, alpha, n))
            gamma.extend((model.gamma_minus[alpha], model.gamma_plus[alpha]))
        self.sig = np.stack(sig)  # (2n, d, d)
        self.sigd = self.sig.conj().transpose(0, 2, 1)
        self.gamma = np.asarray(gamma)
        self.sqrtg = np.sqrt(self.gamma)
        cc = np.einsum("cab,cbd->cad", self.sigd, self.sig)
        self.cc_sum = np.einsum("c,cab->ab", self.gamma, cc)

        if c_blocks is None:
            self.u_list = _per_qubit_u(u, n)
            c_blocks = []
            for l in (noise_factor(x) for x in self.u_list):
                block = np.stack([l[0] + 1j * l[1], l[2] + 1j * l[3]])
                # rank-deficient correlations leave exactly-zero factor columns
                keep = np.flatnonzero(np.abs(block).sum(axis=0) > 0.0)
                c_blocks.append(block[:, keep])
        else:
            self.u_list = _per_qubit_u(u, n) if u is not None else None
            c_blocks = [np.asarray(b, dtype=complex) for b in c_blocks]
        widths = [b.shape[1] for b in c_blocks]
        self.n_noise = int(sum(widths))
        self.c = np.zeros((2 * n, self.n_noise), dtype=complex)
        pos = 0
        for alpha, block in enumerate(c_blocks):
            self.c[2 * alpha : 2 * alpha + 2, pos : pos + block.shape[1]] = block
            pos += block.shape[1]
        self.coef = self.sqrtg[:, None] * self.c  # sqrt(gamma_i) c_im
        # drift superoperator on row-major vec(rho): one matvec per step
        dim = self.dim
        lmat = np.zeros((dim * dim, dim * dim), dtype=complex)
        eye = np.eye(dim)
        for g, s in zip(self.gamma, self.sig):
            ss = s.conj().T @ s
            lmat += g * (
                np.kron(s, s.conj())
                - 0.5 * (np.kron(ss, eye) + np.kron(eye, ss.T))
            )
        self.drift_op = lmat


def sme_update(rho: np.ndarray, ctx: _SMEContext, dw: np.ndarray, dt: float) -> np.ndarray:
    """One conditioned step given the real noise increments dw ~ N(0, dt).

    Euler-Maruyama drift+noise plus the symmetric second-order noise term,
    then Hermitization and trace renormalization. The second-order sum
    (1/2) sum_ml (D_{b_l} b_m)(dw_m dw_l - delta_ml dt) is contracted without
    materializing the (channel, noise, d, d) tensor: with
    B_c = sum_l W_cl b_l it reduces to the Hermitian part of
    sum_c [sigma_c B_c - <sigma_c> B_c] - tr(sum_c sigma_c B_c) rho.
    """
    p = ctx.sig @ rho  # (2n, d, d): sigma_i rho
    e = p.diagonal(axis1=1, axis2=2).sum(axis=1)  # <sigma_i>
    a = p - e[:, None, None] * rho
    ah = a.conj().transpose(0, 2, 1)

    drift = (ctx.drift_op @ rho.ravel()).reshape(ctx.dim, ctx.dim)

    b = np.einsum("cm,cab->mab", ctx.coef.conj(), a, optimize=False)
    b += np.einsum("cm,cab->mab", ctx.coef, ah, optimize=False)

    w = np.outer(dw, dw)
    w.ravel()[:: ctx.n_noise + 1] -= dt
    wc = ctx.coef.conj() @ w  # (2n, M): sum_m conj(coef_im) w_ml
    bc = np.einsum("cl,lab->cab", wc, b, optimize=False)
    sig_bc = ctx.sig @ bc
    sum_sig_bc = sig_bc.sum(axis=0)
    x = sum_sig_bc - np.einsum("c,cab->ab", e, bc, optimize=False)
    x -= sum_sig_bc.trace() * rho

    new = rho + drift * dt + np.einsum("m,mab->ab", dw, b, optimize=False)
    new += 0.5 * (x + x.conj().T)
    new = 0.5 * (new + new.conj().T)
    return new / new.trace().real


def current_expectations(state: np.ndarray, model: LindbladModel, u, qubit: int) -> tuple[complex, complex]:
    """Deterministic parts sqrt(gamma) <sigma_i + sum_j u_ij sigma_j†> of both currents."""
    n = model.n_qubits
    uq = _per_qubit_u(u, n)[qubit]
    sm = embed(SIGMA_MINUS, qubit, n)
    sp = embed(SIGMA_PLUS, qubit, n)
    e = np.array([np.trace(sm @ state), np.trace(sp @ state)])
    rates = np.sqrt([model.gamma_minus[qubit], model.gamma_plus[qubit]])
    det = rates * (e + uq @ e.conj())
    return complex(det[0]), complex(det[1])


def homodyne_currents(y_minus: complex, y_plus: complex) -> tuple[complex, complex]:
    """(I12, I34) from the complex pair; exact linear bijection."""
    return (y_minus - y_plus) / 2.0, -0.5j * (y_minus + y_plus)


def combine_currents(i12: complex, i34: complex) -> tuple[complex, complex]:
    """Inverse of homodyne_currents: Y_- = I12 + i I34, Y_+ = -I12 + i I34."""
    return i12 + 1j * i34, -i12 + 1j * i34


def _currents(ctx: _SMEContext, rho: np.ndarray, dxi: np.ndarray, dt: float) -> list[CurrentSample]:
    e = np.einsum("cab,ba->c", ctx.sig, rho)
    out = []
    for alpha in range(ctx.n_qubits):
        em, ep = e[2 * alpha], e[2 * alpha + 1]
        uq = ctx.u_list[alpha]
        det = np.array([em, ep]) + uq @ np.conj([em, ep])
        det = ctx.sqrtg[2 * alpha : 2 * alpha + 2] * det
        ym = det[0] + dxi[2 * alpha] / dt
        yp = det[1] + dxi[2 * alpha + 1] / dt
        i12, i34 = homodyne_currents(ym, yp)
        out.append(CurrentSample(complex(ym), complex(yp), float(i12.real), float(i34.real)))
    return out


def step_diffusive(
    state: np.ndarray,
    model: LindbladModel,
    u,
    rng: np.random.Generator,
    dt: float,
) -> tuple[np.ndarray, list[CurrentSample]]:
    """Advance one diffusive step and emit the per-qubit measurement currents."""
    ctx = _SMEContext(model, u)
    dw = rng.standard_normal(ctx.n_noise) * math.sqrt(dt)
    new = sme_update(state, ctx, dw, dt)
    dxi = ctx.c @ dw
    return new, _currents(ctx, state, dxi, dt)


def _guard(state: np.ndarray, where: str) -> None:
    herm = np.max(np.abs(state - state.conj().T))
    if herm > 1e-10 or not np.isfinite(state).all():
        raise InvariantViolation(f"{where}: state left its tolerance envelope")
    if np.linalg.eigvalsh(state)[0] < _EIG_GUARD:
        raise InvariantViolation(f"{where}: eigenvalue below {_EIG_GUARD}")


def run_diffusive_trajectory(
    model: LindbladModel,
    u,
    rho0: np.ndarray,
    dt: float,
    t_max: float,
    seed: int,
    sample_times=None,
    collect_currents: bool = False,
) -> DiffusiveRecord:
    """Integrate one diffusive trajectory of the general-u engine."""
    if dt <= 0 or t_max < dt:
        raise ValueError(f"need 0 < dt <= t_max, got dt={dt}, t_max={t_max}")
    ctx = _SMEContext(model, u)
    n_steps = int(round(t_max / dt))
    sample_steps = _sample_steps(sample_times, dt, n_steps)
    rng = _trajectory_rng(seed)
    sqdt = math.sqrt(dt)

    state = rho0.astype(complex).copy()
    samples: list[np.ndarray] = []
    currents: list[list[CurrentSample]] = []
    si = 0
    if sample_steps and sample_steps[0] == 0:
        samples.append(state.copy())
        si += 1
    for step in range(n_steps):
        dw = rng.standard_normal(ctx.n_noise) * sqdt
        if collect_currents:
            dxi = ctx.c @ dw
            currents.append(_currents(ctx, state, dxi, dt))
        state = sme_update(state, ctx, dw, dt)
        if (step + 1) % 200 == 0:
            _guard(state, f"diffusive step {step + 1}")
        if si < len(sample_steps) and sample_steps[si] == step + 1:
            samples.append(state.copy())
            si += 1
    _guard(state, "diffusive final state")
    return DiffusiveRecord(
        final_state=state,
        seed=seed,
        samples=samples if sample_times is not None else None,
        sample_times=np.asarray(sample_times, dtype=float) if sample_times is not None else None,
        currents=currents if collect_currents else None,
    )


def protecting_unitary(gamma: float, dw1: float, dw2: float) -> np.ndarray:
    """exp(-i H) for the local stochastic Hamiltonian of the protecting choice.

    H = sqrt(gamma/2) (dw2 sigma_x - dw1 sigma_y); the sign pairing matches the
    dxi_- = (dW1 + i dW2)/sqrt(2), dxi_+ = (-dW1 + i dW2)/sqrt(2) decomposition
    in the |0>=ground convention.
    """
    ax = math.sqrt(gamma / 2.0) * dw2
    ay = -math.sqrt(gamma / 2.0) * dw1
    theta = math.hypot(ax, ay)
    if theta == 0.0:
        return np.eye(2, dtype=complex)
    nx, ny = ax / theta, ay / theta
    return math.cos(theta) * np.eye(2) - 1j * math.sin(theta) * (nx * SIGMA_X + ny * SIGMA_Y)


def _apply_local_unitaries(state: np.ndarray, us: list[np.ndarray]) -> np.ndarray:
    full = us[0]
    for u2 in us[1:]:  # broadcasting kron, cheaper than np.kron for 2x2 factors
        d = full.shape[0]
        full = (full[:, None, :, None] * u2[None, :, None, :]).reshape(2 * d, 2 * d)
    return full @ state @ full.conj().T


def step_protecting_unitary(
    state: np.ndarray,
    gamma,
    rng: np.random.Generator,
    dt: float,
    frame: LocalUnitaryFrame,
) -> tuple[np.ndarray, LocalUnitaryFrame]:
    """Exact-unitary step of the protecting diffusive unravelling.

    Each qubit is rotated by the closed-form 2x2 exponential of its stochastic
    Hamiltonian; purity and concurrence are exactly preserved. The frame
    accumulates the applied unitaries for end-of-run recovery.
    """
    n = frame.n_qubits
    gammas = (float(gamma),) * n if np.isscalar(gamma) else tuple(float(g) for g in gamma)
    if len(gammas) != n:
        raise ValueError(f"need one rate per qubit, got {len(gammas)} for {n}")
    dws = rng.standard_normal((n, 2)) * math.sqrt(dt)
    us = [protecting_unitary(gammas[a], dws[a, 0], dws[a, 1]) for a in range(n)]
    new = _apply_local_unitaries(state, us)
    for a in range(n):
        frame.left_multiply(a, us[a])
    return new, frame


def run_protecting_unitary_trajectory(
    model: LindbladModel,
    rho0: np.ndarray,
    dt: float,
    t_max: float,
    seed: int,
    sample_times=None,
) -> DiffusiveRecord:
    """Integrate one trajectory on the exact-unitary protecting path.

    Requires balanced rates (the stochastic-Hamiltonian mapping only exists
    there). Snapshots include frame copies so states at sample times can be
    recovered.
    """
    if not model.balanced:
        raise ValueError("the protecting-unitary path requires gamma_minus == gamma_plus")
    if model.eta != 1.0:
        raise ValueError("the protecting-unitary path models perfect detection (eta = 1)")
    if dt <= 0 or t_max < dt:
        raise ValueError(f"need 0 < dt <= t_max, got dt={dt}, t_max={t_max}")
    n = model.n_qubits
    n_steps = int(round(t_max / dt))
    sample_steps = _sample_steps(sample_times, dt, n_steps)
    rng = _trajectory_rng(seed)
    dws = rng.standard_normal((n_steps, n, 2)) * math.sqrt(dt)

    # all per-step rotations in one vectorized pass
    half = np.sqrt(np.asarray(model.gamma_minus) / 2.0)
    ax = half[None, :] * dws[:, :, 1]
    ay = -half[None, :] * dws[:, :, 0]
    theta = np.hypot(ax, ay)
    safe = np.where(theta > 0.0, theta, 1.0)
    nx, ny = ax / safe, ay / safe
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    locals_u = np.empty((n_steps, n, 2, 2), dtype=complex)
    locals_u[..., 0, 0] = cos_t
    locals_u[..., 1, 1] = cos_t
    locals_u[..., 0, 1] = -1j * sin_t * (nx - 1j * ny)
    locals_u[..., 1, 0] = -1j * sin_t * (nx + 1j * ny)
    full_u = locals_u[:, 0]
    for a in range(1, n):
        d = full_u.shape[1]
        full_u = (
            full_u[:, :, None, :, None] * locals_u[:, a][:, None, :, None, :]
        ).reshape(n_steps, 2 * d, 2 * d)

    state = rho0.astype(complex).copy()
    frame = LocalUnitaryFrame.identity(n)
    samples: list[np.ndarray] = []
    frames: list[LocalUnitaryFrame] = []
    si = 0
    if sample_steps and sample_steps[0] == 0:
        samples.append(state.copy())
        frames.append(frame.copy())
        si += 1
    for step in range(n_steps):
        u = full_u[step]
        state = u @ state @ u.conj().T
        for a in range(n):
            frame.left_multiply(a, locals_u[step, a])
        if (step + 1) % _REUNITARIZE_EVERY == 0:
            frame.reunitarize()
        if si < len(sample_steps) and sample_steps[si] == step + 1:
            samples.append(state.copy())
            frames.append(frame.copy())
            si += 1
    frame.reunitarize()
    validate_density_matrix(state, context="protecting-unitary final state")
    return DiffusiveRecord(
        final_state=state,
        seed=seed,
        frame=frame,
        samples=samples if sample_times is not None else None,
        sample_times=np.asarray(sample_times, dtype=float) if sample_times is not None else None,
        sample_frames=frames if sample_times is not None else None,
    )
