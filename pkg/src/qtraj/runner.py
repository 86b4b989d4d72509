"""Ensemble orchestration, reproducible seeding, statistics and CSV output.

Trajectories are partitioned into fixed-size index chunks (256, independent of
the worker count); each chunk is reduced sequentially in index order and chunk
partials are merged in chunk order, so ensemble output is bitwise identical
for a given configuration at any parallelism degree. Per-trajectory random
streams are counter-based Philox keyed by (master_seed, trajectory_index), so
results do not depend on scheduling either.

Every ensemble reports two distinct concurrence series: the mean of
per-trajectory concurrences (the per-trajectory protection claim) and the
concurrence of the recovered-then-averaged state (the detection-inefficiency
closed form is about the latter). Conflating them is the classic mistake; the
CSV writer picks one via its ``view`` argument.
"""

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from .diffusive import run_diffusive_trajectory, run_protecting_unitary_trajectory
from .entangle import concurrence, trace_distance
from .jumps import (
    canonical_jumps,
    protecting_jumps,
    run_jump_trajectory,
    trajectory_seed,
)
from .master import (
    LindbladModel,
    analytic_bell_state,
    integrate_master,
    oracle_kind,
)
from .qcore import bell_state, computational_ket, density
from .recovery import frame_from_events, recover, recover_unitary

WORKERS_ENV = "QTRAJ_WORKERS"
CHUNK = 256  # fixed reduction granularity; must not depend on the worker count

UNRAVELINGS = (
    "none",
    "jump_canonical",
    "jump_protecting",
    "diffusive",
    "diffusive_protecting_unitary",
)

CSV_HEADER = "time,mean_concurrence,stderr,mean_trace_dist_oracle,n"


class ConfigError(ValueError):
    """Invalid experiment configuration; message enumerates offending fields."""


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env is not None:
        try:
            val = int(env)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV}: not an integer: {env!r}") from None
        if val < 1:
            raise ConfigError(f"{WORKERS_ENV}: must be >= 1, got {val}")
        return val
    return os.cpu_count() or 1


@dataclass
class ExperimentConfig:
    model: LindbladModel
    unraveling: str
    dt: float
    t_max: float
    n_trajectories: int = 1
    master_seed: int = 0
    initial_state: str | np.ndarray = "bell"
    sample_times: np.ndarray | None = None
    u: np.ndarray | None = None
    output: str | None = None
    workers: int | None = None

    def validate(self) -> None:
        errors = []
        if self.unraveling not in UNRAVELINGS:
            errors.append(f"unraveling: unknown {self.unraveling!r}, expected one of {UNRAVELINGS}")
        if not self.dt > 0:
            errors.append(f"dt: must be > 0, got {self.dt}")
        elif self.t_max < self.dt:
            errors.append(f"t_max: must be >= dt, got {self.t_max}")
        if self.n_trajectories < 1:
            errors.append(f"n_trajectories: must be >= 1, got {self.n_trajectories}")
        if self.workers is not None and self.workers < 1:
            errors.append(f"workers: must be >= 1, got {self.workers}")
        if self.dt > 0 and self.model.max_rate * self.dt > 0.01 + 1e-15:
            errors.append(
                f"dt: gamma_max*dt = {self.model.max_rate * self.dt:.3g} exceeds 0.01"
            )
        try:
            resolve_initial_state(self.initial_state, self.model.n_qubits)
        except ValueError as exc:
            errors.append(f"initial_state: {exc}")
        if self.sample_times is not None and self.dt > 0:
            ts = np.atleast_1d(np.asarray(self.sample_times, dtype=float))
            n_steps = int(round(self.t_max / self.dt))
            for t in ts:
                k = round(t / self.dt)
                if not 0 <= k <= n_steps or abs(k * self.dt - t) > 1e-9 + 1e-9 * abs(t):
                    errors.append(f"sample_times: {t} is not on the dt grid")
                    break
        if errors:
            raise ConfigError("; ".join(errors))


def resolve_initial_state(spec, n_qubits: int) -> tuple[np.ndarray, bool]:
    """Named or explicit initial state; returns (rho0, is_bell_pair)."""
    if isinstance(spec, str):
        if spec == "bell":
            if n_qubits != 2:
                raise ValueError("the bell initial state needs exactly 2 qubits")
            return density(bell_state()), True
        if spec == "ground":
            return density(computational_ket("0" * n_qubits)), False
        if spec == "excited":
            return density(computational_ket("1" * n_qubits)), False
        raise ValueError(f"unknown named state {spec!r} (use bell/ground/excited)")
    arr = np.asarray(spec, dtype=complex)
    dim = 2**n_qubits
    if arr.ndim == 1 and arr.shape == (dim,):
        return density(arr / np.linalg.norm(arr)), False
    if arr.shape == (dim, dim):
        return arr, False
    raise ValueError(f"explicit state must be a {dim}-ket or {dim}x{dim} matrix")


@dataclass
class EnsembleStatistics:
    """Per-sample-time ensemble summaries.

    ``mean_concurrence``/``stderr`` are over per-trajectory concurrences;
    ``recovered_concurrence`` is the concurrence of the recovered-then-averaged
    state with a chunk-blocked stderr estimate. Trace distances compare the raw
    mean against the full-rate master solution and the recovered mean against
    the master run at rates (1-eta)*gamma.
    """

    times: np.ndarray
    mean_concurrence: np.ndarray
    stderr: np.ndarray
    recovered_concurrence: np.ndarray
    recovered_stderr: np.ndarray
    trace_dist_master: np.ndarray
    recovered_trace_dist: np.ndarray
    min_concurrence: np.ndarray
    n: np.ndarray

    def columns(self, view: str = "trajectory"):
        if view == "trajectory":
            return self.mean_concurrence, self.stderr, self.trace_dist_master
        if view == "recovered":
            return self.recovered_concurrence, self.recovered_stderr, self.recovered_trace_dist
        raise ValueError(f"unknown view {view!r} (use trajectory/recovered)")


def _default_sample_times(dt: float, t_max: float) -> np.ndarray:
    n_steps = int(round(t_max / dt))
    idx = np.unique(np.round(np.linspace(0, n_steps, min(21, n_steps + 1))).astype(int))
    return idx * dt


@dataclass
class _ChunkPartial:
    conc_sum: np.ndarray
    conc_sq: np.ndarray
    conc_min: np.ndarray
    raw_sum: np.ndarray
    rec_sum: np.ndarray
    count: int


def _run_chunk(config: ExperimentConfig, lo: int, hi: int) -> _ChunkPartial:
    model = config.model
    n = model.n_qubits
    rho0, _ = resolve_initial_state(config.initial_state, n)
    times = np.atleast_1d(np.asarray(config.sample_times, dtype=float))
    nt = len(times)
    dim = model.dim
    two_qubit = n == 2

    conc_sum = np.zeros(nt)
    conc_sq = np.zeros(nt)
    conc_min = np.full(nt, np.inf)
    raw_sum = np.zeros((nt, dim, dim), dtype=complex)
    rec_sum = np.zeros((nt, dim, dim), dtype=complex)

    kind = config.unraveling
    jumps = None
    if kind == "jump_canonical":
        jumps = canonical_jumps(model)
    elif kind == "jump_protecting":
        jumps = protecting_jumps(model)

    for idx in range(lo, hi):
        seed = trajectory_seed(config.master_seed, idx)
        if kind in ("jump_canonical", "jump_protecting"):
            record = run_jump_trajectory(
                model, jumps, rho0, config.dt, config.t_max, seed, sample_times=times
            )
            states = record.samples
            if kind == "jump_protecting":
                recovered = [
                    recover(
                        state,
                        frame_from_events(record.events, n, up_to_time=t),
                    )
                    for t, state in zip(times, states)
                ]
            else:
                recovered = states
        elif kind == "diffusive":
            record = run_diffusive_trajectory(
                model, config.u, rho0, config.dt, config.t_max, seed, sample_times=times
            )
            states = record.samples
            recovered = states
        elif kind == "diffusive_protecting_unitary":
            record = run_protecting_unitary_trajectory(
                model, rho0, config.dt, config.t_max, seed, sample_times=times
            )
            states = record.samples
            recovered = [
                recover_unitary(state, fr)
                for state, fr in zip(states, record.sample_frames)
            ]
        else:  # pragma: no cover - guarded by validate()
            raise ConfigError(f"unraveling: unknown {kind!r}")

        for i, state in enumerate(states):
            raw_sum[i] += state
            rec_sum[i] += recovered[i]
            if two_qubit:
                c = concurrence(state)
                conc_sum[i] += c
                conc_sq[i] += c * c
                if c < conc_min[i]:
                    conc_min[i] = c

    return _ChunkPartial(conc_sum, conc_sq, conc_min, raw_sum, rec_sum, hi - lo)


def _master_statistics(config: ExperimentConfig) -> EnsembleStatistics:
    model = config.model
    rho0, is_bell = resolve_initial_state(config.initial_state, model.n_qubits)
    times = np.atleast_1d(np.asarray(config.sample_times, dtype=float))
    series = integrate_master(model, rho0, config.dt, config.t_max)
    states = [series.at(t) for t in times]
    two_qubit = model.n_qubits == 2
    conc = np.array([concurrence(s) if two_qubit else np.nan for s in states])
    kind = oracle_kind(model) if is_bell else None
    if kind is not None:
        dist = np.array(
            [
                trace_distance(s, analytic_bell_state(kind, model.gamma_minus[0], t))
                for t, s in zip(times, states)
            ]
        )
    else:
        dist = np.zeros(len(times))
    zero = np.zeros(len(times))
    return EnsembleStatistics(
        times=times,
        mean_concurrence=conc,
        stderr=zero.copy(),
        recovered_concurrence=conc.copy(),
        recovered_stderr=zero.copy(),
        trace_dist_master=dist,
        recovered_trace_dist=dist.copy(),
        min_concurrence=conc.copy(),
        n=np.ones(len(times), dtype=int),
    )


def run_ensemble(config: ExperimentConfig) -> EnsembleStatistics:
    """Run the configured ensemble and reduce it deterministically."""
    config.validate()
    if config.sample_times is None:
        config = replace(config, sample_times=_default_sample_times(config.dt, config.t_max))

    if config.unraveling == "none":
        return _master_statistics(config)

    model = config.model
    times = np.atleast_1d(np.asarray(config.sample_times, dtype=float))
    n_traj = config.n_trajectories
    bounds = [(lo, min(lo + CHUNK, n_traj)) for lo in range(0, n_traj, CHUNK)]
    workers = config.workers if config.workers is not None else default_workers()

    if workers == 1 or len(bounds) == 1:
        partials = [_run_chunk(config, lo, hi) for lo, hi in bounds]
    else:
        ctx = get_context("fork")
        with ProcessPoolExecutor(max_workers=min(workers, len(bounds)), mp_context=ctx) as pool:
            futures = [pool.submit(_run_chunk, config, lo, hi) for lo, hi in bounds]
            partials = [f.result() for f in futures]

    nt = len(times)
    conc_sum = np.zeros(nt)
    conc_sq = np.zeros(nt)
    conc_min = np.full(nt, np.inf)
    raw_sum = np.zeros((nt, model.dim, model.dim), dtype=complex)
    rec_sum = np.zeros_like(raw_sum)
    for part in partials:  # chunk order fixed by construction
        conc_sum += part.conc_sum
        conc_sq += part.conc_sq
        conc_min = np.minimum(conc_min, part.conc_min)
        raw_sum += part.raw_sum
        rec_sum += part.rec_sum

    two_qubit = model.n_qubits == 2
    mean_c = conc_sum / n_traj if two_qubit else np.full(nt, np.nan)
    if two_qubit and n_traj > 1:
        var = np.maximum(conc_sq - n_traj * mean_c**2, 0.0) / (n_traj - 1)
        stderr = np.sqrt(var / n_traj)
    else:
        stderr = np.zeros(nt)
    raw_mean = raw_sum / n_traj
    rec_mean = rec_sum / n_traj
    rec_conc = np.array([concurrence(s) if two_qubit else np.nan for s in rec_mean])

    if two_qubit and len(partials) > 1:
        block = np.array(
            [[concurrence(p.rec_sum[i] / p.count) for p in partials] for i in range(nt)]
        )
        rec_stderr = block.std(axis=1, ddof=1) / np.sqrt(len(partials))
    else:
        rec_stderr = np.zeros(nt)

    oracle = integrate_master(
        model, resolve_initial_state(config.initial_state, model.n_qubits)[0],
        config.dt, config.t_max,
    )
    eta_oracle = integrate_master(
        model.scaled(1.0 - model.eta),
        resolve_initial_state(config.initial_state, model.n_qubits)[0],
        config.dt, config.t_max,
    )
    dist = np.array([trace_distance(raw_mean[i], oracle.at(t)) for i, t in enumerate(times)])
    rec_dist = np.array(
        [trace_distance(rec_mean[i], eta_oracle.at(t)) for i, t in enumerate(times)]
    )
    if not two_qubit:
        conc_min = np.full(nt, np.nan)

    return EnsembleStatistics(
        times=times,
        mean_concurrence=mean_c,
        stderr=stderr,
        recovered_concurrence=rec_conc,
        recovered_stderr=rec_stderr,
        trace_dist_master=dist,
        recovered_trace_dist=rec_dist,
        min_concurrence=conc_min,
        n=np.full(nt, n_traj, dtype=int),
    )


def csv_text(stats: EnsembleStatistics, view: str = "trajectory") -> str:
    """The pinned 5-column schema; cells carry 12 fixed decimals."""
    conc, err, dist = stats.columns(view)
    lines = [CSV_HEADER]
    for i, t in enumerate(stats.times):
        lines.append(
            f"{t:.12f},{conc[i]:.12f},{err[i]:.12f},{dist[i]:.12f},{int(stats.n[i])}"
        )
    return "\n".join(lines) + "\n"


def emit_csv(stats: EnsembleStatistics, path, view: str = "trajectory") -> Path:
    """Write the CSV schema (newline-terminated rows) to ``path``."""
    path = Path(path)
    try:
        with open(path, "w", newline="\n") as fh:
            fh.write(csv_text(stats, view))
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc}") from exc
    return path


def parse_csv(path) -> dict[str, np.ndarray]:
    """Read back an emitted CSV into arrays keyed by column name."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read CSV from {path}: {exc}") from exc
    lines = [ln for ln in text.splitlines() if ln]
    header = lines[0].split(",")
    cols = {name: [] for name in header}
    for ln in lines[1:]:
        for name, cell in zip(header, ln.split(",")):
            cols[name].append(float(cell))
    return {name: np.asarray(vals) for name, vals in cols.items()}


def figure3(
    output_dir,
    gamma: float = 1.0,
    n_trajectories: int = 2000,
    dt: float = 1e-3,
    t_max: float = 1.0,
    sample_spacing: float = 0.05,
    master_seed: int = 1905,
    workers: int | None = None,
) -> list[Path]:
    """Emit the five concurrence-vs-time series as CSV files.

    (a) unmonitored infinite temperature, (b) unmonitored zero temperature,
    (c)-(e) protecting-jump monitoring at eta = 0.8, 0.9, 1.0. Unmonitored
    series carry the trace distance of the integrated state to the closed-form
    state in the oracle column; monitored series report the recovered-average
    statistics. Output is byte-identical at any worker count.
    """
    outdir = Path(output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    times = np.round(np.arange(0.0, t_max + sample_spacing / 2, sample_spacing), 12)

    def series_seed(k: int) -> int:
        return int(np.random.SeedSequence((master_seed, k)).generate_state(1, np.uint64)[0])

    paths = []
    masters = [
        ("a_infinite_T_master", LindbladModel(2, gamma, gamma)),
        ("b_zero_T_master", LindbladModel(2, gamma, 0.0)),
    ]
    for name, model in masters:
        cfg = ExperimentConfig(
            model=model, unraveling="none", dt=dt, t_max=t_max, sample_times=times,
        )
        stats = run_ensemble(cfg)
        paths.append(emit_csv(stats, outdir / f"fig3_{name}.csv"))

    for k, eta in enumerate((0.8, 0.9, 1.0)):
        cfg = ExperimentConfig(
            model=LindbladModel(2, gamma, gamma, eta=eta),
            unraveling="jump_protecting",
            dt=dt,
            t_max=t_max,
            n_trajectories=n_trajectories,
            master_seed=series_seed(k + 2),
            sample_times=times,
            workers=workers,
        )
        stats = run_ensemble(cfg)
        tag = f"{'cde'[k]}_monitored_eta{int(round(eta * 100)):03d}"
        paths.append(emit_csv(stats, outdir / f"fig3_{tag}.csv", view="recovered"))
    return paths
