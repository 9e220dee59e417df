"""Experiment harness: Monte Carlo batches, aggregation, CSV artifacts,
detector micro-benchmarks.

All emitted files are semicolon separated with '.' decimals and start with
a provenance comment (config hash, seed, run count, scenario), so identical
inputs produce byte-identical files. Aggregates are exact counts divided by
the run count and can be recomputed from emitted run records.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import SystemConfig
from .errors import ConfigError
from .fd_dynamic import ScheduleHistory, ThresholdTable, dfd_evaluate, dfd_verdicts
from .fd_static import StaticDetector, sfd_verdicts
from .scenarios import Scenario, fault_free
from .simulate import run_single


@dataclass
class RunRecord:
    """Everything needed to replay one run's verdicts offline."""
    run: int
    seed: int
    gamma: np.ndarray       # (T, N) bool
    priorities: np.ndarray  # (T, N) int
    sfd: np.ndarray         # (T, N) bool
    dfd: np.ndarray         # (T, N) bool
    states: np.ndarray      # (T, N, n_sel) selected state components

    def __eq__(self, other) -> bool:
        return (self.run == other.run and self.seed == other.seed
                and np.array_equal(self.gamma, other.gamma)
                and np.array_equal(self.priorities, other.priorities)
                and np.array_equal(self.sfd, other.sfd)
                and np.array_equal(self.dfd, other.dfd)
                and np.array_equal(self.states, other.states))


@dataclass
class AggregateReport:
    runs: int
    rounds: int
    n_agents: int
    monitored: int              # agent id of the headline alarm series
    k_event: int | None
    warmup: int
    d: int
    p_sfd: np.ndarray           # (T, N) per-timestep alarm probability
    p_dfd: np.ndarray
    pre_sfd: np.ndarray         # (N,) interval false-positive/alarm rates
    post_sfd: np.ndarray
    pre_dfd: np.ndarray
    post_dfd: np.ndarray
    delay_sfd: np.ndarray       # (runs,) detection delay, NaN if never
    delay_dfd: np.ndarray
    mean_err_sq: np.ndarray     # (T, N) Monte Carlo mean ||e_i(k)||^2
    band_agent: int             # agent id of the state band series
    band_component: int         # 1-based state index
    state_mean: np.ndarray      # (T,)
    state_std: np.ndarray       # (T,)

    def interval_rates(self, detector: str, agent: int) -> tuple[float, float]:
        pre = self.pre_sfd if detector == "sfd" else self.pre_dfd
        post = self.post_sfd if detector == "sfd" else self.post_dfd
        return float(pre[agent - 1]), float(post[agent - 1])


def _one_run(models, m, scale, rounds, seed, scenario, kappa, table,
             keep_states, run):
    trace = run_single(models, m, scale, rounds, seed, run,
                       scenario=scenario, keep_states=keep_states)
    n_agents = trace.gamma.shape[1]
    sfd = np.stack([sfd_verdicts(trace.priorities[:, i], kappa, table.d)
                    for i in range(n_agents)], axis=1)
    dfd = np.stack([dfd_verdicts(trace.gamma[:, i], trace.priorities[:, i],
                                 table) for i in range(n_agents)], axis=1)
    return trace, sfd, dfd


def run_batch(cfg: SystemConfig, scenario: Scenario | None,
              table: ThresholdTable, runs: int, seed: int,
              monitored: int | None = None,
              band_agent: int | None = None, band_component: int = 3,
              record_runs: int = 0,
              workers: int = 1) -> tuple[AggregateReport, list[RunRecord]]:
    """Monte Carlo batch; deterministic given (cfg, scenario, table, seed,
    runs) regardless of worker count."""
    scenario = scenario or fault_free()
    scale = cfg.require_scale()
    table.check_compatible(cfg.eta, cfg.d, cfg.b, cfg.bandwidth,
                           cfg.n_agents, scale)
    if runs < 1:
        raise ConfigError("runs must be >= 1")
    rounds = cfg.rounds
    n_agents = cfg.n_agents
    faulty = scenario.faulty_agents()
    if monitored is None:
        monitored = faulty[0] if faulty else 1
    if band_agent is None:
        band_agent = monitored
    if not 1 <= monitored <= n_agents or not 1 <= band_agent <= n_agents:
        raise ConfigError("monitored/band agent outside the fleet")
    if not 1 <= band_component <= cfg.n:
        raise ConfigError(f"band component must be in 1..{cfg.n}")
    k_event = scenario.first_event_round

    models = cfg.models()
    worker = partial(_one_run, models, cfg.bandwidth, scale, rounds, seed,
                     scenario, table.sfd_kappa, table, True)

    alarm_sfd = np.zeros((rounds, n_agents), dtype=np.int64)
    alarm_dfd = np.zeros((rounds, n_agents), dtype=np.int64)
    err_sq_sum = np.zeros((rounds, n_agents))
    band_sum = np.zeros(rounds)
    band_sq = np.zeros(rounds)
    delay_sfd = np.full(runs, np.nan)
    delay_dfd = np.full(runs, np.nan)
    records: list[RunRecord] = []

    if workers > 1:
        pool = ProcessPoolExecutor(max_workers=workers)
        results = pool.map(worker, range(runs), chunksize=max(1, runs // (8 * workers)))
    else:
        pool = None
        results = map(worker, range(runs))
    try:
        for run, (trace, sfd, dfd) in enumerate(results):
            alarm_sfd += sfd
            alarm_dfd += dfd
            err_sq_sum += trace.err_sq
            comp = trace.states[:, band_agent - 1, band_component - 1]
            band_sum += comp
            band_sq += comp * comp
            if k_event is not None:
                for arr, out in ((sfd, delay_sfd), (dfd, delay_dfd)):
                    hits = np.flatnonzero(arr[k_event:, monitored - 1])
                    if hits.size:
                        out[run] = hits[0]
            if run < record_runs:
                records.append(RunRecord(run, seed, trace.gamma.copy(),
                                         trace.priorities.copy(), sfd, dfd,
                                         trace.states.copy()))
    finally:
        if pool is not None:
            pool.shutdown()

    p_sfd = alarm_sfd / runs
    p_dfd = alarm_dfd / runs
    pre_sfd, post_sfd = _interval_rates(p_sfd, cfg.warmup_discard, k_event,
                                        cfg.d)
    pre_dfd, post_dfd = _interval_rates(p_dfd, cfg.warmup_discard, k_event,
                                        cfg.d)
    mean_state = band_sum / runs
    var = np.maximum(band_sq / runs - mean_state ** 2, 0.0)
    report = AggregateReport(
        runs=runs, rounds=rounds, n_agents=n_agents, monitored=monitored,
        k_event=k_event, warmup=cfg.warmup_discard, d=cfg.d,
        p_sfd=p_sfd, p_dfd=p_dfd,
        pre_sfd=pre_sfd, post_sfd=post_sfd, pre_dfd=pre_dfd,
        post_dfd=post_dfd, delay_sfd=delay_sfd, delay_dfd=delay_dfd,
        mean_err_sq=err_sq_sum / runs, band_agent=band_agent,
        band_component=band_component, state_mean=mean_state,
        state_std=np.sqrt(var))
    return report, records


def _interval_rates(p: np.ndarray, warmup: int, k_event: int | None,
                    d: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean per-timestep rate before the event and after it has fully
    entered the detection window ([k_event + d, T))."""
    rounds = p.shape[0]
    pre_end = rounds if k_event is None else k_event
    pre = p[warmup:pre_end].mean(axis=0)
    if k_event is None:
        post = np.full(p.shape[1], np.nan)
    else:
        post = p[min(k_event + d, rounds):].mean(axis=0)
    return pre, post


# ---------------------------------------------------------------------------
# CSV artifacts

SEP = ";"


def _provenance(cfg_hash: str, seed: int, runs: int, scenario: str) -> str:
    return (f"# config_hash={cfg_hash}{SEP}seed={seed}{SEP}runs={runs}"
            f"{SEP}scenario={scenario}\n")


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_alarm_series(report: AggregateReport, path: Path, header: str) -> None:
    agent = report.monitored - 1
    with open(path, "w", newline="") as fh:
        fh.write(header)
        fh.write(f"k{SEP}p_sfd{SEP}p_dfd\n")
        for k in range(report.rounds):
            fh.write(f"{k}{SEP}{_fmt(report.p_sfd[k, agent])}"
                     f"{SEP}{_fmt(report.p_dfd[k, agent])}\n")


def write_state_bands(report: AggregateReport, path: Path, header: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(header)
        fh.write(f"k{SEP}minus3{SEP}minus2{SEP}minus1{SEP}mean{SEP}plus1"
                 f"{SEP}plus2{SEP}plus3\n")
        for k in range(report.rounds):
            m, s = report.state_mean[k], report.state_std[k]
            cells = [k, m - 3 * s, m - 2 * s, m - s, m, m + s, m + 2 * s,
                     m + 3 * s]
            fh.write(SEP.join(_fmt(c) for c in cells) + "\n")


def write_interval_rates(report: AggregateReport, path: Path, header: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(header)
        fh.write(f"detector{SEP}agent{SEP}pre_rate{SEP}post_rate\n")
        for det, pre, post in (("sfd", report.pre_sfd, report.post_sfd),
                               ("dfd", report.pre_dfd, report.post_dfd)):
            for i in range(report.n_agents):
                fh.write(f"{det}{SEP}{i + 1}{SEP}{_fmt(pre[i])}"
                         f"{SEP}{_fmt(post[i])}\n")


def write_detection_delays(report: AggregateReport, path: Path, header: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(header)
        fh.write(f"delay{SEP}n_sfd{SEP}n_dfd\n")
        finite = [d[np.isfinite(d)].astype(int) for d in
                  (report.delay_sfd, report.delay_dfd)]
        top = int(max((arr.max() for arr in finite if arr.size), default=-1))
        for delay in range(top + 1):
            ns = int(np.count_nonzero(finite[0] == delay))
            nd = int(np.count_nonzero(finite[1] == delay))
            fh.write(f"{delay}{SEP}{ns}{SEP}{nd}\n")


def write_run_record(rec: RunRecord, path: Path, header: str) -> None:
    rounds, n_agents = rec.gamma.shape
    n_sel = rec.states.shape[2]
    cols = [f"x{j + 1}" for j in range(n_sel)]
    with open(path, "w", newline="") as fh:
        fh.write(header)
        fh.write(f"k{SEP}agent{SEP}gamma{SEP}quantized_priority{SEP}sfd"
                 f"{SEP}dfd{SEP}" + SEP.join(cols) + "\n")
        for k in range(rounds):
            for i in range(n_agents):
                cells = [k, i + 1, rec.gamma[k, i], rec.priorities[k, i],
                         rec.sfd[k, i], rec.dfd[k, i]]
                cells += [rec.states[k, i, j] for j in range(n_sel)]
                fh.write(SEP.join(_fmt(c) for c in cells) + "\n")


def parse_run_record(path: Path) -> RunRecord:
    """Inverse of write_run_record; provenance comments supply run and seed."""
    run = seed = -1
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                for part in line[1:].strip().split(SEP):
                    key, _, val = part.partition("=")
                    if key == "run":
                        run = int(val)
                    elif key == "seed":
                        seed = int(val)
                continue
            if line.startswith("k" + SEP) or not line:
                continue
            rows.append(line.split(SEP))
    ks = np.array([int(r[0]) for r in rows])
    agents = np.array([int(r[1]) for r in rows])
    rounds, n_agents = ks.max() + 1, agents.max()
    n_sel = len(rows[0]) - 6
    gamma = np.zeros((rounds, n_agents), dtype=bool)
    q = np.zeros((rounds, n_agents), dtype=np.int16)
    sfd = np.zeros((rounds, n_agents), dtype=bool)
    dfd = np.zeros((rounds, n_agents), dtype=bool)
    states = np.zeros((rounds, n_agents, n_sel))
    for r in rows:
        k, i = int(r[0]), int(r[1]) - 1
        gamma[k, i] = bool(int(r[2]))
        q[k, i] = int(r[3])
        sfd[k, i] = bool(int(r[4]))
        dfd[k, i] = bool(int(r[5]))
        states[k, i] = [float(x) for x in r[6:]]
    return RunRecord(run, seed, gamma, q, sfd, dfd, states)


def emit_csv(report: AggregateReport, records: Sequence[RunRecord],
             outdir: str | Path, cfg: SystemConfig, seed: int,
             scenario_name: str) -> list[Path]:
    """Write all aggregate artifacts plus one CSV per recorded run."""
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        header = _provenance(cfg.hash(), seed, report.runs, scenario_name)
        out = []
        for name, writer in (("alarm_probability.csv", write_alarm_series),
                             ("state_bands.csv", write_state_bands),
                             ("interval_rates.csv", write_interval_rates),
                             ("detection_delays.csv", write_detection_delays)):
            path = outdir / name
            writer(report, path, header)
            out.append(path)
        for rec in records:
            path = outdir / f"run_{rec.run:05d}.csv"
            rec_header = header.rstrip("\n") + f"{SEP}run={rec.run}\n"
            write_run_record(rec, path, rec_header)
            out.append(path)
        return out
    except OSError as exc:
        raise OSError(f"cannot write experiment artifacts under {outdir}: "
                      f"{exc}") from exc


def report_from_records(records: Sequence[RunRecord], cfg: SystemConfig,
                        scenario: Scenario, monitored: int,
                        band_agent: int, band_component: int = 3) -> AggregateReport:
    """Recompute the record-derived aggregate fields from emitted records
    (mean_err_sq is not part of run records and stays NaN)."""
    runs = len(records)
    rounds, n_agents = records[0].gamma.shape
    k_event = scenario.first_event_round
    # accumulate in run order with the same operations as run_batch so the
    # recomputed report is bit-identical to the in-process one
    alarm_sfd = np.zeros((rounds, n_agents), dtype=np.int64)
    alarm_dfd = np.zeros((rounds, n_agents), dtype=np.int64)
    band_sum = np.zeros(rounds)
    band_sq = np.zeros(rounds)
    delay_sfd = np.full(runs, np.nan)
    delay_dfd = np.full(runs, np.nan)
    for j, rec in enumerate(records):
        alarm_sfd += rec.sfd
        alarm_dfd += rec.dfd
        comp = rec.states[:, band_agent - 1, band_component - 1]
        band_sum += comp
        band_sq += comp * comp
        if k_event is not None:
            for arr, out in ((rec.sfd, delay_sfd), (rec.dfd, delay_dfd)):
                hits = np.flatnonzero(arr[k_event:, monitored - 1])
                if hits.size:
                    out[j] = hits[0]
    p_sfd = alarm_sfd / runs
    p_dfd = alarm_dfd / runs
    pre_s, post_s = _interval_rates(p_sfd, cfg.warmup_discard, k_event, cfg.d)
    pre_d, post_d = _interval_rates(p_dfd, cfg.warmup_discard, k_event, cfg.d)
    mean_state = band_sum / runs
    var = np.maximum(band_sq / runs - mean_state ** 2, 0.0)
    return AggregateReport(
        runs=runs, rounds=rounds, n_agents=n_agents, monitored=monitored,
        k_event=k_event, warmup=cfg.warmup_discard, d=cfg.d,
        p_sfd=p_sfd, p_dfd=p_dfd, pre_sfd=pre_s, post_sfd=post_s,
        pre_dfd=pre_d, post_dfd=post_d, delay_sfd=delay_sfd,
        delay_dfd=delay_dfd,
        mean_err_sq=np.full((rounds, n_agents), np.nan),
        band_agent=band_agent, band_component=band_component,
        state_mean=mean_state, state_std=np.sqrt(var))


# ---------------------------------------------------------------------------
# Detector micro-benchmarks

@dataclass
class BenchReport:
    updates: int
    sfd_mean_ns: float
    sfd_p99_ns: float
    dfd_mean_ns: float
    dfd_p99_ns: float


def bench_detectors(table: ThresholdTable, gamma: np.ndarray,
                    priorities: np.ndarray, passes: int = 3) -> BenchReport:
    """Per-update wall-clock cost of both detectors replaying a recorded
    trace (one monitored agent per column). Absolute numbers are host
    specific; the meaningful claim is the relative cost."""
    rounds, n_agents = gamma.shape
    d, b = table.d, table.b
    sfd_t: list[int] = []
    dfd_t: list[int] = []
    for _ in range(passes):
        for i in range(n_agents):
            det = StaticDetector(i + 1, table.sfd_kappa, d)
            g = priorities[:, i]
            for k in range(rounds):
                t0 = time.perf_counter_ns()
                det.update(int(g[k]))
                sfd_t.append(time.perf_counter_ns() - t0)
            hist = ScheduleHistory(i + 1, rounds + 1)
            for k in range(rounds):
                hist.append(bool(gamma[k, i]))
                if k < d - 1:
                    continue
                window = g[k - d + 1:k + 1]
                t0 = time.perf_counter_ns()
                dfd_evaluate(hist, window, table, k)
                dfd_t.append(time.perf_counter_ns() - t0)
    sfd_arr = np.array(sfd_t, dtype=float)
    dfd_arr = np.array(dfd_t, dtype=float)
    return BenchReport(
        updates=sfd_arr.size,
        sfd_mean_ns=float(sfd_arr.mean()),
        sfd_p99_ns=float(np.percentile(sfd_arr, 99)),
        dfd_mean_ns=float(dfd_arr.mean()),
        dfd_p99_ns=float(np.percentile(dfd_arr, 99)))
