"""Monte Carlo engine: per-kind trial kernels, stopping rule, CSV output.

Trials run in chunks.  Chunk ``c`` of every SNR point draws from
``SeedSequence(seed, spawn_key=(c,))``, so points share common random
numbers and each chunk's outcome depends only on (seed, c, snr).  Chunks
are executed in waves of ``threads`` and merged in chunk order; counting
stops at the first chunk where the serial stopping rule holds, so serial
and threaded runs give identical statistics.

SNR axes: ``uncoded_mldt``, ``cdma_*`` and ``bounds`` use the average
per-user bit SNR (gamma bar); ``ldpc_mldt``, ``mcds_cdma`` and coded CDMA
use average per-user Eb/N0 of the message bits; ``raptor_mldt`` and
``capacity`` use the average superimposed symbol energy Es/N0.
"""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..analysis import ber_lower, ber_upper, db_to_lin, estimate_capacity
from ..channel import FadingProfile, NoiseModel, draw_rayleigh, draw_taps
from ..detector import MAX_USERS, bits_to_index, hard_decide, mldt_llrs, superposition_levels, tuple_app
from ..errors import ConfigurationError
from ..gspa import gspa_decode
from ..ldpc import ParityMatrix, construct_regular, read_alist, spa_decode
from ..mcds import demodulate, despread, frequency_response, inter_spa_decode, mcds_channel, mcds_modulate
from ..raptor import RaptorSession, robust_soliton, run_session
from ..spread import cdma_detect, cdma_transmit, gen_hadamard, gen_msequence
from .config import Scenario
from .stats import Counts, clopper_pearson

CSV_COLUMNS = ("scenario", "p_users", "snr_db", "bits", "errors", "ber", "ci_lo", "ci_hi", "throughput", "seconds")


@dataclass
class SimPoint:
    snr_db: float
    counts: Counts
    ber: float | None
    ci: tuple[float, float] | None
    throughput: float | None = None
    seconds: float = 0.0


@dataclass
class SimResult:
    scenario: Scenario
    points: list[SimPoint] = field(default_factory=list)

    @property
    def snr_db(self) -> np.ndarray:
        return np.array([p.snr_db for p in self.points])

    @property
    def ber(self) -> np.ndarray:
        return np.array([np.nan if p.ber is None else p.ber for p in self.points])

    @property
    def throughput(self) -> np.ndarray:
        return np.array([np.nan if p.throughput is None else p.throughput for p in self.points])


def chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chunk,)))


def _load_code(s: Scenario) -> ParityMatrix:
    if s.alist:
        return read_alist(s.alist)
    return construct_regular(1008, 504, 3, 6, s.code_seed)


def _noise(n0: float) -> NoiseModel:
    return NoiseModel(n0)


def _count_errors(decoded, truth) -> tuple[int, int, int, int]:
    """(bits, bit errors, frames, frame errors) with frames along all but the last axis."""
    wrong = np.asarray(decoded) != np.asarray(truth)
    per_frame = wrong.reshape(-1, wrong.shape[-1]).sum(axis=1)
    return wrong.size, int(wrong.sum()), per_frame.size, int(np.count_nonzero(per_frame))


def _counts(decoded, truth) -> Counts:
    b, e, f, fe = _count_errors(decoded, truth)
    return Counts(bits=b, errors=e, frames=f, frame_errors=fe)


# ---------------------------------------------------------------------------
# kernels: each maps (snr_db, rng, chunk) -> Counts for one chunk
# ---------------------------------------------------------------------------


class _Uncoded:
    default_chunk = 20_000

    def __init__(self, s: Scenario):
        self.s = s

    def __call__(self, snr_db, rng, chunk):
        P, bl = self.s.p_users, self.s.block_length
        h = draw_rayleigh(rng, 1.0, (chunk, 1, P))
        bits = rng.integers(0, 2, (chunk, bl, P))
        w = rng.standard_normal((chunk, bl)) + 1j * rng.standard_normal((chunk, bl))
        n0 = 1.0 / db_to_lin(snr_db)
        levels = superposition_levels(h)  # (F, 1, Q)
        idx = bits_to_index(bits)
        r = np.take_along_axis(levels[:, 0, :], idx, axis=1) + math.sqrt(n0 / 2) * w
        llr = mldt_llrs(r, levels, n0 / 2)
        wrong = hard_decide(llr) != bits
        return Counts(bits=wrong.size, errors=int(wrong.sum()), frames=chunk * P,
                      frame_errors=int(np.count_nonzero(wrong.any(axis=1))))


def _decode_tuples(receiver, r, levels, gains, sigma2, H, s: Scenario):
    """Decoded codeword bits ``(B, P, n)`` for despread/received samples ``r`` (B, n).

    ``levels`` broadcast to ``(B, n, Q)``; ``gains`` is ``(B, n, P)``.
    """
    B, n = r.shape
    P = gains.shape[-1]
    if receiver == "gspa":
        probs = tuple_app(r, levels, sigma2)
        return gspa_decode(probs, H, s.max_iter, s.early_exit).bits
    if receiver == "conventional":
        llr = 2.0 * np.real(np.conj(gains) * r[..., None]) / sigma2
    else:
        llr = mldt_llrs(r, levels, sigma2)
    flat = np.moveaxis(llr, -1, 1).reshape(B * P, n)
    return spa_decode(flat, H, s.max_iter, s.early_exit).bits.reshape(B, P, n)


class _Ldpc:
    default_chunk = 20

    def __init__(self, s: Scenario):
        self.s = s
        self.H = _load_code(s)
        self.enc = self.H.encoder

    def __call__(self, snr_db, rng, chunk):
        s, H = self.s, self.H
        P, n, k = s.p_users, H.n, self.enc.k
        # draw for MAX_USERS and slice, so user A sees the same message, gain
        # and noise whatever P is (common random numbers across P)
        msgs = rng.integers(0, 2, (chunk, MAX_USERS, k))[:, :P]
        h = draw_rayleigh(rng, 1.0, (chunk, MAX_USERS))[:, :P]
        w = rng.standard_normal((chunk, n)) + 1j * rng.standard_normal((chunk, n))
        n0 = 1.0 / (db_to_lin(snr_db) * k / n)
        cw = self.enc.encode(msgs)  # (F, P, n)
        levels = superposition_levels(h)  # (F, Q)
        idx = bits_to_index(np.moveaxis(cw, 1, -1))  # (F, n)
        r = np.take_along_axis(levels, idx, axis=1) + math.sqrt(n0 / 2) * w
        dec = _decode_tuples(s.receiver, r, levels[:, None, :], h[:, None, :], n0 / 2, H, s)
        return _counts(self.enc.extract(dec), msgs)


class _Cdma:
    def __init__(self, s: Scenario):
        self.s = s
        if s.kind == "cdma_hw":
            self.sig = gen_hadamard(s.J)
            self.K = s.K or self.sig.K
        else:
            self.sig = gen_msequence(s.m)
            self.K = s.K or max(self.sig.J // s.L, 1)
        if self.K > self.sig.K:
            raise ConfigurationError(f"scenario {s.name!r}: key 'K' exceeds the {self.sig.K} available sequences")
        self.profile = FadingProfile.equal_power(s.L)
        self.H = _load_code(s) if s.coded else None
        self.default_chunk = 4 if s.coded else 2000

    def __call__(self, snr_db, rng, chunk):
        s, K, P, J = self.s, self.K, self.s.p_users, self.sig.J
        if not s.coded:
            bits = rng.integers(0, 2, (chunk, K, P))
            taps = draw_taps(rng, self.profile, (chunk, K, P))
            noise = _noise(J / db_to_lin(snr_db))
            r = cdma_transmit(bits, self.sig, taps, noise, rng)
            llr = cdma_detect(r, self.sig, taps, noise, s.weighting)
            wrong = hard_decide(llr) != bits
            return Counts(bits=wrong.size, errors=int(wrong.sum()), frames=wrong.size,
                          frame_errors=int(wrong.sum()))
        H, enc = self.H, self.H.encoder
        n, k = H.n, enc.k
        msgs = rng.integers(0, 2, (chunk, K, P, k))
        taps = draw_taps(rng, self.profile, (chunk, 1, K, P))
        noise = _noise(J / (db_to_lin(snr_db) * k / n))
        cw = enc.encode(msgs)  # (F, K, P, n)
        bits = np.moveaxis(cw, -1, 1)  # (F, n, K, P)
        full_taps = np.broadcast_to(taps, bits.shape + (s.L,))
        r = cdma_transmit(bits, self.sig, full_taps, noise, rng)
        llr = cdma_detect(r, self.sig, full_taps, noise, s.weighting)  # (F, n, K, P)
        flat = np.moveaxis(llr, 1, -1).reshape(-1, n)
        dec = spa_decode(flat, H, s.max_iter, s.early_exit).bits.reshape(chunk, K, P, n)
        return _counts(enc.extract(dec), msgs)


class _Mcds:
    default_chunk = 1

    def __init__(self, s: Scenario):
        self.s = s
        self.sig = gen_hadamard(s.J)
        self.K = s.K or self.sig.K
        if self.K > self.sig.K:
            raise ConfigurationError(f"scenario {s.name!r}: key 'K' exceeds the {self.sig.K} available sequences")
        if s.n_sub < s.L:
            raise ConfigurationError(f"scenario {s.name!r}: key 'n_sub' must be >= L")
        self.profile = FadingProfile.equal_power(s.L)
        self.H = _load_code(s)

    def __call__(self, snr_db, rng, chunk):
        s, H, enc = self.s, self.H, self.H.encoder
        K, P, N, J = self.K, s.p_users, s.n_sub, self.sig.J
        n, k = H.n, enc.k
        S = -(-n // N)  # multicarrier symbols per codeword
        msgs = rng.integers(0, 2, (chunk, K, P, k))
        taps = draw_taps(rng, self.profile, (chunk, K, P))
        fill = rng.integers(0, 2, (chunk, K, P, S * N - n))
        noise = _noise(J / (db_to_lin(snr_db) * k / n))
        cw = enc.encode(msgs)
        slots = np.concatenate([cw, fill], axis=-1).reshape(chunk, K, P, S, N)
        frame = mcds_modulate(np.moveaxis(slots, 3, 1), self.sig, s.cp_len)  # user axes (F, S, K, P)
        rx = mcds_channel(frame, np.broadcast_to(taps[:, None], (chunk, S, K, P, s.L)), noise, rng)
        R = demodulate(rx, N, J, s.cp_len)
        d = despread(R, self.sig, K)  # (F, S, K, N)
        d = np.moveaxis(d, 1, 2).reshape(chunk * K, S * N)[:, :n]
        G = np.swapaxes(frequency_response(taps, N), -1, -2)  # (F, K, N, P)
        gains = np.tile(G, (1, 1, S, 1)).reshape(chunk * K, S * N, P)[:, :n]
        levels = superposition_levels(gains)
        s2 = noise.sigma2 / J
        if s.receiver == "inter_spa":
            res_a, res_b = inter_spa_decode(d, levels, s2, H, s.rounds, s.max_iter, s.feedback, s.early_exit)
            dec = np.stack([res_a.bits, res_b.bits], axis=1)
        else:
            dec = _decode_tuples(s.receiver, d, levels, gains, s2, H, s)
        return _counts(enc.extract(dec.reshape(chunk, K, P, n)), msgs)


class _Raptor:
    default_chunk = 1

    def __init__(self, s: Scenario):
        self.s = s
        if (3 * s.precode_n) % s.precode_m:
            raise ConfigurationError(f"scenario {s.name!r}: key 'precode_m' must divide 3 * precode_n")
        pre = construct_regular(s.precode_n, s.precode_m, 3, 3 * s.precode_n // s.precode_m, s.precode_seed,
                                require_girth6=False)
        self.cfg = RaptorSession(
            precode=pre,
            ir_chunk=s.ir_chunk,
            min_rate=s.min_rate,
            lt_iterations=s.lt_iterations,
            decoder_iterations=s.decoder_iterations,
            degree_distribution=robust_soliton(pre.n, s.soliton_c, s.soliton_delta),
            early_exit=s.early_exit,
        )

    def __call__(self, snr_db, rng, chunk):
        total = Counts()
        for _ in range(chunk):
            out = run_session(self.cfg, snr_db, self.s.receiver, rng)
            sent = 2 * out.message_bits
            total += Counts(bits=sent, errors=sent - out.delivered_bits, frames=1,
                            frame_errors=int(out.aborted), symbols=out.symbols, delivered=out.delivered_bits)
        return total


_KERNELS = {
    "uncoded_mldt": _Uncoded,
    "ldpc_mldt": _Ldpc,
    "cdma_hw": _Cdma,
    "cdma_mseq": _Cdma,
    "mcds_cdma": _Mcds,
    "raptor_mldt": _Raptor,
}


def _should_stop(s: Scenario, c: Counts) -> bool:
    if s.kind == "raptor_mldt":
        return c.frames >= s.blocks
    if c.errors >= s.min_errors and c.frame_errors >= s.min_frame_errors:
        return True
    return c.bits >= s.max_bits


def _simulate_point(kernel, s: Scenario, snr_db: float, chunk: int, pool) -> Counts:
    total = Counts()
    first = 0
    while True:
        ids = range(first, first + s.threads)
        if pool is None:
            parts = (kernel(snr_db, chunk_rng(s.seed, c), chunk) for c in ids)
        else:
            parts = pool.map(lambda c: kernel(snr_db, chunk_rng(s.seed, c), chunk), ids)
        for part in parts:
            total += part
            if _should_stop(s, total):
                return total
        first += s.threads


def _bounds(s: Scenario) -> SimResult:
    res = SimResult(s)
    for snr in s.snr_db:
        g = float(db_to_lin(snr))
        up = float(ber_upper(s.p_users, g))
        res.points.append(SimPoint(snr, Counts(), up, (float(ber_lower(g)), up)))
    return res


def _capacity(s: Scenario) -> SimResult:
    res = SimResult(s)
    for snr in s.snr_db:
        t0 = time.perf_counter()
        est = estimate_capacity(s.mode, snr, s.samples, chunk_rng(s.seed, 0))
        half = 3.0 * est.std_error
        res.points.append(SimPoint(snr, Counts(bits=est.num_samples), None,
                                   (est.bits_per_channel_use - half, est.bits_per_channel_use + half),
                                   est.bits_per_channel_use, time.perf_counter() - t0))
    return res


def run_scenario(s: Scenario, progress=None) -> SimResult:
    """Simulate every SNR point of a scenario; deterministic under ``s.seed``."""
    if s.kind == "bounds":
        return _bounds(s)
    if s.kind == "capacity":
        return _capacity(s)
    kernel = _KERNELS[s.kind](s)
    chunk = s.chunk_frames or kernel.default_chunk
    res = SimResult(s)
    pool = ThreadPoolExecutor(max_workers=s.threads) if s.threads > 1 else None
    try:
        for snr in s.snr_db:
            t0 = time.perf_counter()
            c = _simulate_point(kernel, s, snr, chunk, pool)
            ber = c.errors / c.bits if c.bits else None
            thr = c.delivered / c.symbols if s.kind == "raptor_mldt" and c.symbols else None
            point = SimPoint(snr, c, ber, clopper_pearson(c.errors, c.bits), thr, time.perf_counter() - t0)
            res.points.append(point)
            if progress is not None:
                progress(s, point)
    finally:
        if pool is not None:
            pool.shutdown()
    return res


# ---------------------------------------------------------------------------
# comparison and output
# ---------------------------------------------------------------------------


@dataclass
class BoundsReport:
    passed: bool
    lines: list[str]
    failed_snr: list[float]


def compare_to_bounds(result: SimResult, p_users: int | None = None) -> BoundsReport:
    """Check each point's 99% CI against the closed-form bounds.

    P = 1: the exact BER must lie in the CI.  P = 2, 3: the CI must overlap
    ``[lower, upper]``.
    """
    p = result.scenario.p_users if p_users is None else p_users
    lines, failed = [], []
    for pt in result.points:
        g = float(db_to_lin(pt.snr_db))
        lo_b, up_b = float(ber_lower(g)), float(ber_upper(p, g))
        lo, hi = pt.ci if pt.ci is not None else (0.0, 1.0)
        ok = lo <= lo_b <= hi if p == 1 else (hi >= lo_b and lo <= up_b)
        ber = float("nan") if pt.ber is None else pt.ber
        lines.append(f"{'PASS' if ok else 'FAIL'} P={p} snr={pt.snr_db:g} dB ber={ber:.4e} "
                     f"ci=[{lo:.4e}, {hi:.4e}] bounds=[{lo_b:.4e}, {up_b:.4e}]")
        if not ok:
            failed.append(pt.snr_db)
    return BoundsReport(not failed, lines, failed)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".10g")


def csv_text(result: SimResult, timing: bool = False) -> str:
    s = result.scenario
    buf = io.StringIO()
    buf.write("# mldt simulation output\n")
    for key, value in s.items():
        if key == "threads":
            continue  # results do not depend on it
        if isinstance(value, tuple):
            value = ", ".join(_fmt(v) for v in value)
        buf.write(f"# {key} = {value}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    random_kind = s.kind != "bounds"
    for pt in result.points:
        lo, hi = pt.ci if pt.ci is not None else (None, None)
        w.writerow([
            s.name,
            s.p_users,
            _fmt(pt.snr_db),
            _fmt(pt.counts.bits) if random_kind else "",
            _fmt(pt.counts.errors) if s.kind not in ("bounds", "capacity") else "",
            _fmt(pt.ber),
            _fmt(lo),
            _fmt(hi),
            _fmt(pt.throughput),
            _fmt(pt.seconds) if timing and random_kind else "",
        ])
    return buf.getvalue()


def write_csv(results, path, timing: bool = False) -> None:
    """Write one or more results to a single CSV (config headers per scenario)."""
    if isinstance(results, SimResult):
        results = [results]
    Path(path).write_text("".join(csv_text(r, timing) for r in results))


def write_dat(result: SimResult, path) -> None:
    """Whitespace-separated columns for gnuplot; missing values are ``nan``."""
    lines = [f"# {result.scenario.name} ({result.scenario.kind}, P={result.scenario.p_users})",
             "# snr_db ber ci_lo ci_hi throughput"]
    for pt in result.points:
        lo, hi = pt.ci if pt.ci is not None else (None, None)
        vals = [pt.snr_db, pt.ber, lo, hi, pt.throughput]
        lines.append(" ".join("nan" if v is None else format(float(v), ".10g") for v in vals))
    Path(path).write_text("\n".join(lines) + "\n")
