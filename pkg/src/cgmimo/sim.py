"""Coded Monte-Carlo BLER simulation for uplink detection and downlink precoding.

One trial is one OFDM symbol: every subcarrier gets its own i.i.d. Rayleigh
channel, and every user sends one coded frame spread over all subcarriers.
A block error is counted when any information bit of a user's frame is
decoded wrongly, so each trial contributes ``U`` frames.

Random numbers are addressed by ``(seed, trial)``. Channel, bits and
unit-variance noise of a trial are drawn once and reused for every SNR
point and every method, so method comparisons use common random numbers
and results do not depend on the SNR grid, the chunk size or the number
of worker processes.
"""

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from statistics import NormalDist
from typing import Optional

import numpy as np

from .detect import compute_llrs, detect_cg, detect_cgls, detect_cholesky, detect_neumann
from .linalg import adjoint_matvec, gram_diagonal, gram_regularized, matvec
from .opcount import OpCounter, count_detect, count_precode
from .phy.channel import complex_normal, trial_rng
from .phy.coding import viterbi_decode_soft
from .phy.constellation import make_constellation
from .phy.framing import FrameLayout, frame_assemble, frame_disassemble, make_interleaver
from .precode import precode_cg, precode_cgls, precode_explicit, precode_neumann

__all__ = [
    "ConfigError",
    "BreakdownBudgetExceeded",
    "SweepConfig",
    "MethodSpec",
    "SweepPoint",
    "SweepResult",
    "TradeoffRow",
    "wilson_interval",
    "snr_at_bler",
    "run_comparison",
    "run_uplink_sweep",
    "run_downlink_sweep",
    "tradeoff_table",
    "write_csv",
    "write_tradeoff_csv",
]

METHODS = ("cholesky", "cg", "cgls", "neumann")
LINKS = ("uplink", "downlink")
TARGET_BLER = 0.1
# complex entries of H per chunk; bounds memory at roughly 64 MiB per copy
_CHUNK_ENTRIES = 1 << 22
_EARLY_STOP_CHUNK = 8


class ConfigError(ValueError):
    """Invalid sweep configuration."""


class BreakdownBudgetExceeded(RuntimeError):
    """More trials hit a solver breakdown than the configured budget allows."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class MethodSpec:
    """One detector or precoder configuration."""

    method: str
    K: int = 1
    tracker: str = "approx"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.K < 1:
            raise ConfigError("iterations must be >= 1")
        if self.tracker not in ("approx", "exact"):
            raise ConfigError(f"unknown tracker {self.tracker!r}")
        if self.method == "cholesky":
            # iterations and tracker do not apply; normalize so equal methods compare equal
            object.__setattr__(self, "K", 1)
            object.__setattr__(self, "tracker", "approx")

    @property
    def label(self) -> str:
        if self.method == "cholesky":
            return "cholesky"
        if self.method == "cg":
            return f"cg-{self.tracker}-K{self.K}"
        return f"{self.method}-K{self.K}"

    def real_mults(self, link, B, U) -> int:
        if link == "uplink":
            return count_detect(self.method, B, U, self.K, self.tracker)
        return count_precode(self.method, B, U, self.K)


@dataclass(frozen=True)
class SweepConfig:
    """Sweep parameters; see :meth:`validate` for the constraints."""

    bs_antennas: int = 128
    users: int = 8
    modulation: str = "16qam"
    method: str = "cg"
    iterations: int = 3
    snr_start: float = 0.0
    snr_stop: float = 10.0
    snr_step: float = 1.0
    trials: int = 100
    subcarriers: int = 128
    seed: int = 0
    tracker: str = "approx"
    workers: int = 1
    max_errors: Optional[int] = None
    breakdown_budget: float = 0.01
    out: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.bs_antennas >= self.users >= 1:
            raise ConfigError(f"need bs_antennas >= users >= 1, got {self.bs_antennas} and {self.users}")
        if self.snr_step <= 0:
            raise ConfigError("snr step must be positive")
        if self.snr_stop < self.snr_start:
            raise ConfigError("snr stop must not be below snr start")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.subcarriers < 1:
            raise ConfigError("subcarriers must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.max_errors is not None and self.max_errors < 1:
            raise ConfigError("max_errors must be >= 1")
        if not 0 <= self.breakdown_budget <= 1:
            raise ConfigError("breakdown_budget is a fraction of trials in [0, 1]")
        try:
            bits = make_constellation(self.modulation).bits_per_symbol
            FrameLayout(self.subcarriers, bits)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        self.method_spec  # validates method, iterations and tracker

    @property
    def method_spec(self) -> MethodSpec:
        return MethodSpec(self.method, self.iterations, self.tracker)

    @property
    def snr_grid(self) -> np.ndarray:
        n = int(math.floor((self.snr_stop - self.snr_start) / self.snr_step + 1e-9)) + 1
        return np.round(self.snr_start + self.snr_step * np.arange(n), 10)


@dataclass(frozen=True)
class SweepPoint:
    snr_db: float
    frames: int
    block_errors: int
    real_mults_mean: float
    breakdowns: int = 0

    @property
    def bler(self) -> float:
        return self.block_errors / self.frames if self.frames else float("nan")

    @property
    def interval(self):
        return wilson_interval(self.block_errors, self.frames)


@dataclass(frozen=True)
class SweepResult:
    link: str
    config: SweepConfig
    spec: MethodSpec
    points: list

    @property
    def snr_db(self):
        return np.array([p.snr_db for p in self.points])

    @property
    def bler(self):
        return np.array([p.bler for p in self.points])

    def snr_at(self, target=TARGET_BLER):
        frames = min((p.frames for p in self.points), default=0)
        return snr_at_bler(self.snr_db, self.bler, target, floor_frames=frames)


# -- statistics -----------------------------------------------------------

def wilson_interval(errors, frames, confidence=0.95):
    """Wilson score interval for a binomial proportion."""
    if frames <= 0:
        return (0.0, 1.0)
    z = NormalDist().inv_cdf(0.5 + confidence / 2)
    p = errors / frames
    denom = 1 + z * z / frames
    centre = (p + z * z / (2 * frames)) / denom
    half = z * math.sqrt(p * (1 - p) / frames + z * z / (4 * frames * frames)) / denom
    # the endpoints at 0 and ``frames`` errors are exact; avoid rounding residue
    lo = 0.0 if errors == 0 else max(0.0, centre - half)
    hi = 1.0 if errors == frames else min(1.0, centre + half)
    return (lo, hi)


def snr_at_bler(snr_db, bler, target=TARGET_BLER, floor_frames=None):
    """SNR at which the BLER curve first crosses ``target``.

    Interpolates ``log10(BLER)`` linearly in dB between the two grid points
    that bracket the target. A zero BLER below the crossing is replaced by
    ``0.5 / floor_frames`` (half an error) when ``floor_frames`` is given
    and treated as unbracketed otherwise. Returns ``None`` when the target
    is not bracketed.
    """
    snr_db = np.asarray(snr_db, dtype=float)
    bler = np.asarray(bler, dtype=float)
    for i in range(len(snr_db) - 1):
        hi, lo = bler[i], bler[i + 1]
        if not (hi >= target > lo):
            continue
        if hi == target:
            return float(snr_db[i])
        if lo == 0:
            if not floor_frames:
                return None
            lo = 0.5 / floor_frames
        t = (math.log10(hi) - math.log10(target)) / (math.log10(hi) - math.log10(lo))
        return float(snr_db[i] + t * (snr_db[i + 1] - snr_db[i]))
    return None


# -- per-chunk simulation --------------------------------------------------

@dataclass(frozen=True)
class _Setup:
    link: str
    B: int
    U: int
    modulation: str
    subcarriers: int
    seed: int
    snr_db: tuple
    specs: tuple


def _draw(setup, trials, layout):
    """Per-trial draws stacked over the chunk, in a fixed per-trial order."""
    S, B, U = setup.subcarriers, setup.B, setup.U
    C = len(trials)
    noise_dim = B if setup.link == "uplink" else U
    H = np.empty((C, S, B, U), complex)
    noise = np.empty((C, S, noise_dim), complex)
    info = np.empty((C, U, layout.n_info), np.uint8)
    pad = np.empty((C, U, layout.n_pad), np.uint8)
    for c, t in enumerate(trials):
        rng = trial_rng(setup.seed, 0, t)
        H[c] = complex_normal(rng, (S, B, U))
        info[c] = rng.integers(0, 2, (U, layout.n_info), dtype=np.uint8)
        pad[c] = rng.integers(0, 2, (U, layout.n_pad), dtype=np.uint8)
        noise[c] = complex_normal(rng, (S, noise_dim))
    return H, info, pad, noise


def _interleaver(seed, layout):
    return make_interleaver(layout.capacity, trial_rng(seed, 1))


def _detect(spec, H, y, rho_u, N0, constellation, A, b, Gdiag, counter):
    if spec.method == "cholesky":
        return detect_cholesky(H, y, N0, 1.0, constellation, counter, A=A, b=b)
    if spec.method == "cg":
        return detect_cg(H, y, rho_u, N0, 1.0, constellation, spec.K, spec.tracker,
                         counter, on_breakdown="flag", A=A, b=b)
    if spec.method == "cgls":
        return detect_cgls(H, y, rho_u, N0, 1.0, constellation, spec.K, counter,
                           on_breakdown="flag", Gdiag=Gdiag)
    return detect_neumann(H, y, rho_u, N0, 1.0, constellation, spec.K, counter, A=A, b=b)


def _precode(spec, H_d, t, rho_d, A, counter):
    if spec.method == "cholesky":
        return precode_explicit(H_d, t, rho_d, counter, A=A)
    if spec.method == "cg":
        return precode_cg(H_d, t, rho_d, spec.K, counter, on_breakdown="flag", A=A)
    if spec.method == "cgls":
        return precode_cgls(H_d, t, rho_d, spec.K, counter, on_breakdown="flag")
    return precode_neumann(H_d, t, rho_d, spec.K, counter, A=A)


def _genie_gain(H_d, result, t):
    """Genie gain and interference variance for per-user soft demapping.

    User ``i`` rescales its sample by ``||q||`` to undo the power
    normalization, so it sees ``(H_d q)_i + ||q|| n_i``. The genie supplies
    the least-squares gain of ``(H_d q)_i`` onto the user's own symbols over
    all subcarriers and the residual interference variance.
    """
    Hq = matvec(H_d, result.q)          # (C, S, U)
    energy = np.sum(np.abs(t) ** 2, axis=-2)                     # (C, U)
    gain = np.sum(Hq * np.conj(t), axis=-2) / energy             # (C, U)
    interference = np.mean(np.abs(Hq - gain[..., None, :] * t) ** 2, axis=-2)
    return Hq, gain, interference


def _simulate_chunk(setup, trials, active):
    """Errors, frames, breakdowns and counts for every active (spec, snr) pair.

    Returns a dict keyed by ``(spec_index, snr_index)``.
    """
    constellation = make_constellation(setup.modulation)
    layout = FrameLayout(setup.subcarriers, constellation.bits_per_symbol)
    perm = _interleaver(setup.seed, layout)
    H, info, pad, noise = _draw(setup, trials, layout)
    frame = frame_assemble(info, pad, perm, constellation)
    x = np.swapaxes(constellation.points[frame.symbol_indices], -1, -2)  # (C, S, U)
    U = setup.U
    G = gram_regularized(H, 0.0)
    Gdiag = gram_diagonal(H) if any(sp.method == "cgls" for sp in setup.specs) else None
    idx = np.arange(U)
    if setup.link == "uplink":
        Hx = matvec(H, x)
        # H^H y = G x + sqrt(N0) H^H n, so the matched filter is shared by
        # all SNR points and methods
        Gx = matvec(G, x)
        Hn = adjoint_matvec(H, noise)
    else:
        H_d = np.conj(np.swapaxes(H, -1, -2))

    out = {}
    for j, snr_db in enumerate(setup.snr_db):
        todo = [i for i in range(len(setup.specs)) if (i, j) in active]
        if not todo:
            continue
        snr = 10.0 ** (snr_db / 10.0)
        rho = snr / U
        A = G.copy()
        A[..., idx, idx] += 1.0 / rho
        if setup.link == "uplink":
            N0 = U / snr
            y = Hx + math.sqrt(N0) * noise
            b = Gx + math.sqrt(N0) * Hn
        else:
            N0 = 1.0 / snr
        for i in todo:
            spec = setup.specs[i]
            counter = OpCounter()
            if setup.link == "uplink":
                soft = _detect(spec, H, y, rho, N0, constellation, A, b, Gdiag, counter)
                llrs = soft.llrs
                broken = soft.breakdown
            else:
                result = _precode(spec, H_d, x, rho, A, counter)
                Hq, gain, interference = _genie_gain(H_d, result, x)
                scale = result.gain[..., None]
                z = Hq + scale * math.sqrt(N0) * noise
                sinr = np.abs(gain[..., None, :]) ** 2 / (interference[..., None, :] + N0 * scale ** 2)
                llrs = compute_llrs(z, gain[..., None, :], sinr, constellation)
                broken = result.breakdown
            stream = frame_disassemble(np.swapaxes(llrs, -3, -2), perm, layout.n_coded)
            decoded = viterbi_decode_soft(stream)
            errors = np.any(decoded != info, axis=-1)                 # (C, U)
            bad = np.zeros(len(trials), bool) if broken is None else np.any(
                np.reshape(broken, (len(trials), -1)), axis=-1)
            out[(i, j)] = (
                int(np.sum(errors[~bad])),
                int(np.sum(~bad)) * U,
                int(np.sum(bad)),
                counter.total,
            )
    return out


def _chunks(cfg):
    per_trial = cfg.subcarriers * cfg.bs_antennas * cfg.users
    size = max(1, min(cfg.trials, _CHUNK_ENTRIES // per_trial))
    if cfg.max_errors is not None:
        # the error budget is checked between chunks
        size = min(size, _EARLY_STOP_CHUNK)
    return [range(s, min(s + size, cfg.trials)) for s in range(0, cfg.trials, size)]


def run_comparison(link, cfg: SweepConfig, specs) -> dict:
    """Simulate several methods on common random numbers.

    Returns ``{spec: SweepResult}``. Raises :class:`BreakdownBudgetExceeded`
    when the fraction of discarded trials at any point exceeds
    ``cfg.breakdown_budget``.
    """
    if link not in LINKS:
        raise ConfigError(f"link must be one of {LINKS}")
    specs = tuple(dict.fromkeys(specs))
    snr = tuple(float(s) for s in cfg.snr_grid)
    setup = _Setup(link, cfg.bs_antennas, cfg.users, cfg.modulation, cfg.subcarriers,
                   cfg.seed, snr, specs)
    keys = [(i, j) for i in range(len(specs)) for j in range(len(snr))]
    tally = {k: [0, 0, 0, 0, 0] for k in keys}  # errors, frames, breakdowns, mults, calls
    active = set(keys)
    chunks = _chunks(cfg)

    def fold(chunk_out):
        for k, (e, f, b, m) in chunk_out.items():
            if k not in active:
                continue
            t = tally[k]
            t[0] += e
            t[1] += f
            t[2] += b
            t[3] += m
            t[4] += 1
            if cfg.max_errors is not None and t[0] >= cfg.max_errors:
                active.discard(k)

    if cfg.workers == 1:
        for trials in chunks:
            if not active:
                break
            fold(_simulate_chunk(setup, trials, frozenset(active)))
    else:
        with ProcessPoolExecutor(cfg.workers) as pool:
            for start in range(0, len(chunks), cfg.workers):
                if not active:
                    break
                wave = chunks[start:start + cfg.workers]
                snapshot = frozenset(active)
                for chunk_out in pool.map(_simulate_chunk, [setup] * len(wave), wave,
                                          [snapshot] * len(wave)):
                    fold(chunk_out)

    results = {}
    worst = 0.0
    for i, spec in enumerate(specs):
        points = []
        for j, s in enumerate(snr):
            e, f, b, m, calls = tally[(i, j)]
            points.append(SweepPoint(s, f, e, m / calls if calls else 0.0, b))
            attempted = f // cfg.users + b
            if attempted:
                worst = max(worst, b / attempted)
        results[spec] = SweepResult(link, cfg, spec, points)
    if worst > cfg.breakdown_budget:
        raise BreakdownBudgetExceeded(
            f"{worst:.2%} of trials broke down (budget {cfg.breakdown_budget:.2%})", results)
    return results


def run_uplink_sweep(cfg: SweepConfig) -> SweepResult:
    """BLER versus SNR of the configured uplink detector."""
    return run_comparison("uplink", cfg, [cfg.method_spec])[cfg.method_spec]


def run_downlink_sweep(cfg: SweepConfig) -> SweepResult:
    """BLER versus SNR of the configured downlink precoder."""
    return run_comparison("downlink", cfg, [cfg.method_spec])[cfg.method_spec]


# -- trade-off and output --------------------------------------------------

@dataclass(frozen=True)
class TradeoffRow:
    label: str
    K: Optional[int]
    real_mults: int
    snr_db: Optional[float]


def tradeoff_table(results: dict, link="uplink") -> list:
    """Rows of (method, K, real multiplications, SNR at 10% BLER).

    ``results`` maps :class:`MethodSpec` to :class:`SweepResult`. The SNR is
    ``None`` when the BLER curve does not bracket 10%.
    """
    rows = []
    for spec, res in results.items():
        cfg = res.config
        rows.append(TradeoffRow(
            spec.label,
            None if spec.method == "cholesky" else spec.K,
            spec.real_mults(link, cfg.bs_antennas, cfg.users),
            res.snr_at(),
        ))
    return rows


def _metadata(cfg, link, spec):
    from . import __version__

    items = {k: v for k, v in asdict(cfg).items() if k not in ("out", "workers")}
    lines = [f"# cgmimo {__version__}", f"# link={link} method={spec.label}"]
    lines.append("# " + " ".join(f"{k}={v}" for k, v in items.items()))
    return lines


def write_csv(result: SweepResult, path=None) -> str:
    """Write the sweep as CSV (``#`` metadata lines, header, one row per SNR).

    Returns the text; writes it to ``path`` when given. The output contains
    no timestamps, so identical runs give identical files.
    """
    buf = io.StringIO()
    for line in _metadata(result.config, result.link, result.spec):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["snr_db", "frames", "block_errors", "bler", "bler_lo", "bler_hi",
                "real_mults_mean"])
    for p in result.points:
        lo, hi = p.interval
        w.writerow([f"{p.snr_db:g}", p.frames, p.block_errors, f"{p.bler:.6g}",
                    f"{lo:.6g}", f"{hi:.6g}", f"{p.real_mults_mean:g}"])
    text = buf.getvalue()
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def write_tradeoff_csv(rows, cfg: SweepConfig, link="uplink", path=None) -> str:
    buf = io.StringIO()
    for line in _metadata(cfg, link, MethodSpec(cfg.method, cfg.iterations, cfg.tracker)):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "K", "real_mults", "snr_db_at_10pct_bler"])
    for r in rows:
        w.writerow([r.label, "" if r.K is None else r.K, r.real_mults,
                    "n/a" if r.snr_db is None else f"{r.snr_db:.3f}"])
    text = buf.getvalue()
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def config_fields():
    """Names of the :class:`SweepConfig` fields, for config-file parsing."""
    return [f.name for f in fields(SweepConfig)]


def with_overrides(cfg: SweepConfig, **kw) -> SweepConfig:
    try:
        return replace(cfg, **kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
