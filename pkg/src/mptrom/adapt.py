"""Greedy adaptive snapshot selection driven by the tensor certificates."""

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .certify import ResidualFactorization, certify_sweep, estimate_alpha_lb
from .errors import EmptyInterval, EmptyIntervalWarning, NoCandidates
from .mpt import MptTensor, SpectralSignature, compute_N0
from .pod import PodRom, batched_online_solve, mm_blocks_batched


@dataclass(frozen=True)
class AdaptConfig:
    tol_delta: float = 1e-3
    n_star: int = 2
    max_k: int = 4
    theta: float = None
    output_frequencies: np.ndarray = None
    normalization: str = "physical_volume"
    window: tuple = None  # (omega_lo, omega_hi) restricting certification

    def __post_init__(self):
        if not self.tol_delta > 0:
            raise ValueError("tol_delta must be positive")
        if int(self.n_star) != self.n_star or self.n_star < 1:
            raise ValueError("n_star must be a positive integer")
        if int(self.max_k) != self.max_k or self.max_k <= 1:
            raise ValueError("max_k must be an integer > 1")
        if self.theta is not None and not 0.0 < self.theta <= 1.0:
            raise ValueError("theta must lie in (0, 1]")
        if self.normalization not in ("physical_volume", "unit_volume"):
            raise ValueError(f"unknown normalization {self.normalization!r}")


@dataclass(frozen=True)
class IntervalError:
    index: int
    lo: float
    hi: float
    value: float
    argmax: float


@dataclass
class AdaptState:
    snapshot_frequencies: np.ndarray
    records: list = field(default_factory=list)
    k: int = 1
    stopped_reason: str = None
    alpha_lb: float = None
    signatures: dict = field(default_factory=dict, repr=False)

    def to_dict(self):
        return {
            "iterations": [
                {
                    "k": r["k"],
                    "N": r["N"],
                    "M": list(r["M"]),
                    "lambda": r["lambda"],
                    "lambda_normalized": r["lambda_normalized"],
                    "new_omegas": list(r["new_omegas"]),
                }
                for r in self.records
            ],
            "stopped_reason": self.stopped_reason,
            "alpha_lb": self.alpha_lb,
            "snapshot_frequencies": [float(w) for w in self.snapshot_frequencies],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"


def interval_max_errors(grid, certificates, snapshot_frequencies):
    """Largest certificate entry per snapshot interval.

    Intervals are half open, [w_n, w_n+1), except the last, which also
    contains w_N. Intervals without grid points are skipped with a warning.
    """
    grid = np.asarray(grid, dtype=float)
    vals = np.array([np.max(c) for c in certificates])
    snaps = np.asarray(snapshot_frequencies, dtype=float)
    if len(snaps) < 2:
        raise ValueError("at least two snapshot frequencies are needed to form intervals")
    out = []
    last = len(snaps) - 2
    for n in range(len(snaps) - 1):
        lo, hi = snaps[n], snaps[n + 1]
        mask = (grid >= lo) & ((grid <= hi) if n == last else (grid < hi))
        if not np.any(mask):
            warnings.warn(f"no output frequency in [{lo:g}, {hi:g})", EmptyIntervalWarning, stacklevel=2)
            continue
        idx = np.flatnonzero(mask)
        k = idx[int(np.argmax(vals[idx]))]
        out.append(IntervalError(n, float(lo), float(hi), float(vals[k]), float(grid[k])))
    if not out:
        raise EmptyInterval("no snapshot interval contains an output frequency")
    return out


def select_new_snapshots(intervals, existing, n_star=2, theta=None):
    """Argmax frequencies of the worst intervals, at most one per interval."""
    if not intervals:
        raise NoCandidates("no intervals to choose from")
    lam = max(iv.value for iv in intervals)
    ranked = sorted(intervals, key=lambda iv: (-iv.value, iv.index))
    if theta is not None:
        ranked = [iv for iv in ranked if iv.value >= theta * lam]
    existing = set(float(w) for w in existing)
    chosen = []
    limit = len(ranked) if theta is not None else n_star
    for iv in ranked:
        if len(chosen) >= limit:
            break
        w = iv.argmax
        if w in existing:
            # argmax sits on a snapshot: fall back to the interval log-midpoint
            w = float(np.sqrt(iv.lo * iv.hi))
            if w in existing:
                continue
        chosen.append(w)
        existing.add(w)
    if not chosen:
        raise NoCandidates("every candidate frequency is already a snapshot")
    return sorted(chosen)


def _volume(fom, normalization):
    if normalization == "physical_volume":
        return fom.volume_B_alpha
    return fom.volume_B_alpha / fom.materials.alpha ** 3


def certified_signature(rom, fac, stability, freqs):
    """MM tensors and certificates over ``freqs``."""
    freqs = np.asarray(freqs, dtype=float)
    P = batched_online_solve(rom.ops, freqs)
    R, I = mm_blocks_batched(rom.pre, P, freqs)
    N0 = compute_N0(rom.fom)
    tensors = [MptTensor(w, N0, R[n], I[n]) for n, w in enumerate(freqs)]
    certs = certify_sweep(rom, fac, stability, freqs)
    return SpectralSignature(freqs, tensors, "MM", certs)


def _window_mask(freqs, window):
    if window is None:
        return np.ones(len(freqs), dtype=bool)
    lo, hi = window
    return (freqs >= lo) & (freqs <= hi)


def run_adaptive(
    fom,
    initial_frequencies,
    config,
    tol_sigma=1e-6,
    rel_tol=1e-8,
    stability=None,
    norm="primal",
    parallel=1,
    probe_frequencies=None,
):
    """Algorithm: certify on the output grid, stop or add snapshots, repeat.

    Returns (rom, final certified signature, AdaptState).
    """
    grid = np.asarray(config.output_frequencies, dtype=float)
    if grid.ndim != 1 or len(grid) == 0:
        raise ValueError("output_frequencies must be a non-empty list")
    rom = PodRom.build(fom, initial_frequencies, tol_sigma, rel_tol, parallel)
    if stability is None:
        probes = probe_frequencies
        if probes is None:
            probes = np.geomspace(grid[0], grid[-1], 5)
        stability = estimate_alpha_lb(fom, probes)
    vol = _volume(fom, config.normalization)
    mask = _window_mask(grid, config.window)
    state = AdaptState(rom.snapshots.frequencies.copy(), alpha_lb=stability.alpha_lb)

    k = 1
    while True:
        fac = ResidualFactorization(fom, rom.basis, norm)
        sig = certified_signature(rom, fac, stability, grid)
        state.signatures[k] = sig
        intervals = interval_max_errors(
            grid[mask], [c for c, m in zip(sig.certificates, mask) if m], rom.snapshots.frequencies
        )
        lam = max(iv.value for iv in intervals)
        record = {
            "k": k,
            "N": rom.snapshots.N,
            "M": rom.M,
            "lambda": lam,
            "lambda_normalized": lam / vol,
            "new_omegas": [],
        }
        state.records.append(record)
        if lam / vol <= config.tol_delta:
            state.stopped_reason = "tolerance"
            break
        if k >= config.max_k:
            state.stopped_reason = "max_k"
            break
        new = select_new_snapshots(intervals, rom.snapshots.frequencies, config.n_star, config.theta)
        record["new_omegas"] = new
        rom.add_snapshots(new, parallel)
        k += 1
    state.k = k
    state.snapshot_frequencies = rom.snapshots.frequencies.copy()
    return rom, state.signatures[k], state


def window_lambda(sig, snapshot_frequencies, window=None):
    grid = sig.frequencies
    mask = _window_mask(grid, window)
    intervals = interval_max_errors(
        grid[mask], [c for c, m in zip(sig.certificates, mask) if m], snapshot_frequencies
    )
    return max(iv.value for iv in intervals)


def compare_log_vs_adaptive(
    fom, initial_frequencies, config, tol_sigma=1e-6, rel_tol=1e-8, stability=None, norm="primal", parallel=1
):
    """Rows (N, Lambda_log, Lambda_adapt) over the adaptive N sequence."""
    rom, _, state = run_adaptive(
        fom, initial_frequencies, config, tol_sigma, rel_tol, stability, norm, parallel
    )
    if stability is None:
        from .certify import StabilityConstant

        stability = StabilityConstant(state.alpha_lb, "eigen_estimated")
    lo, hi = float(np.min(initial_frequencies)), float(np.max(initial_frequencies))
    rows = []
    for rec in state.records:
        N = rec["N"]
        log_rom = PodRom.build(fom, np.geomspace(lo, hi, N), tol_sigma, rel_tol, parallel)
        fac = ResidualFactorization(fom, log_rom.basis, norm)
        sig = certified_signature(log_rom, fac, stability, config.output_frequencies)
        lam_log = window_lambda(sig, log_rom.snapshots.frequencies, config.window)
        rows.append({"N": N, "lambda_log": lam_log, "lambda_adapt": rec["lambda"]})
    return rows, state
