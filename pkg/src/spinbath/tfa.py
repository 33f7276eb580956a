"""Correlation normalization, periodogram, bump-wavelet CWT and the
synchrosqueezed transform, with band summation utilities.

Signals arrive on the normalized time grid tbar, so every frequency below is
already the normalized angular frequency omega_bar.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cce import CorrelationSeries


class TFAError(ValueError):
    pass


@dataclass(frozen=True)
class BumpParams:
    """Fourier-domain bump window: center mu, half-width sigma. mu > sigma
    keeps omega = 0 outside the support, so the wavelet has zero mean."""
    mu: float = 5.0
    sigma: float = 0.6

    def __post_init__(self):
        if not self.mu > self.sigma > 0:
            raise TFAError(f"bump parameters need mu > sigma > 0, got mu={self.mu}, sigma={self.sigma}")


@dataclass
class Spectrum:
    omega_bar: np.ndarray
    power: np.ndarray


@dataclass
class Scalogram:
    scales: np.ndarray          # ascending scale = descending frequency
    center_freqs: np.ndarray    # mu / a, per scale
    times_tbar: np.ndarray
    coeffs: np.ndarray          # (n_scales, n_times) complex
    dcoeffs: np.ndarray         # time derivative d/db of coeffs
    params: BumpParams
    metadata: dict = field(default_factory=dict)


@dataclass
class SSTMap:
    freq_bins: np.ndarray       # ascending omega_bar bins (log-spaced)
    times_tbar: np.ndarray
    coeffs: np.ndarray          # (n_bins, n_times) complex
    threshold_gamma: float
    metadata: dict = field(default_factory=dict)


def normalize_correlation(series: CorrelationSeries) -> CorrelationSeries:
    """Shift to zero time-mean and rescale so the t = 0 value is exactly 1."""
    v = series.values
    mean = v.mean()
    denom = v[0] - mean
    if abs(denom) <= 1e-14 * max(abs(v[0]), 1e-300):
        raise TFAError("degenerate correlation series: C(0) equals its time mean")
    md = dict(series.metadata)
    md["normalized"] = True
    return CorrelationSeries(times_tbar=series.times_tbar.copy(),
                             values=(v - mean) / denom, metadata=md)


def power_spectrum(series: CorrelationSeries, zero_pad_factor: int = 1) -> Spectrum:
    """One-sided rectangular-window periodogram |FFT|^2 of the (zero-padded)
    series, frequency axis in omega_bar."""
    v = series.values
    n = len(v) * max(1, int(zero_pad_factor))
    spec = np.fft.rfft(v, n)
    omega = 2.0 * np.pi * np.fft.rfftfreq(n, series.dt)
    return Spectrum(omega_bar=omega, power=np.abs(spec) ** 2)


def _bump_window(xi: np.ndarray, p: BumpParams) -> np.ndarray:
    """exp(1 - 1/(1 - u^2)) on |u| < 1 with u = (xi - mu)/sigma, else 0."""
    u = (xi - p.mu) / p.sigma
    out = np.zeros_like(xi)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ui * ui))
    return out


def default_scales(n: int, dt: float, params: BumpParams,
                   voices_per_octave: int = 32) -> np.ndarray:
    """Log2-spaced scales spanning wavelet periods from 2*dt up to half the
    series duration."""
    a_min = params.mu * dt / np.pi                 # center freq at Nyquist
    a_max = params.mu * (n * dt) / (4.0 * np.pi)   # period = duration / 2
    n_oct = np.log2(a_max / a_min)
    if n_oct <= 0:
        raise TFAError("series too short for the requested scale range")
    k = np.arange(int(np.ceil(n_oct * voices_per_octave)) + 1)
    return a_min * 2.0 ** (k / voices_per_octave)


def cwt_bump(x: np.ndarray, dt: float, params: BumpParams = BumpParams(),
             voices_per_octave: int = 32,
             scales: np.ndarray | None = None) -> Scalogram:
    """Bump-wavelet CWT evaluated in the Fourier domain.

    Per scale a the row is ifft(xhat(w) * sqrt(a) * bump(a w)); the bump
    support lies at positive frequencies only, so the transform is analytic
    for real input. The time derivative (spectral, exact for the band-limited
    kernel) is stored alongside for synchrosqueezing. Input is zero-padded to
    the next power of two.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if scales is None:
        scales = default_scales(n, dt, params, voices_per_octave)
    scales = np.asarray(scales, dtype=float)
    # pad far enough that the narrowest bump (largest scale) still covers at
    # least two FFT bins: resolution 2 pi / (npad dt) <= sigma / a_max
    need = max(n, int(np.ceil(2.0 * np.pi * scales.max() / (params.sigma * dt))))
    need = min(need, 16 * n)        # absurd scales still fail the support check
    npad = 1 << int(np.ceil(np.log2(need)))
    X = np.fft.fft(x, npad)
    omega = 2.0 * np.pi * np.fft.fftfreq(npad, dt)
    W = np.empty((len(scales), n), dtype=complex)
    dW = np.empty_like(W)
    for i, a in enumerate(scales):
        win = np.sqrt(a) * _bump_window(a * omega, params)
        if not win.any():
            raise TFAError(f"scale {a} has empty bump support inside the sampled band")
        W[i] = np.fft.ifft(X * win)[:n]
        dW[i] = np.fft.ifft(X * win * 1j * omega)[:n]
    # approximate edge-effect halfwidth per scale, in samples
    coi = np.minimum(np.ceil(2.0 * np.pi * scales / (params.sigma * dt)), n).astype(int)
    return Scalogram(scales=scales, center_freqs=params.mu / scales,
                     times_tbar=np.arange(n) * dt, coeffs=W, dcoeffs=dW,
                     params=params,
                     metadata={"voices_per_octave": voices_per_octave,
                               "coi_halfwidth_samples": coi})


def synchrosqueeze(scalogram: Scalogram, gamma: float = 1e-8) -> SSTMap:
    """Reassign CWT coefficients to instantaneous-frequency bins.

    The phase-transform frequency is Re(-i dW/W) wherever |W| exceeds
    gamma * max|W|; each retained cell contributes W * a^(-3/2) * da to the
    nearest log-spaced frequency bin (the scale grid's own center
    frequencies).
    """
    if gamma < 0:
        raise TFAError("gamma must be nonnegative")
    W = scalogram.coeffs
    absW = np.abs(W)
    thr = gamma * absW.max() if absW.size else 0.0
    sel = absW > thr

    w_inst = np.full(W.shape, np.nan)
    w_inst[sel] = np.real(-1j * scalogram.dcoeffs[sel] / W[sel])

    freqs = scalogram.center_freqs[::-1]            # ascending
    log_f = np.log2(freqs)
    dlog = (log_f[-1] - log_f[0]) / max(len(freqs) - 1, 1)
    a = scalogram.scales
    da = np.gradient(a)
    mass = W * (a ** -1.5 * da)[:, None]

    T = np.zeros((len(freqs), W.shape[1]), dtype=complex)
    valid = sel & (w_inst > 0)
    rows, cols = np.nonzero(valid)
    idx = np.rint((np.log2(w_inst[valid]) - log_f[0]) / dlog).astype(int)
    keep = (idx >= 0) & (idx < len(freqs))
    np.add.at(T, (idx[keep], cols[keep]), mass[rows[keep], cols[keep]])
    return SSTMap(freq_bins=freqs, times_tbar=scalogram.times_tbar, coeffs=T,
                  threshold_gamma=float(gamma),
                  metadata=dict(scalogram.metadata))


def band_amplitude(obj, omega_lo: float, omega_hi: float) -> np.ndarray:
    """Per-time-sample sum of |coefficients| over a frequency band."""
    if isinstance(obj, Scalogram):
        freqs = obj.center_freqs
    elif isinstance(obj, SSTMap):
        freqs = obj.freq_bins
    else:
        raise TFAError(f"unsupported map type {type(obj).__name__}")
    sel = (freqs >= omega_lo) & (freqs <= omega_hi)
    if not sel.any():
        raise TFAError(f"no frequency rows inside band [{omega_lo}, {omega_hi}]")
    return np.abs(obj.coeffs[sel]).sum(axis=0)


# ---------------------------------------------------------------------------
# exports

def save_spectrum(path, spec: Spectrum) -> None:
    with open(path, "w") as fh:
        fh.write("# omega_bar,power\n")
        for w, p in zip(spec.omega_bar, spec.power):
            fh.write(f"{w:.16e},{p:.16e}\n")


def save_map(prefix, obj) -> list:
    """Binary modulus matrix (little-endian float64, row-major) plus a text
    sidecar with the grids and a long-form (omega_bar, tbar, modulus) table.
    Returns the list of files written."""
    if isinstance(obj, Scalogram):
        freqs, kind = obj.center_freqs, "cwt"
    else:
        freqs, kind = obj.freq_bins, "sst"
    mod = np.abs(obj.coeffs)
    bin_path = f"{prefix}.bin"
    meta_path = f"{prefix}.meta.txt"
    table_path = f"{prefix}.table.txt"
    mod.astype("<f8").tofile(bin_path)
    with open(meta_path, "w") as fh:
        fh.write(f"# kind = {kind}\n")
        fh.write(f"# shape = {mod.shape[0]} {mod.shape[1]}\n")
        for k, v in sorted(obj.metadata.items()):
            if isinstance(v, np.ndarray):
                continue
            fh.write(f"# {k} = {v}\n")
        fh.write("# omega_bar rows:\n")
        fh.write(",".join(f"{f:.16e}" for f in freqs) + "\n")
        fh.write("# tbar columns:\n")
        fh.write(",".join(f"{t:.16e}" for t in obj.times_tbar) + "\n")
    with open(table_path, "w") as fh:
        fh.write("# omega_bar,tbar,modulus\n")
        for i, f in enumerate(freqs):
            row = mod[i]
            for j, t in enumerate(obj.times_tbar):
                fh.write(f"{f:.16e},{t:.16e},{row[j]:.16e}\n")
    return [bin_path, meta_path, table_path]
