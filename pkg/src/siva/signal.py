"""Measurement preprocessing: turn recorded accelerations into the aligned
(q, qd, qdd) channels the identification loop consumes.

Pipeline pieces: Butterworth IIR design (analog prototype, frequency
prewarping, bilinear transform), zero-phase forward-backward application,
trapezoid integration with high-pass drift correction, integer decimation
with a time shift, and a single-sided DFT magnitude report.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter, lfilter_zi

FILTER_KINDS = ("lowpass", "highpass", "bandpass")


@dataclass
class TimeSeries:
    """Uniformly sampled multichannel signal; data is (samples x channels)."""

    data: np.ndarray
    sample_rate: float
    start_time: float = 0.0

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2 or arr.shape[0] < 2:
            raise ValueError("time series needs at least 2 samples")
        if self.sample_rate <= 0.0:
            raise ValueError("sample_rate must be positive")
        self.data = arr

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return self.start_time + np.arange(self.n_samples) / self.sample_rate

    def with_data(self, data) -> "TimeSeries":
        return TimeSeries(data, self.sample_rate, self.start_time)


@dataclass(frozen=True)
class IirFilter:
    """Digital IIR filter; denominator normalized to lead with 1."""

    numerator: np.ndarray
    denominator: np.ndarray
    sample_rate: float

    def __post_init__(self):
        b = np.asarray(self.numerator, dtype=float)
        a = np.asarray(self.denominator, dtype=float)
        if a[0] != 1.0:
            b = b / a[0]
            a = a / a[0]
        object.__setattr__(self, "numerator", b)
        object.__setattr__(self, "denominator", a)

    @property
    def order(self) -> int:
        return max(self.numerator.size, self.denominator.size) - 1

    def poles(self) -> np.ndarray:
        return np.roots(self.denominator)

    def is_stable(self) -> bool:
        return bool(np.all(np.abs(self.poles()) < 1.0))

    def magnitude(self, freq_hz) -> np.ndarray:
        """|H| evaluated on the unit circle at the given frequencies."""
        w = 2.0 * np.pi * np.atleast_1d(np.asarray(freq_hz, float)) / self.sample_rate
        z = np.exp(1j * w)
        num = np.polyval(self.numerator, 1.0 / z) * z ** 0
        den = np.polyval(self.denominator, 1.0 / z)
        return np.abs(num / den)


def _real_poly(roots) -> np.ndarray:
    """Polynomial from a conjugate-closed root set, imaginary dust removed."""
    p = np.poly(roots)
    return np.real(p)


def design_butterworth(order: int, kind: str, cutoffs_hz, sample_rate: float) -> IirFilter:
    """Butterworth digital filter via the bilinear transform.

    The analog prototype poles are placed on the unit circle, cutoffs are
    prewarped so the digital response matches at the band edges, and the
    band transforms (LP->LP / LP->HP / LP->BP) are applied analytically
    before mapping to z. Gain is normalized in the passband (DC for
    lowpass, Nyquist for highpass, the geometric center for bandpass).
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    if kind not in FILTER_KINDS:
        raise ValueError(f"kind must be one of {FILTER_KINDS}")
    cut = np.atleast_1d(np.asarray(cutoffs_hz, dtype=float))
    nyq = sample_rate / 2.0
    if np.any(cut <= 0.0) or np.any(cut >= nyq):
        raise ValueError("cutoffs must satisfy 0 < f < sample_rate/2")
    if kind == "bandpass":
        if cut.size != 2 or cut[0] >= cut[1]:
            raise ValueError("bandpass needs two ordered cutoffs")
    elif cut.size != 1:
        raise ValueError(f"{kind} needs a single cutoff")

    # analog prototype: unit-cutoff lowpass, poles on the left unit circle
    k = np.arange(1, order + 1)
    proto = np.exp(1j * np.pi * (2 * k + order - 1) / (2 * order))

    fs2 = 2.0 * sample_rate
    warped = fs2 * np.tan(np.pi * cut / sample_rate)

    if kind == "lowpass":
        poles = proto * warped[0]
        zeros = np.array([])
    elif kind == "highpass":
        poles = warped[0] / proto
        zeros = np.zeros(order)
    else:
        bw = warped[1] - warped[0]
        w0sq = warped[0] * warped[1]
        half = proto * bw / 2.0
        disc = np.sqrt(half**2 - w0sq + 0j)
        poles = np.concatenate([half + disc, half - disc])
        zeros = np.zeros(order)

    # bilinear map s -> z; every missing zero lands at z = -1
    zp = (fs2 + poles) / (fs2 - poles)
    zz = (fs2 + zeros) / (fs2 - zeros)
    zz = np.concatenate([zz, -np.ones(poles.size - zeros.size)])

    b = _real_poly(zz)
    a = _real_poly(zp)

    if kind == "lowpass":
        ref = np.array([0.0])
    elif kind == "highpass":
        ref = np.array([nyq])
    else:
        # digital frequency whose prewarped analog image is the center
        ref = np.array([np.arctan(np.sqrt(w0sq) / fs2) * sample_rate / np.pi])
    filt = IirFilter(b, a, sample_rate)
    gain = filt.magnitude(ref)[0]
    return IirFilter(b / gain, a, sample_rate)


def zero_phase_filter(filt: IirFilter, series: TimeSeries) -> TimeSeries:
    """Forward-backward application of the filter (zero net phase, |H|^2
    magnitude). Edges are odd-reflection padded by 3*(order+1) samples and
    each pass starts from the step steady state of its first value."""
    if filt.sample_rate != series.sample_rate:
        raise ValueError("filter was designed for a different sample rate")
    pad = 3 * (filt.order + 1)
    if series.n_samples <= pad:
        raise ValueError(f"series too short: need more than {pad} samples")
    b, a = filt.numerator, filt.denominator
    zi = lfilter_zi(b, a)
    out = np.empty_like(series.data)
    for ch in range(series.n_channels):
        x = series.data[:, ch]
        ext = np.concatenate(
            [2.0 * x[0] - x[pad:0:-1], x, 2.0 * x[-1] - x[-2 : -pad - 2 : -1]]
        )
        y, _ = lfilter(b, a, ext, zi=zi * ext[0])
        y = y[::-1]
        y, _ = lfilter(b, a, y, zi=zi * y[0])
        y = y[::-1]
        out[:, ch] = y[pad:-pad]
    return series.with_data(out)


def cumulative_integral(series: TimeSeries) -> TimeSeries:
    """Cumulative trapezoid with zero initial value (m/s^2 -> m/s, etc.)."""
    x = series.data
    accum = np.zeros_like(x)
    accum[1:] = np.cumsum(0.5 * (x[1:] + x[:-1]) * series.dt, axis=0)
    return series.with_data(accum)


def derive_states(accel: TimeSeries, band_hz=(4.0, 50.0), highpass_hz: float = 3.0,
                  order: int = 3):
    """Band-pass the accelerations, then integrate twice with a zero-phase
    high-pass after each integration to remove drift.

    Returns (disp, vel, accel_filtered).
    """
    if accel.sample_rate <= 2.0 * band_hz[1]:
        raise ValueError("sample rate must exceed twice the upper band edge")
    bp = design_butterworth(order, "bandpass", band_hz, accel.sample_rate)
    hp = design_butterworth(order, "highpass", highpass_hz, accel.sample_rate)
    accel_f = zero_phase_filter(bp, accel)
    vel = zero_phase_filter(hp, cumulative_integral(accel_f))
    disp = zero_phase_filter(hp, cumulative_integral(vel))
    return disp, vel, accel_f


def resample_and_trim(series: TimeSeries, target_rate: float, start_at: float = 0.0) -> TimeSeries:
    """Keep every k-th sample (k = sample_rate/target_rate, must be integer)
    from the first sample at or after `start_at`; start_time rebases to 0.
    Pure decimation: kept samples are bit-identical to the input."""
    ratio = series.sample_rate / target_rate
    k = int(round(ratio))
    if abs(ratio - k) > 1e-9 or k < 1:
        raise ValueError(
            f"sample rate {series.sample_rate} not an integer multiple of {target_rate}"
        )
    rel = (start_at - series.start_time) * series.sample_rate
    first = int(np.ceil(rel - 1e-9))
    if first < 0 or first >= series.n_samples:
        raise ValueError("start_at outside the series")
    data = series.data[first::k]
    if data.shape[0] < 2:
        raise ValueError("fewer than 2 samples remain after trimming")
    return TimeSeries(data.copy(), target_rate, 0.0)


def dft_magnitude(series: TimeSeries):
    """Single-sided amplitude spectrum.

    Scaling: 2*|X_k|/N (1*|X_k|/N at DC and Nyquist) so a unit-amplitude
    sinusoid on an exact bin peaks at 1. Returns (freqs_hz, magnitudes).
    """
    n = series.n_samples
    spec = np.fft.rfft(series.data, axis=0)
    mags = np.abs(spec) * 2.0 / n
    mags[0] /= 2.0
    if n % 2 == 0:
        mags[-1] /= 2.0
    freqs = np.fft.rfftfreq(n, d=series.dt)
    return freqs, mags


# ---------------------------------------------------------------------------
# CSV time-series format: header `t,ch1,ch2,...`, comma separator, 17
# significant digits, column 1 = seconds on a uniform grid.


def write_timeseries_csv(path, series: TimeSeries):
    t = series.times
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"ch{i + 1}" for i in range(series.n_channels)])
        for i in range(series.n_samples):
            writer.writerow(
                [f"{t[i]:.17g}"] + [f"{v:.17g}" for v in series.data[i]]
            )


def read_timeseries_csv(path) -> TimeSeries:
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if raw.shape[0] < 2 or raw.shape[1] < 2:
        raise ValueError(f"{path}: need >= 2 rows and a time plus data column")
    t = raw[:, 0]
    dt = np.diff(t)
    if np.any(dt <= 0) or np.max(np.abs(dt - dt.mean())) > 1e-6 * dt.mean():
        raise ValueError(f"{path}: time column is not uniformly spaced")
    return TimeSeries(raw[:, 1:], 1.0 / dt.mean(), float(t[0]))
