"""Optical pumping metrics and Monte-Carlo single-shot nuclear readout.

Pumping: polarization-rate and saturation-linewidth laws plus the
initialization-fidelity extraction from time-binned fluorescence of a pump
pulse.  Readout: a per-block Markov chain over the nuclear state (bright /
dark, with an off-resonant branch) whose aggregated window counts are
classified against a photon threshold.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import fitting


class FitFailed(RuntimeError):
    """Extraction fit did not describe the data."""


# --------------------------------------------------------------------------
# pumping laws


@dataclass(frozen=True)
class PumpParams:
    """Zero-power linewidth gamma0 (Hz), cyclicity eta, saturation s, pulse length (s)."""

    gamma0: float
    eta: float
    s: float
    t_pulse: float = 0.0

    def __post_init__(self):
        for name in ("gamma0", "eta", "s", "t_pulse"):
            if getattr(self, name) < 0:
                raise ValueError("%s must be >= 0" % name)


def polarization_rate(p: PumpParams) -> float:
    """Spin-pumping rate Gamma_0 / (2 eta) * s / (1 + s) in Hz."""
    return p.gamma0 / (2.0 * p.eta) * p.s / (1.0 + p.s)


def saturation_linewidth(s, gamma0_opt):
    """Power-broadened optical linewidth gamma0 * sqrt(1 + s) in Hz."""
    s = np.asarray(s, dtype=float)
    if (s < 0).any():
        raise ValueError("saturation parameter must be >= 0")
    out = gamma0_opt * np.sqrt(1.0 + s)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# pump-pulse fluorescence metrics


@dataclass
class PulseMetrics:
    amplitude: float
    steady_state: float
    t_p: float
    fidelity: float
    per_pulse: Optional[List["PulseMetrics"]] = None


def _fit_exponential(t, y, t_bounds=None, nss_bounds=None):
    inf = math.inf
    spec = fitting.ModelSpec("pump_decay", (
        fitting.ParamSpec("a"),
        fitting.ParamSpec("t", "s", t_bounds or (1e-300, inf)),
        fitting.ParamSpec("c", "", nss_bounds or (0.0, inf))),
        lambda x, a, tc, c: a * np.exp(-x / tc) + c,
        lambda x, yy: {"a": yy[0] - yy[-1],
                       "t": fitting._decay_scale(x, yy),
                       "c": max(yy[-1], 1e-9)})
    return fitting.least_squares(spec, t, y)


def extract_pulse_metrics(counts_trace, bin_time=1.0, fail_threshold=0.5):
    """Initialization-fidelity metrics from time-binned pump fluorescence.

    Fits a * exp(-t / T_p) + n_ss and reports fidelity a / (a + n_ss).  A 2-D
    trace (pulses x bins) is fit collectively on the pulse average first; the
    per-pulse fits then constrain T_p and n_ss to +-3 sigma of the collective
    values.  Raises FitFailed when the residual norm exceeds fail_threshold
    of the data's centered norm.
    """
    trace = np.asarray(counts_trace, dtype=float)
    collective = trace.mean(axis=0) if trace.ndim == 2 else trace
    if collective.size < 10:
        raise ValueError("need at least 10 time bins")
    t = np.arange(collective.size) * bin_time

    res = _fit_exponential(t, collective)
    scale = np.linalg.norm(collective - collective.mean())
    if scale > 0 and res.residual_norm > fail_threshold * scale:
        raise FitFailed("pump-decay fit residual %.3g exceeds threshold"
                        % res.residual_norm)
    a, t_p, n_ss = res["a"], res["t"], res["c"]
    a_pos = max(a, 0.0)
    fidelity = a_pos / (a_pos + n_ss) if (a_pos + n_ss) > 0 else 0.0
    metrics = PulseMetrics(a, n_ss, t_p, fidelity)

    if trace.ndim == 2:
        s_t, s_n = res.error("t"), res.error("c")
        t_b = (max(t_p - 3 * s_t, 1e-300), t_p + 3 * max(s_t, 1e-12 * t_p))
        n_b = (max(n_ss - 3 * s_n, 0.0), n_ss + 3 * max(s_n, 1e-12 * max(n_ss, 1.0)))
        metrics.per_pulse = []
        for row in trace:
            r = _fit_exponential(t, row, t_bounds=t_b, nss_bounds=n_b)
            ap = max(r["a"], 0.0)
            fid = ap / (ap + r["c"]) if (ap + r["c"]) > 0 else 0.0
            metrics.per_pulse.append(PulseMetrics(r["a"], r["c"], r["t"], fid))
    return metrics


# --------------------------------------------------------------------------
# single-shot readout


@dataclass(frozen=True)
class SsrConfig:
    """Blocked readout window: N_SSR pump + gate blocks aggregated to one count."""

    n_blocks: int = 280
    t_block: float = 3e-3 / 280
    mean_bright: float = 32.0
    mean_dark: float = 10.0
    p_offres: float = 0.07
    t_pol_n: float = 41.6178057e-3
    threshold: int = 21
    seed: int = 0

    def __post_init__(self):
        if self.n_blocks < 1:
            raise ValueError("n_blocks must be >= 1")
        if not self.t_block > 0:
            raise ValueError("t_block must be > 0")
        if not self.mean_bright > self.mean_dark or self.mean_dark < 0:
            raise ValueError("need mean_bright > mean_dark >= 0")
        if not 0.0 <= self.p_offres < 1.0:
            raise ValueError("p_offres must lie in [0, 1)")
        if not self.t_pol_n > 0:
            raise ValueError("t_pol_n must be > 0")
        if self.threshold < 0:
            raise ValueError("threshold must be >= 0")

    @property
    def t_window(self):
        return self.n_blocks * self.t_block


@dataclass
class PhotonRecord:
    """Per-shot aggregated window counts with latent-state bookkeeping."""

    counts: np.ndarray
    initial_state: np.ndarray   # 'bright' | 'dark' | 'offres'
    final_state: np.ndarray     # 'bright' | 'dark' (nuclear state after the window)

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if (self.counts < 0).any() or not np.isfinite(self.counts.astype(float)).all():
            raise ValueError("counts must be finite and >= 0")
        if not (len(self.counts) == len(self.initial_state) == len(self.final_state)):
            raise ValueError("record arrays must have equal length")

    def __len__(self):
        return len(self.counts)


def simulate_ssr(c: SsrConfig, initial_nuclear="bright", n_shots=1) -> PhotonRecord:
    """Monte-Carlo single-shot readout windows.

    Per shot: with probability p_offres the emitter is off-resonant for the
    whole window and emits nothing while the nuclear state idles.  Otherwise a
    bright nucleus emits Poisson(mean_bright / n_blocks) per block until it
    flips (per-block flip probability 1 - exp(-t_block / t_pol_n)), after
    which the dark rate applies; a dark nucleus is absorbing and the window
    aggregates to Poisson(mean_dark).  initial_nuclear: 'bright' | 'dark' |
    'alternate' (even shots bright).  Reproducible from c.seed.
    """
    if initial_nuclear not in ("bright", "dark", "alternate"):
        raise ValueError("initial_nuclear must be 'bright', 'dark' or 'alternate'")
    p_flip = -math.expm1(-c.t_block / c.t_pol_n)
    lam_b = c.mean_bright / c.n_blocks
    lam_d = c.mean_dark / c.n_blocks

    counts = np.zeros(n_shots, dtype=np.int64)
    initial = np.empty(n_shots, dtype=object)
    final = np.empty(n_shots, dtype=object)
    for i in range(n_shots):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=c.seed, spawn_key=(i,)))
        bright0 = initial_nuclear == "bright" or (
            initial_nuclear == "alternate" and i % 2 == 0)
        if rng.random() < c.p_offres:
            initial[i] = "offres"
            final[i] = "bright" if bright0 else "dark"
            counts[i] = 0
            continue
        initial[i] = "bright" if bright0 else "dark"
        if not bright0:
            counts[i] = rng.poisson(c.mean_dark)
            final[i] = "dark"
            continue
        # block index at whose end the nucleus flips (1-based)
        g = rng.geometric(p_flip) if p_flip > 0 else c.n_blocks + 1
        n_bright = min(g, c.n_blocks)
        counts[i] = rng.poisson(lam_b * n_bright + lam_d * (c.n_blocks - n_bright))
        final[i] = "bright" if g > c.n_blocks else "dark"
    return PhotonRecord(counts, initial, final)


@dataclass
class ClassifyResult:
    labels: np.ndarray
    fidelity_bright: float
    fidelity_dark: float
    posterior_bright: float
    posterior_dark: float
    equal_threshold: int


def _class_fidelities(record: PhotonRecord, threshold):
    labels = record.counts > threshold
    b0 = record.initial_state == "bright"
    d0 = record.initial_state == "dark"
    f_b = float(np.mean(labels[b0])) if b0.any() else math.nan
    f_d = float(np.mean(~labels[d0])) if d0.any() else math.nan
    return labels, f_b, f_d


def classify_threshold(record: PhotonRecord, threshold) -> ClassifyResult:
    """Threshold classification with per-class fidelities.

    Labels a shot bright when its window count exceeds the threshold.
    fidelity_* condition on the prepared (latent) state; posterior_* condition
    on the assigned label and ask whether the nuclear state at the end of the
    window matches it (the quantity a post-selected experiment inherits).
    Also reports the integer threshold equalizing the two per-class
    fidelities.
    """
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    labels, f_b, f_d = _class_fidelities(record, threshold)
    final_bright = record.final_state == "bright"
    p_b = float(np.mean(final_bright[labels])) if labels.any() else math.nan
    p_d = float(np.mean(~final_bright[~labels])) if (~labels).any() else math.nan

    best, best_gap = int(threshold), math.inf
    for thr in range(int(record.counts.max()) + 1):
        _, fb, fd = _class_fidelities(record, thr)
        gap = abs(fb - fd)
        if math.isfinite(gap) and gap < best_gap:
            best, best_gap = thr, gap
    return ClassifyResult(labels, f_b, f_d, p_b, p_d, best)


def apply_drift_correction(counts, t_window, t_pol_n):
    """Renormalize window counts for in-window decay of the bright state.

    Divides by the mean bright-survival fraction of an exponential decay over
    the window, t_pol_n / t_window * (1 - exp(-t_window / t_pol_n)); an
    optional post-correction applied before histogramming.
    """
    frac = t_pol_n / t_window * -math.expm1(-t_window / t_pol_n)
    return np.asarray(counts, dtype=float) / frac


@dataclass
class MixtureFit:
    weights: Tuple[float, float, float]
    means: Tuple[float, float, float]
    widths: Tuple[float, float, float]
    residual_norm: float


def fit_photon_histogram(counts, bin_width=1) -> MixtureFit:
    """Three-component normal fit of the window-count histogram.

    Bins the counts on an integer grid and least-squares fits a sum of three
    normal components, returned ordered by mean with area weights normalized
    to 1.  Raises FitFailed on degenerate histograms or a diverged fit.
    """
    counts = np.asarray(counts, dtype=float)
    if counts.size < 500:
        raise ValueError("need at least 500 shots to fit the histogram")
    if np.ptp(counts) <= 0:
        raise FitFailed("histogram is degenerate (all counts identical)")
    edges = np.arange(counts.min() - 0.5, counts.max() + 0.5 + bin_width, bin_width)
    hist, edges = np.histogram(counts, bins=edges)
    centers = 0.5 * (edges[:-1] + edges[1:])

    # generic mixture model, with means confined to the data range and widths
    # to the data span so the zero-count spike cannot open a flat ridge
    generic = fitting.get_model("three_normal_mixture")
    mu_b = (centers[0] - 0.5 * bin_width, centers[-1] + 0.5 * bin_width)
    s_b = (0.25, max(float(np.ptp(centers)), 1.0))
    params = []
    for spec in generic.params:
        if spec.name.startswith("mu"):
            params.append(fitting.ParamSpec(spec.name, spec.unit, mu_b))
        elif spec.name.startswith("s"):
            params.append(fitting.ParamSpec(spec.name, spec.unit, s_b))
        else:
            params.append(spec)
    model = fitting.ModelSpec(generic.name, tuple(params), generic.func, generic.guess)
    try:
        res = fitting.least_squares(model, centers, hist.astype(float),
                                    max_iterations=2000)
    except (fitting.SingularNormalMatrix, fitting.MaxIterations) as exc:
        raise FitFailed("mixture fit failed: %s" % exc)
    if not np.isfinite(res.residual_norm):
        raise FitFailed("mixture fit diverged")

    comps = sorted((
        (res["mu%d" % i], res["a%d" % i], res["s%d" % i]) for i in (1, 2, 3)))
    total = sum(a for _, a, _ in comps)
    weights = tuple(a / total for _, a, _ in comps)
    means = tuple(mu for mu, _, _ in comps)
    widths = tuple(s for _, _, s in comps)
    return MixtureFit(weights, means, widths, res.residual_norm)
