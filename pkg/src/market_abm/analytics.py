"""Statistics over simulated market microstructure.

Covers the full reporting pipeline: detrended fluctuation analysis for
long-memory exponents, maximum-likelihood power-law tail fits, empirical
CCDFs, extreme-event rates, regime classification over chartist-fraction
bins, dispersion-vs-chartist-fraction curves, and return-kurtosis decay
across aggregation horizons.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

MEMH = "MEMH"  # efficient-like: no extreme events, deep book
MRFM = "MRFM"  # real-market-like: extreme events present
MMC = "MMC"  # collapse: book is empty, trading stalls

SERIES_KINDS = ["return", "volatility", "spread", "first_gap", "volume", "fv_return"]
BIN_QUANTITIES = ["volatility", "spread", "first_gap"]

NE_THRESHOLD = 0.005
# A collapsed book still holds the handful of resting orders the few remaining
# fundamentalists trickle in (5-15 in every tested configuration), while a
# functioning market keeps 25+; the floor sits between the two clusters.
DEPTH_FLOOR = 20.0
EXTREME_SIGMAS = 4.0


# ---------------------------------------------------------------------------
# detrended fluctuation analysis
# ---------------------------------------------------------------------------


@dataclass
class DfaResult:
    h: float
    stderr: float
    box_sizes: np.ndarray
    fluctuations: np.ndarray
    span_decades: float


def log_box_sizes(lo: int, hi: int, num: int = 20) -> np.ndarray:
    """Unique integer box sizes, log-spaced in [lo, hi]."""
    if hi < lo:
        raise ValueError("box size range is empty")
    grid = np.unique(np.round(np.logspace(np.log10(lo), np.log10(hi), num)).astype(int))
    return grid[(grid >= lo) & (grid <= hi)]


def fluctuation_function(series, box_sizes, order: int = 1) -> np.ndarray:
    """RMS fluctuation F(n) of the integrated, per-box-detrended series.

    The series is demeaned and integrated once; every complete box of size n
    is detrended with a least-squares polynomial of the given order, and
    F(n) is the root mean square of the residuals over the covered portion.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or len(x) < 4:
        raise ValueError("series must be 1-D with at least 4 points")
    if np.isnan(x).any():
        raise ValueError("series contains NaN")
    y = np.cumsum(x - x.mean())
    out = np.empty(len(box_sizes))
    for idx, n in enumerate(np.asarray(box_sizes, dtype=int)):
        nb = len(y) // n
        if nb < 1:
            raise ValueError(f"box size {n} exceeds series length {len(y)}")
        seg = y[: nb * n].reshape(nb, n).T  # one column per box
        t = np.arange(n, dtype=float)
        design = np.vander(t, order + 1)
        coef, *_ = np.linalg.lstsq(design, seg, rcond=None)
        resid = seg - design @ coef
        out[idx] = math.sqrt(float(np.mean(resid * resid)))
    return out


def _fit_loglog_slope(sizes: np.ndarray, fluct: np.ndarray) -> tuple[float, float]:
    logn = np.log10(sizes.astype(float))
    logf = np.log10(fluct)
    slope, intercept = np.polyfit(logn, logf, 1)
    resid = logf - (slope * logn + intercept)
    dof = len(logn) - 2
    if dof > 0:
        stderr = math.sqrt(float(resid @ resid) / dof / float(np.sum((logn - logn.mean()) ** 2)))
    else:
        stderr = float("nan")
    return float(slope), stderr


def dfa(series, order: int = 1, box_sizes=None, n_boxes: int = 20) -> DfaResult:
    """Scaling exponent of F(n) ~ n^H via least squares on log-log axes.

    Default box sizes run from 10 to length/4, 20 log-spaced values. A
    constant series has zero fluctuation at every scale and is rejected
    rather than reported as a number.
    """
    x = np.asarray(series, dtype=float)
    if len(x) and np.all(x == x[0]):
        raise ValueError("constant series: fluctuation function is identically zero")
    if box_sizes is None:
        box_sizes = log_box_sizes(10, max(len(x) // 4, 11), n_boxes)
    sizes = np.asarray(box_sizes, dtype=int)
    if len(x) < 4 * sizes.max():
        raise ValueError("series shorter than 4x the largest box size")
    fluct = fluctuation_function(x, sizes, order=order)
    keep = fluct > 0.0
    sizes, fluct = sizes[keep], fluct[keep]
    if len(sizes) < 2:
        raise ValueError("fewer than two usable box sizes")
    h, stderr = _fit_loglog_slope(sizes, fluct)
    span = math.log10(sizes.max() / sizes.min())
    return DfaResult(h=h, stderr=stderr, box_sizes=sizes, fluctuations=fluct, span_decades=span)


def ensemble_dfa(series_list, order: int = 1, min_box: int = 10, n_boxes: int = 20):
    """Pool several realisations: average F(n)^2 per box size, fit one slope.

    Returns (pooled DfaResult, list of per-run H). Box sizes are pinned by
    the shortest series so every run contributes to every size.
    """
    series_list = [np.asarray(s, dtype=float) for s in series_list]
    if not series_list:
        raise ValueError("no series given")
    shortest = min(len(s) for s in series_list)
    sizes = log_box_sizes(min_box, max(shortest // 4, min_box + 1), n_boxes)
    if shortest < 4 * sizes.max():
        raise ValueError("shortest series is under 4x the largest box size")
    sq = np.zeros(len(sizes))
    per_run_h = []
    for s in series_list:
        f = fluctuation_function(s, sizes, order=order)
        sq += f * f
        per_run_h.append(_fit_loglog_slope(sizes, f)[0] if np.all(f > 0) else float("nan"))
    pooled = np.sqrt(sq / len(series_list))
    h, stderr = _fit_loglog_slope(sizes, pooled)
    span = math.log10(sizes.max() / sizes.min())
    result = DfaResult(h=h, stderr=stderr, box_sizes=sizes, fluctuations=pooled, span_decades=span)
    return result, per_run_h


# ---------------------------------------------------------------------------
# tails
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TailFit:
    alpha: float
    x_min: float
    n_tail: int
    stderr: float


def fit_power_law(samples, x_min: float, min_tail: int = 50) -> TailFit:
    """Continuous maximum-likelihood exponent for samples >= x_min.

    alpha = 1 + n / sum(ln(x / x_min)), stderr = (alpha - 1) / sqrt(n).
    """
    x = np.asarray(samples, dtype=float)
    if x_min <= 0.0:
        raise ValueError("x_min must be > 0")
    if x.size < min_tail:
        raise ValueError(f"need at least {min_tail} tail samples, got {x.size}")
    if np.any(x < x_min):
        raise ValueError("all samples must be >= x_min")
    log_sum = float(np.sum(np.log(x / x_min)))
    if log_sum <= 0.0:
        raise ValueError("degenerate tail: all samples equal x_min")
    alpha = 1.0 + x.size / log_sum
    return TailFit(alpha=alpha, x_min=float(x_min), n_tail=int(x.size),
                   stderr=(alpha - 1.0) / math.sqrt(x.size))


def tail_fit_quantile(samples, quantile: float = 0.95, min_tail: int = 50) -> TailFit:
    """Fit the power-law tail above a fixed sample quantile (default: top 5%)."""
    x = np.asarray(samples, dtype=float)
    x = x[np.isfinite(x) & (x > 0.0)]
    if x.size == 0:
        raise ValueError("no positive finite samples")
    x_min = float(np.quantile(x, quantile))
    if x_min <= 0.0:
        raise ValueError("tail threshold is not positive")
    return fit_power_law(x[x >= x_min], x_min, min_tail=min_tail)


def ccdf(samples) -> tuple[np.ndarray, np.ndarray]:
    """Empirical P(X >= x) over the distinct sample values, ascending in x."""
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise ValueError("empty sample")
    values, first = np.unique(x, return_index=True)
    probs = (x.size - first) / x.size
    return values, probs


# ---------------------------------------------------------------------------
# extreme events and moments
# ---------------------------------------------------------------------------


def extreme_event_rate(series) -> float:
    """Fraction of observations above mean + 4 standard deviations."""
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        raise ValueError("empty series")
    sd = float(x.std())
    if sd == 0.0:
        return 0.0
    return float(np.mean(x > x.mean() + EXTREME_SIGMAS * sd))


def excess_kurtosis(x) -> float:
    a = np.asarray(x, dtype=float)
    if a.size < 4:
        raise ValueError("need at least 4 observations")
    c = a - a.mean()
    m2 = float(np.mean(c * c))
    if m2 == 0.0:
        raise ValueError("zero variance")
    m4 = float(np.mean(c ** 4))
    return m4 / (m2 * m2) - 3.0


def _ranks(a: np.ndarray) -> np.ndarray:
    order = np.argsort(a, kind="mergesort")
    ranks = np.empty(a.size)
    sorted_a = a[order]
    base = np.arange(1, a.size + 1, dtype=float)
    i = 0
    while i < a.size:
        j = i
        while j + 1 < a.size and sorted_a[j + 1] == sorted_a[i]:
            j += 1
        ranks[order[i : j + 1]] = base[i : j + 1].mean()
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Spearman rank correlation (average ranks on ties)."""
    a = np.asarray(x, dtype=float)
    b = np.asarray(y, dtype=float)
    if a.size != b.size or a.size < 3:
        raise ValueError("need two equally sized samples of at least 3")
    ra, rb = _ranks(a), _ranks(b)
    ra -= ra.mean()
    rb -= rb.mean()
    denom = math.sqrt(float(ra @ ra) * float(rb @ rb))
    if denom == 0.0:
        raise ValueError("constant ranks")
    return float(ra @ rb) / denom


def aggregational_gaussianity(prices, lags) -> dict[int, float]:
    """Excess kurtosis of ln p(t) - ln p(t - lag) for each lag."""
    p = np.asarray(prices, dtype=float)
    logp = np.log(p)
    out = {}
    for lag in lags:
        lag = int(lag)
        if lag < 1 or lag >= p.size:
            raise ValueError(f"lag {lag} outside 1..{p.size - 1}")
        out[lag] = excess_kurtosis(logp[lag:] - logp[:-lag])
    return out


# ---------------------------------------------------------------------------
# per-period series and per-step quantities
# ---------------------------------------------------------------------------


def forward_fill(x: np.ndarray) -> np.ndarray:
    """Replace NaN with the previous finite value; leading NaN take the first finite one."""
    x = np.asarray(x, dtype=float).copy()
    ok = np.isfinite(x)
    if not ok.any():
        raise ValueError("series has no finite values")
    idx = np.where(ok, np.arange(x.size), -1)
    np.maximum.accumulate(idx, out=idx)
    first = np.flatnonzero(ok)[0]
    idx[idx < 0] = first
    return x[idx]


def period_series(records, steps_per_period: int) -> dict[str, np.ndarray]:
    """Per-trading-period series from one run's step records.

    Returns and volatility come from period-close prices; spread, first gap
    and book depth are sampled at the close (gaps averaged over the two book
    sides, quote values held over undefined stretches); volume counts the
    period's executed trades.
    """
    spp = int(steps_per_period)
    n_periods = len(records.price) // spp
    if n_periods < 2:
        raise ValueError("need at least two full trading periods")
    sel = slice(spp - 1, n_periods * spp, spp)
    closes = records.price[sel]
    fv_closes = records.fundamental_value[sel]
    log_ret = np.diff(np.log(closes))
    gap = _side_mean_gap(records)
    traded = records.traded[: n_periods * spp].astype(float)
    return {
        "return": log_ret,
        "volatility": np.abs(log_ret),
        "spread": forward_fill(records.spread)[sel],
        "first_gap": forward_fill(gap)[sel],
        "volume": traded.reshape(n_periods, spp).sum(axis=1),
        "depth": records.depth[sel].astype(float),
        "fv_return": np.diff(np.log(fv_closes)),
        "close": closes,
        "fv_close": fv_closes,
        "pc": records.pc[sel],
    }


def _side_mean_gap(records) -> np.ndarray:
    both = np.stack([records.bid_gap, records.ask_gap])
    with np.errstate(invalid="ignore"):
        counts = np.sum(np.isfinite(both), axis=0)
        totals = np.nansum(both, axis=0)
        gap = np.where(counts > 0, totals / np.maximum(counts, 1), np.nan)
    return gap


# ---------------------------------------------------------------------------
# regime bins
# ---------------------------------------------------------------------------


@dataclass
class RegimeBin:
    lo: float
    hi: float
    n_obs: int
    ne: float
    sigma: float
    mean: float
    mean_depth: float
    label: str | None = None
    low_confidence: bool = False

    @property
    def center(self) -> float:
        return 0.5 * (self.lo + self.hi)


def bin_indices(pc: np.ndarray, bin_width: float) -> tuple[np.ndarray, int]:
    """Map chartist fractions to bin ids; edges are right-exclusive and the
    top of the last bin is inclusive so pc = 1.0 lands in it. A small slack
    keeps fractions that are decimal multiples of the width on their edge."""
    if not 0.0 < bin_width <= 1.0:
        raise ValueError("bin_width must be in (0, 1]")
    n_bins = int(math.ceil(round(1.0 / bin_width, 9)))
    idx = np.floor(pc / bin_width + 1e-9).astype(int)
    return np.clip(idx, 0, n_bins - 1), n_bins


def bin_by_pc(
    pc: np.ndarray,
    values: np.ndarray,
    depth: np.ndarray,
    bin_width: float = 0.01,
    low_confidence_below: int = 1000,
    threshold: float | None = None,
) -> list[RegimeBin]:
    """Per-bin extreme-event rate, dispersion and mean book depth for one quantity.

    An extreme event is an observation above one shared threshold (mean + 4
    sigma of the pooled series by default, overridable via `threshold`), so
    each bin's rate measures how much of the series-wide tail it contributes.
    NaN values are excluded from the quantity's statistics but the book depth
    is averaged over every observation falling in the bin.
    """
    pc = np.asarray(pc, dtype=float)
    values = np.asarray(values, dtype=float)
    depth = np.asarray(depth, dtype=float)
    if not (pc.size == values.size == depth.size):
        raise ValueError("pc, values and depth must be equally sized")
    idx, n_bins = bin_indices(pc, bin_width)

    depth_count = np.bincount(idx, minlength=n_bins)
    depth_sum = np.bincount(idx, weights=depth, minlength=n_bins)

    ok = np.isfinite(values)
    vi = idx[ok]
    v = values[ok]
    global_sd = float(v.std()) if v.size else 0.0
    if threshold is not None:
        global_threshold = float(threshold)
    else:
        global_threshold = v.mean() + EXTREME_SIGMAS * global_sd if v.size else np.inf
    count = np.bincount(vi, minlength=n_bins)
    s1 = np.bincount(vi, weights=v, minlength=n_bins)
    s2 = np.bincount(vi, weights=v * v, minlength=n_bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = s1 / count
        var = np.maximum(s2 / count - mean * mean, 0.0)
        sigma = np.sqrt(var)
        if global_sd > 0.0 or threshold is not None:
            exceed = np.bincount(vi[v > global_threshold], minlength=n_bins)
        else:
            exceed = np.zeros(n_bins)
        ne = np.where(count > 0, exceed / np.maximum(count, 1), 0.0)
        mean_depth = np.where(depth_count > 0, depth_sum / np.maximum(depth_count, 1), np.nan)

    bins = []
    for b in range(n_bins):
        bins.append(
            RegimeBin(
                lo=b * bin_width,
                hi=min((b + 1) * bin_width, 1.0),
                n_obs=int(count[b]),
                ne=float(ne[b]) if count[b] else 0.0,
                sigma=float(sigma[b]) if count[b] else float("nan"),
                mean=float(mean[b]) if count[b] else float("nan"),
                mean_depth=float(mean_depth[b]),
                low_confidence=count[b] < low_confidence_below,
            )
        )
    return bins


def classify_regimes(
    bins: list[RegimeBin],
    ne_threshold: float = NE_THRESHOLD,
    depth_floor: float = DEPTH_FLOOR,
) -> list[RegimeBin]:
    """Label bins from (extreme-event rate, book depth) alone.

    An empty book marks collapse; otherwise extreme events above the
    threshold mark the real-market-like state, and the remainder is
    efficient-like.
    """
    out = []
    for b in bins:
        if math.isfinite(b.mean_depth) and b.mean_depth < depth_floor:
            label = MMC
        elif b.ne > ne_threshold:
            label = MRFM
        else:
            label = MEMH
        out.append(dataclasses.replace(b, label=label))
    return out


@dataclass
class RegimeSummary:
    memh_end: float | None
    mrfm_start: float | None
    mmc_start: float | None


def regime_boundaries(bins: list[RegimeBin], min_obs: int = 100) -> RegimeSummary:
    """Onset of each state scanning upward over sufficiently populated bins."""
    confident = [b for b in bins if b.n_obs >= min_obs]
    mrfm = [b.center for b in confident if b.label == MRFM]
    mmc = [b.center for b in confident if b.label == MMC]
    memh = [b.center for b in confident if b.label == MEMH]
    return RegimeSummary(
        memh_end=max(memh) if memh else None,
        mrfm_start=min(mrfm) if mrfm else None,
        mmc_start=min(mmc) if mmc else None,
    )


def sigma_vs_pc(bins: list[RegimeBin], min_obs: int = 10) -> dict:
    """Per-bin dispersion normalised so the curve's maximum equals 1.

    Returns bin centers, the normalised curve (NaN on thin bins), and the
    center of the peak bin.
    """
    populated = [b for b in bins if b.n_obs >= min_obs and math.isfinite(b.sigma)]
    if len(populated) < 10:
        raise ValueError("need at least 10 populated bins")
    centers = np.array([b.center for b in bins])
    curve = np.array(
        [b.sigma if (b.n_obs >= min_obs and math.isfinite(b.sigma)) else np.nan for b in bins]
    )
    peak = float(np.nanmax(curve))
    if peak <= 0.0:
        raise ValueError("dispersion is zero everywhere")
    curve = curve / peak
    argmax_center = float(centers[int(np.nanargmax(curve))])
    return {"centers": centers, "curve": curve, "argmax_pc": argmax_center}


# ---------------------------------------------------------------------------
# whole-ensemble report
# ---------------------------------------------------------------------------


@dataclass
class RunBundle:
    """Everything the report needs from one run: per-period series only, so
    large ensembles can discard full step records as they are processed."""

    period: dict[str, np.ndarray]
    n_steps: int


def reduce_run(records, steps_per_period: int) -> RunBundle:
    return RunBundle(period=period_series(records, steps_per_period), n_steps=len(records.price))


@dataclass
class AnalysisReport:
    hurst: dict
    tails: dict
    regimes: dict
    sigma_peaks: dict
    agg_gauss: dict
    depth_spearman: float | None
    meta: dict
    plots: dict = field(default_factory=dict)

    def tables(self) -> dict:
        """JSON-serialisable view without the plot arrays."""
        return {
            "hurst": self.hurst,
            "tails": self.tails,
            "regimes": self.regimes,
            "sigma_peaks": self.sigma_peaks,
            "aggregational_gaussianity": self.agg_gauss,
            "depth_pc_spearman": self.depth_spearman,
            "meta": self.meta,
        }


def analyze_runs(
    records_list,
    steps_per_period: int,
    bin_width: float = 0.01,
    xmin_quantile: float = 0.95,
    lags=(1, 4, 16, 64),
    min_obs: int = 100,
    ne_threshold: float = NE_THRESHOLD,
    depth_floor: float = DEPTH_FLOOR,
    burn_periods: int = 0,
) -> AnalysisReport:
    """Full statistics pass over one or more runs' step records."""
    bundles = [reduce_run(r, steps_per_period) for r in records_list]
    return analyze_bundles(
        bundles,
        steps_per_period,
        bin_width=bin_width,
        xmin_quantile=xmin_quantile,
        lags=lags,
        min_obs=min_obs,
        ne_threshold=ne_threshold,
        depth_floor=depth_floor,
        burn_periods=burn_periods,
    )


def analyze_bundles(
    bundles: list[RunBundle],
    steps_per_period: int,
    bin_width: float = 0.01,
    xmin_quantile: float = 0.95,
    lags=(1, 4, 16, 64),
    min_obs: int = 100,
    ne_threshold: float = NE_THRESHOLD,
    depth_floor: float = DEPTH_FLOOR,
    burn_periods: int = 0,
) -> AnalysisReport:
    """Statistics report over reduced runs.

    `burn_periods` drops each run's initial periods from the temporal
    statistics (scaling exponents, kurtosis decay) so an artificial starting
    composition does not masquerade as market memory; distributional
    statistics (tail fits, regime bins) keep the full record.
    """
    if not bundles:
        raise ValueError("no runs given")
    per_run = [b.period for b in bundles]
    burn = max(0, int(burn_periods))
    if burn and any(len(p["close"]) <= burn + 16 for p in per_run):
        raise ValueError("burn_periods leaves too little data")

    hurst: dict = {}
    plots: dict = {"fn": {}, "ccdf": {}, "sigma_vs_pc": {}, "ne_vs_pc": {}}
    for kind in SERIES_KINDS:
        series_list = [p[kind][burn:] for p in per_run]
        try:
            pooled, per_run_h = ensemble_dfa(series_list)
        except ValueError as exc:
            hurst[kind] = {"error": str(exc)}
            continue
        finite = [h for h in per_run_h if math.isfinite(h)]
        hurst[kind] = {
            "h": pooled.h,
            "stderr": pooled.stderr,
            "span_decades": pooled.span_decades,
            "per_run_mean": float(np.mean(finite)) if finite else None,
            "per_run_sd": float(np.std(finite)) if finite else None,
            "n_runs": len(series_list),
        }
        plots["fn"][kind] = {"box_sizes": pooled.box_sizes, "fluctuations": pooled.fluctuations}

    returns = np.concatenate([p["return"] for p in per_run])
    tail_samples = {
        "return_positive": returns[returns > 0],
        "return_negative": -returns[returns < 0],
        "spread": np.concatenate([p["spread"] for p in per_run]),
        "first_gap": np.concatenate([p["first_gap"] for p in per_run]),
    }
    tails: dict = {}
    for name, samples in tail_samples.items():
        try:
            fit = tail_fit_quantile(samples, xmin_quantile)
            tails[name] = {
                "alpha": fit.alpha,
                "x_min": fit.x_min,
                "n_tail": fit.n_tail,
                "stderr": fit.stderr,
            }
        except ValueError as exc:
            tails[name] = {"error": str(exc)}
        finite = samples[np.isfinite(samples) & (samples > 0)]
        if finite.size:
            values, probs = ccdf(finite)
            plots["ccdf"][name] = {"values": values, "probs": probs}

    pc_all = np.concatenate([p["pc"] for p in per_run])
    depth_all = np.concatenate([p["depth"] for p in per_run])
    quantity_inputs = {
        # a period's volatility belongs to the population present at its close
        "volatility": (
            np.concatenate([p["pc"][1:] for p in per_run]),
            np.concatenate([p["volatility"] for p in per_run]),
            np.concatenate([p["depth"][1:] for p in per_run]),
        ),
        "spread": (pc_all, np.concatenate([p["spread"] for p in per_run]), depth_all),
        "first_gap": (pc_all, np.concatenate([p["first_gap"] for p in per_run]), depth_all),
    }
    # extreme-event thresholds anchor on the post-burn-in (recurrent) series so
    # the artificial starting composition does not inflate them
    thresholds = {}
    for quantity in BIN_QUANTITIES:
        steady = np.concatenate([p[quantity][burn:] for p in per_run])
        steady = steady[np.isfinite(steady)]
        thresholds[quantity] = float(steady.mean() + EXTREME_SIGMAS * steady.std())
    regimes: dict = {}
    sigma_peaks: dict = {}
    depth_spearman = None
    for quantity in BIN_QUANTITIES:
        pc_q, values_q, depth_q = quantity_inputs[quantity]
        bins = bin_by_pc(pc_q, values_q, depth_q, bin_width, threshold=thresholds[quantity])
        bins = classify_regimes(bins, ne_threshold=ne_threshold, depth_floor=depth_floor)
        summary = regime_boundaries(bins, min_obs=min_obs)
        regimes[quantity] = {
            "bins": [
                {
                    "lo": b.lo,
                    "hi": b.hi,
                    "n_obs": b.n_obs,
                    "ne": b.ne,
                    "sigma": b.sigma,
                    "mean": b.mean,
                    "mean_depth": b.mean_depth,
                    "label": b.label,
                    "low_confidence": b.low_confidence,
                }
                for b in bins
            ],
            "memh_end": summary.memh_end,
            "mrfm_start": summary.mrfm_start,
            "mmc_start": summary.mmc_start,
        }
        plots["ne_vs_pc"][quantity] = {
            "centers": np.array([b.center for b in bins]),
            "ne": np.array([b.ne for b in bins]),
            "mean_depth": np.array([b.mean_depth for b in bins]),
        }
        try:
            curve = sigma_vs_pc(bins, min_obs=min_obs)
            above = curve["curve"][np.array([b.center for b in bins]) > curve["argmax_pc"]]
            drop = float(1.0 - np.nanmin(above)) if np.isfinite(above).any() else None
            sigma_peaks[quantity] = {"argmax_pc": curve["argmax_pc"], "drop_above_peak": drop}
            plots["sigma_vs_pc"][quantity] = curve
        except ValueError as exc:
            sigma_peaks[quantity] = {"error": str(exc)}

        if quantity == "volatility":
            active = [
                b for b in bins if b.n_obs >= min_obs and b.label in (MEMH, MRFM)
                and math.isfinite(b.mean_depth)
            ]
            if len(active) >= 3:
                depth_spearman = spearman(
                    np.array([b.center for b in active]),
                    np.array([b.mean_depth for b in active]),
                )

    lag_list = [int(l) for l in lags]
    ret_by_lag = {lag: [] for lag in lag_list}
    fv_by_lag = {lag: [] for lag in lag_list}
    for p in per_run:
        logc = np.log(p["close"][burn:])
        logf = np.log(p["fv_close"][burn:])
        for lag in lag_list:
            if lag < logc.size:
                ret_by_lag[lag].append(logc[lag:] - logc[:-lag])
                fv_by_lag[lag].append(logf[lag:] - logf[:-lag])
    agg_gauss = {
        "lags": lag_list,
        "excess_kurtosis": [
            excess_kurtosis(np.concatenate(ret_by_lag[lag])) if ret_by_lag[lag] else None
            for lag in lag_list
        ],
        "fv_excess_kurtosis": [
            excess_kurtosis(np.concatenate(fv_by_lag[lag])) if fv_by_lag[lag] else None
            for lag in lag_list
        ],
    }

    meta = {
        "n_runs": len(bundles),
        "steps_per_run": int(bundles[0].n_steps),
        "steps_per_period": int(steps_per_period),
        "bin_width": bin_width,
        "xmin_quantile": xmin_quantile,
        "ne_threshold": ne_threshold,
        "depth_floor": depth_floor,
        "min_obs": min_obs,
        "burn_periods": burn,
    }
    return AnalysisReport(
        hurst=hurst,
        tails=tails,
        regimes=regimes,
        sigma_peaks=sigma_peaks,
        agg_gauss=agg_gauss,
        depth_spearman=depth_spearman,
        meta=meta,
        plots=plots,
    )
