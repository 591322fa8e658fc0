"""Energy processes, invariant-measure estimation and equilibrium diagnostics.

Everything here consumes sampled trajectories (or observable time series
collected while stepping) and produces estimates with standard errors.
Time integrals are trapezoidal on the sample grid; "stationary" always means
t >= burn_in, with autocorrelation-corrected effective sample sizes behind
every single-trajectory standard error.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import field as fld
from .bilinear import nonlinearity, nonlinearity_self
from .config import RunConfig
from .dynamics import Trajectory
from .field import SpectralField, shell_spectrum
from .lattice import get_table

__all__ = [
    "Bump", "SmoothTestResult", "EmpiricalMeasure", "MixingReport",
    "energy_e1", "energy_en", "g_process", "supermartingale_smooth_test",
    "flux", "flux_via_total", "flux_profile", "inertial_regularized",
    "shell_spectrum", "kb_average", "h_moment_bound_check", "mixing_fit",
    "entrance_probability", "stopping_statistics", "j_functional",
    "translation_exact_checks", "translation_invariance_check",
    "integrated_autocorr_time", "series_mean_se", "Welford", "ObservableSet",
]


# ---------------------------------------------------------------------------
# smooth test functions

def _glue_vec(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """C-infinity step g and derivative g' on the line (0 below 0, 1 above 1)."""
    t = np.asarray(t, dtype=np.float64)
    inside = (t > 0) & (t < 1)
    g = np.where(t >= 1, 1.0, 0.0)
    gp = np.zeros_like(t)
    if np.any(inside):
        ti = t[inside]
        with np.errstate(over="ignore", under="ignore"):
            h = np.exp(-1.0 / ti)
            h1 = np.exp(-1.0 / (1.0 - ti))
            denom = h + h1
            g[inside] = h / denom
            gp[inside] = h * h1 * (ti ** -2 + (1.0 - ti) ** -2) / denom ** 2
    return g, gp


@dataclass(frozen=True)
class Bump:
    """Nonnegative C-infinity bump supported exactly on [start, start+width]."""

    start: float
    width: float

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError(f"bump width must be positive, got {self.width}")

    def value(self, t) -> np.ndarray:
        u = 2.0 * (np.asarray(t) - self.start) / self.width
        v = 2.0 * (self.start + self.width - np.asarray(t)) / self.width
        gu, _ = _glue_vec(u)
        gv, _ = _glue_vec(v)
        return gu * gv

    def derivative(self, t) -> np.ndarray:
        u = 2.0 * (np.asarray(t) - self.start) / self.width
        v = 2.0 * (self.start + self.width - np.asarray(t)) / self.width
        gu, gpu = _glue_vec(u)
        gv, gpv = _glue_vec(v)
        return (2.0 / self.width) * (gpu * gv - gu * gpv)


# ---------------------------------------------------------------------------
# energy processes

def energy_e1(traj: Trajectory, sigma_sq: float) -> np.ndarray:
    """|x_t|_H^2 + 2 nu int |x|_V^2 - t sigma^2 on the sample grid."""
    t, h2, v2 = traj.times, traj.ledger["h2"], traj.ledger["v2"]
    diss = cumulative_trapezoid(v2, t, initial=0.0)
    return h2 + 2.0 * traj.cfg.nu * diss - sigma_sq * t


def energy_en(traj: Trajectory, n: int, sigma_sq: float) -> np.ndarray:
    """Higher-moment energy process with compensator n(2n-1) sigma^2 int |x|_H^(2n-2)."""
    if n < 2:
        raise ValueError(f"moment order must be >= 2, got {n}")
    t, h2, v2 = traj.times, traj.ledger["h2"], traj.ledger["v2"]
    hpow = h2 ** (n - 1)
    diss = cumulative_trapezoid(hpow * v2, t, initial=0.0)
    comp = cumulative_trapezoid(hpow, t, initial=0.0)
    return h2 ** n + 2.0 * n * traj.cfg.nu * diss - n * (2 * n - 1) * sigma_sq * comp


def g_process(traj_v: Trajectory, traj_z: Trajectory, traj_full: Trajectory) -> np.ndarray:
    """Enhanced energy of the residual:
    G_t = |v_t|_H^2 / 2 + nu int |v|_V^2 + int <v, B(v+z, z)>."""
    for a, b in ((traj_v, traj_z), (traj_v, traj_full)):
        if a.times.shape != b.times.shape or np.any(a.times != b.times):
            raise ValueError("G process requires aligned sample times")
    if traj_v.fields is None or traj_z.fields is None:
        raise ValueError("G process requires stored fields for v and z")
    t = traj_v.times
    nu = traj_full.cfg.nu
    tri = np.array([
        fld.inner(v, nonlinearity(fld.add(v, z), z))
        for v, z in zip(traj_v.fields, traj_z.fields)
    ])
    return (0.5 * traj_v.ledger["h2"]
            + nu * cumulative_trapezoid(traj_v.ledger["v2"], t, initial=0.0)
            + cumulative_trapezoid(tri, t, initial=0.0))


@dataclass(frozen=True)
class SmoothTestResult:
    statistic: float
    se: float
    n_traj: int
    passed: bool


def supermartingale_smooth_test(times: np.ndarray, series: np.ndarray, bump: Bump) -> SmoothTestResult:
    """Monte Carlo estimate of E[int phi'(r) theta_r dr]; nonnegative (up to
    3 SE) for supermartingale ensembles."""
    times = np.asarray(times, dtype=np.float64)
    series = np.atleast_2d(np.asarray(series, dtype=np.float64))
    if bump.start < times[0] - 1e-12 or bump.start + bump.width > times[-1] + 1e-12:
        raise ValueError(
            f"bump support [{bump.start}, {bump.start + bump.width}] exceeds the "
            f"time range [{times[0]}, {times[-1]}]"
        )
    phi_p = bump.derivative(times)
    vals = np.trapezoid(phi_p[None, :] * series, times, axis=1)
    n = vals.shape[0]
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return SmoothTestResult(statistic=mean, se=se, n_traj=n, passed=mean >= -3.0 * se)


# ---------------------------------------------------------------------------
# flux and regularized inertial term

def flux(x: SpectralField, cut: int) -> float:
    """Energy flux through |k|_inf = cut: <P_low x, B(x, P_high x)>."""
    if cut < 0:
        raise ValueError(f"flux level must be >= 0, got {cut}")
    low = fld.project_modes(x, cut, "low")
    high = fld.project_modes(x, cut, "high")
    return fld.inner(low, nonlinearity(x, high))


def flux_via_total(x: SpectralField, cut: int, b_total: SpectralField | None = None) -> float:
    """Equivalent form <P_low x, B(x, x)>; must agree with ``flux``."""
    if cut < 0:
        raise ValueError(f"flux level must be >= 0, got {cut}")
    if b_total is None:
        b_total = nonlinearity(x, x)
    return fld.inner(fld.project_modes(x, cut, "low"), b_total)


def flux_profile(x: SpectralField, cuts, b_total: SpectralField | None = None) -> np.ndarray:
    """Flux at several levels sharing one B(x, x) evaluation."""
    if b_total is None:
        b_total = nonlinearity_self(x)
    return np.array([flux_via_total(x, c, b_total) for c in cuts])


def inertial_regularized(x: SpectralField, a: float, b_total: SpectralField | None = None) -> float:
    """Regularized inertial integrand <L_a x, L_a B(x, x)>; identically 0 at a = 0."""
    if a < 0:
        raise ValueError(f"regularization parameter must be >= 0, got {a}")
    if b_total is None:
        b_total = nonlinearity_self(x)
    return fld.inner(fld.heat_regularize(x, a), fld.heat_regularize(b_total, a))


# ---------------------------------------------------------------------------
# accumulators and error bars

@dataclass
class Welford:
    """Numerically stable running mean/variance; merge is associative."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def update(self, x: float):
        self.count += 1
        d = x - self.mean
        self.mean += d / self.count
        self.m2 += d * (x - self.mean)

    def update_many(self, xs: np.ndarray):
        xs = np.asarray(xs, dtype=np.float64)
        if xs.size == 0:
            return
        other = Welford(count=int(xs.size), mean=float(xs.mean()),
                        m2=float(((xs - xs.mean()) ** 2).sum()))
        self.merge(other)

    def merge(self, other: "Welford"):
        if other.count == 0:
            return
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean, other.m2
            return
        n = self.count + other.count
        d = other.mean - self.mean
        self.mean += d * other.count / n
        self.m2 += other.m2 + d * d * self.count * other.count / n
        self.count = n

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else 0.0


def integrated_autocorr_time(x: np.ndarray) -> float:
    """Two-sided integrated autocorrelation time with Geyer-style truncation."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if n < 8:
        return 1.0
    x = x - x.mean()
    var = float((x * x).mean())
    if var <= 0:
        return 1.0
    f = np.fft.rfft(x, 2 * n)
    acov = np.fft.irfft(f * np.conj(f))[:n] / n
    rho = acov / acov[0]
    tau = 1.0
    k = 1
    while k + 1 < min(n // 2, 2000):
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
        k += 2
    return max(tau, 1.0)


def series_mean_se(x: np.ndarray) -> tuple[float, float, float]:
    """Mean, autocorrelation-corrected standard error, and effective n."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if n == 0:
        raise ValueError("empty series")
    tau = integrated_autocorr_time(x)
    n_eff = max(n / tau, 1.0)
    var = float(x.var(ddof=1)) if n > 1 else 0.0
    return float(x.mean()), float(np.sqrt(var / n_eff)), n_eff


@dataclass
class EmpiricalMeasure:
    """Running time/ensemble averages of a declared observable set."""

    burn_in: float
    names: tuple[str, ...]
    acc: dict[str, Welford]
    se: dict[str, float]
    n_eff: dict[str, float]
    derived: dict[str, float] = dc_field(default_factory=dict)

    def mean(self, name: str) -> float:
        return self.acc[name].mean

    def row(self, name: str) -> tuple[float, float, float]:
        return self.acc[name].mean, self.se[name], self.n_eff[name]


def kb_average(times: np.ndarray, series: dict[str, np.ndarray], burn_in: float,
               cfg: RunConfig | None = None) -> EmpiricalMeasure:
    """Long-time averages over the post-burn-in window (all trajectories pooled).

    With several trajectories the standard error comes from the spread of
    per-trajectory means; with a single one it is autocorrelation-corrected.
    Derived entries expose the dissipation/injection bookkeeping.
    """
    times = np.asarray(times, dtype=np.float64)
    keep = times >= burn_in - 1e-12
    if not np.any(keep):
        raise ValueError(f"no samples at or after burn_in={burn_in}")
    acc: dict[str, Welford] = {}
    se: dict[str, float] = {}
    n_eff: dict[str, float] = {}
    for name, mat in series.items():
        mat = np.atleast_2d(np.asarray(mat, dtype=np.float64))[:, keep]
        w = Welford()
        for row in mat:           # fixed trajectory order: reduction is deterministic
            w.update_many(row)
        acc[name] = w
        if mat.shape[0] > 1:
            per_traj = mat.mean(axis=1)
            se[name] = float(per_traj.std(ddof=1) / np.sqrt(mat.shape[0]))
            n_eff[name] = float(mat.shape[0])
        else:
            _, s, ne = series_mean_se(mat[0])
            se[name] = s
            n_eff[name] = ne
    measure = EmpiricalMeasure(
        burn_in=burn_in, names=tuple(series.keys()), acc=acc, se=se, n_eff=n_eff
    )
    if cfg is not None:
        sigma_sq = cfg.sigma_sq
        measure.derived["sigma2"] = sigma_sq
        if "v2" in acc:
            eps_hat = acc["v2"].mean
            measure.derived["eps_hat"] = eps_hat
            measure.derived["iota_balance"] = 0.5 * sigma_sq - cfg.nu * eps_hat
            flux_cuts = sorted(
                int(n.split(":", 1)[1]) for n in acc if n.startswith("flux:")
                and int(n.split(":", 1)[1]) < cfg.n_modes
            )
            iota_flux = acc[f"flux:{flux_cuts[-1]}"].mean if flux_cuts else 0.0
            measure.derived["iota_flux"] = iota_flux
            measure.derived["balance_residual"] = cfg.nu * eps_hat + iota_flux - 0.5 * sigma_sq
    return measure


# ---------------------------------------------------------------------------
# moment bounds, mixing, entrance, stopping, selection functional

def h_moment_bound_check(times: np.ndarray, h2: np.ndarray, check_times,
                         x0_h2: float, nu: float, sigma_sq: float):
    """Compare ensemble means of |x_t|_H^2 against the exponential moment bound.

    Bound: |x0|^2 e^(-2 nu t) + sigma^2/(2 nu) (1 - e^(-2 nu t)).
    Returns one row (t, mean, se, bound, ok) per requested time.
    """
    times = np.asarray(times, dtype=np.float64)
    h2 = np.atleast_2d(np.asarray(h2, dtype=np.float64))
    rows = []
    for t in check_times:
        i = int(np.argmin(np.abs(times - t)))
        if abs(times[i] - t) > 1e-9 + 1e-6 * max(t, 1.0):
            raise ValueError(f"requested time {t} is not on the sample grid")
        vals = h2[:, i]
        mean = float(vals.mean())
        se = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
        decay = np.exp(-2.0 * nu * times[i])
        bound = x0_h2 * decay + sigma_sq / (2.0 * nu) * (1.0 - decay)
        rows.append((float(times[i]), mean, se, float(bound), mean <= bound + 3.0 * se))
    return rows


@dataclass
class MixingReport:
    """Observable-mean distance to the stationary value, with exponential fit."""

    observable: str
    times: np.ndarray
    distance: np.ndarray
    se: np.ndarray
    fit_available: bool
    c_fit: float = float("nan")
    a_fit: float = float("nan")
    r_squared: float = float("nan")


def mixing_fit(times: np.ndarray, ensemble_mean: np.ndarray, ensemble_se: np.ndarray,
               stationary_mean: float, stationary_se: float,
               observable: str = "observable") -> MixingReport:
    """d(t) = |ensemble mean - stationary mean| and a least-squares fit of
    log d over the window where the signal exceeds 3 combined SE."""
    times = np.asarray(times, dtype=np.float64)
    d = np.abs(np.asarray(ensemble_mean, dtype=np.float64) - stationary_mean)
    se = np.sqrt(np.asarray(ensemble_se, dtype=np.float64) ** 2 + stationary_se ** 2)
    usable = d > 3.0 * se
    usable &= d > 0
    report = MixingReport(observable=observable, times=times, distance=d, se=se,
                          fit_available=False)
    if usable.sum() < 3:
        return report
    t_fit = times[usable]
    log_d = np.log(d[usable])
    slope, intercept = np.polyfit(t_fit, log_d, 1)
    pred = slope * t_fit + intercept
    ss_res = float(((log_d - pred) ** 2).sum())
    ss_tot = float(((log_d - log_d.mean()) ** 2).sum())
    report.fit_available = True
    report.c_fit = float(np.exp(intercept))
    report.a_fit = float(-slope)
    report.r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return report


def entrance_probability(values_at_t: np.ndarray, level: float) -> tuple[float, float]:
    """Fraction of trajectories inside the ball {|x|^2 <= level}, binomial SE."""
    vals = np.asarray(values_at_t, dtype=np.float64)
    n = vals.size
    p = float(np.mean(vals <= level))
    se = float(np.sqrt(p * (1.0 - p) / n))
    return p, se


def stopping_statistics(taus_by_level: dict[float, list], delta_grid,
                        excluded_by_level: dict[float, int] | None = None):
    """Empirical exceedance table P[tau <= delta] per cut-off level.

    Rows: (level, delta, p_hat, se, n).  Runs whose initial condition
    violated the |x0|^2 <= R/2 precondition are excluded (and counted
    separately by the caller).
    """
    rows = []
    for level in sorted(taus_by_level):
        taus = taus_by_level[level]
        n = len(taus)
        for delta in delta_grid:
            hit = sum(1 for tau in taus if tau is not None and tau <= delta + 1e-12)
            p = hit / n if n else float("nan")
            se = float(np.sqrt(p * (1.0 - p) / n)) if n else float("nan")
            rows.append((float(level), float(delta), p, se, n))
    return rows


@dataclass(frozen=True)
class JEstimate:
    estimate: float
    se: float
    tail_bound: float   # e^(-lambda T) sup|f| / lambda over the observed range
    n_traj: int


def j_functional(times: np.ndarray, f_series: np.ndarray, lam: float) -> JEstimate:
    """Discounted occupation functional E[int_0^T e^(-lambda t) f(x_t) dt]."""
    if lam <= 0:
        raise ValueError(f"discount rate must be positive, got {lam}")
    times = np.asarray(times, dtype=np.float64)
    f_series = np.atleast_2d(np.asarray(f_series, dtype=np.float64))
    weights = np.exp(-lam * times)
    vals = np.trapezoid(weights[None, :] * f_series, times, axis=1)
    n = vals.shape[0]
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    sup_f = float(np.abs(f_series).max())
    tail = float(np.exp(-lam * times[-1]) * sup_f / lam)
    return JEstimate(estimate=mean, se=se, tail_bound=tail, n_traj=n)


# ---------------------------------------------------------------------------
# translation invariance

def translation_exact_checks(x: SpectralField, shift, thetas=(0.0, 0.5)) -> dict[str, float]:
    """Pathwise identities: norm preservation under m_a and B equivariance.

    Returns the worst relative deviation per check; all should sit at
    rounding level.
    """
    out = {}
    xs = fld.translate(x, shift)
    for th in thetas:
        a = fld.norm_sq_theta(x, th)
        b = fld.norm_sq_theta(xs, th)
        out[f"norm_theta_{th:g}"] = abs(a - b) / max(a, 1e-300)
    bx = nonlinearity(x, x)
    lhs = nonlinearity(xs, xs)
    rhs = fld.translate(bx, shift)
    scale = float(np.abs(rhs.coeffs).max()) or 1e-300
    out["b_equivariance"] = float(np.abs(lhs.coeffs - rhs.coeffs).max()) / scale
    return out


@dataclass(frozen=True)
class TranslationCheckRow:
    observable: str
    shift: tuple[float, float, float]
    base_mean: float
    shifted_mean: float
    se_combined: float
    ok: bool


def translation_invariance_check(base: EmpiricalMeasure, shifted: EmpiricalMeasure,
                                 pairs: list[tuple[str, str, tuple]]) -> tuple[list[TranslationCheckRow], bool]:
    """Statistical invariance of observable means under translation.

    ``pairs`` lists (base_name, shifted_name, shift); each passes when the
    two means differ by at most 3 combined SE.
    """
    rows = []
    for base_name, shifted_name, shift in pairs:
        m0, s0, _ = base.row(base_name)
        m1, s1, _ = shifted.row(shifted_name)
        se = float(np.sqrt(s0 ** 2 + s1 ** 2))
        rows.append(TranslationCheckRow(
            observable=base_name, shift=tuple(shift), base_mean=m0,
            shifted_mean=m1, se_combined=se, ok=abs(m0 - m1) <= 3.0 * se,
        ))
    return rows, all(r.ok for r in rows)


# ---------------------------------------------------------------------------
# observable registry

class ObservableSet:
    """Named scalar functionals of the state, evaluated with a shared cache.

    Names: h2, v2, veps2, theta2:<theta>, shell:<kappa>, flux:<K>,
    gradlow2:<K>, recoeff:<k1>,<k2>,<k3>:<comp>, imcoeff:...; any name may
    carry a ``@shift:<a1>,<a2>,<a3>`` suffix to evaluate on the translated
    state.
    """

    def __init__(self, names, cfg: RunConfig):
        self.names = tuple(names)
        self.cfg = cfg
        table = get_table(cfg.n_modes)
        self._evals = []
        self._needs_b = False
        for name in self.names:
            self._evals.append(self._compile(name, table))

    def _compile(self, name: str, table):
        shift = None
        base = name
        if "@shift:" in name:
            base, spec = name.split("@shift:", 1)
            shift = np.array([float(p) for p in spec.split(",")])
            if shift.shape != (3,):
                raise ValueError(f"bad shift in observable {name!r}")

        def with_shift(func):
            if shift is None:
                return func
            def shifted(x, cache):
                key = ("shift", tuple(shift))
                if key not in cache:
                    cache[key] = fld.translate(x, shift)
                return func(cache[key], cache)
            return shifted

        if base == "h2":
            return with_shift(lambda x, cache: fld.norm_sq_theta(x, 0.0))
        if base == "v2":
            return with_shift(lambda x, cache: fld.norm_sq_theta(x, 0.5))
        if base == "veps2":
            th = 0.25 + self.cfg.eps0
            return with_shift(lambda x, cache: fld.norm_sq_theta(x, th))
        if base.startswith("theta2:"):
            th = float(base.split(":", 1)[1])
            return with_shift(lambda x, cache: fld.norm_sq_theta(x, th))
        if base.startswith("shell:"):
            kappa = int(base.split(":", 1)[1])
            def shell_val(x, cache):
                if "spectrum" not in cache:
                    cache["spectrum"] = shell_spectrum(x)
                spec = cache["spectrum"]
                return float(spec[kappa]) if kappa < spec.size else 0.0
            return with_shift(shell_val)
        if base.startswith("flux:"):
            cut = int(base.split(":", 1)[1])
            self._needs_b = True
            def flux_val(x, cache):
                if "b_total" not in cache:
                    cache["b_total"] = nonlinearity_self(x)
                return flux_via_total(x, cut, cache["b_total"])
            return flux_val  # flux of the shifted state equals the base one
        if base.startswith("gradlow2:"):
            cut = int(base.split(":", 1)[1])
            return with_shift(
                lambda x, cache: fld.norm_sq_theta(fld.project_modes(x, cut, "low"), 0.5)
            )
        if base.startswith(("recoeff:", "imcoeff:")):
            kind, kspec, comp = base.split(":", 2)
            kvec = tuple(int(p) for p in kspec.split(","))
            comp = int(comp)
            part = np.real if kind == "recoeff" else np.imag
            def coeff_val(x, cache):
                return float(part(x.mode(kvec)[comp]))
            return with_shift(coeff_val)
        raise ValueError(f"unknown observable {name!r}")

    def evaluate(self, x: SpectralField) -> np.ndarray:
        cache: dict = {}
        return np.array([f(x, cache) for f in self._evals])
