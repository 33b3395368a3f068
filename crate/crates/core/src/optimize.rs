//! Search over the mean photon number: optimal flux per fibre length, the
//! secure window around it, the maximum secure length, rate curves and the
//! full gain map over (mu, length).

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::link::{reference, ChannelParams, DetectorParams, LinkError, ParamError, SourceParams};
use crate::rate::{self, RateParams};

/// Root bisection never runs longer than this.
const MAX_BISECTIONS: usize = 50;
/// Length resolution of [`max_secure_length`].
pub const LENGTH_RESOLUTION_KM: f64 = 0.1;
/// Beyond this length the search gives up and reports an unbounded link.
const LENGTH_CEILING_KM: f64 = 1.0e5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error("no secure mean photon number at {length_km} km (best gain {best_gain:e} per cycle)")]
    EmptyWindow { length_km: f64, best_gain: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(&'static str),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Link(#[from] LinkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimizeConfig {
    pub mu_lo: f64,
    pub mu_hi: f64,
    /// Relative tolerance on every located mu.
    pub rel_tol: f64,
    /// Size of the log-spaced bracketing grid.
    pub grid_points: usize,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            mu_lo: 1e-5,
            mu_hi: 1.0,
            rel_tol: 1e-4,
            grid_points: 200,
        }
    }
}

impl OptimizeConfig {
    pub fn validate(&self) -> Result<(), ParamError> {
        let bad = |name, value, range| Err(ParamError::OutOfRange { name, value, range });
        if !(self.mu_lo > 0.0 && self.mu_lo < self.mu_hi) {
            return bad("mu_lo", self.mu_lo, "(0, mu_hi)");
        }
        if !(self.mu_hi <= 1.0) {
            return bad("mu_hi", self.mu_hi, "(mu_lo, 1]");
        }
        if !(self.rel_tol > 0.0) {
            return bad("rel_tol", self.rel_tol, "(0, inf)");
        }
        if self.grid_points < 3 {
            return bad("grid_points", self.grid_points as f64, "[3, inf)");
        }
        Ok(())
    }
}

/// Range of mean photon numbers giving a positive secure gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SecureWindow {
    pub mu_min: f64,
    pub mu_opt: f64,
    pub mu_max: f64,
    /// Secure gain per clock cycle at `mu_opt`.
    pub g_max: f64,
    /// False when the bracketing grid showed more than one local maximum
    /// with positive gain.
    pub unimodal: bool,
}

/// Everything apart from mu and length that fixes an operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scenario {
    pub detector: DetectorParams,
    pub attenuation_db_per_km: f64,
    pub clock_rate: f64,
    pub rate: RateParams,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            detector: DetectorParams::default(),
            attenuation_db_per_km: reference::ATTENUATION_DB_PER_KM,
            clock_rate: reference::CLOCK_RATE_HZ,
            rate: RateParams::default(),
        }
    }
}

impl Scenario {
    pub fn source(&self, mu: f64) -> Result<SourceParams, ParamError> {
        SourceParams::new(mu, self.clock_rate)
    }

    pub fn channel(&self, length_km: f64) -> Result<ChannelParams, ParamError> {
        ChannelParams::new(length_km, self.attenuation_db_per_km)
    }

    pub fn gain(&self, mu: f64, length_km: f64) -> Result<rate::GainBreakdown, OptimizeError> {
        Ok(rate::secure_gain(
            &self.source(mu)?,
            &self.channel(length_km)?,
            &self.detector,
            &self.rate,
        )?)
    }
}

/// Secure gain as a function of ln(mu) at fixed length.
struct Objective<'a> {
    channel: ChannelParams,
    detector: &'a DetectorParams,
    rate: &'a RateParams,
}

impl Objective<'_> {
    fn at(&self, ln_mu: f64) -> Result<f64, OptimizeError> {
        // The clock rate only converts units and never enters the argmax.
        let source = SourceParams::new(ln_mu.exp(), 1.0)?;
        Ok(rate::secure_gain(&source, &self.channel, self.detector, self.rate)?.secure_gain)
    }
}

/// Locate the mu maximising the secure gain at one length, together with
/// the zero crossings bounding the secure window.
pub fn optimize_mu(
    length_km: f64,
    detector: &DetectorParams,
    attenuation_db_per_km: f64,
    rate_params: &RateParams,
    cfg: &OptimizeConfig,
) -> Result<SecureWindow, OptimizeError> {
    cfg.validate()?;
    let objective = Objective {
        channel: ChannelParams::new(length_km, attenuation_db_per_km)?,
        detector,
        rate: rate_params,
    };
    let (lo, hi) = (cfg.mu_lo.ln(), cfg.mu_hi.ln());
    let step = (hi - lo) / (cfg.grid_points - 1) as f64;
    let grid: Vec<(f64, f64)> = (0..cfg.grid_points)
        .map(|i| {
            let x = if i + 1 == cfg.grid_points { hi } else { lo + step * i as f64 };
            objective.at(x).map(|g| (x, g))
        })
        .collect::<Result<_, _>>()?;

    // First strict maximum: ties resolve to the smaller mu.
    let mut best = 0;
    for (i, &(_, g)) in grid.iter().enumerate() {
        if g > grid[best].1 {
            best = i;
        }
    }
    // Only the secure part matters; the insecure tail has its own bumps.
    let local_maxima = (0..grid.len())
        .filter(|&i| grid[i].1 > 0.0)
        .filter(|&i| {
            let left = i == 0 || grid[i].1 > grid[i - 1].1;
            let right = i + 1 == grid.len() || grid[i].1 >= grid[i + 1].1;
            left && right
        })
        .count();

    // Refine inside the neighbouring grid cells. With several grid maxima
    // this is a local refinement around the global one.
    let a = grid[best.saturating_sub(1)].0;
    let b = grid[(best + 1).min(grid.len() - 1)].0;
    let (x_ref, g_ref) = golden_section_max(|x| objective.at(x), a, b, cfg.rel_tol)?;
    let (x_opt, g_max) = if g_ref > grid[best].1 {
        (x_ref, g_ref)
    } else {
        grid[best]
    };

    if g_max <= 0.0 {
        return Err(OptimizeError::EmptyWindow {
            length_km,
            best_gain: g_max,
        });
    }

    let mu_min = boundary(&objective, x_opt, lo, -step, cfg.rel_tol)?;
    let mu_max = boundary(&objective, x_opt, hi, step, cfg.rel_tol)?;
    Ok(SecureWindow {
        mu_min,
        mu_opt: x_opt.exp(),
        mu_max,
        g_max,
        unimodal: local_maxima == 1,
    })
}

/// Maximise `f` on `[a, b]` by golden-section search until the bracket is
/// narrower than `tol`. Returns the best point evaluated.
pub fn golden_section_max<F, E>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64), E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc >= fd { (c, fc) } else { (d, fd) })
}

/// Walk from the optimum towards `limit` in grid steps until the gain turns
/// non-positive, then bisect the crossing. Returns `exp(limit)` when the
/// gain stays positive all the way.
fn boundary(
    objective: &Objective<'_>,
    inside: f64,
    limit: f64,
    step: f64,
    rel_tol: f64,
) -> Result<f64, OptimizeError> {
    let mut secure = inside;
    let mut outside = None;
    let mut x = inside;
    loop {
        x += step;
        let past = if step > 0.0 { x >= limit } else { x <= limit };
        if past {
            x = limit;
        }
        if objective.at(x)? <= 0.0 {
            outside = Some(x);
            break;
        }
        secure = x;
        if past {
            break;
        }
    }
    let Some(mut outside) = outside else {
        return Ok(limit.exp());
    };
    for _ in 0..MAX_BISECTIONS {
        if (outside - secure).abs() <= rel_tol {
            break;
        }
        let mid = 0.5 * (secure + outside);
        if objective.at(mid)? > 0.0 {
            secure = mid;
        } else {
            outside = mid;
        }
    }
    Ok((0.5 * (secure + outside)).exp())
}

/// Longest fibre for which some mu in the configured bounds yields a
/// positive secure gain, to [`LENGTH_RESOLUTION_KM`]. Zero if no length is
/// secure; infinite if the gain never vanishes (lossless fibre).
pub fn max_secure_length(
    detector: &DetectorParams,
    attenuation_db_per_km: f64,
    rate_params: &RateParams,
    cfg: &OptimizeConfig,
) -> Result<f64, OptimizeError> {
    let secure = |l: f64| match optimize_mu(l, detector, attenuation_db_per_km, rate_params, cfg) {
        Ok(_) => Ok(true),
        Err(OptimizeError::EmptyWindow { .. }) => Ok(false),
        Err(e) => Err(e),
    };
    if !secure(0.0)? {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 10.0;
    while secure(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > LENGTH_CEILING_KM {
            return Ok(f64::INFINITY);
        }
    }
    while hi - lo > LENGTH_RESOLUTION_KM {
        let mid = 0.5 * (lo + hi);
        if secure(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Rates at the optimal mu for one length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub mu_opt: f64,
    pub sifted_bps: f64,
    pub secure_bps: f64,
    pub qber: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveRow {
    pub length_km: f64,
    /// `None` past the maximum secure length.
    pub optimum: Option<CurvePoint>,
}

pub fn rate_curve(
    lengths: &[f64],
    scenario: &Scenario,
    cfg: &OptimizeConfig,
) -> Result<Vec<CurveRow>, OptimizeError> {
    if lengths.is_empty() {
        return Err(OptimizeError::InvalidGrid("no lengths given"));
    }
    if lengths.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
        return Err(OptimizeError::InvalidGrid("lengths must be finite and non-negative"));
    }
    lengths
        .par_iter()
        .map(|&length_km| {
            let window = match optimize_mu(
                length_km,
                &scenario.detector,
                scenario.attenuation_db_per_km,
                &scenario.rate,
                cfg,
            ) {
                Ok(w) => w,
                Err(OptimizeError::EmptyWindow { .. }) => {
                    return Ok(CurveRow {
                        length_km,
                        optimum: None,
                    })
                }
                Err(e) => return Err(e),
            };
            let g = scenario.gain(window.mu_opt, length_km)?;
            Ok(CurveRow {
                length_km,
                optimum: Some(CurvePoint {
                    mu_opt: window.mu_opt,
                    sifted_bps: rate::gain_to_bps(g.sifted_gain, scenario.clock_rate),
                    secure_bps: rate::gain_to_bps(g.secure_gain, scenario.clock_rate),
                    qber: g.qber,
                }),
            })
        })
        .collect()
}

/// Secure gain per clock cycle on the product grid, indexed `[mu][length]`.
/// Insecure cells carry their (non-positive) gain.
pub fn contour_grid(
    mu_grid: &[f64],
    length_grid: &[f64],
    scenario: &Scenario,
) -> Result<Vec<Vec<f64>>, OptimizeError> {
    let increasing = |g: &[f64]| !g.is_empty() && g.windows(2).all(|w| w[0] < w[1]);
    if !increasing(mu_grid) || !increasing(length_grid) {
        return Err(OptimizeError::InvalidGrid("grids must be non-empty and strictly increasing"));
    }
    mu_grid
        .par_iter()
        .map(|&mu| {
            length_grid
                .iter()
                .map(|&l| scenario.gain(mu, l).map(|g| g.secure_gain))
                .collect()
        })
        .collect()
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| match i {
                    0 => lo,
                    _ if i + 1 == n => hi,
                    _ => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
                })
                .collect()
        }
    }
}
