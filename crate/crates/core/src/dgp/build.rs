//! Random construction of a DGP from knob settings, followed by rescaling of
//! the assignment mechanism and response surface.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Beta, Distribution, Poisson, StudentT};
use serde::{Deserialize, Serialize};

use super::knobs::{Heterogeneity, Knobs, Overlap, ResponseModel, TreatmentModel};
use super::spec::{AssignmentMechanism, DgpSpec, NoiseModel, PenaltyRegion, ResponseSurface};
use super::terms::{Basis, Condition, Direction, FunctionTerm};
use crate::covariates::Standardized;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::stats::{mean, sigmoid, sorted, threshold_quantile};

/// Minimum number of covariate columns a DGP needs.
pub const MIN_COLUMNS: usize = 4;

/// Tunable constants of the generator. The defaults are the documented
/// artifact choices; none of them are knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    /// Base-term count is `max(min_terms, 1 + Poisson(term_mean))`.
    pub term_mean: f64,
    pub min_terms: usize,
    pub quadratic_prob: f64,
    pub cubic_prob: f64,
    pub jump_prob: f64,
    pub kink_prob: f64,
    /// Mean number of 2- or 3-way interactions in nonlinear libraries.
    pub interaction_mean: f64,
    pub three_way_prob: f64,
    /// Degrees of freedom of the Student-t coefficient draws.
    pub coefficient_df: f64,
    /// Multiplier on heterogeneity coefficients relative to response ones.
    pub effect_coefficient_scale: f64,
    /// Beta-prime shape parameters for positive quantities.
    pub beta_prime: (f64, f64),
    pub noise_df: f64,
    /// Smallest share of outcome variance left to noise.
    pub min_noise_share: f64,
    pub effect_center: f64,
    pub effect_spread: f64,
    pub effect_df: f64,
    /// Fraction of non-penalized rows whose propensity must lie in
    /// [0.1, 0.9]; the logit spread is the largest that keeps it.
    pub band_coverage: f64,
    /// Range of the targeted penalty-region share of rows.
    pub penalty_share: (f64, f64),
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            term_mean: 8.0,
            min_terms: 4,
            quadratic_prob: 0.5,
            cubic_prob: 0.25,
            jump_prob: 0.5,
            kink_prob: 0.5,
            interaction_mean: 1.0,
            three_way_prob: 0.3,
            coefficient_df: 3.0,
            effect_coefficient_scale: 2.5,
            beta_prime: (2.0, 4.0),
            noise_df: 10.0,
            min_noise_share: 0.05,
            effect_center: 0.65,
            effect_spread: 0.1,
            effect_df: 5.0,
            band_coverage: 0.95,
            penalty_share: (0.05, 0.30),
        }
    }
}

/// Propensity band that almost all non-penalized rows must fall in.
pub const PROPENSITY_BAND: (f64, f64) = (0.1, 0.9);
const MAX_BISECTION: usize = 200;
const SHARE_TOL: f64 = 1e-4;

struct Draws<'a> {
    rng: Stream,
    cfg: &'a DgpConfig,
    coef: StudentT<f64>,
    beta: Beta<f64>,
}

impl<'a> Draws<'a> {
    fn new(seed: u64, cfg: &'a DgpConfig) -> Result<Self> {
        let coef = StudentT::new(cfg.coefficient_df)
            .map_err(|e| Error::invalid(format!("coefficient df: {e}")))?;
        let beta = Beta::new(cfg.beta_prime.0, cfg.beta_prime.1)
            .map_err(|e| Error::invalid(format!("beta-prime shape: {e}")))?;
        Ok(Self {
            rng: rng::stream(seed),
            cfg,
            coef,
            beta,
        })
    }

    fn coefficient(&mut self) -> f64 {
        self.coef.sample(&mut self.rng)
    }

    fn positive(&mut self) -> f64 {
        let b = self.beta.sample(&mut self.rng);
        b / (1.0 - b)
    }

    fn chance(&mut self, p: f64) -> bool {
        self.rng.random::<f64>() < p
    }

    fn poisson(&mut self, mean: f64) -> usize {
        if mean <= 0.0 {
            return 0;
        }
        Poisson::new(mean).map(|d| d.sample(&mut self.rng) as usize).unwrap_or(0)
    }

    fn term_count(&mut self) -> usize {
        (1 + self.poisson(self.cfg.term_mean)).max(self.cfg.min_terms)
    }

    fn quantile_threshold(&mut self, column: &[f64]) -> f64 {
        let q = self.rng.random_range(0.1..0.9);
        threshold_quantile(column, q)
    }
}

/// Sorted standardized columns, used for quantile-anchored thresholds.
struct Columns<'a> {
    x: &'a Standardized,
    sorted: Vec<Vec<f64>>,
}

impl<'a> Columns<'a> {
    fn new(x: &'a Standardized) -> Self {
        let sorted = (0..x.cols()).map(|j| sorted(&x.column(j))).collect();
        Self { x, sorted }
    }

    fn smooth(&self, j: usize) -> bool {
        self.x.columns[j].distinct >= 3
    }
}

fn pick_columns(d: &mut Draws, pool: &[usize], count: usize) -> Vec<usize> {
    let count = count.min(pool.len());
    let mut idx: Vec<usize> = sample(&mut d.rng, pool.len(), count)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    idx.sort_unstable();
    idx
}

fn polynomial_terms(d: &mut Draws, cols: &Columns, chosen: &[usize]) -> Vec<FunctionTerm> {
    let mut terms = Vec::new();
    for &c in chosen {
        terms.push(FunctionTerm::new(Basis::Linear { column: c }, d.coefficient()));
        if cols.smooth(c) {
            if d.chance(d.cfg.quadratic_prob) {
                terms.push(FunctionTerm::new(Basis::Quadratic { column: c }, d.coefficient()));
            }
            if d.chance(d.cfg.cubic_prob) {
                terms.push(FunctionTerm::new(Basis::Cubic { column: c }, d.coefficient()));
            }
        }
    }
    terms.extend(interaction_terms(d, chosen, |_, c| Basis::Linear { column: c }, cols));
    terms
}

fn step_terms(d: &mut Draws, cols: &Columns, chosen: &[usize]) -> Vec<FunctionTerm> {
    let mut terms = Vec::new();
    for &c in chosen {
        terms.push(FunctionTerm::new(Basis::Linear { column: c }, d.coefficient()));
        if cols.smooth(c) {
            if d.chance(d.cfg.jump_prob) {
                let threshold = d.quantile_threshold(&cols.sorted[c]);
                terms.push(FunctionTerm::new(
                    Basis::Jump {
                        column: c,
                        threshold,
                    },
                    d.coefficient(),
                ));
            }
            if d.chance(d.cfg.kink_prob) {
                let threshold = d.quantile_threshold(&cols.sorted[c]);
                terms.push(FunctionTerm::new(
                    Basis::Kink {
                        column: c,
                        location: threshold,
                        threshold,
                    },
                    d.coefficient(),
                ));
            }
        }
    }
    let step_factor = |d: &mut Draws, c: usize| -> Basis {
        if d.chance(0.5) {
            Basis::Jump {
                column: c,
                threshold: d.quantile_threshold(&cols.sorted[c]),
            }
        } else {
            Basis::Linear { column: c }
        }
    };
    terms.extend(interaction_terms(d, chosen, step_factor, cols));
    terms
}

fn interaction_terms<F>(
    d: &mut Draws,
    chosen: &[usize],
    mut factor: F,
    _cols: &Columns,
) -> Vec<FunctionTerm>
where
    F: FnMut(&mut Draws, usize) -> Basis,
{
    let mut terms = Vec::new();
    if chosen.len() < 2 {
        return terms;
    }
    let count = d.poisson(d.cfg.interaction_mean);
    for _ in 0..count {
        let arity = if chosen.len() >= 3 && d.chance(d.cfg.three_way_prob) {
            3
        } else {
            2
        };
        let members = pick_columns(d, chosen, arity);
        let factors = members.iter().map(|&c| factor(d, c)).collect();
        terms.push(FunctionTerm::new(Basis::Interaction { factors }, d.coefficient()));
    }
    terms
}

fn linear_terms(d: &mut Draws, chosen: &[usize]) -> Vec<FunctionTerm> {
    chosen
        .iter()
        .map(|&c| FunctionTerm::new(Basis::Linear { column: c }, d.coefficient()))
        .collect()
}

fn exponential_term(d: &mut Draws, cols: &Columns, all: &[usize]) -> FunctionTerm {
    let members = pick_columns(d, all, 2);
    let inner = members
        .iter()
        .map(|&c| {
            let kind = if cols.smooth(c) {
                d.rng.random_range(0..3)
            } else {
                0
            };
            let basis = match kind {
                0 => Basis::Linear { column: c },
                1 => Basis::Quadratic { column: c },
                _ => Basis::Jump {
                    column: c,
                    threshold: d.quantile_threshold(&cols.sorted[c]),
                },
            };
            let sign = if d.chance(0.5) { 1.0 } else { -1.0 };
            FunctionTerm::new(basis, sign * d.positive().min(1.5))
        })
        .collect();
    FunctionTerm::new(Basis::Exponential { inner }, d.coefficient())
}

fn penalty_region(d: &mut Draws, cols: &Columns, x: &Standardized) -> Result<PenaltyRegion> {
    let n = x.rows() as f64;
    let pool: Vec<usize> = (0..x.cols()).filter(|&j| cols.smooth(j)).collect();
    let pool = if pool.len() >= 3 {
        pool
    } else {
        (0..x.cols()).collect()
    };
    let mut last = None;
    for _ in 0..50 {
        let k = d.rng.random_range(1..=3usize).min(pool.len());
        let share = d.rng.random_range(d.cfg.penalty_share.0..d.cfg.penalty_share.1);
        let tail = share.powf(1.0 / k as f64);
        let members = pick_columns(d, &pool, k);
        let conditions: Vec<Condition> = members
            .iter()
            .map(|&c| {
                let above = d.chance(0.5);
                let (direction, quantile) = if above {
                    (Direction::Above, 1.0 - tail)
                } else {
                    (Direction::AtOrBelow, tail)
                };
                let cutoff = threshold_quantile(&cols.sorted[c], quantile);
                Condition {
                    column: c,
                    direction,
                    quantile,
                    cutoff,
                }
            })
            .collect();
        let region = PenaltyRegion { conditions };
        let covered = (0..x.rows())
            .filter(|&i| {
                let row: Vec<f64> = x.matrix.row(i).iter().copied().collect();
                region.contains(&row)
            })
            .count() as f64
            / n;
        if covered > 0.0 {
            let acceptable = covered >= 0.02 && covered <= 0.40;
            last = Some(region);
            if acceptable {
                break;
            }
        }
    }
    last.ok_or_else(|| Error::invalid("could not place a nonempty penalty region"))
}

/// Draw a DGP for `knobs` over the standardized covariates.
pub fn build_dgp(knobs: Knobs, x: &Standardized, seed: u64, cfg: &DgpConfig) -> Result<DgpSpec> {
    let p = x.cols();
    if p < MIN_COLUMNS {
        return Err(Error::invalid(format!(
            "covariate table has {p} columns; at least {MIN_COLUMNS} are required"
        )));
    }
    let cols = Columns::new(x);
    let mut d = Draws::new(seed, cfg)?;
    let all: Vec<usize> = (0..p).collect();

    // Assignment mechanism.
    let m = d.term_count();
    let assign_cols = pick_columns(&mut d, &all, m);
    let assignment_terms = match knobs.treatment_model {
        TreatmentModel::Linear => linear_terms(&mut d, &assign_cols),
        TreatmentModel::Polynomial => polynomial_terms(&mut d, &cols, &assign_cols),
        TreatmentModel::Step => step_terms(&mut d, &cols, &assign_cols),
    };
    let penalty_regions = match knobs.overlap {
        Overlap::Full => Vec::new(),
        Overlap::Penalize => vec![penalty_region(&mut d, &cols, x)?],
    };

    // Response surface: its own terms avoid assignment columns when enough
    // remain, so that copying is the only route to shared terms.
    let free: Vec<usize> = all.iter().copied().filter(|c| !assign_cols.contains(c)).collect();
    let n_assign = assignment_terms.len();
    let n_copy = (knobs.alignment.copy_probability() * n_assign as f64).round() as usize;
    // Copied terms take the place of own terms, so alignment shifts the mix
    // rather than only adding signal.
    let m_resp = d.term_count().saturating_sub(n_copy).max(2);
    let pool = if free.len() >= cfg.min_terms {
        &free
    } else {
        &all
    };
    let resp_cols = pick_columns(&mut d, pool, m_resp);
    let mut response_terms = match knobs.response_model {
        ResponseModel::Linear => linear_terms(&mut d, &resp_cols),
        ResponseModel::Step => step_terms(&mut d, &cols, &resp_cols),
        ResponseModel::Exponential => {
            let mut t = polynomial_terms(&mut d, &cols, &resp_cols);
            t.push(exponential_term(&mut d, &cols, pool));
            t
        }
    };

    // Alignment: copy round(p * m) assignment terms, coefficients included.
    let mut copied = sample(&mut d.rng, n_assign, n_copy.min(n_assign)).into_vec();
    copied.sort_unstable();
    let mut copied_from_assignment = Vec::with_capacity(copied.len());
    for &k in &copied {
        copied_from_assignment.push(response_terms.len());
        response_terms.push(assignment_terms[k].clone());
    }
    for region in &penalty_regions {
        let coefficient = d.coefficient();
        response_terms.push(FunctionTerm::new(region.as_basis(), coefficient));
    }

    // Heterogeneity: treatment interacts with a subset of response terms.
    let n_effect = match knobs.heterogeneity {
        Heterogeneity::None => 0,
        Heterogeneity::Low => d.rng.random_range(2..=4usize),
        Heterogeneity::High => d.rng.random_range(4..=8usize),
    }
    .min(response_terms.len());
    let mut effect_idx = sample(&mut d.rng, response_terms.len(), n_effect).into_vec();
    effect_idx.sort_unstable();
    let effect_terms: Vec<FunctionTerm> = effect_idx
        .iter()
        .map(|&k| {
            let c = cfg.effect_coefficient_scale * d.coefficient();
            FunctionTerm::new(response_terms[k].basis.clone(), c)
        })
        .collect();

    let effect_draw = StudentT::new(cfg.effect_df)
        .map_err(|e| Error::invalid(format!("effect df: {e}")))?
        .sample(&mut d.rng);
    let target_effect = cfg.effect_center + cfg.effect_spread * effect_draw;
    let noise_share = {
        let b = d.positive();
        (b / (1.0 + b)).max(cfg.min_noise_share)
    };

    let mut spec = DgpSpec {
        knobs,
        seed,
        assignment: AssignmentMechanism {
            terms: assignment_terms,
            intercept: 0.0,
            scale: 1.0,
            penalty_regions,
            target_share: knobs.treated_share.target(),
        },
        response: ResponseSurface {
            terms: response_terms,
            effect_terms,
            shift: 0.0,
            scale: 1.0,
            effect_shift: target_effect,
            target_effect,
            copied_from_assignment,
        },
        noise: NoiseModel {
            df: cfg.noise_df,
            scale: 0.0,
        },
    };
    rescale_assignment(&mut spec, x, cfg)?;
    rescale_response(&mut spec, x, noise_share)?;
    Ok(spec)
}

/// Outcome of fitting the logit intercept and scale.
#[derive(Debug, Clone, Copy)]
pub struct AssignmentCalibration {
    pub mean_propensity: f64,
    pub in_band: f64,
    pub iterations: usize,
}

fn shift_for_share(u: &[f64], scale: f64, target: f64) -> (f64, f64, usize) {
    let share = |b: f64| mean(&u.iter().map(|&v| sigmoid(b + scale * v)).collect::<Vec<_>>());
    let (mut lo, mut hi) = (-60.0, 60.0);
    let mut mid = 0.0;
    let mut iterations = 0;
    for it in 0..MAX_BISECTION {
        iterations = it + 1;
        mid = 0.5 * (lo + hi);
        let s = share(mid);
        if (s - target).abs() < SHARE_TOL * 1e-3 {
            break;
        }
        if s < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (mid, share(mid), iterations)
}

fn band_fraction(u: &[f64], shift: f64, scale: f64) -> f64 {
    let (lo, hi) = PROPENSITY_BAND;
    u.iter()
        .filter(|&&v| {
            let e = sigmoid(shift + scale * v);
            (lo..=hi).contains(&e)
        })
        .count() as f64
        / u.len() as f64
}

/// Fit the logit intercept and scale: the mean propensity over
/// non-penalized rows hits the treated-share target, and the spread is the
/// largest for which `band_coverage` of those rows stay in [0.1, 0.9].
pub fn rescale_assignment(
    spec: &mut DgpSpec,
    x: &Standardized,
    cfg: &DgpConfig,
) -> Result<AssignmentCalibration> {
    let target = spec.assignment.target_share;
    let raw = spec.raw_logit(&x.matrix);
    let penalized = spec.penalized(&x.matrix);
    let free: Vec<f64> = raw
        .iter()
        .zip(&penalized)
        .filter(|(_, &p)| !p)
        .map(|(&r, _)| r)
        .collect();
    if free.is_empty() {
        return Err(Error::invalid("every row lies in a penalty region"));
    }
    let m = mean(&free);
    let sd = crate::stats::pop_sd(&free);
    if !(sd > 1e-12) {
        spec.assignment.intercept = crate::stats::logit(target);
        spec.assignment.scale = 0.0;
        return Ok(AssignmentCalibration {
            mean_propensity: sigmoid(spec.assignment.intercept),
            in_band: 1.0,
            iterations: 0,
        });
    }
    let u: Vec<f64> = free.iter().map(|r| (r - m) / sd).collect();

    let mut total_iter = 0;
    let (mut lo, mut hi) = (0.0, 10.0);
    let (mut best_scale, mut best_shift) = (0.0, crate::stats::logit(target));
    let (hi_shift, _, it) = shift_for_share(&u, hi, target);
    total_iter += it;
    if band_fraction(&u, hi_shift, hi) >= cfg.band_coverage {
        best_scale = hi;
        best_shift = hi_shift;
    } else {
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let (shift, _, it) = shift_for_share(&u, mid, target);
            total_iter += it;
            if band_fraction(&u, shift, mid) >= cfg.band_coverage {
                lo = mid;
                best_scale = mid;
                best_shift = shift;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-6 {
                break;
            }
        }
    }
    let mut shift = best_shift;
    let mut achieved = mean(&u.iter().map(|&v| sigmoid(shift + best_scale * v)).collect::<Vec<_>>());
    if (achieved - target).abs() > SHARE_TOL {
        let (s, a, it) = shift_for_share(&u, best_scale, target);
        shift = s;
        achieved = a;
        total_iter += it;
    }
    let in_band = band_fraction(&u, shift, best_scale);
    if (achieved - target).abs() > 0.02 || in_band < 0.9 {
        return Err(Error::Rescale {
            iterations: total_iter,
            treated_fraction: achieved,
            target,
            in_band,
        });
    }
    spec.assignment.scale = best_scale / sd;
    spec.assignment.intercept = shift - best_scale * m / sd;
    Ok(AssignmentCalibration {
        mean_propensity: achieved,
        in_band,
        iterations: total_iter,
    })
}

/// Expected first two moments of the observed outcome on the build sample,
/// averaging over treatment draws and noise.
pub fn expected_outcome_moments(spec: &DgpSpec, x: &Standardized) -> (f64, f64) {
    let s = spec.surfaces(&x.matrix);
    let n = x.rows() as f64;
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for i in 0..x.rows() {
        let e = s.propensity[i];
        let (a, b) = (s.mu0[i], s.mu1[i]);
        m1 += (1.0 - e) * a + e * b;
        m2 += (1.0 - e) * a * a + e * b * b;
    }
    m1 /= n;
    m2 /= n;
    let var = m2 - m1 * m1 + spec.noise.variance();
    (m1, var)
}

/// Scale and shift the response so the expected observed outcome has mean 0
/// and variance 1 (with `noise_share` of it left to noise), then fix the
/// effect shift so the propensity-weighted mean of `mu1 - mu0` equals the
/// drawn target effect.
pub fn rescale_response(spec: &mut DgpSpec, x: &Standardized, noise_share: f64) -> Result<()> {
    let e = spec.propensity(&x.matrix);
    let raw_mu0 = crate::dgp::terms::evaluate_sum(&spec.response.terms, &x.matrix);
    let raw_tau = crate::dgp::terms::evaluate_sum(&spec.response.effect_terms, &x.matrix);
    let t = spec.response.target_effect;
    let n = x.rows() as f64;
    let e_total: f64 = e.iter().sum();
    if e_total <= 0.0 {
        return Err(Error::DegenerateResponse("no row can be treated".into()));
    }
    let tau_bar: f64 = raw_tau.iter().zip(&e).map(|(a, b)| a * b).sum::<f64>() / e_total;
    let h: Vec<f64> = raw_tau.iter().map(|v| v - tau_bar).collect();
    // Signal variance as a quadratic in the common scale s.
    let g: Vec<f64> = raw_mu0.iter().zip(&h).zip(&e).map(|((m, h), e)| m + e * h).collect();
    let cov = |a: &[f64], b: &[f64]| {
        let (ma, mb) = (mean(a), mean(b));
        a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n
    };
    let w: Vec<f64> = e.iter().map(|v| v * (1.0 - v)).collect();
    let a0 = mean(&w);
    let a1 = w.iter().zip(&h).map(|(w, h)| w * h).sum::<f64>() / n;
    let a2 = w.iter().zip(&h).map(|(w, h)| w * h * h).sum::<f64>() / n;
    let c0 = t * t * (a0 + cov(&e, &e));
    let c1 = 2.0 * t * (a1 + cov(&e, &g));
    let c2 = a2 + cov(&g, &g);
    if !(c2 > 1e-12) {
        return Err(Error::DegenerateResponse(
            "response terms have zero variance on the build sample".into(),
        ));
    }
    let signal = (1.0 - noise_share).max(c0 + 0.05);
    let disc = c1 * c1 - 4.0 * c2 * (c0 - signal);
    let s = (-c1 + disc.max(0.0).sqrt()) / (2.0 * c2);

    let r = &mut spec.response;
    r.scale = s;
    r.effect_shift = t - s * tau_bar;
    let noise_var = (1.0 - signal).max(0.0);
    spec.noise.scale = (noise_var * (spec.noise.df - 2.0) / spec.noise.df).sqrt();
    // Center the expected outcome.
    let mean_y = e
        .iter()
        .zip(&raw_mu0)
        .zip(&h)
        .map(|((e, m), h)| s * m + e * (t + s * h))
        .sum::<f64>()
        / n;
    spec.response.shift = -mean_y;
    Ok(())
}
