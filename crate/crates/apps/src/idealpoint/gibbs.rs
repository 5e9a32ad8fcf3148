//! Data-augmentation Gibbs sampler for the probit ideal-point model
//! `y*_ij = β_j·x_i − α_j + ε_ij`, `ε ~ N(0, 1)`, `y_ij = [y*_ij > 0]`.

use nalgebra::{DMatrix, DVector};
use parapat_core::codec::Codec;
use parapat_core::{CodecError, Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::data::RollCallMatrix;
use super::truncnorm::unit_normal_signed;

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub dims: usize,
    /// Prior standard deviation of each ideal-point coordinate.
    pub prior_x: f64,
    /// Prior standard deviation of each discrimination and difficulty.
    pub prior_item: f64,
}

impl GibbsConfig {
    pub fn new(iterations: usize, burn_in: usize, seed: u64) -> Self {
        GibbsConfig {
            iterations,
            burn_in,
            thin: 1,
            seed,
            dims: 1,
            prior_x: 1.0,
            prior_item: 5.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.thin == 0 || self.dims == 0 {
            return Err(Error::InvalidArgument("iterations, thin and dims must be positive".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidArgument(format!(
                "burn-in {} must be below iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if !(self.prior_x > 0.0 && self.prior_item > 0.0) {
            return Err(Error::InvalidArgument("prior scales must be positive".into()));
        }
        Ok(())
    }
}

/// Current values of every unknown. Matrices are row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub n: usize,
    pub m: usize,
    pub dims: usize,
    /// `n × dims`
    pub x: Vec<f64>,
    /// `m × dims`
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    /// `n × m`
    pub ystar: Vec<f64>,
}

impl ChainState {
    pub fn zeros(n: usize, m: usize, dims: usize) -> Self {
        ChainState {
            n,
            m,
            dims,
            x: vec![0.0; n * dims],
            beta: vec![0.0; m * dims],
            alpha: vec![0.0; m],
            ystar: vec![0.0; n * m],
        }
    }

    fn predictor(&self, i: usize, j: usize) -> f64 {
        let d = self.dims;
        let dot: f64 = (0..d).map(|k| self.beta[j * d + k] * self.x[i * d + k]).sum();
        dot - self.alpha[j]
    }

    pub fn is_finite(&self) -> bool {
        [&self.x, &self.beta, &self.alpha, &self.ystar]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Step (i): latent utilities given the votes and current parameters.
pub fn sample_ystar<R: Rng + ?Sized>(state: &mut ChainState, data: &RollCallMatrix, rng: &mut R) {
    for i in 0..state.n {
        for j in 0..state.m {
            let mean = state.predictor(i, j);
            state.ystar[i * state.m + j] = match data.vote(i, j) {
                Some(yea) => unit_normal_signed(mean, yea, rng),
                None => mean + Distribution::<f64>::sample(&StandardNormal, rng),
            };
        }
    }
}

/// Draws `mean + L⁻ᵀ z` for a posterior with precision `L Lᵀ`.
struct GaussianPosterior {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    upper: DMatrix<f64>,
}

impl GaussianPosterior {
    fn new(precision: DMatrix<f64>) -> Result<Self> {
        let chol = precision
            .cholesky()
            .ok_or_else(|| Error::App("posterior precision is not positive definite".into()))?;
        let upper = chol.l().transpose();
        Ok(GaussianPosterior { chol, upper })
    }

    fn draw<R: Rng + ?Sized>(&self, rhs: &DVector<f64>, rng: &mut R) -> Result<DVector<f64>> {
        let mean = self.chol.solve(rhs);
        let z = DVector::from_fn(rhs.len(), |_, _| StandardNormal.sample(rng));
        let noise = self
            .upper
            .solve_upper_triangular(&z)
            .ok_or_else(|| Error::App("singular Cholesky factor".into()))?;
        Ok(mean + noise)
    }
}

/// Step (ii): each `(β_j, α_j)` from the regression of `y*_·j` on the
/// design `[x_i, −1]` with prior `N(0, prior_sd² I)`.
pub fn sample_item_params<R: Rng + ?Sized>(state: &mut ChainState, prior_sd: f64, rng: &mut R) -> Result<()> {
    let (n, m, d) = (state.n, state.m, state.dims);
    let design = DMatrix::from_fn(n, d + 1, |i, k| if k < d { state.x[i * d + k] } else { -1.0 });
    let mut precision = design.transpose() * &design;
    for k in 0..=d {
        precision[(k, k)] += 1.0 / (prior_sd * prior_sd);
    }
    let post = GaussianPosterior::new(precision)?;
    for j in 0..m {
        let response = DVector::from_fn(n, |i, _| state.ystar[i * m + j]);
        let theta = post.draw(&(design.transpose() * response), rng)?;
        state.beta[j * d..(j + 1) * d].copy_from_slice(&theta.as_slice()[..d]);
        state.alpha[j] = theta[d];
    }
    Ok(())
}

/// Step (iii): each `x_i` from the regression of `y*_i· + α` on the rows
/// `β_j` with prior `N(0, prior_sd² I)`.
pub fn sample_ideal_points<R: Rng + ?Sized>(state: &mut ChainState, prior_sd: f64, rng: &mut R) -> Result<()> {
    let (n, m, d) = (state.n, state.m, state.dims);
    let design = DMatrix::from_fn(m, d, |j, k| state.beta[j * d + k]);
    let mut precision = design.transpose() * &design;
    for k in 0..d {
        precision[(k, k)] += 1.0 / (prior_sd * prior_sd);
    }
    let post = GaussianPosterior::new(precision)?;
    for i in 0..n {
        let response = DVector::from_fn(m, |j, _| state.ystar[i * m + j] + state.alpha[j]);
        let x = post.draw(&(design.transpose() * response), rng)?;
        state.x[i * d..(i + 1) * d].copy_from_slice(x.as_slice());
    }
    Ok(())
}

/// Standardizes every ideal-point dimension to mean 0 and variance 1, then
/// flips dimensions so legislator 0 sits on the non-negative side.
pub fn normalize_ideal_points(state: &mut ChainState) {
    let (n, d) = (state.n, state.dims);
    for k in 0..d {
        let mean = (0..n).map(|i| state.x[i * d + k]).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (state.x[i * d + k] - mean).powi(2)).sum::<f64>() / n as f64;
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        let sign = if state.x[k] - mean < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            state.x[i * d + k] = sign * (state.x[i * d + k] - mean) / scale;
        }
    }
}

/// Running mean and variance.
#[derive(Debug, Clone)]
struct Moments {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(len: usize) -> Self {
        Moments {
            count: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    fn push(&mut self, values: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for ((mean, m2), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(values) {
            let delta = v - *mean;
            *mean += delta / n;
            *m2 += delta * (v - *mean);
        }
    }

    fn sd(&self) -> Vec<f64> {
        let denom = self.count.saturating_sub(1).max(1) as f64;
        self.m2.iter().map(|m2| (m2 / denom).sqrt()).collect()
    }
}

/// Posterior means and standard deviations over the stored samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsSummary {
    pub samples: usize,
    pub dims: usize,
    pub x_mean: Vec<f64>,
    pub x_sd: Vec<f64>,
    pub beta_mean: Vec<f64>,
    pub beta_sd: Vec<f64>,
    pub alpha_mean: Vec<f64>,
    pub alpha_sd: Vec<f64>,
}

impl Codec for GibbsSummary {
    fn encode(&self, buf: &mut Vec<u8>) {
        self.samples.encode(buf);
        self.dims.encode(buf);
        for v in [
            &self.x_mean,
            &self.x_sd,
            &self.beta_mean,
            &self.beta_sd,
            &self.alpha_mean,
            &self.alpha_sd,
        ] {
            v.encode(buf);
        }
    }

    fn decode(input: &mut &[u8]) -> Result<Self, CodecError> {
        Ok(GibbsSummary {
            samples: usize::decode(input)?,
            dims: usize::decode(input)?,
            x_mean: Vec::decode(input)?,
            x_sd: Vec::decode(input)?,
            beta_mean: Vec::decode(input)?,
            beta_sd: Vec::decode(input)?,
            alpha_mean: Vec::decode(input)?,
            alpha_sd: Vec::decode(input)?,
        })
    }
}

/// Runs one chain and summarizes the stored draws.
pub fn run_gibbs(data: &RollCallMatrix, cfg: &GibbsConfig) -> Result<GibbsSummary> {
    cfg.validate()?;
    let (n, m, d) = (data.legislators(), data.roll_calls(), cfg.dims);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = ChainState::zeros(n, m, d);
    for v in state.x.iter_mut() {
        *v = StandardNormal.sample(&mut rng);
    }
    normalize_ideal_points(&mut state);

    let mut xs = Moments::new(n * d);
    let mut betas = Moments::new(m * d);
    let mut alphas = Moments::new(m);
    for t in 0..cfg.iterations {
        sample_ystar(&mut state, data, &mut rng);
        sample_item_params(&mut state, cfg.prior_item, &mut rng)?;
        sample_ideal_points(&mut state, cfg.prior_x, &mut rng)?;
        normalize_ideal_points(&mut state);
        if !state.is_finite() {
            return Err(Error::App(format!("Gibbs state became non-finite at iteration {t}")));
        }
        if t >= cfg.burn_in && (t - cfg.burn_in).is_multiple_of(cfg.thin) {
            xs.push(&state.x);
            betas.push(&state.beta);
            alphas.push(&state.alpha);
        }
    }
    Ok(GibbsSummary {
        samples: xs.count,
        dims: d,
        x_sd: xs.sd(),
        x_mean: xs.mean,
        beta_sd: betas.sd(),
        beta_mean: betas.mean,
        alpha_sd: alphas.sd(),
        alpha_mean: alphas.mean,
    })
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        // ties share the average of their 1-based positions
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            r[i] = avg;
        }
        start = end;
    }
    r
}

/// Spearman rank correlation, with tied values given average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InvalidArgument("spearman needs two equal-length series of length >= 2".into()));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (va * vb).sqrt())
}

/// Spearman correlation after flipping the estimate's sign if that agrees
/// better with the reference.
pub fn sign_aligned_spearman(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    Ok(spearman(estimate, reference)?.abs())
}
