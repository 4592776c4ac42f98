//! Estimation of `(beta, omega)`: an IWLS inner loop on the penalized
//! quasi-partial likelihood alternating with REML updates of the covariance
//! parameters.

mod iwls;
mod reml;

pub use iwls::{iwls_step, working_response, IwlsSolution};
pub use reml::{reml_negloglik, RemlObjective};

use log::{debug, info, warn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{DistanceCache, KernelSpec};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::panel::{build_design, BinaryPanel, DesignMatrix, InputDesign, ModelOrder};
use crate::scalar::{clamp_prob, dot, logistic, Scalar};
use crate::seed::{rng_from, stream};

/// Current on-disk model schema.
pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Mean-function coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Coefficients<T> {
    pub phi: Vec<T>,
    pub alpha0: T,
    pub alpha: Vec<T>,
    /// `gamma[l-1]` is the `d`-vector interacting with `y_{t-l}`.
    pub gamma: Vec<Vec<T>>,
}

impl<T: Scalar> Coefficients<T> {
    /// Splits a flat vector in model-matrix column order
    /// `(alpha_0, phi_1..R, alpha_1..d, gamma_1, ..., gamma_L)`.
    pub fn from_flat(order: ModelOrder, d: usize, beta: &[T]) -> Result<Self> {
        if beta.len() != order.columns(d) {
            return Err(Error::DimensionMismatch { expected: order.columns(d), got: beta.len() });
        }
        let r = order.r;
        let base = 1 + r;
        Ok(Self {
            alpha0: beta[0],
            phi: beta[1..base].to_vec(),
            alpha: beta[base..base + d].to_vec(),
            gamma: (0..order.l).map(|l| beta[base + d * (l + 1)..base + d * (l + 2)].to_vec()).collect(),
        })
    }

    pub fn to_flat(&self) -> Vec<T> {
        let mut out = vec![self.alpha0];
        out.extend_from_slice(&self.phi);
        out.extend_from_slice(&self.alpha);
        for g in &self.gamma {
            out.extend_from_slice(g);
        }
        out
    }
}

/// GP variance and lengthscales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CovParams<T> {
    pub sigma2: T,
    pub theta: Vec<T>,
}

impl<T: Scalar> CovParams<T> {
    pub fn unit(d: usize) -> Self {
        Self { sigma2: T::one(), theta: vec![T::one(); d] }
    }

    pub fn to_log(&self) -> Vec<T> {
        std::iter::once(self.sigma2.ln()).chain(self.theta.iter().map(|t| t.ln())).collect()
    }

    pub fn from_log(v: &[T]) -> Self {
        Self { sigma2: v[0].exp(), theta: v[1..].iter().map(|t| t.exp()).collect() }
    }
}

/// Fitted conditional means and the IWLS quantities they came from, one per model row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FitState<T> {
    pub p: Vec<T>,
    pub eta_tilde: Vec<T>,
    pub z: Vec<T>,
    pub w: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterStep {
    pub iteration: usize,
    pub inner_iterations: usize,
    /// REML objective at the incoming `omega` and after the search, both at
    /// this sweep's working response.
    pub reml_start: f64,
    pub reml_objective: f64,
    pub reml_evals: usize,
    pub omega_accepted: bool,
    pub delta_beta: f64,
    pub delta_log_omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub outer_iterations: usize,
    pub delta_beta: f64,
    pub delta_log_omega: f64,
    pub reml_objective: f64,
    /// `max |X'(y - p)|` at the returned state.
    pub score_max: f64,
    /// Set when every response is identical.
    pub separation: bool,
    pub history: Vec<OuterStep>,
}

/// Fitting controls.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FitOptions<T> {
    pub inner_tol: T,
    pub inner_max_iter: usize,
    pub outer_tol_beta: T,
    pub outer_tol_log_omega: T,
    pub outer_max_iter: usize,
    pub p_min: T,
    /// Starting points for the REML search on the first outer sweep
    /// (the current iterate plus `restarts - 1` seeded perturbations).
    pub restarts: usize,
    /// Restart on every outer sweep instead of only the first.
    pub restart_every_sweep: bool,
    pub log_theta_bounds: (T, T),
    pub log_sigma2_bounds: (T, T),
    pub nm_max_evals: usize,
    /// Minimum REML decrease for a new `omega` to be accepted.
    pub accept_tol: T,
    /// Holds `omega` fixed and skips REML.
    pub fixed_cov: Option<CovParams<T>>,
    pub seed: u64,
}

impl<T: Scalar> Default for FitOptions<T> {
    fn default() -> Self {
        Self {
            inner_tol: T::lit(1e-6),
            inner_max_iter: 100,
            outer_tol_beta: T::lit(1e-4),
            outer_tol_log_omega: T::lit(1e-4),
            outer_max_iter: 50,
            p_min: T::lit(1e-6),
            restarts: 3,
            restart_every_sweep: false,
            log_theta_bounds: (T::lit(-6.0), T::lit(6.0)),
            log_sigma2_bounds: (T::lit(-12.0), T::lit(6.0)),
            nm_max_evals: 600,
            accept_tol: T::lit(1e-8),
            fixed_cov: None,
            seed: 0,
        }
    }
}

/// Affine map from raw inputs to the unit cube applied before fitting.
pub type InputScaling<T> = Vec<(T, T)>;

/// A fitted model with everything needed to predict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FittedModel<T> {
    pub schema_version: u32,
    pub order: ModelOrder,
    pub kernel: KernelSpec<T>,
    pub coefficient_names: Vec<String>,
    /// Flat coefficients in model-matrix column order.
    pub beta: Vec<T>,
    pub cov: CovParams<T>,
    pub state: FitState<T>,
    pub inputs: InputDesign<T>,
    pub panel: BinaryPanel,
    pub convergence: ConvergenceReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_scaling: Option<InputScaling<T>>,
}

impl<T: Scalar> FittedModel<T> {
    /// A model with the given parameters and no random-effect prediction
    /// (`Z = 0`), for simulation studies and tests that bypass estimation.
    pub fn from_parameters(
        inputs: &InputDesign<T>,
        panel: &BinaryPanel,
        order: ModelOrder,
        kernel: &KernelSpec<T>,
        beta: Vec<T>,
        cov: CovParams<T>,
    ) -> Result<Self> {
        let dm = build_design(inputs, panel, order)?;
        if beta.len() != dm.cols() {
            return Err(Error::DimensionMismatch { expected: dm.cols(), got: beta.len() });
        }
        if cov.theta.len() != inputs.d() {
            return Err(Error::DimensionMismatch { expected: inputs.d(), got: cov.theta.len() });
        }
        let kernel = kernel.with_lengthscales(cov.theta.clone());
        kernel.validate()?;
        let p: Vec<T> = dm.mul_vec(&beta).into_iter().map(|e| clamp_prob(logistic(e), T::lit(1e-6))).collect();
        let eta_tilde = working_response(dm.response(), &p);
        let w = p.iter().map(|p| *p * (T::one() - *p)).collect();
        Ok(Self {
            schema_version: MODEL_SCHEMA_VERSION,
            order,
            kernel,
            coefficient_names: order.coefficient_names(inputs.d()),
            beta,
            cov,
            state: FitState { z: vec![T::zero(); p.len()], p, eta_tilde, w },
            inputs: inputs.clone(),
            panel: panel.clone(),
            convergence: ConvergenceReport {
                converged: true,
                outer_iterations: 0,
                delta_beta: 0.0,
                delta_log_omega: 0.0,
                reml_objective: 0.0,
                score_max: 0.0,
                separation: false,
                history: vec![],
            },
            input_scaling: None,
        })
    }

    pub fn coefficients(&self) -> Coefficients<T> {
        Coefficients::from_flat(self.order, self.inputs.d(), &self.beta).expect("consistent model")
    }

    /// Kernel with the fitted lengthscales.
    pub fn fitted_kernel(&self) -> KernelSpec<T> {
        self.kernel.with_lengthscales(self.cov.theta.clone())
    }

    pub fn design(&self) -> Result<DesignMatrix<T>> {
        build_design(&self.inputs, &self.panel, self.order)
    }

    /// Mean function `mu` at `x` given lagged responses `lagged(k) = y_{t-k}`.
    pub fn mean_at(&self, x: &[T], lagged: impl Fn(usize) -> u8) -> T {
        let mut row = vec![T::zero(); self.beta.len()];
        self.order.row_into(x, lagged, &mut row);
        dot(&row, &self.beta)
    }

    /// Maps raw query inputs into the fitted input space.
    pub fn scale_input(&self, x: &[T]) -> Vec<T> {
        match &self.input_scaling {
            Some(r) => x.iter().zip(r).map(|(v, (lo, hi))| crate::panel::scale_unit(*v, *lo, *hi)).collect(),
            None => x.to_vec(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Probe {
            schema_version: u32,
        }
        let probe: Probe = serde_json::from_str(s)?;
        if probe.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::SchemaVersion { found: probe.schema_version, expected: MODEL_SCHEMA_VERSION });
        }
        Ok(serde_json::from_str(s)?)
    }
}

fn sup_diff<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc.max((*x - *y).abs()))
}

struct Inner<T> {
    beta: Vec<T>,
    z: Vec<T>,
    p: Vec<T>,
    w: Vec<T>,
    eta_tilde: Vec<T>,
    iterations: usize,
}

fn inner_loop<T: Scalar>(
    dm: &DesignMatrix<T>,
    cache: &DistanceCache<T>,
    cov: &CovParams<T>,
    mut p: Vec<T>,
    mut eta_tilde: Vec<T>,
    names: &[String],
    opts: &FitOptions<T>,
) -> Result<Inner<T>> {
    let r = cache.corr(&cov.theta);
    let y = dm.response();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let w: Vec<T> = p.iter().map(|p| *p * (T::one() - *p)).collect();
        let sol = iwls_step(dm, &eta_tilde, &w, cov, &r, names)?;
        let xb = dm.mul_vec(&sol.beta);
        let p_new: Vec<T> = xb.iter().zip(&sol.z).map(|(a, z)| clamp_prob(logistic(*a + *z), opts.p_min)).collect();
        let eta_new = working_response(y, &p_new);
        let delta = sup_diff(&eta_new, &eta_tilde);
        p = p_new;
        eta_tilde = eta_new;
        if delta < opts.inner_tol || iterations >= opts.inner_max_iter {
            if delta >= opts.inner_tol {
                debug!("inner IWLS stopped at {iterations} iterations with delta {}", delta.as_f64());
            }
            let w = p.iter().map(|p| *p * (T::one() - *p)).collect();
            return Ok(Inner { beta: sol.beta, z: sol.z, p, w, eta_tilde, iterations });
        }
    }
}

/// Minimizes the REML objective from `start` (log coordinates) and returns
/// the best point found with its value and the number of evaluations.
fn reml_search<T: Scalar>(
    obj: &RemlObjective<'_, T>,
    start: &[T],
    restarts: usize,
    opts: &FitOptions<T>,
    sweep: usize,
) -> (Vec<T>, T, usize) {
    let dim = start.len();
    let mut bounds = vec![opts.log_sigma2_bounds];
    bounds.extend(std::iter::repeat_n(opts.log_theta_bounds, dim - 1));
    let nm = NelderMeadOptions {
        initial_step: if sweep == 0 { T::one() } else { T::lit(0.1) },
        max_evals: opts.nm_max_evals,
        ftol_abs: T::lit(1e-8),
        ftol_rel: T::lit(1e-12),
        xtol: T::lit(1e-2),
        bounds,
    };
    let mut rng = rng_from(opts.seed, stream::OPTIMIZER ^ ((sweep as u64) << 8));
    let mut best: Option<(Vec<T>, T)> = None;
    let mut evals = 0;
    for k in 0..restarts.max(1) {
        let x0: Vec<T> = if k == 0 { start.to_vec() } else { start.iter().map(|v| *v + T::lit(rng.random_range(-1.5..1.5))).collect() };
        let res = nelder_mead(|x| obj.eval_log(x), &x0, &nm);
        evals += res.evals;
        if best.as_ref().is_none_or(|(_, f)| res.f < *f) {
            best = Some((res.x, res.f));
        }
    }
    let (x, f) = best.expect("at least one restart");
    (x, f, evals)
}

/// Fits the model by alternating IWLS and REML until both `beta` and `omega`
/// settle. Non-convergence is reported in the returned model, not as an error.
pub fn fit<T: Scalar>(
    inputs: &InputDesign<T>,
    panel: &BinaryPanel,
    order: ModelOrder,
    kernel: &KernelSpec<T>,
    opts: &FitOptions<T>,
) -> Result<FittedModel<T>> {
    kernel.validate()?;
    if kernel.dim() != inputs.d() {
        return Err(Error::DimensionMismatch { expected: inputs.d(), got: kernel.dim() });
    }
    let dm = build_design(inputs, panel, order)?;
    let names = order.coefficient_names(inputs.d());
    let y = dm.response();
    let separation = y.iter().all(|v| *v == y[0]);
    if separation {
        warn!("all responses are {}; estimates are driven by the penalty", y[0]);
    }
    let cache = DistanceCache::new(inputs, kernel.power);
    let mut cov = opts.fixed_cov.clone().unwrap_or_else(|| CovParams::unit(inputs.d()));
    if cov.theta.len() != inputs.d() {
        return Err(Error::DimensionMismatch { expected: inputs.d(), got: cov.theta.len() });
    }

    let half = T::lit(0.5);
    let mut p: Vec<T> = y.iter().map(|v| (T::lit(*v as f64) + half) * half).collect();
    let mut eta_tilde = working_response(y, &p);
    let mut beta_prev = vec![T::zero(); dm.cols()];
    let mut history = Vec::new();
    let mut converged = false;
    let mut last = None;
    let (mut delta_beta, mut delta_omega) = (T::max_value().unwrap(), T::max_value().unwrap());
    let mut reml_value = T::zero();

    for sweep in 0..opts.outer_max_iter {
        let inner = inner_loop(&dm, &cache, &cov, p, eta_tilde, &names, opts)?;
        delta_beta = sup_diff(&inner.beta, &beta_prev);
        beta_prev = inner.beta.clone();

        let mut reml_start = T::zero();
        let (accepted, evals) = if opts.fixed_cov.is_some() {
            delta_omega = T::zero();
            (false, 0)
        } else {
            let obj = RemlObjective::new(&dm, &inner.eta_tilde, &inner.w, &cache)?;
            let start = cov.to_log();
            let f_start = obj.eval_log(&start);
            reml_start = f_start;
            let restarts = if sweep == 0 || opts.restart_every_sweep { opts.restarts } else { 1 };
            let (x, f, evals) = reml_search(&obj, &start, restarts, opts, sweep);
            if f < f_start - opts.accept_tol {
                delta_omega = sup_diff(&x, &start);
                cov = CovParams::from_log(&x);
                reml_value = f;
                (true, evals)
            } else {
                delta_omega = T::zero();
                reml_value = f_start;
                (false, evals)
            }
        };
        history.push(OuterStep {
            iteration: sweep + 1,
            inner_iterations: inner.iterations,
            reml_start: reml_start.as_f64(),
            reml_objective: reml_value.as_f64(),
            reml_evals: evals,
            omega_accepted: accepted,
            delta_beta: delta_beta.as_f64(),
            delta_log_omega: delta_omega.as_f64(),
        });
        debug!(
            "sweep {}: sigma2={:.4} delta_beta={:.2e} delta_log_omega={:.2e}",
            sweep + 1,
            cov.sigma2.as_f64(),
            delta_beta.as_f64(),
            delta_omega.as_f64()
        );
        p = inner.p.clone();
        eta_tilde = inner.eta_tilde.clone();
        last = Some(inner);
        if delta_beta < opts.outer_tol_beta && delta_omega < opts.outer_tol_log_omega {
            converged = true;
            break;
        }
    }

    // settle the state on the final omega
    let inner = if history.last().is_some_and(|h| h.omega_accepted) {
        inner_loop(&dm, &cache, &cov, p, eta_tilde, &names, opts)?
    } else {
        last.expect("at least one sweep")
    };
    if !converged {
        warn!("estimation did not converge in {} outer iterations", opts.outer_max_iter);
    }

    let m = dm.cols();
    let mut score = vec![T::zero(); m];
    for (k, (yk, pk)) in y.iter().zip(&inner.p).enumerate() {
        let resid = T::lit(*yk as f64) - *pk;
        for (s, x) in score.iter_mut().zip(dm.row(k)) {
            *s += *x * resid;
        }
    }
    let score_max = score.iter().fold(0.0f64, |a, s| a.max(s.as_f64().abs()));
    info!("fit finished after {} sweeps (converged: {converged}, sigma2 = {:.4})", history.len(), cov.sigma2.as_f64());

    Ok(FittedModel {
        schema_version: MODEL_SCHEMA_VERSION,
        order,
        kernel: kernel.with_lengthscales(cov.theta.clone()),
        coefficient_names: names,
        beta: inner.beta,
        cov,
        state: FitState { p: inner.p, eta_tilde: inner.eta_tilde, z: inner.z, w: inner.w },
        inputs: inputs.clone(),
        panel: panel.clone(),
        convergence: ConvergenceReport {
            converged,
            outer_iterations: history.len(),
            delta_beta: delta_beta.as_f64(),
            delta_log_omega: delta_omega.as_f64(),
            reml_objective: reml_value.as_f64(),
            score_max,
            separation,
            history,
        },
        input_scaling: None,
    })
}
