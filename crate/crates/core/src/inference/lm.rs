//! Bounded Levenberg–Marquardt.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use super::{FitProblem, FitResult, Observations, ResidualMode, Termination, TraceModel, Z95};
use crate::error::{Error, Result};
use crate::linalg::{pinv_symmetric, solve_real};

struct Workspace<'a> {
    model: &'a dyn TraceModel,
    data: &'a Observations,
    points: Vec<usize>,
    mode: ResidualMode,
    full: Vec<f64>,
    free_idx: Vec<usize>,
    grad: Vec<Complex64>,
}

impl Workspace<'_> {
    fn expand(&mut self, free: &[f64]) -> &[f64] {
        for (k, &j) in self.free_idx.iter().enumerate() {
            self.full[j] = free[k];
        }
        &self.full
    }

    fn residual_count(&self) -> usize {
        match self.mode {
            ResidualMode::Complex => 2 * self.points.len(),
            ResidualMode::Magnitude => self.points.len(),
        }
    }

    fn residuals(&mut self, free: &[f64], out: &mut Vec<f64>) {
        out.clear();
        self.expand(free);
        for &k in &self.points {
            let x = self.data.x[k];
            let y = self.data.samples.get(k);
            let m = self.model.value(&self.full, x);
            match self.mode {
                ResidualMode::Complex => {
                    out.push(y.re - m.re);
                    out.push(y.im - m.im);
                }
                ResidualMode::Magnitude => {
                    if self.data.samples.is_complex() {
                        out.push(y.norm() - m.norm());
                    } else {
                        out.push(y.re - m.re);
                    }
                }
            }
        }
    }

    /// ∂r/∂θ for the free parameters, row-major (residual × free).
    fn jacobian(&mut self, free: &[f64], out: &mut Vec<f64>) {
        let nf = self.free_idx.len();
        out.clear();
        self.expand(free);
        let complex_data = self.data.samples.is_complex();
        for &k in &self.points {
            let x = self.data.x[k];
            self.model.gradient(&self.full, x, &mut self.grad);
            match self.mode {
                ResidualMode::Complex => {
                    for &j in &self.free_idx {
                        out.push(-self.grad[j].re);
                    }
                    for &j in &self.free_idx {
                        out.push(-self.grad[j].im);
                    }
                }
                ResidualMode::Magnitude => {
                    if complex_data {
                        let m = self.model.value(&self.full, x);
                        let mag = m.norm();
                        for &j in &self.free_idx {
                            let d = if mag > 0.0 {
                                (m.conj() * self.grad[j]).re / mag
                            } else {
                                0.0
                            };
                            out.push(-d);
                        }
                    } else {
                        for &j in &self.free_idx {
                            out.push(-self.grad[j].re);
                        }
                    }
                }
            }
        }
        debug_assert_eq!(out.len(), self.residual_count() * nf);
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Gauss–Newton pieces: JᵀJ (n×n) and Jᵀr.
fn normal_equations(jac: &[f64], r: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jtj = vec![0.0; n * n];
    let mut jtr = vec![0.0; n];
    for (row, &ri) in jac.chunks_exact(n).zip(r) {
        for a in 0..n {
            jtr[a] += row[a] * ri;
            for b in a..n {
                jtj[a * n + b] += row[a] * row[b];
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            jtj[a * n + b] = jtj[b * n + a];
        }
    }
    (jtj, jtr)
}

/// max_j |(Jᵀr)_j| / (‖J_j‖·‖r‖), a scale-free gradient measure.
fn scaled_gradient(jtj: &[f64], jtr: &[f64], cost: f64) -> f64 {
    let n = jtr.len();
    if cost == 0.0 {
        return 0.0;
    }
    (0..n)
        .map(|j| {
            let d = jtj[j * n + j];
            if d > 0.0 {
                jtr[j].abs() / libm::sqrt(d * cost)
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*lo, *hi);
    }
}

fn setup_error(msg: String) -> Error {
    Error::Setup(msg)
}

/// Minimize the squared residuals of `problem` with bounded Levenberg–Marquardt.
///
/// Steps solve `(JᵀJ + λ·diag(JᵀJ)) δ = −Jᵀr` and are projected onto the bounds; a step is
/// kept only if it lowers the cost. The covariance is the pseudo-inverse of JᵀJ scaled by
/// the residual variance Σr²/(m − n).
///
/// Non-convergence is not an error: it is reported in [`FitResult::termination`].
pub fn fit_curve(problem: &FitProblem<'_>) -> Result<FitResult> {
    let data = problem.data;
    let names: Vec<String> = problem.params.iter().map(|p| p.name.clone()).collect();
    let expected = problem.model.parameter_names();
    if expected.len() != problem.params.len() {
        return Err(setup_error(format!(
            "model takes {} parameters, {} given",
            expected.len(),
            problem.params.len()
        )));
    }
    if data.x.len() != data.samples.len() {
        return Err(setup_error("grid and sample counts differ".into()));
    }
    if data.is_empty() {
        return Err(setup_error("trace is empty".into()));
    }
    if problem.residual_mode == ResidualMode::Complex && !data.samples.is_complex() {
        return Err(setup_error("complex residuals need complex samples".into()));
    }
    for p in &problem.params {
        if !(p.lower <= p.initial && p.initial <= p.upper) || !p.initial.is_finite() {
            return Err(setup_error(format!(
                "initial value of `{}` outside its bounds",
                p.name
            )));
        }
    }
    let free_idx: Vec<usize> = (0..problem.params.len())
        .filter(|&j| !problem.params[j].fixed)
        .collect();
    let nf = free_idx.len();
    let included: Vec<bool> = data
        .x
        .iter()
        .map(|&x| !problem.exclusions.iter().any(|w| w.contains(x)))
        .collect();
    let points: Vec<usize> = (0..data.len()).filter(|&k| included[k]).collect();
    if points.len() < 3 * nf.max(1) {
        return Err(setup_error(format!(
            "{} usable points for {} free parameters; need at least three per parameter",
            points.len(),
            nf
        )));
    }

    let mut ws = Workspace {
        model: problem.model,
        data,
        points,
        mode: problem.residual_mode,
        full: problem.params.iter().map(|p| p.initial).collect(),
        free_idx: free_idx.clone(),
        grad: vec![Complex64::new(0.0, 0.0); problem.params.len()],
    };
    let lower: Vec<f64> = free_idx.iter().map(|&j| problem.params[j].lower).collect();
    let upper: Vec<f64> = free_idx.iter().map(|&j| problem.params[j].upper).collect();
    let mut x: Vec<f64> = free_idx
        .iter()
        .map(|&j| problem.params[j].initial)
        .collect();
    let opts = problem.options;

    let mut r = Vec::new();
    let mut jac = Vec::new();
    ws.residuals(&x, &mut r);
    let mut cost = sum_sq(&r);
    let mut cost_history = vec![cost];
    let mut lambda = opts.initial_lambda;
    let mut iterations = 0;
    let mut evaluations = 1;
    let mut termination = Termination::MaxIterations;
    let mut trial_r = Vec::new();

    let scale_y = (0..data.len()).fold(0.0f64, |m, k| m.max(data.samples.get(k).norm()));
    let floor_unit = 64.0 * f64::EPSILON * scale_y;
    let rounding_floor = ws.residual_count() as f64 * floor_unit * floor_unit;
    if nf == 0 {
        termination = Termination::GradientConverged;
    }
    while nf > 0 && iterations < opts.max_iterations {
        iterations += 1;
        ws.jacobian(&x, &mut jac);
        let (jtj, jtr) = normal_equations(&jac, &r, nf);
        if scaled_gradient(&jtj, &jtr, cost) < opts.gradient_tolerance {
            termination = Termination::GradientConverged;
            break;
        }
        // solve in units where diag(JᵀJ) = 1; same step as λ·diag(JᵀJ) damping, better conditioned
        let scale: Vec<f64> = (0..nf)
            .map(|j| {
                if jtj[j * nf + j] > 0.0 {
                    1.0 / libm::sqrt(jtj[j * nf + j])
                } else {
                    1.0
                }
            })
            .collect();
        let mut scaled = jtj.clone();
        for a in 0..nf {
            for b in 0..nf {
                scaled[a * nf + b] *= scale[a] * scale[b];
            }
        }
        let rhs: Vec<f64> = (0..nf).map(|j| -jtr[j] * scale[j]).collect();
        let mut accepted = false;
        while lambda <= opts.max_lambda {
            let mut a = scaled.clone();
            for j in 0..nf {
                a[j * nf + j] += lambda;
            }
            let step = match solve_real(&a, &rhs, nf) {
                Ok(y) => y
                    .iter()
                    .zip(&scale)
                    .map(|(y, s)| y * s)
                    .collect::<Vec<f64>>(),
                Err(_) => {
                    lambda *= opts.lambda_up;
                    continue;
                }
            };
            let mut trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
            project(&mut trial, &lower, &upper);
            ws.residuals(&trial, &mut trial_r);
            evaluations += 1;
            let trial_cost = sum_sq(&trial_r);
            if trial_cost.is_finite() && trial_cost < cost {
                let rel_change = (cost - trial_cost) / cost;
                let step_small = x
                    .iter()
                    .zip(&trial)
                    .all(|(a, b)| (a - b).abs() <= 1e-15 * a.abs().max(b.abs()));
                x = trial;
                core::mem::swap(&mut r, &mut trial_r);
                cost = trial_cost;
                cost_history.push(cost);
                lambda = (lambda / opts.lambda_down).max(1e-20);
                accepted = true;
                if rel_change < opts.cost_tolerance || cost == 0.0 || step_small {
                    termination = Termination::CostConverged;
                }
                break;
            }
            lambda *= opts.lambda_up;
        }
        if !accepted {
            // a tiny gradient, or residuals at rounding level, means we already sit on the
            // minimum to working precision
            termination = if scaled_gradient(&jtj, &jtr, cost) < 1e-6 || cost <= rounding_floor {
                Termination::Stalled
            } else {
                Termination::NotConverged
            };
            break;
        }
        if termination == Termination::CostConverged {
            break;
        }
        if iterations == opts.max_iterations {
            termination = Termination::MaxIterations;
        }
    }

    // The cost stops resolving progress near √ε in the parameters; a few undamped
    // Gauss–Newton steps, kept unless they raise the cost beyond rounding, finish the job.
    if termination.converged() && nf > 0 {
        for _ in 0..3 {
            ws.jacobian(&x, &mut jac);
            let (jtj, jtr) = normal_equations(&jac, &r, nf);
            let scale: Vec<f64> = (0..nf)
                .map(|j| {
                    if jtj[j * nf + j] > 0.0 {
                        1.0 / libm::sqrt(jtj[j * nf + j])
                    } else {
                        0.0
                    }
                })
                .collect();
            let mut a = jtj.clone();
            for i in 0..nf {
                for j in 0..nf {
                    a[i * nf + j] *= scale[i] * scale[j];
                }
                if scale[i] == 0.0 {
                    a[i * nf + i] = 1.0;
                }
            }
            let rhs: Vec<f64> = (0..nf).map(|j| -jtr[j] * scale[j]).collect();
            let Ok(y) = solve_real(&a, &rhs, nf) else {
                break;
            };
            let mut trial: Vec<f64> = x
                .iter()
                .zip(y.iter().zip(&scale))
                .map(|(v, (y, s))| v + y * s)
                .collect();
            project(&mut trial, &lower, &upper);
            ws.residuals(&trial, &mut trial_r);
            evaluations += 1;
            let trial_cost = sum_sq(&trial_r);
            if !(trial_cost <= cost * (1.0 + 1e-12)) || trial == x {
                break;
            }
            x = trial;
            core::mem::swap(&mut r, &mut trial_r);
            if cost_history.last().is_some_and(|&c| trial_cost < c) {
                cost_history.push(trial_cost);
            }
            cost = trial_cost;
        }
    }

    // uncertainty at the final point
    let m = ws.residual_count();
    let estimates: Vec<f64> = ws.expand(&x).to_vec();
    let np = problem.params.len();
    let mut covariance = vec![0.0; np * np];
    let mut ci95 = vec![0.0; np];
    let dof = m.saturating_sub(nf);
    let variance = if dof > 0 { cost / dof as f64 } else { f64::NAN };
    if nf > 0 {
        ws.jacobian(&x, &mut jac);
        let (jtj, _) = normal_equations(&jac, &r, nf);
        let live: Vec<usize> = (0..nf).filter(|&j| jtj[j * nf + j] > 0.0).collect();
        let nl = live.len();
        // correlation form keeps the eigen threshold independent of parameter units
        let scale: Vec<f64> = live
            .iter()
            .map(|&j| 1.0 / libm::sqrt(jtj[j * nf + j]))
            .collect();
        let mut corr = vec![0.0; nl * nl];
        for (a, &ja) in live.iter().enumerate() {
            for (b, &jb) in live.iter().enumerate() {
                corr[a * nl + b] = jtj[ja * nf + jb] * scale[a] * scale[b];
            }
        }
        let (pinv, _rank) = pinv_symmetric(&corr, nl, 1e-13);
        for (a, &ja) in live.iter().enumerate() {
            for (b, &jb) in live.iter().enumerate() {
                let (pa, pb) = (free_idx[ja], free_idx[jb]);
                covariance[pa * np + pb] = pinv[a * nl + b] * scale[a] * scale[b] * variance;
            }
        }
        for j in 0..nf {
            let p = free_idx[j];
            ci95[p] = if live.contains(&j) {
                Z95 * libm::sqrt(covariance[p * np + p].max(0.0))
            } else {
                f64::INFINITY
            };
        }
    }

    let residual_trace: Vec<Complex64> = (0..data.len())
        .map(|k| data.samples.get(k) - problem.model.value(&estimates, data.x[k]))
        .collect();

    Ok(FitResult {
        names,
        free: problem.params.iter().map(|p| !p.fixed).collect(),
        estimates,
        covariance,
        ci95,
        reduced_chi_square: variance,
        cost,
        cost_history,
        residual_trace,
        included,
        n_residuals: m,
        iterations,
        evaluations,
        termination,
        exclusions: problem.exclusions.clone(),
        residual_mode: problem.residual_mode,
    })
}

/// Largest relative mismatch between the analytic gradient of `model` and a five-point
/// finite-difference derivative at `params`, over all grid points and parameters.
///
/// `steps` holds the difference step of each parameter. Each comparison is relative to the
/// larger of the two derivative magnitudes, floored at `floor` times the largest
/// derivative of that parameter on the grid.
pub fn check_jacobian(
    model: &dyn TraceModel,
    params: &[f64],
    steps: &[f64],
    xs: &[f64],
    floor: f64,
) -> f64 {
    let n = params.len();
    let mut analytic = vec![Complex64::new(0.0, 0.0); n];
    let mut an_all = Vec::with_capacity(xs.len());
    let mut fd_all = Vec::with_capacity(xs.len());
    let at = |j: usize, h: f64, x: f64| {
        let mut p = params.to_vec();
        p[j] += h;
        model.value(&p, x)
    };
    for &x in xs {
        model.gradient(params, x, &mut analytic);
        let fd: Vec<Complex64> = (0..n)
            .map(|j| {
                let h = steps[j];
                (8.0 * (at(j, h, x) - at(j, -h, x)) - (at(j, 2.0 * h, x) - at(j, -2.0 * h, x)))
                    / (12.0 * h)
            })
            .collect();
        an_all.push(analytic.clone());
        fd_all.push(fd);
    }
    let mut worst = 0.0f64;
    for j in 0..n {
        let scale = an_all.iter().fold(0.0f64, |m, g| m.max(g[j].norm()));
        for (a, f) in an_all.iter().zip(&fd_all) {
            let denom = a[j].norm().max(f[j].norm()).max(floor * scale);
            if denom > 0.0 {
                worst = worst.max((a[j] - f[j]).norm() / denom);
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::super::{ExclusionWindow, LmOptions, ParamSpec};
    use super::*;

    struct Line;

    impl TraceModel for Line {
        fn parameter_names(&self) -> Vec<&'static str> {
            ["slope", "intercept"].to_vec()
        }
        fn value(&self, p: &[f64], x: f64) -> Complex64 {
            Complex64::new(p[0] * x + p[1], 0.0)
        }
        fn gradient(&self, _p: &[f64], x: f64, g: &mut [Complex64]) {
            g[0] = Complex64::new(x, 0.0);
            g[1] = Complex64::new(1.0, 0.0);
        }
    }

    fn line_problem<'a>(data: &'a Observations, model: &'a Line) -> FitProblem<'a> {
        FitProblem {
            model,
            data,
            params: vec![
                ParamSpec::free("slope", 0.0),
                ParamSpec::free("intercept", 0.0),
            ],
            exclusions: vec![],
            residual_mode: ResidualMode::Magnitude,
            options: LmOptions::default(),
        }
    }

    #[test]
    fn linear_fit_matches_normal_equations() {
        let xs: Vec<f64> = (0..40).map(|k| k as f64 * 0.25).collect();
        // deterministic scatter
        let ys: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(k, x)| 1.7 * x - 0.3 + 0.05 * ((k * 7919 % 13) as f64 - 6.0))
            .collect();
        let n = xs.len() as f64;
        let (sx, sy) = (xs.iter().sum::<f64>(), ys.iter().sum::<f64>());
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let intercept = (sy - slope * sx) / n;
        let data = Observations::real(xs, ys);
        let fit = fit_curve(&line_problem(&data, &Line)).unwrap();
        assert!(fit.converged());
        assert!((fit.estimates[0] - slope).abs() <= 1e-10 * slope.abs());
        assert!(
            (fit.estimates[1] - intercept).abs() <= 1e-10 * intercept.abs(),
            "{fit:?} {slope} {intercept}"
        );
        // textbook standard errors of the slope
        let s2 = fit.cost / (n - 2.0);
        let se_slope = (s2 * n / (n * sxx - sx * sx)).sqrt();
        assert!((fit.ci95[0] - Z95 * se_slope).abs() < 1e-9 * se_slope);
    }

    #[test]
    fn cost_never_increases() {
        let xs: Vec<f64> = (0..30).map(|k| k as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|t| 5.0 * (-1.3 * t).exp() + 0.5).collect();
        let data = Observations::real(xs, ys);
        let model = super::super::ExponentialDecay;
        let fit = fit_curve(&FitProblem {
            model: &model,
            data: &data,
            params: vec![
                ParamSpec::free("amplitude", 1.0),
                ParamSpec::free("rate", 0.2),
                ParamSpec::free("offset", 0.0),
            ],
            exclusions: vec![],
            residual_mode: ResidualMode::Magnitude,
            options: LmOptions::default(),
        })
        .unwrap();
        assert!(fit.converged());
        assert!(fit.cost_history.windows(2).all(|w| w[1] <= w[0]));
        assert!((fit.estimates[1] - 1.3).abs() < 1e-8);
    }

    #[test]
    fn setup_errors() {
        let data = Observations::real(vec![0.0, 1.0, 2.0, 3.0, 4.0], vec![0.0; 5]);
        assert!(matches!(
            fit_curve(&line_problem(&data, &Line)),
            Err(Error::Setup(_))
        ));
        let empty = Observations::real(vec![], vec![]);
        assert!(fit_curve(&line_problem(&empty, &Line)).is_err());
        let data = Observations::real((0..10).map(f64::from).collect(), vec![1.0; 10]);
        let mut p = line_problem(&data, &Line);
        p.params[0] = ParamSpec::bounded("slope", 5.0, 0.0, 1.0);
        assert!(fit_curve(&p).is_err());
        let mut p = line_problem(&data, &Line);
        p.residual_mode = ResidualMode::Complex;
        assert!(fit_curve(&p).is_err());
        let mut p = line_problem(&data, &Line);
        p.exclusions = vec![ExclusionWindow { lo: 0.5, hi: 9.5 }];
        assert!(fit_curve(&p).is_err());
    }

    #[test]
    fn bounds_are_enforced() {
        let xs: Vec<f64> = (0..20).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let data = Observations::real(xs, ys);
        let mut p = line_problem(&data, &Line);
        p.params[0] = ParamSpec::bounded("slope", 0.5, 0.0, 1.5);
        let fit = fit_curve(&p).unwrap();
        assert!(fit.estimates[0] <= 1.5);
        assert!((fit.estimates[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn unconstrained_parameter_gets_infinite_interval() {
        struct Flat;
        impl TraceModel for Flat {
            fn parameter_names(&self) -> Vec<&'static str> {
                ["level", "ghost"].to_vec()
            }
            fn value(&self, p: &[f64], _x: f64) -> Complex64 {
                Complex64::new(p[0], 0.0)
            }
            fn gradient(&self, _p: &[f64], _x: f64, g: &mut [Complex64]) {
                g[0] = Complex64::new(1.0, 0.0);
                g[1] = Complex64::new(0.0, 0.0);
            }
        }
        let data = Observations::real(
            (0..20).map(f64::from).collect(),
            (0..20).map(|k| 3.0 + 0.01 * (k % 3) as f64).collect(),
        );
        let fit = fit_curve(&FitProblem {
            model: &Flat,
            data: &data,
            params: vec![ParamSpec::free("level", 0.0), ParamSpec::free("ghost", 1.0)],
            exclusions: vec![],
            residual_mode: ResidualMode::Magnitude,
            options: LmOptions::default(),
        })
        .unwrap();
        assert!(fit.converged());
        assert!(fit.ci95[0].is_finite());
        assert!(fit.ci95[1].is_infinite());
        assert_eq!(fit.estimates[1], 1.0);
    }

    #[test]
    fn fixed_parameters_stay_put() {
        let xs: Vec<f64> = (0..20).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let data = Observations::real(xs, ys);
        let mut p = line_problem(&data, &Line);
        p.params[1] = ParamSpec::fixed("intercept", 1.0);
        let fit = fit_curve(&p).unwrap();
        assert_eq!(fit.estimates[1], 1.0);
        assert_eq!(fit.ci95[1], 0.0);
        assert!((fit.estimates[0] - 2.0).abs() < 1e-12);
    }
}
