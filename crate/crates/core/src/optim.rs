//! Derivative-free minimization on a box: golden-section search in one dimension and
//! Nelder–Mead with deterministic multi-starts otherwise.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimConfig {
    /// Convergence tolerance on the parameter.
    pub tol: f64,
    pub max_evals: usize,
    /// Points in the coarse scan that brackets the 1-D minimum.
    pub scan_points: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            tol: 1e-7,
            max_evals: 2000,
            scan_points: 41,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Wraps the objective so that NaN counts as `+∞` and evaluations are counted.
struct Counted<F> {
    f: F,
    evals: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evals += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

/// Minimizes `f` on `[lo, hi]`: a coarse scan picks the best bracket, then golden-section
/// search refines it.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, cfg: &OptimConfig) -> OptimResult {
    let mut c = Counted {
        f: |x: &[f64]| f(x[0]),
        evals: 0,
    };
    let n = cfg.scan_points.max(3);
    let step = (hi - lo) / (n - 1) as f64;
    let mut best = (0, f64::INFINITY);
    for i in 0..n {
        let v = c.eval(&[lo + step * i as f64]);
        if v < best.1 {
            best = (i, v);
        }
    }
    if !best.1.is_finite() {
        return OptimResult {
            x: vec![0.5 * (lo + hi)],
            value: f64::INFINITY,
            evaluations: c.evals,
            converged: false,
        };
    }
    let mut a = lo + step * best.0.saturating_sub(1) as f64;
    let mut b = (lo + step * (best.0 + 1) as f64).min(hi);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = c.eval(&[x1]);
    let mut f2 = c.eval(&[x2]);
    while (b - a) > cfg.tol && c.evals < cfg.max_evals {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = c.eval(&[x1]);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = c.eval(&[x2]);
        }
    }
    let converged = (b - a) <= cfg.tol;
    let (mut x, mut value) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    // The scan point itself may still be better when the minimum sits on the boundary.
    let scan_x = lo + step * best.0 as f64;
    if best.1 < value {
        x = scan_x;
        value = best.1;
    }
    OptimResult {
        x: vec![x],
        value,
        evaluations: c.evals,
        converged,
    }
}

fn clamp_into(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

/// Nelder–Mead restricted to a box by projecting trial points onto it.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    f: F,
    start: &[f64],
    bounds: &[(f64, f64)],
    cfg: &OptimConfig,
) -> OptimResult {
    let mut c = Counted { f, evals: 0 };
    let n = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut p = start.to_vec();
        let (lo, hi) = bounds[i];
        let delta = 0.1 * (hi - lo);
        p[i] = if p[i] + delta <= hi { p[i] + delta } else { p[i] - delta };
        clamp_into(&mut p, bounds);
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| c.eval(p)).collect();
    let mut converged = false;
    while c.evals < cfg.max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = (1..=n)
            .map(|i| {
                simplex[i]
                    .iter()
                    .zip(&simplex[0])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread <= cfg.tol && values[n].is_finite() {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&simplex[n])
                .map(|(cj, wj)| cj + t * (cj - wj))
                .collect();
            clamp_into(&mut p, bounds);
            p
        };
        let reflected = along(1.0);
        let fr = c.eval(&reflected);
        if fr < values[0] {
            let expanded = along(2.0);
            let fe = c.eval(&expanded);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
        } else {
            let t = if fr < values[n] { 0.5 } else { -0.5 };
            let contracted = along(t);
            let fc = c.eval(&contracted);
            if fc < values[n].min(fr) {
                simplex[n] = contracted;
                values[n] = fc;
            } else {
                for i in 1..=n {
                    let shrunk: Vec<f64> = simplex[i]
                        .iter()
                        .zip(&simplex[0])
                        .map(|(p, b)| b + 0.5 * (p - b))
                        .collect();
                    values[i] = c.eval(&shrunk);
                    simplex[i] = shrunk;
                }
            }
        }
    }
    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("nonempty simplex");
    OptimResult {
        x: simplex[best].clone(),
        value: values[best],
        evaluations: c.evals,
        converged,
    }
}

/// Deterministic starting points: the centre of the box and four interior "corners"
/// at the 25% / 75% positions of each coordinate.
pub fn multistart_points(bounds: &[(f64, f64)]) -> Vec<Vec<f64>> {
    let at = |fracs: &dyn Fn(usize) -> f64| -> Vec<f64> {
        bounds
            .iter()
            .enumerate()
            .map(|(i, &(lo, hi))| lo + fracs(i) * (hi - lo))
            .collect()
    };
    vec![
        at(&|_| 0.5),
        at(&|_| 0.25),
        at(&|_| 0.75),
        at(&|i| if i % 2 == 0 { 0.25 } else { 0.75 }),
        at(&|i| if i % 2 == 0 { 0.75 } else { 0.25 }),
    ]
}

/// Golden-section for one parameter, multi-start Nelder–Mead otherwise. Starts are
/// evaluated independently and reduced in start order, so the result is deterministic.
pub fn minimize<F: Fn(&[f64]) -> f64 + Sync>(f: F, bounds: &[(f64, f64)], cfg: &OptimConfig) -> OptimResult {
    match bounds.len() {
        0 => OptimResult {
            value: f(&[]),
            x: vec![],
            evaluations: 1,
            converged: true,
        },
        1 => golden_section(|x| f(&[x]), bounds[0].0, bounds[0].1, cfg),
        _ => {
            let runs: Vec<OptimResult> = multistart_points(bounds)
                .iter()
                .map(|s| nelder_mead(&f, s, bounds, cfg))
                .collect();
            let evaluations = runs.iter().map(|r| r.evaluations).sum();
            let mut best = runs
                .into_iter()
                .reduce(|a, b| if b.value < a.value { b } else { a })
                .expect("five starts");
            best.evaluations = evaluations;
            best
        }
    }
}
