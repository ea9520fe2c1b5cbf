//! Nelder-Mead simplex minimization with box constraints.
//!
//! Trial points are clamped into the box before evaluation, so every point
//! the objective sees is feasible. Non-finite objective values are treated
//! as `+inf`.

#[derive(Debug, Clone)]
pub struct NelderMead {
    pub max_iters: usize,
    /// Upper bound on objective evaluations, in addition to `max_iters`.
    pub max_evals: usize,
    /// Stop once `f_worst - f_best <= tol * (|f_best| + tol)`.
    pub tol: f64,
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        NelderMead {
            max_iters: 1000,
            max_evals: usize::MAX,
            tol: 1e-8,
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Box constraints; infinite entries leave a coordinate unconstrained.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn unbounded(dim: usize) -> Self {
        Bounds {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

impl NelderMead {
    pub fn with_budget(max_iters: usize, tol: f64) -> Self {
        NelderMead {
            max_iters,
            tol,
            ..Default::default()
        }
    }

    /// Minimizes `f` starting from `x0`, with an initial simplex spanned by
    /// `steps` along each axis. A step that would leave the box is taken in
    /// the opposite direction.
    pub fn minimize<F>(&self, mut f: F, x0: &[f64], steps: &[f64], bounds: &Bounds) -> Minimum
    where
        F: FnMut(&[f64]) -> f64,
    {
        let n = x0.len();
        let mut evals = 0usize;
        let mut eval = |x: &[f64], evals: &mut usize| {
            *evals += 1;
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };

        let mut start = x0.to_vec();
        bounds.clamp(&mut start);
        let f0 = eval(&start, &mut evals);
        if self.max_iters == 0 || n == 0 || self.max_evals <= 1 {
            return Minimum {
                x: start,
                value: f0,
                iterations: 0,
                evaluations: evals,
                converged: false,
            };
        }

        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((start.clone(), f0));
        for i in 0..n {
            let mut v = start.clone();
            let step = steps.get(i).copied().unwrap_or(0.1);
            v[i] += step;
            if v[i] > bounds.upper[i] || v[i] < bounds.lower[i] {
                v[i] = start[i] - step;
            }
            bounds.clamp(&mut v);
            let fv = eval(&v, &mut evals);
            simplex.push((v, fv));
        }

        let mut iterations = 0;
        let mut converged = false;
        let mut centroid = vec![0.0; n];
        let point = |base: &[f64], dir_from: &[f64], coef: f64, out: &mut Vec<f64>| {
            out.clear();
            out.extend(base.iter().zip(dir_from).map(|(c, w)| c + coef * (c - w)));
            bounds.clamp(out);
        };
        let mut trial = Vec::with_capacity(n);
        let mut trial2 = Vec::with_capacity(n);

        loop {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let best = simplex[0].1;
            let worst = simplex[n].1;
            if (worst - best).abs() <= self.tol * (best.abs() + self.tol) {
                converged = true;
                break;
            }
            if iterations >= self.max_iters || evals >= self.max_evals {
                break;
            }
            iterations += 1;

            centroid.iter_mut().for_each(|c| *c = 0.0);
            for (v, _) in &simplex[..n] {
                for (c, x) in centroid.iter_mut().zip(v) {
                    *c += x / n as f64;
                }
            }

            let worst_point = simplex[n].0.clone();
            point(&centroid, &worst_point, self.reflection, &mut trial);
            let fr = eval(&trial, &mut evals);

            if fr < best {
                point(&centroid, &worst_point, self.reflection * self.expansion, &mut trial2);
                let fe = eval(&trial2, &mut evals);
                if fe < fr {
                    simplex[n] = (trial2.clone(), fe);
                } else {
                    simplex[n] = (trial.clone(), fr);
                }
                continue;
            }
            if fr < simplex[n - 1].1 {
                simplex[n] = (trial.clone(), fr);
                continue;
            }
            if fr < worst {
                point(&centroid, &worst_point, self.reflection * self.contraction, &mut trial2);
                let fc = eval(&trial2, &mut evals);
                if fc <= fr {
                    simplex[n] = (trial2.clone(), fc);
                    continue;
                }
            } else {
                point(&centroid, &worst_point, -self.contraction, &mut trial2);
                let fc = eval(&trial2, &mut evals);
                if fc < worst {
                    simplex[n] = (trial2.clone(), fc);
                    continue;
                }
            }

            let anchor = simplex[0].0.clone();
            for entry in simplex.iter_mut().skip(1) {
                for (x, a) in entry.0.iter_mut().zip(&anchor) {
                    *x = a + self.shrink * (*x - a);
                }
                bounds.clamp(&mut entry.0);
                entry.1 = eval(&entry.0, &mut evals);
            }
        }

        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (x, value) = simplex.swap_remove(0);
        Minimum {
            x,
            value,
            iterations,
            evaluations: evals,
            converged,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn finds_rosenbrock_minimum() {
        let nm = NelderMead::with_budget(5000, 1e-14);
        let m = nm.minimize(rosenbrock, &[-1.2, 1.0], &[0.1, 0.1], &Bounds::unbounded(2));
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m.x);
    }

    #[test]
    fn respects_box() {
        let bounds = Bounds {
            lower: vec![2.0, -1.0],
            upper: vec![5.0, 1.0],
        };
        let mut seen_outside = false;
        let m = NelderMead::with_budget(2000, 1e-12).minimize(
            |x| {
                seen_outside |= x[0] < 2.0 || x[0] > 5.0 || x[1].abs() > 1.0;
                x[0] * x[0] + (x[1] - 3.0).powi(2)
            },
            &[4.0, 0.0],
            &[0.3, 0.2],
            &bounds,
        );
        assert!(!seen_outside);
        assert!((m.x[0] - 2.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{:?}", m.x);
    }

    #[test]
    fn zero_budget_returns_start() {
        let m = NelderMead::with_budget(0, 1e-8).minimize(rosenbrock, &[0.5, 0.5], &[0.1, 0.1], &Bounds::unbounded(2));
        assert_eq!(m.x, vec![0.5, 0.5]);
        assert_eq!(m.evaluations, 1);
        assert!(!m.converged);
    }

    #[test]
    fn nan_is_treated_as_infinite() {
        let m = NelderMead::with_budget(500, 1e-10).minimize(
            |x| if x[0] < 0.0 { f64::NAN } else { (x[0] - 1.0).powi(2) },
            &[0.1],
            &[0.5],
            &Bounds::unbounded(1),
        );
        assert!((m.x[0] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn never_worse_than_start() {
        let f = |x: &[f64]| (x[0] * 3.0).sin() + x[1].powi(2);
        let start = [0.7, -0.4];
        let m = NelderMead::with_budget(50, 1e-12).minimize(f, &start, &[0.05, 0.05], &Bounds::unbounded(2));
        assert!(m.value <= f(&start));
    }
}
