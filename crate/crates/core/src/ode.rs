//! Fixed-step RK4 integration of compartmental flow systems.
//!
//! A system is described by its transfers between compartments. The state
//! derivative is the incidence of those transfers, so each RK4 stage yields
//! both the state update and the instantaneous transfer rates; the latter are
//! integrated with the same stage weights to give per-day transfer counts.

use crate::error::{Error, Result};

/// Default number of RK4 steps per day (dt = 0.1 day).
pub const DEFAULT_STEPS_PER_DAY: usize = 10;

/// Relative tolerance for negative excursions, scaled by the total population.
pub const NEGATIVITY_TOLERANCE: f64 = 1e-9;

/// A transfer from one compartment into another.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Flow {
    pub name: &'static str,
    pub from: usize,
    pub to: usize,
}

pub trait FlowSystem {
    fn compartments(&self) -> usize;

    fn flows(&self) -> &[Flow];

    /// Instantaneous transfer rates at time `t` (days) within calendar day `day`.
    fn flow_rates(&self, day: usize, t: f64, state: &[f64], rates: &mut [f64]);
}

/// Per-day states and accumulated transfers.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// State at each day boundary, `horizon + 1` entries.
    pub states: Vec<Vec<f64>>,
    /// Transfer totals for each day, `horizon` entries, indexed like `flows()`.
    pub flows: Vec<Vec<f64>>,
    pub flow_names: Vec<&'static str>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.flows.len()
    }

    pub fn flow_index(&self, name: &str) -> Option<usize> {
        self.flow_names.iter().position(|n| *n == name)
    }

    /// Daily totals of the named transfer.
    pub fn flow_series(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.flow_index(name)?;
        Some(self.flows.iter().map(|f| f[k]).collect())
    }

    /// Occupancy of compartment `c` at each day boundary.
    pub fn compartment_series(&self, c: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[c]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Integrator {
    pub steps_per_day: usize,
}

impl Default for Integrator {
    fn default() -> Self {
        Integrator {
            steps_per_day: DEFAULT_STEPS_PER_DAY,
        }
    }
}

struct Workspace {
    rates: [Vec<f64>; 4],
    deriv: [Vec<f64>; 4],
    stage: Vec<f64>,
}

impl Integrator {
    pub fn new(steps_per_day: usize) -> Self {
        Integrator {
            steps_per_day: steps_per_day.max(1),
        }
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.steps_per_day as f64
    }

    pub fn integrate<S: FlowSystem + ?Sized>(&self, system: &S, init: &[f64], horizon: usize) -> Result<Trajectory> {
        let n = system.compartments();
        let flows = system.flows();
        let m = flows.len();
        if init.len() != n {
            return Err(Error::shape(init.len(), n));
        }
        if horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be at least one day".into()));
        }
        if let Some(c) = init.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("initial state of compartment {c} is {}", init[c])));
        }

        let population: f64 = init.iter().sum();
        let eps_neg = NEGATIVITY_TOLERANCE * population.max(1.0);
        let dt = self.dt();

        let mut ws = Workspace {
            rates: std::array::from_fn(|_| vec![0.0; m]),
            deriv: std::array::from_fn(|_| vec![0.0; n]),
            stage: vec![0.0; n],
        };
        let mut y = init.to_vec();
        let mut states = Vec::with_capacity(horizon + 1);
        let mut daily_flows = Vec::with_capacity(horizon);
        states.push(y.clone());

        for day in 0..horizon {
            let mut acc = vec![0.0; m];
            for k in 0..self.steps_per_day {
                let t = day as f64 + k as f64 * dt;
                self.step(system, flows, day, t, dt, &mut y, &mut acc, &mut ws);
                for (c, v) in y.iter_mut().enumerate() {
                    if !v.is_finite() {
                        return Err(Error::NumericalBlowup { day, compartment: c });
                    }
                    if *v < 0.0 {
                        if *v < -eps_neg {
                            return Err(Error::NegativityViolation {
                                day,
                                compartment: c,
                                value: *v,
                            });
                        }
                        *v = 0.0;
                    }
                }
            }
            for f in acc.iter_mut() {
                if !f.is_finite() {
                    return Err(Error::NumericalBlowup { day, compartment: usize::MAX });
                }
                if *f < 0.0 {
                    if *f < -eps_neg {
                        return Err(Error::NegativityViolation {
                            day,
                            compartment: usize::MAX,
                            value: *f,
                        });
                    }
                    *f = 0.0;
                }
            }
            daily_flows.push(acc);
            states.push(y.clone());
        }

        Ok(Trajectory {
            states,
            flows: daily_flows,
            flow_names: flows.iter().map(|f| f.name).collect(),
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn step<S: FlowSystem + ?Sized>(
        &self,
        system: &S,
        flows: &[Flow],
        day: usize,
        t: f64,
        dt: f64,
        y: &mut [f64],
        acc: &mut [f64],
        ws: &mut Workspace,
    ) {
        const OFFSETS: [f64; 4] = [0.0, 0.5, 0.5, 1.0];
        for s in 0..4 {
            if s == 0 {
                ws.stage.copy_from_slice(y);
            } else {
                let h = OFFSETS[s] * dt;
                for ((st, yi), di) in ws.stage.iter_mut().zip(y.iter()).zip(ws.deriv[s - 1].iter()) {
                    *st = yi + h * di;
                }
            }
            system.flow_rates(day, t + OFFSETS[s] * dt, &ws.stage, &mut ws.rates[s]);
            let deriv = &mut ws.deriv[s];
            deriv.iter_mut().for_each(|d| *d = 0.0);
            for (flow, rate) in flows.iter().zip(ws.rates[s].iter()) {
                deriv[flow.from] -= rate;
                deriv[flow.to] += rate;
            }
        }
        let w = dt / 6.0;
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += w * (ws.deriv[0][i] + 2.0 * ws.deriv[1][i] + 2.0 * ws.deriv[2][i] + ws.deriv[3][i]);
        }
        for (j, a) in acc.iter_mut().enumerate() {
            *a += w * (ws.rates[0][j] + 2.0 * ws.rates[1][j] + 2.0 * ws.rates[2][j] + ws.rates[3][j]);
        }
    }
}

/// Integrates with the default step of 0.1 day.
pub fn integrate<S: FlowSystem + ?Sized>(system: &S, init: &[f64], horizon: usize) -> Result<Trajectory> {
    Integrator::default().integrate(system, init, horizon)
}


#[cfg(test)]
mod tests {
    use super::test_systems::*;
    use super::*;

    #[test]
    fn exponential_decay_matches_closed_form() {
        let traj = integrate(&Decay::new(1.0), &[1.0, 0.0], 10).unwrap();
        assert_eq!(traj.states.len(), 11);
        assert_eq!(traj.flows.len(), 10);
        let x10 = traj.states[10][0];
        assert!((x10 - (-10.0f64).exp()).abs() < 1e-8, "{x10}");
    }

    #[test]
    fn halving_step_gives_fourth_order_error_reduction() {
        let exact = (-10.0f64).exp();
        let err = |steps| {
            let traj = Integrator::new(steps).integrate(&Decay::new(1.0), &[1.0, 0.0], 10).unwrap();
            (traj.states[10][0] - exact).abs()
        };
        let ratio = err(10) / err(20);
        assert!(ratio >= 14.0, "ratio {ratio}");
    }

    #[test]
    fn zero_dynamics_is_constant() {
        let init = [3.0, 0.0, 7.5];
        let traj = integrate(&Frozen, &init, 5).unwrap();
        assert!(traj.states.iter().all(|s| s == &init));
        assert!(traj.flows.iter().all(|f| f.is_empty()));
    }

    #[test]
    fn flows_account_for_state_changes() {
        let traj = integrate(&Decay::new(0.3), &[100.0, 0.0], 20).unwrap();
        for day in 0..20 {
            let lost = traj.states[day][0] - traj.states[day + 1][0];
            let flow = traj.flows[day][0];
            assert!(flow >= 0.0);
            assert!((lost - flow).abs() <= 1e-6 * flow.max(1e-12), "day {day}");
        }
    }

    #[test]
    fn negative_excursion_is_rejected() {
        assert!(matches!(
            integrate(&Leak, &[0.5, 0.0], 3),
            Err(Error::NegativityViolation { compartment: 0, .. })
        ));
    }

    #[test]
    fn blowup_is_detected() {
        struct Explode;
        impl FlowSystem for Explode {
            fn compartments(&self) -> usize {
                2
            }
            fn flows(&self) -> &[Flow] {
                const F: [Flow; 1] = [Flow {
                    name: "grow",
                    from: 1,
                    to: 0,
                }];
                &F
            }
            fn flow_rates(&self, _day: usize, _t: f64, state: &[f64], rates: &mut [f64]) {
                rates[0] = -1e300 * state[0].max(1.0);
            }
        }
        assert!(matches!(
            integrate(&Explode, &[1.0, 1.0], 2),
            Err(Error::NumericalBlowup { .. }) | Err(Error::NegativityViolation { .. })
        ));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(integrate(&Decay::new(1.0), &[1.0, 0.0], 0).is_err());
        assert!(integrate(&Decay::new(1.0), &[-1.0, 0.0], 1).is_err());
        assert!(matches!(
            integrate(&Decay::new(1.0), &[1.0], 1),
            Err(Error::ShapeError { .. })
        ));
    }
}
