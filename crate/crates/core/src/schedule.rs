use crate::error::{FlowError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScheduleKind {
    #[default]
    Linear,
}

/// Discretization `t_0 = 0 < t_1 < ... < t_T = 1`.
///
/// Indexed ascending in time and traversed from `n_max` down to 0, so the
/// editing start time is `times[n_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSchedule {
    times: Vec<f64>,
    n_max: usize,
}

/// Builds a schedule with `steps` intervals and `n_max = steps`.
pub fn make_schedule(steps: usize, kind: ScheduleKind) -> Result<TimeSchedule> {
    if steps < 2 {
        return Err(FlowError::InvalidConfig(format!(
            "schedule needs at least 2 steps, got {steps}"
        )));
    }
    let times = match kind {
        ScheduleKind::Linear => (0..=steps).map(|i| i as f64 / steps as f64).collect(),
    };
    Ok(TimeSchedule {
        times,
        n_max: steps,
    })
}

impl TimeSchedule {
    pub fn with_n_max(mut self, n_max: usize) -> Result<Self> {
        if n_max < 1 || n_max > self.steps() {
            return Err(FlowError::InvalidConfig(format!(
                "n_max must lie in 1..={}, got {n_max}",
                self.steps()
            )));
        }
        self.n_max = n_max;
        Ok(self)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t(&self, i: usize) -> f64 {
        self.times[i]
    }

    /// Number of intervals `T`.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn t_max(&self) -> f64 {
        self.times[self.n_max]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_grids() {
        let s = make_schedule(4, ScheduleKind::Linear).unwrap();
        assert_eq!(s.times(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        let s = make_schedule(2, ScheduleKind::Linear).unwrap();
        assert_eq!(s.times(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn too_few_steps() {
        assert!(matches!(
            make_schedule(1, ScheduleKind::Linear),
            Err(FlowError::InvalidConfig(_))
        ));
    }

    #[test]
    fn n_max_bounds() {
        let s = make_schedule(20, ScheduleKind::Linear).unwrap();
        assert!(s.clone().with_n_max(0).is_err());
        assert!(s.clone().with_n_max(21).is_err());
        let s = s.with_n_max(14).unwrap();
        assert!((s.t_max() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn endpoints_and_monotone() {
        for steps in [2, 3, 7, 40, 200] {
            let s = make_schedule(steps, ScheduleKind::Linear).unwrap();
            assert_eq!(s.t(0), 0.0);
            assert_eq!(s.t(steps), 1.0);
            assert!(s.times().windows(2).all(|w| w[0] < w[1]));
        }
    }
}
