//! A common view over every forecaster's output: parametric mixtures,
//! empirical path distributions, and point-mass oracles.

use serde::{Deserialize, Serialize};

use crate::mixtures::{Family, MixtureError, MixtureForecast, MoveClass};

/// Empirical distribution of signed moves from simulated paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalForecast {
    /// Frequencies of (down, up, zero).
    pub pi: [f64; 3],
    /// Sorted magnitudes of the down paths and the up paths.
    pub down: Vec<u64>,
    pub up: Vec<u64>,
}

impl EmpiricalForecast {
    pub fn from_moves(moves: &[i64]) -> EmpiricalForecast {
        let mut down: Vec<u64> = moves.iter().filter(|&&y| y < 0).map(|y| y.unsigned_abs()).collect();
        let mut up: Vec<u64> = moves.iter().filter(|&&y| y > 0).map(|&y| y as u64).collect();
        down.sort_unstable();
        up.sort_unstable();
        let n = moves.len() as f64;
        let pi = if moves.is_empty() {
            [0.0, 0.0, 1.0]
        } else {
            // Zero takes the remainder so the three sum to exactly 1.
            let (pd, pu) = (down.len() as f64 / n, up.len() as f64 / n);
            [pd, pu, 1.0 - (pd + pu)]
        };
        EmpiricalForecast { pi, down, up }
    }

    fn magnitudes(&self, class: MoveClass) -> &[u64] {
        match class {
            MoveClass::Down => &self.down,
            MoveClass::Up => &self.up,
            MoveClass::Zero => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Forecast {
    Mixture(MixtureForecast),
    Empirical(EmpiricalForecast),
    /// Certain knowledge of the move.
    PointMass { move_ticks: i64 },
}

impl Forecast {
    /// Probabilities of (down, up, zero).
    pub fn direction_probs(&self) -> [f64; 3] {
        match self {
            Forecast::Mixture(m) => match m.family {
                Family::ZeroTruncPoisson => [m.pi[0], m.pi[1], m.pi[2]],
                _ => [m.pi[0], m.pi[1], 0.0],
            },
            Forecast::Empirical(e) => e.pi,
            Forecast::PointMass { move_ticks } => {
                let mut p = [0.0; 3];
                p[MoveClass::of(*move_ticks).index()] = 1.0;
                p
            }
        }
    }

    fn can_predict_zero(&self) -> bool {
        match self {
            Forecast::Mixture(m) => m.family == Family::ZeroTruncPoisson,
            _ => true,
        }
    }

    /// Most probable direction. Ties go to Zero when this forecaster can
    /// predict it, otherwise Down before Up.
    pub fn point_direction(&self) -> MoveClass {
        let p = self.direction_probs();
        let order: &[MoveClass] = if self.can_predict_zero() {
            &[MoveClass::Zero, MoveClass::Down, MoveClass::Up]
        } else {
            &[MoveClass::Down, MoveClass::Up]
        };
        let mut best = order[0];
        for &c in &order[1..] {
            if p[c.index()] > p[best.index()] {
                best = c;
            }
        }
        best
    }

    /// ρ-quantile of the magnitude given a move in direction `class`.
    /// `None` when the forecaster has no distribution for that direction.
    pub fn magnitude_quantile(&self, class: MoveClass, rho: f64) -> Result<Option<u64>, MixtureError> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(MixtureError::Domain(format!("quantile level {rho} outside (0, 1)")));
        }
        if class == MoveClass::Zero {
            return Ok(Some(0));
        }
        match self {
            Forecast::Mixture(m) => m.component_quantile(class.index(), rho).map(Some),
            Forecast::Empirical(e) => {
                let mags = e.magnitudes(class);
                if mags.is_empty() {
                    return Ok(None);
                }
                let idx = ((rho * mags.len() as f64).ceil() as usize).clamp(1, mags.len()) - 1;
                Ok(Some(mags[idx]))
            }
            Forecast::PointMass { move_ticks } => {
                Ok((MoveClass::of(*move_ticks) == class).then(|| move_ticks.unsigned_abs()))
            }
        }
    }

    /// Expected magnitudes of the down and up moves, in ticks. Zero where the
    /// forecaster has no mass in that direction.
    pub fn expected_magnitudes(&self) -> [f64; 2] {
        match self {
            Forecast::Mixture(m) => m.expected_move(),
            Forecast::Empirical(e) => {
                let mean = |v: &[u64]| if v.is_empty() { 0.0 } else { v.iter().sum::<u64>() as f64 / v.len() as f64 };
                [mean(&e.down), mean(&e.up)]
            }
            Forecast::PointMass { move_ticks } => match MoveClass::of(*move_ticks) {
                MoveClass::Down => [move_ticks.unsigned_abs() as f64, 0.0],
                MoveClass::Up => [0.0, *move_ticks as f64],
                MoveClass::Zero => [0.0, 0.0],
            },
        }
    }
}

impl From<MixtureForecast> for Forecast {
    fn from(m: MixtureForecast) -> Self {
        Forecast::Mixture(m)
    }
}
