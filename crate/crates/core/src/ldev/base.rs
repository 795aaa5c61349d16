//! Base message-passing schemes plugged into the population dynamics.

use std::fmt::Debug;

use rand::Rng as _;

use crate::bp::{self, BpMessage};
use crate::rng::Rng;
use crate::sp::{self, SpClauseMessage, SpVarMessage};

/// Local update rules and Bethe terms of a base scheme. `Up` messages go
/// from variables to clauses, `Down` messages from clauses to variables.
pub trait CavityBase: Send + Sync {
    type Up: Copy + Debug + Send + Sync;
    type Down: Copy + Debug + Send + Sync;

    fn random_up(rng: &mut Rng) -> Self::Up;
    fn random_down(rng: &mut Rng) -> Self::Down;
    /// Cavity variable update and `log z`; `None` on a zero normalizer.
    fn var_update(incoming: &[(Self::Down, u8)], j_out: u8) -> Option<(Self::Up, f64)>;
    /// Cavity clause update and `log ẑ`.
    fn clause_update(incoming: &[(Self::Up, u8)], j_out: u8) -> (Self::Down, f64);
    fn clause_term(all: &[(Self::Up, u8)]) -> f64;
    fn var_term(all: &[(Self::Down, u8)]) -> f64;
    fn edge_term(up: Self::Up, down: Self::Down) -> f64;
}

/// Belief propagation: large deviations of the Bethe entropy.
#[derive(Debug, Clone, Copy, Default)]
pub struct BpBase;

impl CavityBase for BpBase {
    type Up = BpMessage;
    type Down = BpMessage;

    fn random_up(rng: &mut Rng) -> BpMessage {
        BpMessage::with_p0(rng.gen_range(0.0..1.0))
    }

    fn random_down(rng: &mut Rng) -> BpMessage {
        BpMessage::with_p0(rng.gen_range(0.0..1.0))
    }

    #[inline]
    fn var_update(incoming: &[(BpMessage, u8)], _j_out: u8) -> Option<(BpMessage, f64)> {
        bp::var_update(incoming.iter().map(|&(m, _)| m)).ok()
    }

    #[inline]
    fn clause_update(incoming: &[(BpMessage, u8)], j_out: u8) -> (BpMessage, f64) {
        bp::clause_update(incoming.iter().copied(), j_out)
    }

    #[inline]
    fn clause_term(all: &[(BpMessage, u8)]) -> f64 {
        bp::clause_term(all.iter().copied())
    }

    #[inline]
    fn var_term(all: &[(BpMessage, u8)]) -> f64 {
        bp::var_term(all.iter().map(|&(m, _)| m))
    }

    #[inline]
    fn edge_term(up: BpMessage, down: BpMessage) -> f64 {
        bp::edge_term(up, down)
    }
}

/// Survey propagation: large deviations of the complexity.
#[derive(Debug, Clone, Copy, Default)]
pub struct SpBase;

impl CavityBase for SpBase {
    type Up = SpVarMessage;
    type Down = SpClauseMessage;

    fn random_up(rng: &mut Rng) -> SpVarMessage {
        let w: [f64; 3] = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
        let z: f64 = w.iter().sum();
        SpVarMessage { q_s: w[0] / z, q_u: w[1] / z, q_star: w[2] / z }
    }

    fn random_down(rng: &mut Rng) -> SpClauseMessage {
        SpClauseMessage { q_hat: rng.gen_range(0.0..1.0) }
    }

    #[inline]
    fn var_update(incoming: &[(SpClauseMessage, u8)], j_out: u8) -> Option<(SpVarMessage, f64)> {
        sp::var_update(incoming.iter().copied(), j_out).ok()
    }

    #[inline]
    fn clause_update(incoming: &[(SpVarMessage, u8)], _j_out: u8) -> (SpClauseMessage, f64) {
        (sp::clause_update(incoming.iter().map(|&(m, _)| m)), 0.0)
    }

    #[inline]
    fn clause_term(all: &[(SpVarMessage, u8)]) -> f64 {
        sp::clause_term(all.iter().map(|&(m, _)| m))
    }

    #[inline]
    fn var_term(all: &[(SpClauseMessage, u8)]) -> f64 {
        sp::var_term(all.iter().copied())
    }

    #[inline]
    fn edge_term(up: SpVarMessage, down: SpClauseMessage) -> f64 {
        sp::edge_term(up, down)
    }
}
