//! The local-update framework engine.
//!
//! Every client takes `z_i <- z_i - gamma_l g_i` each iteration. When the
//! iteration's coin fires, clients send the sum of their directions since
//! the last synchronization, the server moves
//! `z~ <- z~ - gamma_g (1/n) sum_i sum_l g_i^l`, and every client restarts
//! from the new server point.

use crate::error::{Error, Result};
use crate::point::SaddlePoint;
use crate::problem::{GradientOracle, NoisyOracle};

use super::schedule::{StepsizeSchedule, SyncCoins};

/// How a client picks its local direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionRule {
    /// `g_i = G^_i(z_i)`.
    FedAvg,
    /// `g_i = G^_i(z_i) - G^_i(z~) + G(z~)`.
    Scaffold,
}

#[derive(Debug, Clone)]
pub struct RunState {
    /// Client iterates `z_i^k`.
    pub clients: Vec<SaddlePoint>,
    /// Last synchronized iterate `z~^k`.
    pub server: SaddlePoint,
    /// Per-client direction sums since the last synchronization, each term
    /// scaled by the iteration's stepsize factor.
    pub accumulated: Vec<SaddlePoint>,
    pub iteration: u64,
    pub local_steps: usize,
    pub comm_rounds: u64,
    /// `G(z~)`, maintained for SCAFFOLD-S.
    pub control_variate: Option<SaddlePoint>,
    /// `G_i(z~)` per client, exchanged together with the control variate.
    pub anchor_mappings: Vec<SaddlePoint>,
    /// Number of control-variate exchanges (one extra payload per round).
    pub control_exchanges: u64,
}

impl RunState {
    /// All clients start at `z0`.
    pub fn new(n_clients: usize, z0: SaddlePoint) -> Self {
        let zero = SaddlePoint::zeros(z0.primal_dim(), z0.dual_dim());
        Self {
            clients: vec![z0.clone(); n_clients],
            server: z0,
            accumulated: vec![zero; n_clients],
            iteration: 0,
            local_steps: 0,
            comm_rounds: 0,
            control_variate: None,
            anchor_mappings: Vec::new(),
            control_exchanges: 0,
        }
    }

    /// Starts a SCAFFOLD-S run: the initial control variate rides along with
    /// the initial broadcast and is not counted as a round.
    pub fn with_control_variate<P: GradientOracle>(mut self, problem: &P) -> Self {
        self.refresh_control_variate(problem);
        self
    }

    /// Clients send `G_i(z~)`, the server broadcasts their mean.
    pub fn refresh_control_variate<P: GradientOracle>(&mut self, problem: &P) {
        self.anchor_mappings = (0..problem.n_clients())
            .map(|i| problem.client_mapping(i, &self.server))
            .collect();
        self.control_variate = Some(SaddlePoint::mean(&self.anchor_mappings));
    }

    /// Virtual average `z^k = (1/n) sum_i z_i^k`.
    pub fn mean_point(&self) -> SaddlePoint {
        SaddlePoint::mean(&self.clients)
    }

    pub fn is_synchronized(&self) -> bool {
        self.local_steps == 0
    }
}

pub fn fedavg_s_direction<P: GradientOracle>(
    state: &RunState,
    oracle: &mut NoisyOracle<P>,
    client: usize,
) -> SaddlePoint {
    oracle.query(client, &state.clients[client])
}

/// `G^_i(z_i) - G^_i(z~) + G(z~)`, with independent noise on the two
/// client queries.
pub fn scaffold_s_direction<P: GradientOracle>(
    state: &RunState,
    oracle: &mut NoisyOracle<P>,
    client: usize,
) -> Result<SaddlePoint> {
    let control = state
        .control_variate
        .as_ref()
        .ok_or_else(|| Error::InternalState("SCAFFOLD-S step without a control variate".into()))?;
    let anchor = state
        .anchor_mappings
        .get(client)
        .ok_or_else(|| Error::InternalState(format!("missing anchor mapping for client {client}")))?;
    let mut g = oracle.query(client, &state.clients[client]);
    g.axpy(-1.0, &oracle.perturb(anchor));
    g.add_assign(control);
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    pub synchronized: bool,
}

/// Advances the run by one iteration.
pub fn framework_step<P: GradientOracle>(
    state: &mut RunState,
    oracle: &mut NoisyOracle<P>,
    rule: DirectionRule,
    coins: &mut SyncCoins,
    steps: &StepsizeSchedule,
) -> Result<StepOutcome> {
    let k = state.iteration;
    let factor = steps.factor(k);
    let local = steps.gamma_l * factor;

    // Directions first (all read the pre-step state), then the updates.
    let n = state.clients.len();
    let mut directions = Vec::with_capacity(n);
    for i in 0..n {
        directions.push(match rule {
            DirectionRule::FedAvg => fedavg_s_direction(state, oracle, i),
            DirectionRule::Scaffold => scaffold_s_direction(state, oracle, i)?,
        });
    }
    for ((z, acc), g) in state
        .clients
        .iter_mut()
        .zip(state.accumulated.iter_mut())
        .zip(&directions)
    {
        z.axpy(-local, g);
        acc.axpy(factor, g);
    }

    state.iteration += 1;
    state.local_steps += 1;
    let synchronized = coins.flip(state.local_steps);
    if synchronized {
        let avg = SaddlePoint::mean(&state.accumulated);
        state.server.axpy(-steps.gamma_g, &avg);
        for (z, acc) in state.clients.iter_mut().zip(state.accumulated.iter_mut()) {
            z.clone_from(&state.server);
            acc.fill(0.0);
        }
        state.local_steps = 0;
        state.comm_rounds += 1;
        if rule == DirectionRule::Scaffold {
            state.refresh_control_variate(oracle.problem());
            state.control_exchanges += 1;
        }
    }
    Ok(StepOutcome { synchronized })
}
