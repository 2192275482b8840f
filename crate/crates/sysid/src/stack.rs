//! Block-diagonal assembly of the four identified channel models.

use crate::{Channel, FitResult, SysidError};
use linnav_lti::{c2d_zoh, tf_to_ss_ccf, StateSpaceModel, TimeDomain, TransferFunction};
use nalgebra::DMatrix;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Four single-channel models stacked into one square system with
/// A = diag(A_vx, A_vy, A_z, A_wyaw); the channels stay exactly decoupled.
#[derive(Clone, Debug)]
pub struct StackedModel {
    blocks: [TransferFunction; 4],
    per_block: Vec<StateSpaceModel>,
    assembled: StateSpaceModel,
    offsets: [usize; 5],
}

impl StackedModel {
    pub fn from_blocks(blocks: [TransferFunction; 4]) -> StackedModel {
        let per_block: Vec<StateSpaceModel> = blocks.iter().map(tf_to_ss_ccf).collect();
        let assembled = assemble(&per_block, TimeDomain::Continuous);
        let mut offsets = [0usize; 5];
        for (i, ss) in per_block.iter().enumerate() {
            offsets[i + 1] = offsets[i] + ss.n_states();
        }
        StackedModel {
            blocks,
            per_block,
            assembled,
            offsets,
        }
    }

    pub fn blocks(&self) -> &[TransferFunction; 4] {
        &self.blocks
    }

    pub fn block(&self, ch: Channel) -> &TransferFunction {
        &self.blocks[ch.index()]
    }

    /// Continuous-time controllable-canonical realization of one channel.
    pub fn per_block(&self) -> &[StateSpaceModel] {
        &self.per_block
    }

    /// The continuous-time block-diagonal system.
    pub fn assembled(&self) -> &StateSpaceModel {
        &self.assembled
    }

    pub fn n_states(&self) -> usize {
        self.offsets[4]
    }

    /// Which rows of the stacked state belong to `ch`.
    pub fn block_range(&self, ch: Channel) -> std::ops::Range<usize> {
        self.offsets[ch.index()]..self.offsets[ch.index() + 1]
    }

    /// Zero-order-hold discretization, done block by block so the
    /// decoupled structure is preserved exactly.
    pub fn discretized(&self, dt: f64) -> Result<StateSpaceModel, SysidError> {
        let mut discrete = Vec::with_capacity(4);
        for ss in &self.per_block {
            discrete.push(c2d_zoh(ss, dt)?);
        }
        Ok(assemble(&discrete, TimeDomain::Discrete(dt)))
    }
}

fn assemble(blocks: &[StateSpaceModel], domain: TimeDomain) -> StateSpaceModel {
    let n: usize = blocks.iter().map(|b| b.n_states()).sum();
    let m = blocks.len();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, m);
    let mut c = DMatrix::zeros(m, n);
    let mut row = 0;
    for (i, block) in blocks.iter().enumerate() {
        let nb = block.n_states();
        a.view_mut((row, row), (nb, nb)).copy_from(block.a());
        b.view_mut((row, i), (nb, 1)).copy_from(block.b());
        c.view_mut((i, row), (1, nb)).copy_from(block.c());
        row += nb;
    }
    StateSpaceModel::new(a, b, c, DMatrix::zeros(m, m), domain)
        .expect("block-diagonal assembly is always well formed")
}

/// Assembles the models of four completed channel fits, in
/// [`Channel::ALL`] order.
pub fn stack_model(fits: &[FitResult; 4]) -> StackedModel {
    StackedModel::from_blocks(std::array::from_fn(|i| fits[i].model.clone()))
}

impl Serialize for StackedModel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<'a> {
            blocks: &'a [TransferFunction; 4],
        }
        Repr {
            blocks: &self.blocks,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for StackedModel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            blocks: Vec<TransferFunction>,
        }
        let repr = Repr::deserialize(deserializer)?;
        let blocks: [TransferFunction; 4] = repr
            .blocks
            .try_into()
            .map_err(|v: Vec<TransferFunction>| {
                D::Error::custom(format!("expected 4 channel blocks, got {}", v.len()))
            })?;
        Ok(StackedModel::from_blocks(blocks))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nominal_core;
    use linnav_lti::simulate_lti;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn the_bank_stacks_into_a_twelve_state_square_system() {
        let stacked = StackedModel::from_blocks(nominal_core());
        assert_eq!(stacked.n_states(), 12);
        assert_eq!(stacked.assembled().n_inputs(), 4);
        assert_eq!(stacked.assembled().n_outputs(), 4);
        assert_eq!(stacked.block_range(Channel::Qz), 6..9);
    }

    #[test]
    fn off_block_entries_are_exactly_zero() {
        let stacked = StackedModel::from_blocks(nominal_core());
        for model in [
            stacked.assembled().clone(),
            stacked.discretized(0.01).unwrap(),
        ] {
            for ch in Channel::ALL {
                let range = stacked.block_range(ch);
                for i in 0..stacked.n_states() {
                    for j in 0..stacked.n_states() {
                        if range.contains(&i) != range.contains(&j) {
                            let in_same_block = Channel::ALL.iter().any(|c| {
                                let r = stacked.block_range(*c);
                                r.contains(&i) && r.contains(&j)
                            });
                            if !in_same_block {
                                assert_eq!(model.a()[(i, j)], 0.0);
                            }
                        }
                    }
                    if !range.contains(&i) {
                        assert_eq!(model.b()[(i, ch.index())], 0.0);
                        assert_eq!(model.c()[(ch.index(), i)], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn stacked_simulation_equals_per_block_simulation() {
        let stacked = StackedModel::from_blocks(nominal_core());
        let dt = 0.01;
        let model = stacked.discretized(dt).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 400;
        let u = DMatrix::from_fn(n, 4, |_, _| rng.gen_range(-1.0..1.0));
        let y = simulate_lti(&model, &u, &DVector::zeros(12)).unwrap();
        for ch in Channel::ALL {
            let block = c2d_zoh(&stacked.per_block()[ch.index()], dt).unwrap();
            let ub = DMatrix::from_fn(n, 1, |r, _| u[(r, ch.index())]);
            let yb = simulate_lti(&block, &ub, &DVector::zeros(block.n_states())).unwrap();
            for k in 0..n {
                assert!(
                    (y[(k, ch.index())] - yb[(k, 0)]).abs() <= 1e-12,
                    "{} sample {k} differs",
                    ch.label()
                );
            }
        }
    }

    #[test]
    fn json_round_trips_through_the_block_list() {
        let stacked = StackedModel::from_blocks(nominal_core());
        let text = serde_json::to_string(&stacked).unwrap();
        let back: StackedModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back.n_states(), 12);
        for ch in Channel::ALL {
            assert_eq!(back.block(ch).num(), stacked.block(ch).num());
            assert_eq!(back.block(ch).den(), stacked.block(ch).den());
        }
        let bad: Result<StackedModel, _> =
            serde_json::from_str(r#"{"blocks":[{"num":[1.0],"den":[1.0,1.0]}]}"#);
        assert!(bad.is_err());
    }
}
