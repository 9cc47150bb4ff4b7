use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::types::VehicleId;

use super::message::{Bsm, Dim};

/// Stream index reserved for channel loss decisions; dynamics use stream 0.
const CHANNEL_STREAM: u64 = 1;

/// Lossy broadcast/unicast medium.
///
/// Each (sender, receiver) delivery is dropped independently with
/// `loss_prob`, drawn from a dedicated random stream so that loss decisions
/// never perturb anything else seeded from the same run seed.
#[derive(Debug, Clone)]
pub struct Channel {
    loss_prob: f64,
    rng: ChaCha8Rng,
    pub offered: u64,
    pub delivered: u64,
}

impl Channel {
    pub fn new(loss_prob: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(CHANNEL_STREAM);
        Self {
            loss_prob: loss_prob.clamp(0.0, 1.0),
            rng,
            offered: 0,
            delivered: 0,
        }
    }

    pub fn loss_prob(&self) -> f64 {
        self.loss_prob
    }

    fn attempt(&mut self) -> bool {
        self.offered += 1;
        let ok = if self.loss_prob <= 0.0 {
            true
        } else if self.loss_prob >= 1.0 {
            false
        } else {
            !self.rng.random_bool(self.loss_prob)
        };
        if ok {
            self.delivered += 1;
        }
        ok
    }

    /// Offers every sender's BSM to every other vehicle in `receivers`, in
    /// sender-major order, and calls `on_delivery(receiver, bsm)` for each
    /// delivery that survives. Returns the number delivered.
    pub fn broadcast_bsms<F>(&mut self, bsms: &[Bsm], receivers: &[VehicleId], mut on_delivery: F) -> usize
    where
        F: FnMut(VehicleId, &Bsm),
    {
        let mut count = 0;
        for bsm in bsms {
            for &rx in receivers {
                if rx == bsm.sender_id {
                    continue;
                }
                if self.attempt() {
                    on_delivery(rx, bsm);
                    count += 1;
                }
            }
        }
        count
    }

    /// Point-to-point delivery of a DIM to its target.
    pub fn unicast_dim(&mut self, _dim: &Dim) -> bool {
        self.attempt()
    }
}
