//! Packet loss and bit errors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::container::Stream;
use crate::secded::{self, Outcome};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel {
    pub loss: f64,
    pub ber: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ChannelStats {
    pub packets: usize,
    pub dropped: usize,
    pub flipped_bits: usize,
    pub corrected: usize,
    /// Packets dropped because the parity check found a double error.
    pub detected: usize,
}

impl ChannelModel {
    pub fn new(loss: f64, ber: f64, seed: u64) -> Result<Self, String> {
        if !(0.0..=1.0).contains(&loss) || !(0.0..=1.0).contains(&ber) {
            return Err("loss and bit-error rate must lie in [0, 1]".into());
        }
        Ok(ChannelModel { loss, ber, seed })
    }

    /// Drops and corrupts packets, then runs the parity check on streams
    /// that carry one. Already lost packets stay lost.
    pub fn apply(&self, stream: &mut Stream) -> ChannelStats {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut stats = ChannelStats { packets: stream.packets.len(), ..Default::default() };
        for slot in &mut stream.packets {
            let lost = rng.random_bool(self.loss);
            let Some(packet) = slot else { continue };
            if lost {
                *slot = None;
                stats.dropped += 1;
                continue;
            }
            if self.ber > 0.0 {
                for byte in packet.iter_mut() {
                    for bit in 0..8 {
                        if rng.random_bool(self.ber) {
                            *byte ^= 1 << bit;
                            stats.flipped_bits += 1;
                        }
                    }
                }
            }
            if stream.header.secded {
                match secded::check(packet) {
                    Outcome::Clean => {}
                    Outcome::Corrected(_) => stats.corrected += 1,
                    Outcome::Detected => {
                        *slot = None;
                        stats.detected += 1;
                    }
                }
            }
        }
        stats
    }
}
