//! Deterministic non-stationary click stream driven by a drifting teacher.

mod export;
mod schedule;
mod stream;
mod teacher;

pub use export::{read_records, write_records, RECORD_MAGIC};
pub use schedule::DriftSchedule;
pub use stream::{sample_batch, DataStream, StreamConfig};
pub use teacher::{TeacherConfig, TeacherModel, TeacherParams};

pub(crate) const TEACHER_DOMAIN: u64 = 0x7465_6163;
pub(crate) const POPULARITY_DOMAIN: u64 = 0x706f_7075;
pub(crate) const EXAMPLE_DOMAIN: u64 = 0x6578_616d;

/// Derives independent seeds for separate random streams (splitmix64 finalizer).
pub fn mix_seed(seed: u64, domain: u64) -> u64 {
    let mut z = seed ^ domain.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
