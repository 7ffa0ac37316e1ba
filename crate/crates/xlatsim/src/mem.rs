//! Physical frame pool with occupancy tracking and a free-list fallback
//! allocator.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Base page size; all frames are 4 KB.
pub const PAGE_BYTES: u64 = 4096;

/// Physical page frame number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ppn(pub u64);

impl Ppn {
    /// Byte address of the first byte of this frame.
    pub fn base_addr(self) -> u64 {
        self.0 * PAGE_BYTES
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MemError {
    #[error("frame pool must contain at least one frame")]
    ZeroFrames,
    #[error("occupancy fraction {0} outside [0,1]")]
    BadFraction(f64),
    #[error("frame {0} out of range (pool has {1} frames)")]
    OutOfRange(u64, u64),
    #[error("frame {0} is already occupied")]
    DoubleClaim(u64),
    #[error("frame {0} is already free")]
    DoubleRelease(u64),
    #[error("no free frame available")]
    OutOfMemory,
}

/// Pool of physical frames. Tracks which frames are occupied and serves
/// fallback allocations from the lowest-numbered free frame, a deterministic
/// stand-in for a buddy search.
#[derive(Debug, Clone)]
pub struct PhysMem {
    total_frames: u64,
    free: BTreeSet<u64>,
}

impl PhysMem {
    pub fn new(total_frames: u64) -> Result<Self, MemError> {
        if total_frames == 0 {
            return Err(MemError::ZeroFrames);
        }
        Ok(PhysMem {
            total_frames,
            free: (0..total_frames).collect(),
        })
    }

    pub fn total_frames(&self) -> u64 {
        self.total_frames
    }

    /// Number of occupied frames (M).
    pub fn occupied_count(&self) -> u64 {
        self.total_frames - self.free.len() as u64
    }

    /// Occupancy ratio p = M / P.
    pub fn pressure(&self) -> f64 {
        self.occupied_count() as f64 / self.total_frames as f64
    }

    /// Marks exactly `round(fraction * P)` frames occupied, chosen uniformly
    /// without replacement by a seeded PRNG. Any previous occupancy is
    /// discarded, so the result is a function of (P, fraction, seed) only.
    pub fn inject_pressure(&mut self, fraction: f64, rng_seed: u64) -> Result<(), MemError> {
        if !(0.0..=1.0).contains(&fraction) || fraction.is_nan() {
            return Err(MemError::BadFraction(fraction));
        }
        let count = (fraction * self.total_frames as f64).round() as u64;
        self.free = (0..self.total_frames).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let picks =
            rand::seq::index::sample(&mut rng, self.total_frames as usize, count as usize);
        for idx in picks {
            self.free.remove(&(idx as u64));
        }
        Ok(())
    }

    pub fn is_free(&self, ppn: Ppn) -> Result<bool, MemError> {
        if ppn.0 >= self.total_frames {
            return Err(MemError::OutOfRange(ppn.0, self.total_frames));
        }
        Ok(self.free.contains(&ppn.0))
    }

    pub fn claim(&mut self, ppn: Ppn) -> Result<(), MemError> {
        if ppn.0 >= self.total_frames {
            return Err(MemError::OutOfRange(ppn.0, self.total_frames));
        }
        if !self.free.remove(&ppn.0) {
            return Err(MemError::DoubleClaim(ppn.0));
        }
        Ok(())
    }

    pub fn release(&mut self, ppn: Ppn) -> Result<(), MemError> {
        if ppn.0 >= self.total_frames {
            return Err(MemError::OutOfRange(ppn.0, self.total_frames));
        }
        if !self.free.insert(ppn.0) {
            return Err(MemError::DoubleRelease(ppn.0));
        }
        Ok(())
    }

    /// Claims and returns the lowest-numbered free frame.
    pub fn fallback_alloc(&mut self) -> Result<Ppn, MemError> {
        let lowest = *self.free.iter().next().ok_or(MemError::OutOfMemory)?;
        self.free.remove(&lowest);
        Ok(Ppn(lowest))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_pool_all_free() {
        let mem = PhysMem::new(8).unwrap();
        assert_eq!(mem.occupied_count(), 0);
        for i in 0..8 {
            assert!(mem.is_free(Ppn(i)).unwrap());
        }
        assert!(PhysMem::new(1).is_ok());
        assert_eq!(PhysMem::new(0).unwrap_err(), MemError::ZeroFrames);
    }

    #[test]
    fn claim_release_round_trip() {
        let mut mem = PhysMem::new(8).unwrap();
        mem.claim(Ppn(3)).unwrap();
        assert!(!mem.is_free(Ppn(3)).unwrap());
        assert_eq!(mem.occupied_count(), 1);
        assert_eq!(mem.claim(Ppn(3)).unwrap_err(), MemError::DoubleClaim(3));
        mem.release(Ppn(3)).unwrap();
        assert!(mem.is_free(Ppn(3)).unwrap());
        assert_eq!(mem.occupied_count(), 0);
        assert_eq!(mem.release(Ppn(3)).unwrap_err(), MemError::DoubleRelease(3));
        mem.claim(Ppn(3)).unwrap();
        assert_eq!(mem.occupied_count(), 1);
    }

    #[test]
    fn out_of_range_rejected() {
        let mut mem = PhysMem::new(4).unwrap();
        assert!(matches!(mem.is_free(Ppn(4)), Err(MemError::OutOfRange(4, 4))));
        assert!(mem.claim(Ppn(100)).is_err());
        assert!(mem.release(Ppn(100)).is_err());
    }

    #[test]
    fn fallback_returns_lowest_free_frame() {
        let mut mem = PhysMem::new(4).unwrap();
        assert_eq!(mem.fallback_alloc().unwrap(), Ppn(0));
        mem.claim(Ppn(1)).unwrap();
        assert_eq!(mem.fallback_alloc().unwrap(), Ppn(2));
        assert_eq!(mem.fallback_alloc().unwrap(), Ppn(3));
        assert_eq!(mem.fallback_alloc().unwrap_err(), MemError::OutOfMemory);
    }

    #[test]
    fn fallback_strictly_increasing_until_exhaustion() {
        let mut mem = PhysMem::new(64).unwrap();
        let mut last = None;
        while let Ok(ppn) = mem.fallback_alloc() {
            if let Some(prev) = last {
                assert!(ppn > prev);
            }
            last = Some(ppn);
        }
        assert_eq!(mem.occupied_count(), 64);
    }

    #[test]
    fn inject_pressure_counts() {
        let mut mem = PhysMem::new(10).unwrap();
        mem.inject_pressure(0.0, 1).unwrap();
        assert_eq!(mem.occupied_count(), 0);
        mem.inject_pressure(1.0, 1).unwrap();
        assert_eq!(mem.occupied_count(), 10);
        for i in 0..10 {
            assert!(!mem.is_free(Ppn(i)).unwrap());
        }
        assert!(mem.inject_pressure(1.5, 1).is_err());
        assert!(mem.inject_pressure(-0.1, 1).is_err());
    }

    #[test]
    fn inject_pressure_deterministic_for_fixed_seed() {
        let p = 100_000u64;
        let mut a = PhysMem::new(p).unwrap();
        let mut b = PhysMem::new(p).unwrap();
        a.inject_pressure(0.4, 7).unwrap();
        b.inject_pressure(0.4, 7).unwrap();
        assert_eq!(a.occupied_count(), 40_000);
        for i in 0..p {
            assert_eq!(a.is_free(Ppn(i)).unwrap(), b.is_free(Ppn(i)).unwrap());
        }
        // A different seed produces a different occupancy set.
        b.inject_pressure(0.4, 8).unwrap();
        let same = (0..p)
            .all(|i| a.is_free(Ppn(i)).unwrap() == b.is_free(Ppn(i)).unwrap());
        assert!(!same);
    }

    #[test]
    fn occupancy_partitions_frames() {
        // After any operation sequence, every frame is either free or
        // occupied and the count matches the free set exactly.
        let mut mem = PhysMem::new(32).unwrap();
        mem.inject_pressure(0.5, 3).unwrap();
        let got = mem.fallback_alloc().unwrap();
        assert!(!mem.is_free(got).unwrap());
        mem.release(got).unwrap();
        let free: Vec<u64> = (0..32).filter(|&i| mem.is_free(Ppn(i)).unwrap()).collect();
        assert_eq!(free.len() as u64 + mem.occupied_count(), 32);
        assert_eq!(mem.occupied_count(), 16);
    }
}
