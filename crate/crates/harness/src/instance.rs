use areasweep_core::gridworld::{BinomialSite, GeneratorSpec, GridMap, PeriodicSite};
use areasweep_core::Error;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::config::InstanceVariant;
use crate::error::Result;

pub const SITES: usize = 5;
pub const MIN_PROBABILITY: f64 = 1.0 / 50.0;
pub const MAX_PROBABILITY: f64 = 1.0 / 10.0;
pub const MIN_PERIOD: u64 = 10;
pub const MAX_PERIOD: u64 = 50;

/// Five distinct free cells with a uniformly drawn probability in
/// `[1/50, 1/10]` or period in `10..=50` s. Periodic phases are uniform
/// over the period.
pub fn generate_instance(rng: &mut impl Rng, map: &GridMap, variant: InstanceVariant) -> Result<GeneratorSpec> {
    let free = map.free_cells();
    if free.len() < SITES {
        return Err(Error::TooFewFreeCells(free.len()).into());
    }
    let cells: Vec<_> = free.choose_multiple(rng, SITES).copied().collect();
    Ok(match variant {
        InstanceVariant::Binomial => GeneratorSpec::Binomial {
            sites: cells
                .iter()
                .map(|&c| {
                    let (x, y) = map.coords(c);
                    BinomialSite { x, y, p: rng.gen_range(MIN_PROBABILITY..=MAX_PROBABILITY) }
                })
                .collect(),
        },
        InstanceVariant::Periodic => GeneratorSpec::Periodic {
            sites: cells
                .iter()
                .map(|&c| {
                    let (x, y) = map.coords(c);
                    let period = rng.gen_range(MIN_PERIOD..=MAX_PERIOD);
                    PeriodicSite { x, y, period, phase: rng.gen_range(0..period as i64) }
                })
                .collect(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::HarnessError;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    #[test]
    fn same_seed_same_instance() {
        let map = GridMap::open(10, 10).unwrap();
        let a = generate_instance(&mut ChaCha8Rng::seed_from_u64(3), &map, InstanceVariant::Periodic).unwrap();
        let b = generate_instance(&mut ChaCha8Rng::seed_from_u64(3), &map, InstanceVariant::Periodic).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parameters_stay_in_range() {
        let map = GridMap::open(6, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10_000 {
            let GeneratorSpec::Binomial { sites } = generate_instance(&mut rng, &map, InstanceVariant::Binomial).unwrap()
            else {
                panic!("wrong variant")
            };
            assert_eq!(sites.len(), SITES);
            assert!(sites.iter().all(|s| (0.02..=0.1).contains(&s.p)));
            let distinct: HashSet<_> = sites.iter().map(|s| (s.x, s.y)).collect();
            assert_eq!(distinct.len(), SITES);
        }
        for _ in 0..1_000 {
            let GeneratorSpec::Periodic { sites } = generate_instance(&mut rng, &map, InstanceVariant::Periodic).unwrap()
            else {
                panic!("wrong variant")
            };
            assert!(sites.iter().all(|s| (10..=50).contains(&s.period) && (0..s.period as i64).contains(&s.phase)));
        }
    }

    #[test]
    fn four_free_cells_are_too_few() {
        let map = GridMap::new(3, 2, vec![false, false, true, false, false, true]).unwrap();
        let err = generate_instance(&mut ChaCha8Rng::seed_from_u64(0), &map, InstanceVariant::Binomial).unwrap_err();
        assert!(matches!(err, HarnessError::Core(Error::TooFewFreeCells(4))));
    }
}
