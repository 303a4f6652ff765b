use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

/// Zone colour in ColourMatch. Visiting a zone advances it one step along
/// green -> red -> blue -> green.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Colour {
    Green,
    Red,
    Blue,
}

impl Colour {
    pub const ALL: [Colour; 3] = [Colour::Green, Colour::Red, Colour::Blue];

    pub fn index(self) -> usize {
        match self {
            Colour::Green => 0,
            Colour::Red => 1,
            Colour::Blue => 2,
        }
    }

    pub fn from_index(i: usize) -> Colour {
        Colour::ALL[i % 3]
    }

    pub fn next(self) -> Colour {
        Colour::from_index(self.index() + 1)
    }

    /// Number of forward cycle steps needed to turn `self` into `target`.
    pub fn steps_to(self, target: Colour) -> u32 {
        ((target.index() + 3 - self.index()) % 3) as u32
    }
}

/// Minimum number of single-zone colour cycles that make every zone the same
/// colour.
pub fn hamming_distance(colours: &[Colour]) -> u32 {
    Colour::ALL
        .iter()
        .map(|&target| colours.iter().map(|c| c.steps_to(target)).sum::<u32>())
        .min()
        .unwrap_or(0)
}

/// Breadth-first search over every colouring of `colours.len()` zones, one
/// move cycling one zone. Exponential; meant as a reference for
/// [`hamming_distance`].
pub fn hamming_bruteforce(colours: &[Colour]) -> u32 {
    let n = colours.len();
    if n == 0 {
        return 0;
    }
    let pow: Vec<usize> = (0..n).map(|i| 3usize.pow(i as u32)).collect();
    let total = 3usize.pow(n as u32);
    let encode = |cs: &[Colour]| cs.iter().zip(&pow).map(|(c, p)| c.index() * p).sum::<usize>();
    let is_uniform = |code: usize| {
        let first = code % 3;
        (0..n).all(|i| (code / pow[i]) % 3 == first)
    };

    let start = encode(colours);
    let mut dist = vec![u32::MAX; total];
    dist[start] = 0;
    let mut queue = VecDeque::from([start]);
    while let Some(code) = queue.pop_front() {
        if is_uniform(code) {
            return dist[code];
        }
        for p in &pow {
            let digit = (code / p) % 3;
            let next = code - digit * p + ((digit + 1) % 3) * p;
            if dist[next] == u32::MAX {
                dist[next] = dist[code] + 1;
                queue.push_back(next);
            }
        }
    }
    unreachable!("uniform colourings are reachable from every configuration")
}

#[cfg(test)]
mod tests {
    use super::*;
    use Colour::*;

    fn all_configs(n: usize) -> Vec<Vec<Colour>> {
        (0..3usize.pow(n as u32))
            .map(|mut code| {
                (0..n)
                    .map(|_| {
                        let c = Colour::from_index(code % 3);
                        code /= 3;
                        c
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn named_examples() {
        assert_eq!(hamming_distance(&[Green; 6]), 0);
        assert_eq!(hamming_distance(&[Blue, Green, Green, Green, Green, Green]), 1);
        assert_eq!(hamming_distance(&[Red, Red, Red, Green, Green, Green]), 3);
        assert_eq!(hamming_bruteforce(&[Green; 6]), 0);
        assert_eq!(hamming_bruteforce(&[Blue; 6]), 0);
        assert_eq!(hamming_bruteforce(&[Blue, Green, Green, Green, Green, Green]), 1);
        assert_eq!(hamming_bruteforce(&[Red, Red, Red, Green, Green, Green]), 3);
    }

    #[test]
    fn formula_matches_bfs_on_every_six_zone_colouring() {
        let configs = all_configs(6);
        assert_eq!(configs.len(), 729);
        for cs in &configs {
            assert_eq!(hamming_distance(cs), hamming_bruteforce(cs), "{cs:?}");
        }
    }

    #[test]
    fn single_cycle_delta_is_bounded() {
        for cs in all_configs(6) {
            let before = hamming_distance(&cs) as i64;
            for i in 0..6 {
                let mut next = cs.clone();
                next[i] = next[i].next();
                let delta = before - hamming_distance(&next) as i64;
                assert!([1, 0, -1, -2].contains(&delta), "{cs:?} zone {i}: {delta}");
            }
        }
    }

    #[test]
    fn cycle_order() {
        assert_eq!(Green.next(), Red);
        assert_eq!(Red.next(), Blue);
        assert_eq!(Blue.next(), Green);
        assert_eq!(Blue.steps_to(Green), 1);
        assert_eq!(Green.steps_to(Blue), 2);
    }
}
