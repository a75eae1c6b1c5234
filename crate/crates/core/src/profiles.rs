//! Named analytic fields used by the config file.
//!
//! | profile                   | η-like (Neumann)                | θ-like (Dirichlet)                      |
//! |---------------------------|---------------------------------|-----------------------------------------|
//! | `zero`                    | 0                               | 0                                       |
//! | `constant(c)`             | c                               | c inside, 0 on the boundary             |
//! | `random(seed, amplitude)` | cosine modes up to 3            | sine modes up to 4                      |
//! | `stripe(k)`               | cos(kπx)                        | plateaus `tanh(8 cos(kπx))` under a bump|
//! | `vortex`                  | 1 − exp(−r²/0.05)               | `x̂ ŷ exp(−r²/0.1)` with a sine envelope |
//! | `file:<path>`             | CSV written by [`crate::io`]    | same                                    |
//!
//! Coordinates are scaled to the unit square before evaluation. `random`
//! draws its coefficients from ChaCha8 seeded with `seed + run_seed`, so
//! outputs are identical across platforms.

use crate::error::{KwcError, Result};
use crate::field::{Bc, Field, Grid2D};
use crate::io::read_field_csv;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Zero,
    Constant(f64),
    Random { seed: u64, amplitude: f64 },
    Stripe(u32),
    Vortex,
    File(PathBuf),
}

fn args<'a>(s: &'a str, name: &str) -> Option<Vec<&'a str>> {
    let inner = s.strip_prefix(name)?.trim().strip_prefix('(')?.strip_suffix(')')?;
    Some(inner.split(',').map(str::trim).collect())
}

impl FromStr for Profile {
    type Err = KwcError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || {
            KwcError::Config(format!(
                "unknown profile '{s}'; expected zero, constant(c), random(seed, amplitude), stripe(k), vortex or file:<path>"
            ))
        };
        if s == "zero" {
            return Ok(Profile::Zero);
        }
        if s == "vortex" {
            return Ok(Profile::Vortex);
        }
        if let Some(p) = s.strip_prefix("file:") {
            return Ok(Profile::File(PathBuf::from(p)));
        }
        if let Some(a) = args(s, "constant") {
            let c: f64 = a.first().and_then(|x| x.parse().ok()).ok_or_else(bad)?;
            if a.len() != 1 || !c.is_finite() {
                return Err(bad());
            }
            return Ok(Profile::Constant(c));
        }
        if let Some(a) = args(s, "random") {
            if a.len() != 2 {
                return Err(bad());
            }
            let seed = a[0].parse().map_err(|_| bad())?;
            let amplitude: f64 = a[1].parse().map_err(|_| bad())?;
            if !(amplitude.is_finite() && amplitude >= 0.0) {
                return Err(bad());
            }
            return Ok(Profile::Random { seed, amplitude });
        }
        if let Some(a) = args(s, "stripe") {
            if a.len() != 1 {
                return Err(bad());
            }
            let k = a[0].parse().map_err(|_| bad())?;
            return Ok(Profile::Stripe(k));
        }
        Err(bad())
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Zero => write!(f, "zero"),
            Profile::Constant(c) => write!(f, "constant({c:?})"),
            Profile::Random { seed, amplitude } => write!(f, "random({seed}, {amplitude:?})"),
            Profile::Stripe(k) => write!(f, "stripe({k})"),
            Profile::Vortex => write!(f, "vortex"),
            Profile::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl serde::Serialize for Profile {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Profile {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Profile {
    /// Samples the profile with the given boundary condition.
    pub fn build(&self, grid: Grid2D, bc: Bc, run_seed: u64) -> Result<Field> {
        let (lx, ly) = (grid.lx(), grid.ly());
        let dirichlet = bc == Bc::DirichletZero;
        let unit = |f: &dyn Fn(f64, f64) -> f64| Field::from_fn(grid, bc, |x, y| f(x / lx, y / ly));
        Ok(match self {
            Profile::Zero => Field::zeros(grid, bc),
            Profile::Constant(c) => unit(&|_, _| *c),
            Profile::Random { seed, amplitude } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(run_seed));
                let mut coef = [[0.0; 4]; 4];
                for (a, row) in coef.iter_mut().enumerate() {
                    for (b, c) in row.iter_mut().enumerate() {
                        *c = rng.gen_range(-1.0..1.0) / (1.0 + (a + b) as f64).powi(2);
                    }
                }
                let basis = move |a: usize, b: usize, x: f64, y: f64| {
                    if dirichlet {
                        ((a + 1) as f64 * PI * x).sin() * ((b + 1) as f64 * PI * y).sin()
                    } else {
                        (a as f64 * PI * x).cos() * (b as f64 * PI * y).cos()
                    }
                };
                let raw = unit(&|x, y| {
                    let mut s = 0.0;
                    for (a, row) in coef.iter().enumerate() {
                        for (b, c) in row.iter().enumerate() {
                            s += c * basis(a, b, x, y);
                        }
                    }
                    s
                });
                let m = raw.max_abs();
                if m > 0.0 {
                    raw.scaled(amplitude / m)
                } else {
                    raw
                }
            }
            Profile::Stripe(k) => {
                let k = *k as f64;
                if dirichlet {
                    unit(&|x, y| {
                        let env = ((PI * x).sin() * (PI * y).sin()).sqrt();
                        env * (8.0 * (k * PI * x).cos()).tanh()
                    })
                } else {
                    unit(&|x, _| (k * PI * x).cos())
                }
            }
            Profile::Vortex => {
                if dirichlet {
                    unit(&|x, y| {
                        let (dx, dy) = (x - 0.5, y - 0.5);
                        let r2 = dx * dx + dy * dy;
                        (PI * x).sin() * (PI * y).sin() * 8.0 * dx * dy * (-r2 / 0.1).exp()
                    })
                } else {
                    unit(&|x, y| {
                        let r2 = (x - 0.5).powi(2) + (y - 0.5).powi(2);
                        1.0 - (-r2 / 0.05).exp()
                    })
                }
            }
            Profile::File(p) => {
                let f = read_field_csv(p, grid, Bc::Neumann)?;
                if dirichlet {
                    let v = f
                        .values()
                        .iter()
                        .enumerate()
                        .map(|(k, x)| if grid.is_boundary_index(k) { 0.0 } else { *x })
                        .collect();
                    Field::from_values(grid, bc, v)?
                } else {
                    f
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["zero", "constant(1.5)", "random(7, 0.25)", "stripe(3)", "vortex", "file:a/b.csv"] {
            let p: Profile = s.parse().unwrap();
            assert_eq!(p.to_string().parse::<Profile>().unwrap(), p);
        }
        assert!("random(1)".parse::<Profile>().is_err());
        assert!("stripe(x)".parse::<Profile>().is_err());
        assert!("spiral".parse::<Profile>().is_err());
    }

    #[test]
    fn random_profile_is_seeded_and_scaled() {
        let g = Grid2D::unit_square(9).unwrap();
        let p = Profile::Random { seed: 3, amplitude: 2.0 };
        let a = p.build(g, Bc::Neumann, 0).unwrap();
        assert_eq!(a, p.build(g, Bc::Neumann, 0).unwrap());
        assert!((a.max_abs() - 2.0).abs() < 1e-14);
        assert_ne!(a, p.build(g, Bc::Neumann, 1).unwrap());
        let t = p.build(g, Bc::DirichletZero, 0).unwrap();
        assert!((t.max_abs() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn dirichlet_profiles_vanish_on_boundary() {
        let g = Grid2D::unit_square(7).unwrap();
        for p in ["constant(2)", "stripe(2)", "vortex", "random(1, 1)"] {
            let f = p.parse::<Profile>().unwrap().build(g, Bc::DirichletZero, 0).unwrap();
            for k in 0..g.n_nodes() {
                if g.is_boundary_index(k) {
                    assert_eq!(f.values()[k], 0.0);
                }
            }
        }
    }
}
