//! Parsers for inline numeric arguments and input files.

use std::fmt;

use spongedim::sequence::TypeEllSequence;
use spongedim::{ImmSequence, ProbVector, SurvivalVector};

/// Malformed command-line value.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn bad(msg: String) -> anyhow::Error {
    InputError(msg).into()
}

pub fn floats(s: &str) -> anyhow::Result<Vec<f64>> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| bad(format!("'{x}': {e}"))))
        .collect()
}

pub fn prob_vector(s: &str) -> anyhow::Result<ProbVector> {
    Ok(ProbVector::new(floats(s)?)?)
}

/// One value broadcast to `n` letters, or exactly `n` values.
pub fn survival(s: &str, n: usize) -> anyhow::Result<SurvivalVector> {
    let v = floats(s)?;
    let v = if v.len() == 1 { vec![v[0]; n] } else { v };
    Ok(SurvivalVector::new(v)?)
}

/// "a,b,c" or "geom:LO:HI:COUNT" (geometric, deduplicated after rounding for integer grids).
pub fn real_grid(s: &str) -> anyhow::Result<Vec<f64>> {
    if let Some(rest) = s.strip_prefix("geom:") {
        let parts = floats(&rest.replace(':', ","))?;
        let [lo, hi, count] = parts[..] else { return Err(bad(format!("expected geom:LO:HI:COUNT, got '{s}'"))) };
        if !(lo > 0.0 && hi >= lo && count >= 1.0) {
            return Err(bad(format!("invalid geometric grid '{s}'")));
        }
        let c = count as usize;
        if c == 1 {
            return Ok(vec![lo]);
        }
        return Ok((0..c).map(|j| lo * (hi / lo).powf(j as f64 / (c - 1) as f64)).collect());
    }
    floats(s)
}

pub fn int_grid(s: &str) -> anyhow::Result<Vec<usize>> {
    let mut v: Vec<usize> = real_grid(s)?.into_iter().map(|x| x.round() as usize).filter(|&x| x > 0).collect();
    v.dedup();
    if v.is_empty() {
        return Err(bad(format!("empty scale grid '{s}'")));
    }
    Ok(v)
}

/// "A..B" (inclusive, consecutive lengths) or a comma list.
pub fn schedule(s: &str) -> anyhow::Result<Vec<usize>> {
    let int = |x: &str| x.trim().parse::<usize>().map_err(|e| bad(format!("'{x}': {e}")));
    if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (int(a.trim_start_matches('=').trim_end_matches('='))?, int(b.trim_start_matches('='))?);
        if a == 0 || b < a {
            return Err(bad(format!("invalid schedule range '{s}'")));
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(int).collect()
}

/// "0,1;1" into axis lists.
pub fn chain(s: &str) -> anyhow::Result<Vec<Vec<usize>>> {
    s.split(';')
        .map(|set| set.split(',').map(|x| x.trim().parse::<usize>().map_err(|e| bad(format!("'{x}': {e}")))).collect())
        .collect()
}

/// Block sequence, or a type-ℓ sequence expanded to blocks.
pub fn sequence(text: &str) -> anyhow::Result<ImmSequence> {
    match ImmSequence::from_json(text) {
        Ok(s) => Ok(s),
        Err(first) => match TypeEllSequence::from_json(text) {
            Ok(t) => Ok(t.to_imm()?),
            Err(_) => Err(first.into()),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(int_grid("10,20,20,30").unwrap(), vec![10, 20, 30]);
        let g = real_grid("geom:1:100:3").unwrap();
        assert!((g[1] - 10.0).abs() < 1e-12);
        assert!(real_grid("geom:1:2").is_err());
        assert_eq!(schedule("3..6").unwrap(), vec![3, 4, 5, 6]);
        assert_eq!(schedule("1..=3").unwrap(), vec![1, 2, 3]);
        assert_eq!(chain("0,1;1").unwrap(), vec![vec![0, 1], vec![1]]);
    }

    #[test]
    fn survival_broadcast() {
        assert_eq!(survival("0.5", 3).unwrap().as_slice(), &[0.5; 3]);
        assert!(survival("0.5,x", 2).is_err());
    }
}
