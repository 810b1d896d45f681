//! Named flows on the `[0, 2 pi)^3` cell, where integer wavevectors are
//! angular wavenumbers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FourierVectorField, TorusSpec};
use crate::perturbation::{add_cos, add_sin, build_v};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    Zero,
    /// `(sin z + cos y, sin x + cos z, sin y + cos x)`.
    AbcLike,
    /// `V^1(j) + V^2(j) + V^3(j)`.
    VFields(usize),
}

#[derive(Clone, Debug, Serialize)]
pub struct PresetInfo {
    pub name: String,
    pub symmetries: Vec<&'static str>,
    /// Largest `|k|_inf` of the flow.
    pub band: usize,
}

impl Preset {
    /// Smallest truncation holding the flow exactly.
    pub fn band(&self) -> usize {
        match self {
            Preset::Zero => 0,
            Preset::AbcLike => 1,
            Preset::VFields(j) => j + 3,
        }
    }

    pub fn symmetries(&self) -> Vec<&'static str> {
        match self {
            Preset::Zero => vec!["zero-mean", "solenoidal", "trivial"],
            Preset::AbcLike => vec!["zero-mean", "solenoidal", "beltrami: curl U = U", "helical", "cyclic x->y->z"],
            Preset::VFields(_) => vec!["zero-mean", "solenoidal", "disjoint single-axis spectra", "diagonal alpha2"],
        }
    }

    /// The flow on the `2 pi` cell truncated at `max(trunc, band)`.
    pub fn build(&self, trunc: usize) -> Result<FourierVectorField> {
        let t = TorusSpec::two_pi(trunc.max(self.band()));
        Ok(match self {
            Preset::Zero => FourierVectorField::zeros(&t),
            Preset::AbcLike => {
                let mut f = FourierVectorField::zeros(&t);
                add_sin(&mut f, 0, 2, 1);
                add_cos(&mut f, 0, 1, 1);
                add_sin(&mut f, 1, 0, 1);
                add_cos(&mut f, 1, 2, 1);
                add_sin(&mut f, 2, 1, 1);
                add_cos(&mut f, 2, 0, 1);
                f
            }
            Preset::VFields(j) => {
                let mut f = build_v(&t, *j, 1)?;
                f += &build_v(&t, *j, 2)?;
                f += &build_v(&t, *j, 3)?;
                f
            }
        })
    }

    pub fn info(&self) -> PresetInfo {
        PresetInfo { name: self.to_string(), symmetries: self.symmetries(), band: self.band() }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preset::Zero => write!(f, "zero"),
            Preset::AbcLike => write!(f, "abc-like"),
            Preset::VFields(j) => write!(f, "vfields({j})"),
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "zero" => return Ok(Preset::Zero),
            "abc-like" => return Ok(Preset::AbcLike),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("vfields(").and_then(|r| r.strip_suffix(')')) {
            return rest
                .trim()
                .parse()
                .map(Preset::VFields)
                .map_err(|_| Error::Validation(format!("bad vfields level in {s:?}")));
        }
        Err(Error::Validation(format!("unknown preset {s:?} (expected zero, abc-like or vfields(j))")))
    }
}

/// The catalogue, with `vfields` listed at level 0.
pub fn presets() -> Vec<PresetInfo> {
    [Preset::Zero, Preset::AbcLike, Preset::VFields(0)].iter().map(Preset::info).collect()
}
