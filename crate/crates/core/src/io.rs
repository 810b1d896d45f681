//! File formats: JSON with 17-significant-digit floats, CSV, field files.

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FourierVectorField, TorusSpec, C64};

/// Formats a float with 17 significant digits (round-trips every f64).
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

struct Sig17;

impl serde_json::ser::Formatter for Sig17 {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> std::io::Result<()> {
        if v.is_finite() {
            write!(w, "{v:.16e}")
        } else {
            w.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> std::io::Result<()> {
        self.write_f64(w, v as f64)
    }
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serializer emits utf-8"))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json(value)?)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Renders rows as CSV (no quoting; values are numbers or bare identifiers).
pub fn to_csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|x| fmt17(*x)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldEntry {
    pub k: [i64; 3],
    pub re: [f64; 3],
    pub im: [f64; 3],
}

/// On-disk field: `{torus, K, entries}` listing nonzero coefficients in
/// lexicographic `k` order.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldFile {
    pub torus: [f64; 3],
    #[serde(rename = "K")]
    pub k: usize,
    pub entries: Vec<FieldEntry>,
}

impl From<&FourierVectorField> for FieldFile {
    fn from(f: &FourierVectorField) -> Self {
        // storage order is already lexicographic in k
        let entries = f
            .nonzero()
            .into_iter()
            .map(|(k, v)| FieldEntry { k, re: v.map(|c| c.re), im: v.map(|c| c.im) })
            .collect();
        FieldFile { torus: f.torus.periods, k: f.torus.trunc, entries }
    }
}

impl FieldFile {
    pub fn into_field(self) -> Result<FourierVectorField> {
        let t = TorusSpec::new(self.torus, self.k)?;
        let mut f = FourierVectorField::zeros(&t);
        for e in self.entries {
            if t.index(e.k).is_none() {
                return Err(Error::Validation(format!("wavevector {:?} outside truncation {}", e.k, self.k)));
            }
            f.set(e.k, std::array::from_fn(|c| C64::new(e.re[c], e.im[c])));
        }
        Ok(f)
    }
}

pub fn field_to_json(f: &FourierVectorField) -> Result<String> {
    to_json(&FieldFile::from(f))
}

pub fn field_from_json(text: &str) -> Result<FourierVectorField> {
    serde_json::from_str::<FieldFile>(text)?.into_field()
}

pub fn read_field(path: &Path) -> Result<FourierVectorField> {
    field_from_json(&std::fs::read_to_string(path)?)
}

pub fn write_field(path: &Path, f: &FourierVectorField) -> Result<()> {
    std::fs::write(path, field_to_json(f)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt17(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt17(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn field_file_lists_only_nonzero_in_order() {
        let t = TorusSpec::unit(2);
        let mut f = FourierVectorField::zeros(&t);
        f.set_pair([0, 1, 0], [C64::new(0.5, 0.0), C64::new(0.0, -0.5), C64::new(0.0, 0.0)]);
        let file = FieldFile::from(&f);
        assert_eq!(file.entries.len(), 2);
        assert_eq!(file.entries[0].k, [0, -1, 0]);
        assert_eq!(file.entries[1].k, [0, 1, 0]);
        let text = field_to_json(&f).unwrap();
        assert!(text.starts_with("{\"torus\":[1.0000000000000000e0"));
    }

    #[test]
    fn rejects_out_of_range_entries() {
        let text = r#"{"torus":[1,1,1],"K":1,"entries":[{"k":[2,0,0],"re":[1,0,0],"im":[0,0,0]}]}"#;
        assert!(field_from_json(text).is_err());
    }

    proptest! {
        #[test]
        fn field_json_roundtrip(vals in proptest::collection::vec(-1e3f64..1e3, 6 * 27)) {
            let t = TorusSpec::new([1.0, 2.5, 0.75], 1).unwrap();
            let f = FourierVectorField::from_fn(&t, |k| {
                let i = t.index(k).unwrap();
                std::array::from_fn(|c| C64::new(vals[6 * i + c], vals[6 * i + 3 + c]))
            });
            let g = field_from_json(&field_to_json(&f).unwrap()).unwrap();
            prop_assert_eq!(f, g);
        }
    }
}
