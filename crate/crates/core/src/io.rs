//! File formats.
//!
//! `t3d-json`: `{"dims":[n1,n2,n3],"data":[... row-major ...]}`.
//! `fset-json`: `{"n":…,"r":…,"lambda":[…],"U":[col-major …],"V":[…],"W":[…]}`.
//!
//! Writers emit floats with 17 significant digits, enough to round-trip
//! every f64 bit pattern, and are byte-deterministic.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::factor::FactorSet;
use crate::tensor::Tensor3;

/// Format one f64 with 17 significant digits (`{:.16e}`), the number of
/// decimal digits that uniquely identifies every double.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn join_floats(values: impl Iterator<Item = f64>) -> String {
    let mut out = String::new();
    for (i, v) in values.enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{}", format_f64(v));
    }
    out
}

/// Serialize a tensor in the t3d-json format.
pub fn tensor_to_json(t: &Tensor3) -> String {
    let (n1, n2, n3) = t.dims();
    format!(
        "{{\"dims\":[{},{},{}],\"data\":[{}]}}",
        n1,
        n2,
        n3,
        join_floats(t.data().iter().copied())
    )
}

#[derive(Deserialize)]
struct TensorFile {
    dims: [usize; 3],
    data: Vec<f64>,
}

/// Parse a t3d-json document.
pub fn tensor_from_json(text: &str, origin: &str) -> Result<Tensor3> {
    let file: TensorFile = serde_json::from_str(text).map_err(|e| Error::Format {
        format: "t3d-json",
        path: origin.to_string(),
        detail: e.to_string(),
    })?;
    Tensor3::from_data((file.dims[0], file.dims[1], file.dims[2]), file.data)
}

pub fn write_tensor(path: &Path, t: &Tensor3) -> Result<()> {
    std::fs::write(path, tensor_to_json(t)).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn read_tensor(path: &Path) -> Result<Tensor3> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    tensor_from_json(&text, &path.display().to_string())
}

/// Serialize a factor set in the fset-json format (column-major matrices).
pub fn factor_set_to_json(fs: &FactorSet) -> String {
    let flat = |m: &DMatrix<f64>| join_floats(m.iter().copied()); // nalgebra stores column-major
    format!(
        "{{\"n\":{},\"r\":{},\"lambda\":[{}],\"U\":[{}],\"V\":[{}],\"W\":[{}]}}",
        fs.n(),
        fs.r(),
        join_floats(fs.lambda().iter().copied()),
        flat(fs.u()),
        flat(fs.v()),
        flat(fs.w())
    )
}

#[derive(Deserialize)]
struct FactorFile {
    n: usize,
    r: usize,
    lambda: Vec<f64>,
    #[serde(rename = "U")]
    u: Vec<f64>,
    #[serde(rename = "V")]
    v: Vec<f64>,
    #[serde(rename = "W")]
    w: Vec<f64>,
}

/// Parse an fset-json document.
pub fn factor_set_from_json(text: &str, origin: &str) -> Result<FactorSet> {
    let file: FactorFile = serde_json::from_str(text).map_err(|e| Error::Format {
        format: "fset-json",
        path: origin.to_string(),
        detail: e.to_string(),
    })?;
    let expect = file.n * file.r;
    for (name, v) in [("U", &file.u), ("V", &file.v), ("W", &file.w)] {
        if v.len() != expect {
            return Err(Error::Format {
                format: "fset-json",
                path: origin.to_string(),
                detail: format!("{name} has {} entries, expected {}", v.len(), expect),
            });
        }
    }
    if file.lambda.len() != file.r {
        return Err(Error::Format {
            format: "fset-json",
            path: origin.to_string(),
            detail: format!("lambda has {} entries, expected {}", file.lambda.len(), file.r),
        });
    }
    FactorSet::new(
        DMatrix::from_vec(file.n, file.r, file.u),
        DMatrix::from_vec(file.n, file.r, file.v),
        DMatrix::from_vec(file.n, file.r, file.w),
        DVector::from_vec(file.lambda),
    )
}

pub fn write_factor_set(path: &Path, fs: &FactorSet) -> Result<()> {
    std::fs::write(path, factor_set_to_json(fs)).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn read_factor_set(path: &Path) -> Result<FactorSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    factor_set_from_json(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor::{random_factor_set, CoeffScheme};

    #[test]
    fn tensor_round_trip_is_bit_exact() {
        let fs = random_factor_set(3, 2, 5, CoeffScheme::HalfPlusChiSq);
        let t = crate::factor::synthesize(&fs);
        let json = tensor_to_json(&t);
        let back = tensor_from_json(&json, "mem").unwrap();
        assert_eq!(t.dims(), back.dims());
        for (a, b) in t.data().iter().zip(back.data().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        // Deterministic writer.
        assert_eq!(json, tensor_to_json(&t));
    }

    #[test]
    fn factor_set_round_trip_is_bit_exact() {
        let fs = random_factor_set(4, 3, 9, CoeffScheme::HalfPlusChiSq);
        let json = factor_set_to_json(&fs);
        let back = factor_set_from_json(&json, "mem").unwrap();
        assert_eq!(fs.u(), back.u());
        assert_eq!(fs.v(), back.v());
        assert_eq!(fs.w(), back.w());
        assert_eq!(fs.lambda(), back.lambda());
    }

    #[test]
    fn malformed_input_reports_format_error() {
        assert!(matches!(
            tensor_from_json("{\"dims\":[2,2]}", "mem"),
            Err(Error::Format { .. })
        ));
        assert!(matches!(
            tensor_from_json("{\"dims\":[2,2,2],\"data\":[1.0]}", "mem"),
            Err(Error::DimMismatch(_))
        ));
        assert!(matches!(
            factor_set_from_json("{\"n\":2,\"r\":1,\"lambda\":[1.0],\"U\":[1.0],\"V\":[1.0,0.0],\"W\":[1.0,0.0]}", "mem"),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn seventeen_digit_format() {
        assert_eq!(format_f64(1.0), "1.0000000000000000e0");
        let x = std::f64::consts::PI;
        assert_eq!(format_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
    }
}
