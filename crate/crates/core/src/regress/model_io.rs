//! Versioned JSON model files.
//!
//! ```json
//! {"schema_version": "1.0", "degree": 3, "coefficients": [7.954, 0.00397, 3.96e-7, -4.25e-12],
//!  "fit_rmse": 176.57, "n_train": 12000, "created_utc": null}
//! ```
//!
//! Coefficients are `a0` first. Floats are written in shortest round-trip
//! form, so a save/load cycle is bitwise lossless. Unknown fields are
//! ignored; any `1.x` schema version is accepted.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::PolyModel;
use crate::error::{Error, Result};

pub const MODEL_SCHEMA_VERSION: &str = "1.0";

#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema_version: String,
    degree: usize,
    coefficients: Vec<f64>,
    fit_rmse: f64,
    n_train: usize,
    #[serde(default)]
    created_utc: Option<DateTime<Utc>>,
}

pub fn write_model<W: Write>(model: &PolyModel, w: W) -> Result<()> {
    model.validate()?;
    let file = ModelFile {
        schema_version: MODEL_SCHEMA_VERSION.to_string(),
        degree: model.degree,
        coefficients: model.coefficients.clone(),
        fit_rmse: model.fit_rmse,
        n_train: model.n_train,
        created_utc: model.created_utc,
    };
    let mut w = w;
    serde_json::to_writer_pretty(&mut w, &file)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_model<R: Read>(r: R) -> Result<PolyModel> {
    let value: serde_json::Value = serde_json::from_reader(r)?;
    let file: ModelFile = serde_json::from_value(value).map_err(|e| Error::SchemaMismatch(e.to_string()))?;
    let major = file.schema_version.split('.').next().unwrap_or("");
    if major != "1" {
        return Err(Error::SchemaMismatch(format!(
            "unsupported schema version {}",
            file.schema_version
        )));
    }
    let model = PolyModel {
        degree: file.degree,
        coefficients: file.coefficients,
        fit_rmse: file.fit_rmse,
        n_train: file.n_train,
        created_utc: file.created_utc,
    };
    model.validate()?;
    Ok(model)
}

pub fn save_model(model: &PolyModel, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<PolyModel> {
    read_model(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regress::predict;
    use proptest::prelude::*;

    #[test]
    fn reference_cubic_round_trips() {
        let m = PolyModel::reference_cubic();
        let mut buf = Vec::new();
        write_model(&m, &mut buf).unwrap();
        let back = read_model(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        for (a, b) in back.coefficients.iter().zip(&m.coefficients) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn coefficient_count_must_match_degree() {
        let text = r#"{"schema_version":"1.0","degree":3,"coefficients":[1,2,3],"fit_rmse":0,"n_train":3}"#;
        assert!(matches!(read_model(text.as_bytes()), Err(Error::SchemaMismatch(_))));
        let text = r#"{"schema_version":"1.0","degree":6,"coefficients":[1,2,3,4,5,6,7],"fit_rmse":0,"n_train":7}"#;
        assert!(matches!(read_model(text.as_bytes()), Err(Error::SchemaMismatch(_))));
        let text = r#"{"schema_version":"2.0","degree":1,"coefficients":[1,2],"fit_rmse":0,"n_train":3}"#;
        assert!(matches!(read_model(text.as_bytes()), Err(Error::SchemaMismatch(_))));
        let text = r#"{"degree":1,"coefficients":[1,2]}"#;
        assert!(matches!(read_model(text.as_bytes()), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn older_minor_version_with_extras_loads() {
        let text = r#"{
            "schema_version": "1.0",
            "degree": 1,
            "coefficients": [1.5, 0.25],
            "fit_rmse": 3.0,
            "n_train": 40,
            "created_utc": "2016-09-01T00:00:00Z",
            "site": "wahrsis-3",
            "notes": {"calibrated": true}
        }"#;
        let m = read_model(text.as_bytes()).unwrap();
        assert_eq!(m.coefficients, vec![1.5, 0.25]);
        assert_eq!(m.n_train, 40);
        assert!(m.created_utc.is_some());
    }

    proptest! {
        #[test]
        fn predict_survives_round_trip(
            coeffs in prop::collection::vec(prop::num::f64::NORMAL, 2..=6),
            l in 0.0f64..2e5,
        ) {
            let m = PolyModel::from_coefficients(coeffs).unwrap();
            let mut buf = Vec::new();
            write_model(&m, &mut buf).unwrap();
            let back = read_model(buf.as_slice()).unwrap();
            let (a, b) = (predict(&m, l), predict(&back, l));
            prop_assert_eq!(a.value.to_bits(), b.value.to_bits());
        }
    }
}
