//! JSON model documents.
//!
//! ```text
//! { "format_version": 1, "n": .., "p": .., "M": .., "r": .., "variant": "distal_orthogonal",
//!   "banks": [ { "f": [j][rho][i], "g": [k][j][rho][i], "h": [k][j][rho][i] }, ... per output ] }
//! ```
//!
//! Coefficients appear in the same `(output, block, k, j, rho, i)` order the
//! model uses for flat indexing. Finite doubles round-trip bit-exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bspline::{MixedDensitySpline, RhoDensitySpline};
use crate::error::{AtlasError, Result};
use crate::model::{AtlasModel, OutputHead, Variant};

pub const FORMAT_VERSION: u32 = 1;

type SplineCoeffs = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadBanks {
    pub f: Vec<SplineCoeffs>,
    pub g: Vec<Vec<SplineCoeffs>>,
    pub h: Vec<Vec<SplineCoeffs>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub n: usize,
    pub p: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub r: u32,
    pub variant: Variant,
    pub banks: Vec<HeadBanks>,
}

fn spline_coeffs(s: &MixedDensitySpline) -> SplineCoeffs {
    s.banks().iter().map(|b| b.coeffs().to_vec()).collect()
}

fn spline_from(coeffs: SplineCoeffs) -> Result<MixedDensitySpline> {
    let banks = coeffs
        .into_iter()
        .enumerate()
        .map(|(rho, c)| RhoDensitySpline::from_coeffs(rho as u32, c))
        .collect::<Result<Vec<_>>>()?;
    MixedDensitySpline::from_banks(banks)
}

impl From<&AtlasModel> for ModelDocument {
    fn from(model: &AtlasModel) -> Self {
        let n = model.n();
        let by_k = |splines: &[MixedDensitySpline]| -> Vec<Vec<SplineCoeffs>> {
            splines
                .chunks(n)
                .map(|chunk| chunk.iter().map(spline_coeffs).collect())
                .collect()
        };
        let banks = model
            .heads()
            .iter()
            .map(|head| HeadBanks {
                f: head.f.iter().map(spline_coeffs).collect(),
                g: by_k(&head.g),
                h: by_k(&head.h),
            })
            .collect();
        ModelDocument {
            format_version: FORMAT_VERSION,
            n,
            p: model.p(),
            m: model.m(),
            r: model.r(),
            variant: model.variant(),
            banks,
        }
    }
}

impl TryFrom<ModelDocument> for AtlasModel {
    type Error = AtlasError;

    fn try_from(doc: ModelDocument) -> Result<Self> {
        if doc.format_version != FORMAT_VERSION {
            return Err(AtlasError::Format(format!(
                "unsupported format_version {}",
                doc.format_version
            )));
        }
        if doc.banks.len() != doc.p {
            return Err(AtlasError::Shape {
                what: "output heads",
                expected: doc.p,
                actual: doc.banks.len(),
            });
        }
        let flatten = |blocks: Vec<Vec<SplineCoeffs>>| -> Result<Vec<MixedDensitySpline>> {
            if blocks.len() != doc.m {
                return Err(AtlasError::Shape {
                    what: "exponential terms",
                    expected: doc.m,
                    actual: blocks.len(),
                });
            }
            let mut out = Vec::with_capacity(doc.m * doc.n);
            for per_k in blocks {
                if per_k.len() != doc.n {
                    return Err(AtlasError::Shape {
                        what: "interior splines",
                        expected: doc.n,
                        actual: per_k.len(),
                    });
                }
                for s in per_k {
                    out.push(spline_from(s)?);
                }
            }
            Ok(out)
        };
        let mut heads = Vec::with_capacity(doc.p);
        for banks in doc.banks {
            let f = banks
                .f
                .into_iter()
                .map(spline_from)
                .collect::<Result<Vec<_>>>()?;
            heads.push(OutputHead {
                f,
                g: flatten(banks.g)?,
                h: flatten(banks.h)?,
            });
        }
        AtlasModel::from_heads(doc.n, doc.m, doc.r, doc.variant, heads)
    }
}

pub fn to_json(model: &AtlasModel) -> Result<String> {
    Ok(serde_json::to_string(&ModelDocument::from(model))?)
}

pub fn from_json(text: &str) -> Result<AtlasModel> {
    let doc: ModelDocument = serde_json::from_str(text)?;
    AtlasModel::try_from(doc)
}

pub fn save(model: &AtlasModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_json(model)?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<AtlasModel> {
    from_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut model = AtlasModel::new(2, 2, 3, 2, Variant::AllDensitiesTrainable).unwrap();
        let mut c: f64 = 0.1;
        model.for_each_coeff_mut(|v| {
            c = (c * 12.9898).sin() * 43758.5453 % 1.0;
            *v = c / 3.0 + 1e-300 * c;
        });
        let back = from_json(&to_json(&model).unwrap()).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.variant(), Variant::AllDensitiesTrainable);
        let x = [0.12, 0.98];
        assert_eq!(back.forward(&x).unwrap(), model.forward(&x).unwrap());
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let model = AtlasModel::new(1, 1, 1, 1, Variant::DistalOrthogonal).unwrap();
        let mut doc = ModelDocument::from(&model);
        doc.banks[0].g[0][0][1].push(0.0);
        assert!(AtlasModel::try_from(doc).is_err());

        let mut doc = ModelDocument::from(&model);
        doc.m = 2;
        assert!(AtlasModel::try_from(doc).is_err());

        let mut doc = ModelDocument::from(&model);
        doc.format_version = 99;
        assert!(matches!(
            AtlasModel::try_from(doc),
            Err(AtlasError::Format(_))
        ));
    }

    #[test]
    fn document_field_names() {
        let model = AtlasModel::new(1, 1, 0, 0, Variant::DistalOrthogonal).unwrap();
        let v: serde_json::Value = serde_json::from_str(&to_json(&model).unwrap()).unwrap();
        for key in ["format_version", "n", "p", "M", "r", "variant", "banks"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["variant"], "distal_orthogonal");
    }
}
