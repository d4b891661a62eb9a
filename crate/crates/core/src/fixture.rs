//! JSON space fixtures: layer grids, complexity and optional synthetic-oracle
//! coefficients.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{OracleCoefficients, SyntheticOracle};
use crate::scalar::Scalar;
use crate::searchspace::{conv_base_bops, Component, LayerSpec, SearchSpace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub cin: usize,
    pub cout: usize,
    #[serde(default = "one")]
    pub groups: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Frozen {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prune: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wbit: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abit: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerFixture {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_bops_g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<Geometry>,
    pub prune_grid: Vec<f64>,
    pub wbit_grid: Vec<f64>,
    pub abit_grid: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frozen: Option<Frozen>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleLayerFixture {
    pub cw: f64,
    pub ca: f64,
    pub cp: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleFixture {
    pub a_max: f64,
    pub depth: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_seed: Option<u64>,
    pub layers: Vec<OracleLayerFixture>,
}

/// On-disk form of a search space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fixture {
    pub name: String,
    pub layers: Vec<LayerFixture>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleFixture>,
}

impl Fixture {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn space<T: Scalar>(&self) -> Result<SearchSpace<T>> {
        let conv = |v: &[f64]| v.iter().map(|&x| T::of(x)).collect::<Vec<T>>();
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            let base = match (&l.base_bops_g, &l.geometry) {
                (Some(b), None) => *b,
                (None, Some(g)) => conv_base_bops(g.h, g.w, g.kh, g.kw, g.cin, g.cout, g.groups),
                _ => {
                    return Err(Error::InvalidSpace(format!(
                        "layer {} needs exactly one of base_bops_g or geometry",
                        i + 1
                    )))
                }
            };
            let mut spec = LayerSpec::new(T::of(base), conv(&l.prune_grid), conv(&l.wbit_grid), conv(&l.abit_grid));
            if let Some(f) = &l.frozen {
                for (c, v) in
                    [(Component::Prune, f.prune), (Component::WeightBits, f.wbit), (Component::ActBits, f.abit)]
                {
                    if let Some(v) = v {
                        spec = spec.with_frozen(c, T::of(v));
                    }
                }
            }
            layers.push(spec);
        }
        SearchSpace::new(self.name.clone(), layers)
    }

    /// The synthetic oracle embedded in the fixture, if any.
    pub fn oracle<T: Scalar>(&self) -> Result<Option<SyntheticOracle<T>>> {
        let Some(o) = &self.oracle else { return Ok(None) };
        if o.layers.len() != self.layers.len() {
            return Err(Error::InvalidSpace(format!(
                "oracle has {} coefficient triples for {} layers",
                o.layers.len(),
                self.layers.len()
            )));
        }
        let coeffs =
            o.layers.iter().map(|l| OracleCoefficients { cw: T::of(l.cw), ca: T::of(l.ca), cp: T::of(l.cp) }).collect();
        let mut oracle = SyntheticOracle::new(coeffs, T::of(o.a_max), T::of(o.depth))?;
        if let Some(sigma) = o.noise {
            oracle = oracle.with_noise(T::of(sigma), o.noise_seed.unwrap_or(0));
        }
        Ok(Some(oracle))
    }

    /// Builds a fixture around an existing space (geometry is flattened to
    /// `base_bops_g`).
    pub fn from_space<T: Scalar>(space: &SearchSpace<T>, oracle: Option<&SyntheticOracle<T>>) -> Self {
        let conv = |v: &[T]| v.iter().map(|x| x.as_f64()).collect::<Vec<f64>>();
        let layers = space
            .layers()
            .iter()
            .map(|l| {
                let frozen = Frozen {
                    prune: l.frozen_prune.map(|v| v.as_f64()),
                    wbit: l.frozen_wbit.map(|v| v.as_f64()),
                    abit: l.frozen_abit.map(|v| v.as_f64()),
                };
                let any = frozen.prune.is_some() || frozen.wbit.is_some() || frozen.abit.is_some();
                LayerFixture {
                    base_bops_g: Some(l.base_bops.as_f64()),
                    geometry: None,
                    prune_grid: conv(&l.prune_grid),
                    wbit_grid: conv(&l.wbit_grid),
                    abit_grid: conv(&l.abit_grid),
                    frozen: any.then_some(frozen),
                }
            })
            .collect();
        let oracle = oracle.map(|o| OracleFixture {
            a_max: o.a_max().as_f64(),
            depth: o.depth().as_f64(),
            noise: o.noise().map(|(s, _)| s.as_f64()),
            noise_seed: o.noise().map(|(_, seed)| seed),
            layers: o
                .coefficients()
                .iter()
                .map(|c| OracleLayerFixture { cw: c.cw.as_f64(), ca: c.ca.as_f64(), cp: c.cp.as_f64() })
                .collect(),
        });
        Self { name: space.name().to_string(), layers, oracle }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = r#"{
        "name": "toy",
        "layers": [
            {"base_bops_g": 1.5, "prune_grid": [0.0, 0.5], "wbit_grid": [4, 8], "abit_grid": [4, 8],
             "frozen": {"wbit": 8}},
            {"geometry": {"h": 8, "w": 8, "kh": 3, "kw": 3, "cin": 16, "cout": 16},
             "prune_grid": [0.25], "wbit_grid": [2, 4], "abit_grid": [2, 4]}
        ],
        "oracle": {"a_max": 0.93, "depth": 0.35, "layers": [
            {"cw": 0.5, "ca": 0.5, "cp": 1.0}, {"cw": 0.3, "ca": 0.9, "cp": 1.7}]}
    }"#;

    #[test]
    fn parses_both_layer_forms() {
        let f = Fixture::from_json(TOY).unwrap();
        let s: SearchSpace<f64> = f.space().unwrap();
        assert_eq!(s.num_layers(), 2);
        assert!(s.is_frozen(1));
        assert!((s.layers()[1].base_bops - conv_base_bops(8, 8, 3, 3, 16, 16, 1)).abs() < 1e-15);
        assert!(f.oracle::<f64>().unwrap().is_some());
    }

    #[test]
    fn roundtrips_through_json() {
        let f = Fixture::from_json(TOY).unwrap();
        let s: SearchSpace<f64> = f.space().unwrap();
        let o = f.oracle::<f64>().unwrap().unwrap();
        let back = Fixture::from_json(&Fixture::from_space(&s, Some(&o)).to_json().unwrap()).unwrap();
        assert_eq!(back.space::<f64>().unwrap(), s);
    }

    #[test]
    fn rejects_ambiguous_layers_and_unknown_fields() {
        let both = r#"{"name":"x","layers":[{"base_bops_g":1.0,"geometry":{"h":1,"w":1,"kh":1,"kw":1,"cin":1,"cout":1},
            "prune_grid":[0.0],"wbit_grid":[8],"abit_grid":[8]}]}"#;
        assert!(Fixture::from_json(both).unwrap().space::<f64>().is_err());
        let unknown = r#"{"name":"x","layers":[],"extra":1}"#;
        assert!(Fixture::from_json(unknown).is_err());
        let short_oracle = r#"{"name":"x","layers":[{"base_bops_g":1.0,"prune_grid":[0.0],"wbit_grid":[8],"abit_grid":[8]}],
            "oracle":{"a_max":0.9,"depth":0.3,"layers":[]}}"#;
        assert!(Fixture::from_json(short_oracle).unwrap().oracle::<f64>().is_err());
    }
}
