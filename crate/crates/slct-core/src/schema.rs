//! JSON file formats for networks, input boxes, unit groupings, and
//! architecture candidates.
//!
//! * `slct-net-v1` — a network: `{"format":"slct-net-v1","widths":[H1,…,HL+1],
//!   "bias":bool,"layers":[{"A":[[row-major]],"B":[…]?},…]}`. Layer s maps
//!   width s+1 to width s (widths are output-first), so `A` of layer s is
//!   H^(s) × H^(s+1) and `B` has length H^(s).
//! * `slct-box-v1` — an input box: `{"format":"slct-box-v1","lower":[…],
//!   "upper":[…]}`.
//! * groups — hidden-unit grouping overrides with 1-based unit indices.
//! * candidates — architecture list for ranking.

use crate::linear::{LinearArchitecture, LinearNetwork};
use crate::relu::{GroupOverrides, InputDomain, ReluError, ReluNetwork};
use crate::select::Candidate;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const NET_FORMAT: &str = "slct-net-v1";
pub const BOX_FORMAT: &str = "slct-box-v1";

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported format {got:?}, expected {want:?}")]
    WrongFormat { got: String, want: &'static str },
    #[error("widths must list ≥ 2 positive entries (output first), got {0:?}")]
    BadWidths(Vec<u32>),
    #[error("expected {want} layers for widths {widths:?}, got {got}")]
    LayerCount {
        widths: Vec<u32>,
        want: usize,
        got: usize,
    },
    #[error("layer {layer}: A must be {rows}×{cols} (rows of equal length), got {got_rows} rows")]
    BadMatrix {
        layer: usize,
        rows: usize,
        cols: usize,
        got_rows: usize,
    },
    #[error("layer {layer}: row {row} has {got} entries, expected {want}")]
    RaggedRow {
        layer: usize,
        row: usize,
        got: usize,
        want: usize,
    },
    #[error("layer {layer}: B must have {want} entries, got {got}")]
    BadBias {
        layer: usize,
        want: usize,
        got: usize,
    },
    #[error("bias is {bias} but layer {layer} {problem}")]
    BiasPresence {
        bias: bool,
        layer: usize,
        problem: &'static str,
    },
    #[error("matrix entries must be finite (layer {layer})")]
    NonFinite { layer: usize },
    #[error("a ReLU network needs exactly 2 layers (output and hidden), got {0}")]
    NotThreeLayer(usize),
    #[error("a ReLU network file must set bias=true and give B on the hidden layer")]
    ReluBiasShape,
    #[error("box lower/upper must be equal-length and strictly increasing per coordinate")]
    BadBox,
    #[error("groups file: {0}")]
    BadGroups(String),
    #[error(transparent)]
    Relu(#[from] ReluError),
    #[error(transparent)]
    Linear(#[from] crate::linear::LinearError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerFile {
    /// Row-major H^(s) × H^(s+1) weight matrix.
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    /// Optional bias of length H^(s).
    #[serde(rename = "B", skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkFile {
    pub format: String,
    /// Output-first width list (H^(1), …, H^(L+1)).
    pub widths: Vec<u32>,
    #[serde(default)]
    pub bias: bool,
    pub layers: Vec<LayerFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxFile {
    pub format: String,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupsFile {
    /// Hidden-unit groups, units numbered 1..H2 in file order.
    pub groups: Vec<Vec<u32>>,
    /// Effective output count per group (H1 restricted to the group's span).
    pub h1: Vec<u32>,
    /// Rank of the truth restricted to each group.
    pub ranks: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidatesFile {
    pub candidates: Vec<Candidate>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, SchemaError> {
    let text = std::fs::read_to_string(path).map_err(|source| SchemaError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| SchemaError::Json {
        path: path.display().to_string(),
        source,
    })
}

impl NetworkFile {
    pub fn load(path: &Path) -> Result<NetworkFile, SchemaError> {
        let file: NetworkFile = read_json(path)?;
        file.validate()?;
        Ok(file)
    }

    fn validate(&self) -> Result<(), SchemaError> {
        if self.format != NET_FORMAT {
            return Err(SchemaError::WrongFormat {
                got: self.format.clone(),
                want: NET_FORMAT,
            });
        }
        if self.widths.len() < 2 || self.widths.contains(&0) {
            return Err(SchemaError::BadWidths(self.widths.clone()));
        }
        let depth = self.widths.len() - 1;
        if self.layers.len() != depth {
            return Err(SchemaError::LayerCount {
                widths: self.widths.clone(),
                want: depth,
                got: self.layers.len(),
            });
        }
        for (s, layer) in self.layers.iter().enumerate() {
            let rows = self.widths[s] as usize;
            let cols = self.widths[s + 1] as usize;
            if layer.a.len() != rows {
                return Err(SchemaError::BadMatrix {
                    layer: s + 1,
                    rows,
                    cols,
                    got_rows: layer.a.len(),
                });
            }
            for (i, row) in layer.a.iter().enumerate() {
                if row.len() != cols {
                    return Err(SchemaError::RaggedRow {
                        layer: s + 1,
                        row: i + 1,
                        got: row.len(),
                        want: cols,
                    });
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(SchemaError::NonFinite { layer: s + 1 });
                }
            }
            match (&layer.b, self.bias) {
                (Some(b), true) => {
                    if b.len() != rows {
                        return Err(SchemaError::BadBias {
                            layer: s + 1,
                            want: rows,
                            got: b.len(),
                        });
                    }
                    if b.iter().any(|v| !v.is_finite()) {
                        return Err(SchemaError::NonFinite { layer: s + 1 });
                    }
                }
                (None, true) => {
                    return Err(SchemaError::BiasPresence {
                        bias: true,
                        layer: s + 1,
                        problem: "is missing B",
                    })
                }
                (Some(_), false) => {
                    return Err(SchemaError::BiasPresence {
                        bias: false,
                        layer: s + 1,
                        problem: "carries B",
                    })
                }
                (None, false) => {}
            }
        }
        Ok(())
    }

    /// Interprets the file as a multi-layer linear network.
    pub fn to_linear_network(&self) -> Result<LinearNetwork, SchemaError> {
        let arch = LinearArchitecture::new(self.widths.clone(), self.bias)?;
        let weights: Vec<DMatrix<f64>> = self
            .layers
            .iter()
            .enumerate()
            .map(|(s, layer)| {
                let rows = self.widths[s] as usize;
                let cols = self.widths[s + 1] as usize;
                DMatrix::from_row_iterator(rows, cols, layer.a.iter().flatten().copied())
            })
            .collect();
        let biases = if self.bias {
            Some(
                self.layers
                    .iter()
                    .map(|l| DVector::from_column_slice(l.b.as_ref().expect("validated")))
                    .collect(),
            )
        } else {
            None
        };
        Ok(LinearNetwork::new(arch, weights, biases)?)
    }

    /// Interprets the file as a three-layer ReLU network: two layers, hidden
    /// bias required, output bias must be absent or all zero.
    pub fn to_relu_network(&self) -> Result<ReluNetwork, SchemaError> {
        if self.widths.len() != 3 {
            return Err(SchemaError::NotThreeLayer(self.widths.len()));
        }
        if !self.bias {
            return Err(SchemaError::ReluBiasShape);
        }
        let out_bias = self.layers[0].b.as_ref().expect("validated");
        if out_bias.iter().any(|&v| v != 0.0) {
            return Err(SchemaError::ReluBiasShape);
        }
        let (h1, h2, h3) = (
            self.widths[0] as usize,
            self.widths[1] as usize,
            self.widths[2] as usize,
        );
        let a1 = DMatrix::from_row_iterator(h1, h2, self.layers[0].a.iter().flatten().copied());
        let a2 = DMatrix::from_row_iterator(h2, h3, self.layers[1].a.iter().flatten().copied());
        let b2 = DVector::from_column_slice(self.layers[1].b.as_ref().expect("validated"));
        Ok(ReluNetwork::new(a1, a2, b2)?)
    }

    /// Renders a linear network back to the file form.
    pub fn from_linear_network(net: &LinearNetwork) -> NetworkFile {
        let arch = net.architecture();
        let layers = net
            .weights()
            .iter()
            .enumerate()
            .map(|(s, w)| LayerFile {
                a: (0..w.nrows())
                    .map(|i| (0..w.ncols()).map(|j| w[(i, j)]).collect())
                    .collect(),
                b: net.biases().map(|bs| bs[s].iter().copied().collect()),
            })
            .collect();
        NetworkFile {
            format: NET_FORMAT.to_string(),
            widths: arch.widths().to_vec(),
            bias: arch.bias(),
            layers,
        }
    }
}

impl std::str::FromStr for NetworkFile {
    type Err = SchemaError;

    fn from_str(text: &str) -> Result<NetworkFile, SchemaError> {
        let file: NetworkFile = serde_json::from_str(text).map_err(|source| SchemaError::Json {
            path: "<inline>".to_string(),
            source,
        })?;
        file.validate()?;
        Ok(file)
    }
}

impl BoxFile {
    pub fn load(path: &Path) -> Result<BoxFile, SchemaError> {
        let file: BoxFile = read_json(path)?;
        if file.format != BOX_FORMAT {
            return Err(SchemaError::WrongFormat {
                got: file.format,
                want: BOX_FORMAT,
            });
        }
        Ok(file)
    }

    pub fn to_domain(&self) -> Result<InputDomain, SchemaError> {
        if self.lower.len() != self.upper.len() || self.lower.is_empty() {
            return Err(SchemaError::BadBox);
        }
        Ok(InputDomain::new(self.lower.clone(), self.upper.clone())?)
    }
}

impl GroupsFile {
    pub fn load(path: &Path) -> Result<GroupsFile, SchemaError> {
        read_json(path)
    }

    /// Converts the 1-based unit indices of the file to the 0-based
    /// [`GroupOverrides`] the analysis uses.
    pub fn to_overrides(&self) -> Result<GroupOverrides, SchemaError> {
        if self.groups.len() != self.h1.len() || self.groups.len() != self.ranks.len() {
            return Err(SchemaError::BadGroups(format!(
                "groups, h1, and ranks must have equal lengths, got {}, {}, {}",
                self.groups.len(),
                self.h1.len(),
                self.ranks.len()
            )));
        }
        let mut groups = Vec::with_capacity(self.groups.len());
        for g in &self.groups {
            let mut zero_based = Vec::with_capacity(g.len());
            for &u in g {
                if u == 0 {
                    return Err(SchemaError::BadGroups(
                        "unit indices are 1-based; 0 is not a unit".to_string(),
                    ));
                }
                zero_based.push((u - 1) as usize);
            }
            groups.push(zero_based);
        }
        Ok(GroupOverrides {
            groups,
            effective_outputs: self.h1.clone(),
            ranks: self.ranks.clone(),
        })
    }
}

impl CandidatesFile {
    pub fn load(path: &Path) -> Result<CandidatesFile, SchemaError> {
        read_json(path)
    }
}
