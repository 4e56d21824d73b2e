//! Versioned serialization of every fitted pipeline component.
//!
//! Bundles are canonical JSON: struct fields in declaration order, maps
//! sorted (BTreeMap), and every float written as a 17-significant-digit
//! decimal. Seventeen digits round-trip an f64 exactly, so loading a
//! bundle and re-serializing it yields byte-identical output.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dealer::LogRegModel;
use crate::error::{Error, Result};
use crate::eval::FusedClassifier;
use crate::features::Normalizer;
use crate::fusion::FusionConfig;
use crate::multitask::{MlpModel, TrainConfig};
use crate::text::{FieldSelection, NaiveBayesModel, TextClassifier, TfIdfModel};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSection {
    pub model: MlpModel,
    /// Echo of the training configuration the model was produced with.
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DealerSection {
    pub model: LogRegModel,
    /// Feature order contract of the vectors the model consumes.
    pub feature_order: Vec<String>,
    /// Indices surviving selection when the model is a refit, else absent.
    pub retained: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    /// Flat echo of the command/flag configuration that built the bundle.
    pub config: BTreeMap<String, String>,
    /// Unix timestamp taken from SOURCE_DATE_EPOCH when set; omitted
    /// otherwise so reruns stay byte-identical.
    pub created_unix: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedBundle {
    pub format_version: u32,
    pub tfidf: Option<TfIdfModel>,
    pub nb: Option<NaiveBayesModel>,
    pub mlp: Option<MlpSection>,
    pub fusion: Option<FusionConfig>,
    pub normalizer: Option<Normalizer>,
    pub dealer_lr: Option<DealerSection>,
    pub provenance: Provenance,
}

impl TrainedBundle {
    pub fn new(provenance: Provenance) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            tfidf: None,
            nb: None,
            mlp: None,
            fusion: None,
            normalizer: None,
            dealer_lr: None,
            provenance,
        }
    }

    /// Canonical JSON (single line, 17-significant-digit floats).
    pub fn to_canonical_json(&self) -> Result<String> {
        let mut buf = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigFigFormatter);
        self.serialize(&mut ser)
            .map_err(|e| Error::invalid(format!("serialize bundle: {e}")))?;
        buf.push(b'\n');
        Ok(String::from_utf8(buf).expect("serializer emits utf-8"))
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let bundle: TrainedBundle = serde_json::from_str(json).map_err(|e| Error::Parse {
            line: 1,
            msg: format!("bundle: {e}"),
        })?;
        if bundle.format_version != FORMAT_VERSION {
            return Err(Error::data(format!(
                "unsupported bundle format_version {} (expected {FORMAT_VERSION})",
                bundle.format_version
            )));
        }
        Ok(bundle)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Reassembles the deployed post classifier from the tfidf, nb and
    /// mlp sections.
    pub fn fused_classifier(&self) -> Result<FusedClassifier> {
        let tfidf = self.require(self.tfidf.clone(), "tfidf")?;
        let nb = self.require(self.nb.clone(), "nb")?;
        let mlp = self.require(self.mlp.clone(), "mlp")?;
        let fusion = self.require(self.fusion, "fusion")?;
        mlp.model.validate_shapes()?;
        Ok(FusedClassifier {
            mlp: mlp.model,
            text: TextClassifier {
                tfidf,
                nb,
                selection: FieldSelection::Combined,
            },
            fusion,
        })
    }

    pub fn dealer_section(&self) -> Result<(&Normalizer, &DealerSection)> {
        match (&self.normalizer, &self.dealer_lr) {
            (Some(n), Some(d)) => Ok((n, d)),
            _ => Err(Error::data(
                "bundle is missing the normalizer/dealer_lr sections",
            )),
        }
    }

    fn require<T>(&self, section: Option<T>, name: &str) -> Result<T> {
        section.ok_or_else(|| Error::data(format!("bundle is missing the {name} section")))
    }
}

/// JSON formatter that writes every f64 with 17 significant digits in
/// exponent form, e.g. `5.0000000000000000e-1`.
struct SigFigFormatter;

impl serde_json::ser::Formatter for SigFigFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        if !value.is_finite() {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                "non-finite float in bundle",
            ));
        }
        write!(writer, "{value:.16e}")
    }
}
