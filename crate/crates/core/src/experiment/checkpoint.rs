use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{read_network, write_network};
use crate::dataset::InputLayout;
use crate::report::exact;
use crate::vae::{EncoderScale, TrainConfig, VaeModel};

use super::ExperimentError;

pub const CHECKPOINT_MAGIC: &str = "harmonic-vae checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Facts about a model that are not part of its networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub latent_dim: usize,
    pub data_dim: usize,
    pub layout: InputLayout,
    pub train: Option<TrainConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: VaeModel,
    pub meta: CheckpointMeta,
}

fn corrupt(reason: impl Into<String>) -> ExperimentError {
    ExperimentError::CorruptCheckpoint(reason.into())
}

impl Checkpoint {
    pub fn new(model: VaeModel, layout: InputLayout, train: Option<TrainConfig>) -> Self {
        let meta = CheckpointMeta {
            latent_dim: model.latent_dim(),
            data_dim: model.data_dim(),
            layout,
            train,
        };
        Self { model, meta }
    }

    fn body(&self) -> String {
        let m = &self.model;
        let mut body = format!(
            "meta {}\nlikelihood_scale {}\n",
            serde_json::to_string(&self.meta).expect("metadata serialises"),
            exact(m.likelihood_scale())
        );
        match &m.encoder_scale {
            EncoderScale::Fixed(s) => {
                let vals: Vec<String> = s.iter().map(|v| exact(*v)).collect();
                body.push_str(&format!("encoder_scale fixed {}\n", vals.join(" ")));
            }
            EncoderScale::Learned(_) => body.push_str("encoder_scale learned\n"),
        }
        write_network(&m.encoder_mean, "encoder_mean", &mut body);
        if let EncoderScale::Learned(net) = &m.encoder_scale {
            write_network(net, "encoder_scale", &mut body);
        }
        write_network(&m.decoder, "decoder", &mut body);
        body
    }

    /// Header line, checksum line, then the body.
    pub fn to_text(&self) -> String {
        let body = self.body();
        format!(
            "{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}\nsha256 {}\n{body}",
            hex::encode(Sha256::digest(body.as_bytes()))
        )
    }

    pub fn from_text(text: &str) -> Result<Self, ExperimentError> {
        let mut parts = text.splitn(3, '\n');
        let header = parts.next().unwrap_or_default();
        let version = header
            .strip_prefix(CHECKPOINT_MAGIC)
            .and_then(|v| v.trim().strip_prefix('v'))
            .ok_or_else(|| corrupt("missing checkpoint header"))?;
        let version: u32 = version.parse().map_err(|_| corrupt("unreadable version"))?;
        if version != CHECKPOINT_VERSION {
            return Err(ExperimentError::CheckpointVersion {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let sum = parts
            .next()
            .and_then(|l| l.strip_prefix("sha256 "))
            .ok_or_else(|| corrupt("missing checksum"))?;
        let body = parts.next().ok_or_else(|| corrupt("missing body"))?;
        if hex::encode(Sha256::digest(body.as_bytes())) != sum.trim() {
            return Err(corrupt("checksum mismatch"));
        }

        let mut lines = body.lines().enumerate().map(|(i, l)| (i + 3, l));
        let mut field = |key: &str| -> Result<String, ExperimentError> {
            let (_, line) = lines.next().ok_or_else(|| corrupt(format!("missing `{key}`")))?;
            line.strip_prefix(key)
                .and_then(|rest| rest.strip_prefix(' ').or(Some(rest).filter(|r| r.is_empty())))
                .map(str::to_string)
                .ok_or_else(|| corrupt(format!("expected `{key}`")))
        };
        let meta: CheckpointMeta =
            serde_json::from_str(&field("meta")?).map_err(|e| corrupt(format!("metadata: {e}")))?;
        let likelihood_scale: f64 = field("likelihood_scale")?
            .parse()
            .map_err(|_| corrupt("unreadable likelihood_scale"))?;
        let scale_line = field("encoder_scale")?;
        let fixed = match scale_line.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["learned"] => None,
            ["fixed", vals @ ..] => Some(
                vals.iter()
                    .map(|v| v.parse::<f64>().map_err(|_| corrupt("unreadable fixed scale")))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
            _ => return Err(corrupt("unknown encoder_scale mode")),
        };
        let mut next_net = |want: &str| -> Result<_, ExperimentError> {
            let (name, net) = read_network(&mut lines).map_err(|e| corrupt(e.to_string()))?;
            if name != want {
                return Err(corrupt(format!("expected network `{want}`, found `{name}`")));
            }
            Ok(net)
        };
        let encoder_mean = next_net("encoder_mean")?;
        let encoder_scale = match fixed {
            Some(s) => EncoderScale::Fixed(s),
            None => EncoderScale::Learned(next_net("encoder_scale")?),
        };
        let decoder = next_net("decoder")?;
        let model = VaeModel::from_parts(encoder_mean, encoder_scale, decoder, likelihood_scale)
            .map_err(|e| corrupt(e.to_string()))?;
        if model.latent_dim() != meta.latent_dim || model.data_dim() != meta.data_dim {
            return Err(corrupt("metadata dimensions disagree with the networks"));
        }
        Ok(Self { model, meta })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), ExperimentError> {
        std::fs::write(path, self.to_text()).map_err(|e| ExperimentError::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        Self::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Activation;
    use crate::seed::rng_from;
    use crate::vae::{train, Architecture};
    use ndarray::Array2;

    fn arch() -> Architecture {
        Architecture { data_dim: 2, latent_dim: 1, hidden: vec![5], activation: Activation::Sigmoid }
    }

    #[test]
    fn fresh_models_round_trip() {
        for fixed in [None, Some(0.5)] {
            let m = VaeModel::new(&arch(), fixed, 0.1f64.sqrt(), &mut rng_from(1, &[])).unwrap();
            let c = Checkpoint::new(m, InputLayout::CoordinateAndValues, None);
            assert_eq!(Checkpoint::from_text(&c.to_text()).unwrap(), c);
        }
    }

    #[test]
    fn trained_model_round_trips_with_config() {
        let cfg = TrainConfig { epochs: 3, batch_size: 4, learning_rate: 0.01, ..TrainConfig::default() };
        let x = Array2::from_shape_fn((8, 2), |(i, j)| ((i + j) as f64 * 0.3).sin());
        let m = VaeModel::new(&arch(), None, 0.3, &mut rng_from(2, &[])).unwrap();
        let (m, _) = train(m, x.view(), &cfg).unwrap();
        let c = Checkpoint::new(m, InputLayout::Values, Some(cfg));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        c.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), c);
    }

    #[test]
    fn tampering_is_detected() {
        let m = VaeModel::new(&arch(), Some(1.0), 0.3, &mut rng_from(3, &[])).unwrap();
        let text = Checkpoint::new(m, InputLayout::Values, None).to_text();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[1] = format!("sha256 {}", "0".repeat(64));
        assert!(matches!(
            Checkpoint::from_text(&(lines.join("\n") + "\n")),
            Err(ExperimentError::CorruptCheckpoint(_))
        ));
        let edited = text.replacen("decoder", "decodex", 1);
        assert!(matches!(Checkpoint::from_text(&edited), Err(ExperimentError::CorruptCheckpoint(_))));
        let future = text.replacen("v1", "v2", 1);
        assert_eq!(
            Checkpoint::from_text(&future).unwrap_err(),
            ExperimentError::CheckpointVersion { found: 2, expected: 1 }
        );
    }
}
