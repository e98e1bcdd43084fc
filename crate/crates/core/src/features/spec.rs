use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Range 8-bit pixel values are mapped to before normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueScale {
    /// `v / 255`
    #[serde(rename = "[0,1]")]
    Unit,
    /// `2 v / 255 - 1`
    #[serde(rename = "[-1,1]")]
    Symmetric,
}

impl ValueScale {
    pub fn apply(self, v: u8) -> f64 {
        match self {
            ValueScale::Unit => v as f64 / 255.0,
            ValueScale::Symmetric => 2.0 * v as f64 / 255.0 - 1.0,
        }
    }
}

/// Input preprocessing and output width of a backbone. Serialized as the
/// JSON sidecar that accompanies an exported model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSpec {
    pub name: String,
    /// (width, height)
    pub input_size: (u32, u32),
    #[serde(rename = "means")]
    pub channel_means: [f32; 3],
    #[serde(rename = "stds")]
    pub channel_stds: [f32; 3],
    pub value_scale: ValueScale,
    pub embedding_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_path: Option<PathBuf>,
}

impl BackendSpec {
    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 {
            return Err(Error::Config(format!("{}: embedding_dim must be >= 1", self.name)));
        }
        if self.input_size.0 == 0 || self.input_size.1 == 0 {
            return Err(Error::Config(format!("{}: input size must be >= 1x1", self.name)));
        }
        if self.channel_stds.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Config(format!("{}: channel stds must be positive", self.name)));
        }
        if self.channel_means.iter().any(|m| !m.is_finite()) {
            return Err(Error::Config(format!("{}: channel means must be finite", self.name)));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::Config(format!("invalid backend name {:?}", self.name)));
        }
        Ok(())
    }

    /// Reads a sidecar. A relative `model_path` is resolved against the
    /// sidecar's directory; when absent, `<stem>.onnx` next to
    /// `<stem>.sidecar.json` is assumed.
    pub fn load_sidecar(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec: BackendSpec = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        spec.model_path = Some(match spec.model_path.take() {
            Some(p) if p.is_relative() => dir.join(p),
            Some(p) => p,
            None => {
                let file = path.file_name().unwrap_or_default().to_string_lossy();
                let stem = file
                    .strip_suffix(".sidecar.json")
                    .or_else(|| file.strip_suffix(".json"))
                    .unwrap_or(&file);
                dir.join(format!("{stem}.onnx"))
            }
        });
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_sidecar_json(&self) -> String {
        let mut copy = self.clone();
        copy.model_path = None;
        serde_json::to_string_pretty(&copy).expect("spec serializes")
    }
}

const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

/// Published backbone architectures with their conventional input sizes,
/// preprocessing and pooled feature widths. An exported model's sidecar
/// takes precedence over these defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    DenseNet201,
    InceptionV3,
    InceptionResNetV2,
    ResNet50,
    Vgg16,
    Vgg19,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::DenseNet201,
        Preset::InceptionV3,
        Preset::InceptionResNetV2,
        Preset::ResNet50,
        Preset::Vgg16,
        Preset::Vgg19,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::DenseNet201 => "densenet201",
            Preset::InceptionV3 => "inceptionv3",
            Preset::InceptionResNetV2 => "inceptionresnetv2",
            Preset::ResNet50 => "resnet50",
            Preset::Vgg16 => "vgg16",
            Preset::Vgg19 => "vgg19",
        }
    }

    pub fn spec(self) -> BackendSpec {
        let (size, dim, inception_style) = match self {
            Preset::DenseNet201 => (224, 1920, false),
            Preset::InceptionV3 => (299, 2048, true),
            Preset::InceptionResNetV2 => (299, 1536, true),
            Preset::ResNet50 => (224, 2048, false),
            Preset::Vgg16 | Preset::Vgg19 => (224, 512, false),
        };
        let (scale, means, stds) = if inception_style {
            (ValueScale::Symmetric, [0.0; 3], [1.0; 3])
        } else {
            (ValueScale::Unit, IMAGENET_MEAN, IMAGENET_STD)
        };
        BackendSpec {
            name: self.name().to_string(),
            input_size: (size, size),
            channel_means: means,
            channel_stds: stds,
            value_scale: scale,
            embedding_dim: dim,
            model_path: None,
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace(['-', '_'], "");
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown backbone preset {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_dimensions() {
        let dims: Vec<(&str, u32, usize)> = Preset::ALL
            .iter()
            .map(|p| {
                let s = p.spec();
                (p.name(), s.input_size.0, s.embedding_dim)
            })
            .collect();
        assert_eq!(
            dims,
            [
                ("densenet201", 224, 1920),
                ("inceptionv3", 299, 2048),
                ("inceptionresnetv2", 299, 1536),
                ("resnet50", 224, 2048),
                ("vgg16", 224, 512),
                ("vgg19", 224, 512),
            ]
        );
        for p in Preset::ALL {
            p.spec().validate().unwrap();
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert_eq!("DenseNet-201".parse::<Preset>().unwrap(), Preset::DenseNet201);
        assert!("mobilenet".parse::<Preset>().is_err());
    }

    #[test]
    fn sidecar_round_trip_and_model_path() {
        let dir = tempfile::tempdir().unwrap();
        let spec = Preset::InceptionV3.spec();
        let path = dir.path().join("inceptionv3.sidecar.json");
        std::fs::write(&path, spec.to_sidecar_json()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"value_scale\": \"[-1,1]\""));
        assert!(text.contains("\"means\""));
        let loaded = BackendSpec::load_sidecar(&path).unwrap();
        assert_eq!(loaded.model_path.as_deref(), Some(dir.path().join("inceptionv3.onnx").as_path()));
        assert_eq!(BackendSpec { model_path: None, ..loaded }, spec);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = Preset::Vgg16.spec();
        s.channel_stds[1] = 0.0;
        assert!(s.validate().is_err());
        let mut s = Preset::Vgg16.spec();
        s.embedding_dim = 0;
        assert!(s.validate().is_err());
        let mut s = Preset::Vgg16.spec();
        s.input_size = (0, 3);
        assert!(s.validate().is_err());
    }
}
