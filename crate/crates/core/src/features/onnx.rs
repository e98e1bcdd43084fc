use std::path::Path;

use tract_onnx::prelude::*;

use crate::error::{Error, Result};

use super::{BackendSpec, EmbeddingBackend, InputTensor};

type Plan = TypedRunnableModel<TypedModel>;

/// An exported backbone in ONNX form: one `1×3×H×W` float input, one
/// `1×D` float output with pooling already part of the graph.
///
/// The output width is measured when the model is loaded by running an
/// all-zero input, and must equal the sidecar's `embedding_dim`.
pub struct OnnxBackend {
    spec: BackendSpec,
    plan: Plan,
}

impl std::fmt::Debug for OnnxBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OnnxBackend").field("spec", &self.spec).finish_non_exhaustive()
    }
}

impl OnnxBackend {
    /// Loads the model named by `spec.model_path`.
    pub fn load(spec: BackendSpec) -> Result<Self> {
        spec.validate()?;
        let path = spec.model_path.clone().ok_or_else(|| Error::Backend {
            backend: spec.name.clone(),
            message: "no model file configured".into(),
        })?;
        let plan = build_plan(&path, &spec).map_err(|e| Error::Backend {
            backend: spec.name.clone(),
            message: format!("cannot load {}: {e:#}", path.display()),
        })?;
        let backend = Self { spec, plan };
        let (w, h) = backend.spec.input_size;
        let probe = InputTensor {
            width: w,
            height: h,
            data: vec![0.0; 3 * w as usize * h as usize],
        };
        let width = backend.run(&probe)?.len();
        if width != backend.spec.embedding_dim {
            return Err(Error::Backend {
                backend: backend.spec.name.clone(),
                message: format!(
                    "exported graph outputs {width} values but the sidecar declares embedding_dim {}",
                    backend.spec.embedding_dim
                ),
            });
        }
        Ok(backend)
    }

    /// Loads `<sidecar>` and the model it points at.
    pub fn from_sidecar(sidecar: &Path) -> Result<Self> {
        Self::load(BackendSpec::load_sidecar(sidecar)?)
    }

    fn run(&self, input: &InputTensor) -> Result<Vec<f32>> {
        let (w, h) = (input.width as usize, input.height as usize);
        let fail = |e: TractError| Error::Backend {
            backend: self.spec.name.clone(),
            message: format!("inference failed: {e:#}"),
        };
        let tensor: Tensor = tract_ndarray::Array4::from_shape_vec((1, 3, h, w), input.data.clone())
            .map_err(|e| fail(e.into()))?
            .into();
        let outputs = self.plan.run(tvec!(tensor.into())).map_err(fail)?;
        let out = outputs[0].to_array_view::<f32>().map_err(fail)?;
        Ok(out.iter().copied().collect())
    }
}

fn build_plan(path: &Path, spec: &BackendSpec) -> TractResult<Plan> {
    let (w, h) = spec.input_size;
    tract_onnx::onnx()
        .model_for_path(path)?
        .with_input_fact(0, f32::fact([1, 3, h as usize, w as usize]).into())?
        .into_optimized()?
        .into_runnable()
}

impl EmbeddingBackend for OnnxBackend {
    fn spec(&self) -> &BackendSpec {
        &self.spec
    }

    fn embed(&self, input: &InputTensor) -> Result<Vec<f32>> {
        if (input.width, input.height) != self.spec.input_size {
            return Err(Error::dims(
                format!("{} input", self.spec.name),
                format!("{}x{}", self.spec.input_size.0, self.spec.input_size.1),
                format!("{}x{}", input.width, input.height),
            ));
        }
        self.run(input)
    }
}
