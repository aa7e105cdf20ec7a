use std::path::Path;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use smtgp::divergence::SMParams;
use smtgp::kernels::KernelConfig;
use smtgp::optimizer::OptimizerOptions;

use crate::Failure;

/// Flat run configuration. Keys match the JSON document one to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub bandwidth2_x: f64,
    pub bandwidth2_y: f64,
    pub lambda_x: f64,
    pub lambda_y: f64,
    pub alpha: f64,
    pub beta: f64,
    pub max_iterations: usize,
    #[serde(default)]
    pub k_tr: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Toy1,
    Toy2,
    Usps,
    Poser,
    Heva,
}

impl Preset {
    pub fn config(self) -> RunConfig {
        // (2 rho_x^2, 2 rho_y^2, lambda_x, lambda_y, alpha, beta, k_tr)
        let (bx, by, lx, ly, alpha, beta, k_tr) = match self {
            Preset::Toy1 => (5.0, 0.05, 1e-4, 1e-4, 0.9, 1.5, None),
            Preset::Toy2 => (5.0, 0.05, 1e-4, 1e-4, 0.6, 0.99, None),
            Preset::Usps => (2.0, 2.0, 5e-4, 5e-4, 0.9, 0.99, None),
            Preset::Poser => (5.0, 5000.0, 1e-4, 1e-4, 0.7, 0.5, Some(800)),
            Preset::Heva => (5.0, 500000.0, 1e-3, 1e-3, 0.99, 0.99, Some(800)),
        };
        RunConfig {
            bandwidth2_x: bx,
            bandwidth2_y: by,
            lambda_x: lx,
            lambda_y: ly,
            alpha,
            beta,
            max_iterations: OptimizerOptions::default().max_iterations,
            k_tr,
            seed: 0,
        }
    }
}

impl RunConfig {
    /// Starts from the preset (if any) and overlays the keys present in the
    /// JSON file (if any). Without a preset the file must give every
    /// required key.
    pub fn resolve(preset: Option<Preset>, path: Option<&Path>) -> Result<RunConfig, Failure> {
        let mut doc = match preset {
            Some(p) => serde_json::to_value(p.config()).expect("config serializes"),
            None => Value::Object(Default::default()),
        };
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Runtime(format!("cannot read config {}: {e}", path.display())))?;
            let overlay: Value = serde_json::from_str(&text)
                .map_err(|e| Failure::Runtime(format!("config {}: {e}", path.display())))?;
            let Value::Object(overlay) = overlay else {
                return Err(Failure::Runtime(format!(
                    "config {}: expected a JSON object of key-value pairs",
                    path.display()
                )));
            };
            let base = doc.as_object_mut().expect("object");
            base.extend(overlay);
        } else if preset.is_none() {
            return Err(Failure::Usage("give --config, --preset or both".into()));
        }
        let origin = path.map_or_else(|| "preset".to_string(), |p| p.display().to_string());
        serde_json::from_value(doc).map_err(|e| Failure::Runtime(format!("config {origin}: {e}")))
    }

    pub fn kernels(&self) -> Result<(KernelConfig, KernelConfig), Failure> {
        let x = KernelConfig::new(self.bandwidth2_x, self.lambda_x).map_err(field("bandwidth2_x/lambda_x"))?;
        let y = KernelConfig::new(self.bandwidth2_y, self.lambda_y).map_err(field("bandwidth2_y/lambda_y"))?;
        Ok((x, y))
    }

    pub fn params(&self) -> Result<SMParams, Failure> {
        SMParams::new(self.alpha, self.beta).map_err(field("alpha/beta"))
    }

    pub fn optimizer(&self) -> Result<OptimizerOptions, Failure> {
        let opts = OptimizerOptions::default().with_max_iterations(self.max_iterations);
        opts.validate().map_err(field("max_iterations"))?;
        Ok(opts)
    }
}

fn field(name: &'static str) -> impl Fn(smtgp::Error) -> Failure {
    move |e| Failure::Runtime(format!("config field {name}: {e}"))
}
