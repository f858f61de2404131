//! Benchmark generation: models, selected images and property files.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bnn::{build_arch_a, build_arch_b, build_arch_xnor, Label, Network};
use crate::onnx::{parse_model, serialize_model};
use crate::synth::{random_image, randomize, PIXEL_RMS};
use crate::tensor::Tensor;
use crate::vnnlib::{property_file_name, RobustnessProperty};

use super::ppm::{load_ppm, write_ppm};
use super::{io_err, BenchError};

pub const DEFAULT_EPSILONS: [f64; 5] = [1.0, 3.0, 5.0, 10.0, 15.0];
pub const DEFAULT_TIMEOUT: f64 = 480.0;
pub const DEFAULT_IMAGES_PER_MODEL: usize = 3;

/// A network plus the size used in file names (`model_{size}`).
#[derive(Debug, Clone)]
pub struct BenchModel {
    pub size: usize,
    pub network: Network,
}

impl BenchModel {
    pub fn new(network: Network) -> Self {
        Self {
            size: network.input_shape()[0],
            network,
        }
    }

    pub fn name(&self) -> String {
        format!("model_{}", self.size)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub index: usize,
    pub label: Label,
    pub image: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateConfig {
    pub seed: u64,
    pub images_per_model: usize,
    pub epsilons: Vec<f64>,
    pub timeout: f64,
    pub clip: bool,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            images_per_model: DEFAULT_IMAGES_PER_MODEL,
            epsilons: DEFAULT_EPSILONS.to_vec(),
            timeout: DEFAULT_TIMEOUT,
            clip: false,
        }
    }
}

/// One `onnx_path,vnnlib_path,timeout` row. Paths are relative to the
/// directory holding `instances.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkInstance {
    pub model_path: PathBuf,
    pub property_path: PathBuf,
    pub timeout_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub instances: Vec<BenchmarkInstance>,
    pub csv_path: PathBuf,
    /// Chosen image indices per model name.
    pub selections: Vec<(String, Vec<usize>)>,
}

impl Benchmark {
    pub fn total_budget(&self) -> f64 {
        self.instances.iter().map(|i| i.timeout_seconds).sum()
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), BenchError> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Picks `images_per_model` correctly classified images per model with a
/// seeded shuffle, then writes `onnx/`, `vnnlib/` and `instances.csv` under
/// `out_dir`. Misclassified candidates are skipped with a warning.
pub fn generate_benchmark(
    models: &[BenchModel],
    images: &[LabeledImage],
    cfg: &GenerateConfig,
    out_dir: &Path,
) -> Result<Benchmark, BenchError> {
    if cfg.timeout <= 0.0 || !cfg.timeout.is_finite() {
        return Err(BenchError::Config(format!("timeout must be positive, got {}", cfg.timeout)));
    }
    if let Some(&e) = cfg.epsilons.iter().find(|e| !(**e >= 0.0) || !e.is_finite()) {
        return Err(BenchError::Config(format!("bad epsilon {e}")));
    }
    let onnx_dir = out_dir.join("onnx");
    let vnnlib_dir = out_dir.join("vnnlib");
    for d in [&onnx_dir, &vnnlib_dir] {
        fs::create_dir_all(d).map_err(|e| io_err(d, e))?;
    }
    let mut instances = Vec::new();
    let mut selections = Vec::new();
    let mut seen = HashSet::new();
    for (m, model) in models.iter().enumerate() {
        let name = model.name();
        let model_rel = PathBuf::from("onnx").join(format!("{name}.onnx"));
        write(&out_dir.join(&model_rel), &serialize_model(&model.network))?;
        let net = &model.network;
        let mut candidates: Vec<&LabeledImage> = images
            .iter()
            .filter(|i| i.image.shape() == net.input_shape())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(m as u64));
        candidates.shuffle(&mut rng);
        let mut chosen = Vec::new();
        for c in candidates {
            if chosen.len() == cfg.images_per_model {
                break;
            }
            let predicted = net.predict(&c.image)?;
            if predicted != c.label {
                log::warn!(
                    "{name}: image {} predicted {predicted}, labelled {}; skipped",
                    c.index,
                    c.label
                );
                continue;
            }
            chosen.push(c);
        }
        if chosen.len() < cfg.images_per_model {
            return Err(BenchError::NotEnoughImages {
                model: name,
                needed: cfg.images_per_model,
                found: chosen.len(),
            });
        }
        for img in &chosen {
            for &eps in &cfg.epsilons {
                if !seen.insert((name.clone(), img.index, eps.to_bits())) {
                    return Err(BenchError::Config(format!(
                        "duplicate instance {name} image {} epsilon {eps}",
                        img.index
                    )));
                }
                let prop = RobustnessProperty::around(
                    &img.image,
                    eps,
                    img.label,
                    net.num_classes(),
                    cfg.clip,
                )?
                .with_source(img.index, eps);
                let prop_rel = PathBuf::from("vnnlib").join(property_file_name(model.size, img.index, eps));
                write(&out_dir.join(&prop_rel), prop.render().as_bytes())?;
                instances.push(BenchmarkInstance {
                    model_path: model_rel.clone(),
                    property_path: prop_rel,
                    timeout_seconds: cfg.timeout,
                });
            }
        }
        selections.push((name, chosen.iter().map(|c| c.index).collect()));
    }
    let csv_path = out_dir.join("instances.csv");
    write(&csv_path, render_instances(&instances).as_bytes())?;
    Ok(Benchmark {
        instances,
        csv_path,
        selections,
    })
}

fn slash(p: &Path) -> String {
    p.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Header-less CSV, one instance per line.
pub fn render_instances(instances: &[BenchmarkInstance]) -> String {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    for i in instances {
        w.write_record([
            slash(&i.model_path),
            slash(&i.property_path),
            i.timeout_seconds.to_string(),
        ])
        .expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("utf-8 fields")
}

pub fn parse_instances(text: &str) -> Result<Vec<BenchmarkInstance>, BenchError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| BenchError::Csv(e.to_string()))?;
        let bad = |why: &str| BenchError::Csv(format!("row {}: {why}", line + 1));
        if rec.len() != 3 {
            return Err(bad("expected onnx_path,vnnlib_path,timeout"));
        }
        let timeout: f64 = rec[2].parse().map_err(|_| bad("timeout is not a number"))?;
        if !(timeout > 0.0) {
            return Err(bad("timeout must be positive"));
        }
        out.push(BenchmarkInstance {
            model_path: PathBuf::from(&rec[0]),
            property_path: PathBuf::from(&rec[1]),
            timeout_seconds: timeout,
        });
    }
    Ok(out)
}

pub fn read_instances(path: &Path) -> Result<Vec<BenchmarkInstance>, BenchError> {
    parse_instances(&fs::read_to_string(path).map_err(|e| io_err(path, e))?)
}

/// Loads every `*.onnx` in `dir`, sorted by file name.
pub fn load_models(dir: &Path) -> Result<Vec<BenchModel>, BenchError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "onnx"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let bytes = fs::read(p).map_err(|e| io_err(p, e))?;
            let net = parse_model(&bytes).map_err(|e| BenchError::Model {
                path: p.clone(),
                source: e,
            })?;
            Ok(BenchModel::new(net))
        })
        .collect()
}

/// Loads `<class id>/<file>.ppm` images. Indices come from numeric file
/// stems when all are numeric and distinct, otherwise from sorted order.
pub fn load_image_dir(dir: &Path) -> Result<Vec<LabeledImage>, BenchError> {
    let mut classes: Vec<(Label, PathBuf)> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .filter_map(|p| {
            let label = p.file_name()?.to_str()?.parse().ok()?;
            Some((label, p))
        })
        .collect();
    classes.sort();
    let mut files = Vec::new();
    for (label, class_dir) in &classes {
        let mut ppms: Vec<PathBuf> = fs::read_dir(class_dir)
            .map_err(|e| io_err(class_dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "ppm"))
            .collect();
        ppms.sort();
        files.extend(ppms.into_iter().map(|p| (*label, p)));
    }
    let stems: Option<Vec<usize>> = files
        .iter()
        .map(|(_, p)| p.file_stem()?.to_str()?.parse().ok())
        .collect();
    let indices = match stems {
        Some(s) if s.iter().collect::<HashSet<_>>().len() == s.len() => s,
        _ => (0..files.len()).collect(),
    };
    files
        .into_iter()
        .zip(indices)
        .map(|((label, path), index)| {
            let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
            let image = load_ppm(&bytes).map_err(|e| BenchError::Image {
                path: path.clone(),
                source: e,
            })?;
            Ok(LabeledImage {
                index,
                label,
                image,
            })
        })
        .collect()
}

/// Randomly weighted stand-ins for the three benchmark networks: arch A at
/// 64x64, arch B at 48x48 and the XNOR net at 30x30.
pub fn synthetic_models(seed: u64) -> Vec<BenchModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    [
        build_arch_a(64, 64),
        build_arch_b(48, 48),
        build_arch_xnor(30, 30),
    ]
    .into_iter()
    .map(|n| BenchModel::new(randomize(&n.expect("valid sizes"), &mut rng, PIXEL_RMS)))
    .collect()
}

/// `per_model` random images for each model, labelled with its prediction.
/// Indices are distinct across models.
pub fn synthetic_images(models: &[BenchModel], per_model: usize, seed: u64) -> Vec<LabeledImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut out = Vec::new();
    for m in models {
        let s = m.network.input_shape();
        for _ in 0..per_model {
            let image = random_image(&mut rng, s[0], s[1]);
            let label = m.network.predict(&image).expect("shape matches");
            out.push(LabeledImage {
                index: out.len(),
                label,
                image,
            });
        }
    }
    out
}

/// Writes `models/model_{size}.onnx` and `images/<label>/<index>.ppm`.
pub fn write_fixtures(
    out_dir: &Path,
    seed: u64,
    images_per_model: usize,
) -> Result<(PathBuf, PathBuf), BenchError> {
    let models = synthetic_models(seed);
    let images = synthetic_images(&models, images_per_model, seed);
    let model_dir = out_dir.join("models");
    let image_dir = out_dir.join("images");
    fs::create_dir_all(&model_dir).map_err(|e| io_err(&model_dir, e))?;
    for m in &models {
        write(&model_dir.join(format!("{}.onnx", m.name())), &serialize_model(&m.network))?;
    }
    for img in &images {
        let d = image_dir.join(format!("{:05}", img.label));
        fs::create_dir_all(&d).map_err(|e| io_err(&d, e))?;
        let bytes = write_ppm(&img.image).map_err(|e| BenchError::Image {
            path: d.clone(),
            source: e,
        })?;
        write(&d.join(format!("{:05}.ppm", img.index)), &bytes)?;
    }
    Ok((model_dir, image_dir))
}
