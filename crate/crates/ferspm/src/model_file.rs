//! Versioned model files: structured text with a `FERSPM 1` header,
//! one block per class pair, numeric arrays as base64-encoded
//! little-endian f64 with declared shapes. Serialization is
//! deterministic, so identical models produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ferspm_core::eval::{all_pairs, ExpressionLabel, ALL_LABELS, PAIR_COUNT};
use ferspm_core::features::{LbpVariant, BLOCKS_PER_PATCH};
use ferspm_core::landmarks::SUPPORTED_RESOLUTIONS;
use ferspm_core::linalg::Mat;
use ferspm_core::patches::PATCH_COUNT;
use ferspm_core::saliency::SalientSelection;
use ferspm_core::subspace::PcaModel;
use ferspm_core::svm::{OaoEnsemble, PairModel, SvmModel};

use crate::Error;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    pub resolution: usize,
    pub variant: LbpVariant,
    pub top_k: usize,
    pub folds: usize,
    pub seed: u64,
    pub grid_search: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            resolution: 96,
            variant: LbpVariant::Bins16,
            top_k: 4,
            folds: 10,
            seed: 0,
            grid_search: false,
        }
    }
}

/// Trained artifact: pipeline configuration, the per-pair salient-patch
/// selection and the 15 pairwise classifiers.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpressionModel {
    pub config: ModelConfig,
    pub selection: SalientSelection,
    pub ensemble: OaoEnsemble,
}

mod b64 {
    const ALPHABET: &[u8; 64] =
        b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

    pub fn encode(bytes: &[u8]) -> String {
        let mut out = String::with_capacity(bytes.len().div_ceil(3) * 4);
        for chunk in bytes.chunks(3) {
            let b = [chunk[0], *chunk.get(1).unwrap_or(&0), *chunk.get(2).unwrap_or(&0)];
            let n = ((b[0] as u32) << 16) | ((b[1] as u32) << 8) | b[2] as u32;
            let chars = [
                ALPHABET[(n >> 18) as usize & 63],
                ALPHABET[(n >> 12) as usize & 63],
                ALPHABET[(n >> 6) as usize & 63],
                ALPHABET[n as usize & 63],
            ];
            let keep = chunk.len() + 1;
            for (i, &c) in chars.iter().enumerate() {
                out.push(if i < keep { c as char } else { '=' });
            }
        }
        out
    }

    pub fn decode(text: &str) -> Result<Vec<u8>, String> {
        let bytes = text.as_bytes();
        if !bytes.len().is_multiple_of(4) {
            return Err("base64 length must be a multiple of 4".into());
        }
        let mut out = Vec::with_capacity(bytes.len() / 4 * 3);
        for chunk in bytes.chunks(4) {
            let mut n = 0u32;
            let mut pad = 0usize;
            for (i, &c) in chunk.iter().enumerate() {
                let v = if c == b'=' {
                    if i < 2 {
                        return Err("unexpected '=' padding".into());
                    }
                    pad += 1;
                    0
                } else if pad > 0 {
                    return Err("data after '=' padding".into());
                } else {
                    ALPHABET
                        .iter()
                        .position(|&a| a == c)
                        .ok_or_else(|| format!("invalid base64 byte '{}'", c as char))?
                        as u32
                };
                n = (n << 6) | v;
            }
            out.push((n >> 16) as u8);
            if pad < 2 {
                out.push((n >> 8) as u8);
            }
            if pad < 1 {
                out.push(n as u8);
            }
        }
        Ok(out)
    }
}

fn encode_f64s(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    b64::encode(&bytes)
}

fn decode_f64s(text: &str, expected: usize, line: usize, origin: &Path) -> Result<Vec<f64>, Error> {
    let bytes =
        b64::decode(text).map_err(|m| Error::parse(origin, line, m))?;
    if bytes.len() != expected * 8 {
        return Err(Error::parse(
            origin,
            line,
            format!("array holds {} f64s, expected {expected}", bytes.len() / 8),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn model_to_string(model: &ExpressionModel) -> String {
    let mut out = String::new();
    let cfg = &model.config;
    writeln!(out, "FERSPM {FORMAT_VERSION}").unwrap();
    writeln!(out, "CONFIG resolution {}", cfg.resolution).unwrap();
    writeln!(out, "CONFIG variant {}", cfg.variant.name()).unwrap();
    writeln!(out, "CONFIG top_k {}", cfg.top_k).unwrap();
    writeln!(out, "CONFIG folds {}", cfg.folds).unwrap();
    writeln!(out, "CONFIG seed {}", cfg.seed).unwrap();
    writeln!(out, "CONFIG grid_search {}", cfg.grid_search).unwrap();

    for (k, (a, b)) in all_pairs().into_iter().enumerate() {
        let pair = model
            .ensemble
            .pairs
            .iter()
            .find(|p| p.class_a == a && p.class_b == b)
            .expect("ensemble holds every pair");
        writeln!(
            out,
            "PAIR {} {}",
            ALL_LABELS[a].as_str(),
            ALL_LABELS[b].as_str()
        )
        .unwrap();
        let names: Vec<String> =
            model.selection.per_pair[k].iter().map(|&i| format!("P{}", i + 1)).collect();
        writeln!(out, "SELECT {}", names.join(" ")).unwrap();

        let pca = &pair.pca;
        writeln!(out, "PCA {} {}", pca.input_dim(), pca.output_dim()).unwrap();
        writeln!(out, "PCA_MEAN {}", encode_f64s(&pca.mean)).unwrap();
        writeln!(out, "PCA_EIGVALS {}", encode_f64s(&pca.eigenvalues)).unwrap();
        writeln!(out, "PCA_PROJ {}", encode_f64s(pca.components.data())).unwrap();

        let svm = &pair.svm;
        writeln!(out, "SVM {} {}", svm.support_vectors.rows(), svm.dim()).unwrap();
        writeln!(out, "SVM_C {}", svm.c).unwrap();
        writeln!(out, "SVM_GAMMA {}", svm.gamma).unwrap();
        writeln!(out, "SVM_BIAS {}", svm.bias).unwrap();
        writeln!(out, "SVM_SV {}", encode_f64s(svm.support_vectors.data())).unwrap();
        writeln!(out, "SVM_COEF {}", encode_f64s(&svm.coefficients)).unwrap();
        writeln!(out, "END").unwrap();
    }
    out
}

pub fn save_model(path: impl AsRef<Path>, model: &ExpressionModel) -> Result<(), Error> {
    let path = path.as_ref();
    fs::write(path, model_to_string(model)).map_err(|e| Error::io(path, e))
}

struct Lines<'a> {
    iter: std::iter::Peekable<std::vec::IntoIter<(usize, &'a str)>>,
    origin: &'a Path,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str, origin: &'a Path) -> Lines<'a> {
        let items: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
            .collect();
        Lines { iter: items.into_iter().peekable(), origin }
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str), Error> {
        self.iter
            .next()
            .ok_or_else(|| Error::parse(self.origin, 0, format!("unexpected end of file: missing {what}")))
    }

    fn expect_key(&mut self, key: &str) -> Result<(usize, Vec<&'a str>), Error> {
        let (line, l) = self.next(key)?;
        let mut parts = l.split_whitespace();
        let head = parts.next().unwrap_or("");
        if head != key {
            return Err(Error::parse(self.origin, line, format!("expected {key}, found '{head}'")));
        }
        Ok((line, parts.collect()))
    }
}

pub fn parse_model(text: &str, origin: &Path) -> Result<ExpressionModel, Error> {
    let mut lines = Lines::new(text, origin);

    let (line, header) = lines.expect_key("FERSPM")?;
    if header != [FORMAT_VERSION.to_string().as_str()] {
        return Err(Error::parse(origin, line, format!("unrecognized model version {header:?}")));
    }

    let mut config = ModelConfig::default();
    for _ in 0..6 {
        let (line, kv) = lines.expect_key("CONFIG")?;
        if kv.len() != 2 {
            return Err(Error::parse(origin, line, "expected 'CONFIG <key> <value>'"));
        }
        let bad = |what: &str| Error::parse(origin, line, format!("invalid {what} '{}'", kv[1]));
        match kv[0] {
            "resolution" => {
                config.resolution = kv[1].parse().map_err(|_| bad("resolution"))?;
                if !SUPPORTED_RESOLUTIONS.contains(&config.resolution) {
                    return Err(Error::parse(
                        origin,
                        line,
                        format!("unsupported resolution {} (48, 96, 144 or 192)", config.resolution),
                    ));
                }
            }
            "variant" => {
                config.variant = LbpVariant::from_name(kv[1]).ok_or_else(|| bad("variant"))?;
            }
            "top_k" => config.top_k = kv[1].parse().map_err(|_| bad("top_k"))?,
            "folds" => config.folds = kv[1].parse().map_err(|_| bad("folds"))?,
            "seed" => config.seed = kv[1].parse().map_err(|_| bad("seed"))?,
            "grid_search" => config.grid_search = kv[1].parse().map_err(|_| bad("grid_search"))?,
            other => {
                return Err(Error::parse(origin, line, format!("unknown config key '{other}'")));
            }
        }
    }
    if config.top_k == 0 || config.top_k > PATCH_COUNT {
        return Err(Error::Data(format!("top_k {} outside 1..=19", config.top_k)));
    }

    let mut per_pair: Vec<Vec<usize>> = Vec::with_capacity(PAIR_COUNT);
    let mut pairs: Vec<PairModel> = Vec::with_capacity(PAIR_COUNT);
    for (expect_a, expect_b) in all_pairs() {
        let (line, names) = lines.expect_key("PAIR")?;
        let parse_label = |s: Option<&&str>| -> Option<ExpressionLabel> {
            s.and_then(|t| ExpressionLabel::parse_name(t))
        };
        let (a, b) = match (parse_label(names.first()), parse_label(names.get(1))) {
            (Some(a), Some(b)) => (a.index(), b.index()),
            _ => return Err(Error::parse(origin, line, "expected 'PAIR <label> <label>'")),
        };
        if (a, b) != (expect_a, expect_b) {
            return Err(Error::parse(
                origin,
                line,
                format!("pairs must appear in canonical order; expected ({expect_a},{expect_b})"),
            ));
        }

        let (line, sel) = lines.expect_key("SELECT")?;
        let mut ids = Vec::with_capacity(sel.len());
        for name in &sel {
            let id: usize = name
                .strip_prefix('P')
                .and_then(|n| n.parse::<usize>().ok())
                .filter(|&n| (1..=PATCH_COUNT).contains(&n))
                .ok_or_else(|| Error::parse(origin, line, format!("invalid patch name '{name}'")))?;
            if ids.contains(&(id - 1)) {
                return Err(Error::parse(origin, line, format!("duplicate patch '{name}'")));
            }
            ids.push(id - 1);
        }
        if ids.len() != config.top_k {
            return Err(Error::parse(
                origin,
                line,
                format!("selection holds {} patches, config top_k is {}", ids.len(), config.top_k),
            ));
        }

        let (line, dims) = lines.expect_key("PCA")?;
        let (d_in, d_out) = match (
            dims.first().and_then(|t| t.parse::<usize>().ok()),
            dims.get(1).and_then(|t| t.parse::<usize>().ok()),
        ) {
            (Some(a), Some(b)) if a >= 1 && b >= 1 && b <= a => (a, b),
            _ => return Err(Error::parse(origin, line, "expected 'PCA <d_in> <d_out>'")),
        };
        let expected_d_in = ids.len() * BLOCKS_PER_PATCH * config.variant.bins();
        if d_in != expected_d_in {
            return Err(Error::parse(
                origin,
                line,
                format!("PCA input dim {d_in} does not match selection ({expected_d_in})"),
            ));
        }

        let (line, v) = lines.expect_key("PCA_MEAN")?;
        let mean = decode_f64s(single(&v, line, origin)?, d_in, line, origin)?;
        let (line, v) = lines.expect_key("PCA_EIGVALS")?;
        let eigenvalues = decode_f64s(single(&v, line, origin)?, d_out, line, origin)?;
        let (line, v) = lines.expect_key("PCA_PROJ")?;
        let proj = decode_f64s(single(&v, line, origin)?, d_in * d_out, line, origin)?;
        let pca = PcaModel { mean, components: Mat::from_vec(d_in, d_out, proj), eigenvalues };

        let (line, dims) = lines.expect_key("SVM")?;
        let (n_sv, dim) = match (
            dims.first().and_then(|t| t.parse::<usize>().ok()),
            dims.get(1).and_then(|t| t.parse::<usize>().ok()),
        ) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::parse(origin, line, "expected 'SVM <n_sv> <dim>'")),
        };
        if dim != d_out {
            return Err(Error::parse(
                origin,
                line,
                format!("SVM dim {dim} does not match PCA output {d_out}"),
            ));
        }
        let (line, v) = lines.expect_key("SVM_C")?;
        let c: f64 = parse_scalar(&v, line, origin)?;
        let (line, v) = lines.expect_key("SVM_GAMMA")?;
        let gamma: f64 = parse_scalar(&v, line, origin)?;
        let (line, v) = lines.expect_key("SVM_BIAS")?;
        let bias: f64 = parse_scalar(&v, line, origin)?;
        let (line, v) = lines.expect_key("SVM_SV")?;
        let sv = decode_f64s(single(&v, line, origin)?, n_sv * dim, line, origin)?;
        let (line, v) = lines.expect_key("SVM_COEF")?;
        let coefficients = decode_f64s(single(&v, line, origin)?, n_sv, line, origin)?;
        lines.expect_key("END")?;

        per_pair.push(ids.clone());
        let mut sorted_ids = ids;
        sorted_ids.sort_unstable();
        pairs.push(PairModel {
            class_a: a,
            class_b: b,
            patch_ids: sorted_ids,
            pca,
            svm: SvmModel {
                support_vectors: Mat::from_vec(n_sv, dim, sv),
                coefficients,
                bias,
                gamma,
                c,
            },
        });
    }

    let selection = SalientSelection {
        per_pair: per_pair.try_into().expect("exactly 15 pairs parsed"),
        k: config.top_k,
    };
    Ok(ExpressionModel { config, selection, ensemble: OaoEnsemble { pairs } })
}

fn single<'a>(fields: &[&'a str], line: usize, origin: &Path) -> Result<&'a str, Error> {
    if fields.len() == 1 {
        Ok(fields[0])
    } else {
        Err(Error::parse(origin, line, "expected a single field"))
    }
}

fn parse_scalar(fields: &[&str], line: usize, origin: &Path) -> Result<f64, Error> {
    single(fields, line, origin)?
        .parse()
        .map_err(|_| Error::parse(origin, line, "invalid number"))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ExpressionModel, Error> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&text, path)
}
