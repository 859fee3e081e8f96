//! Checkpoint container: a text header, a `---` line, then every value as a
//! little-endian `f64`.
//!
//! ```text
//! slgcn-checkpoint 1
//! scalar=f32
//! model.input_dim=256
//! ...
//! tensor tower.user 256 256
//! ...
//! ---
//! <payload: tensors, then Adam first moments, then second moments>
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{AdamConfig, AdamState, HeadKind, Model, ModelConfig, ModelParameters};
use crate::scalar::Scalar;

const MAGIC: &str = "slgcn-checkpoint 1";
const SEPARATOR: &[u8] = b"\n---\n";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub model: Model<T>,
    pub optimizer: Option<AdamState<T>>,
    /// Free-form `key=value` lines, e.g. input hashes.
    pub meta: Vec<String>,
}

pub fn save_checkpoint<T: Scalar>(path: &Path, model: &Model<T>, optimizer: Option<&AdamState<T>>, meta: &[String]) -> Result<()> {
    let c = model.config();
    let mut h = String::new();
    let _ = writeln!(h, "{MAGIC}");
    let _ = writeln!(h, "scalar={}", T::NAME);
    let _ = writeln!(h, "model.input_dim={}", c.input_dim);
    let _ = writeln!(h, "model.repr_dim={}", c.repr_dim);
    let hidden: Vec<String> = c.hidden.iter().map(usize::to_string).collect();
    let _ = writeln!(h, "model.hidden={}", hidden.join(","));
    let _ = writeln!(h, "model.head={}", c.head);
    let _ = writeln!(h, "model.trainable_inputs={}", c.trainable_inputs);
    if let Some(o) = optimizer {
        let a = o.config;
        let _ = writeln!(h, "adam.lr={}", a.lr);
        let _ = writeln!(h, "adam.beta1={}", a.beta1);
        let _ = writeln!(h, "adam.beta2={}", a.beta2);
        let _ = writeln!(h, "adam.epsilon={}", a.epsilon);
        let _ = writeln!(h, "adam.l2={}", a.l2);
        let _ = writeln!(h, "adam.step={}", o.step);
    }
    for m in meta {
        let _ = writeln!(h, "meta {m}");
    }
    let p = model.parameters();
    for (name, t) in p.names.iter().zip(&p.tensors) {
        let _ = writeln!(h, "tensor {name} {} {}", t.rows(), t.cols());
    }
    h.push_str("---\n");
    let mut bytes = h.into_bytes();
    let mut put = |ts: &[Matrix<T>]| {
        for t in ts {
            for x in t.as_slice() {
                bytes.extend_from_slice(&x.as_f64().to_le_bytes());
            }
        }
    };
    put(&p.tensors);
    if let Some(o) = optimizer {
        put(&o.m);
        put(&o.v);
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let split = bytes
        .windows(SEPARATOR.len())
        .position(|w| w == SEPARATOR)
        .ok_or_else(|| Error::parse(path, 0, "missing `---` separator"))?;
    let header = std::str::from_utf8(&bytes[..split]).map_err(|_| Error::parse(path, 0, "header is not UTF-8"))?;
    let payload = &bytes[split + SEPARATOR.len()..];

    let mut lines = header.lines().enumerate();
    if lines.next().map(|l| l.1) != Some(MAGIC) {
        return Err(Error::parse(path, 1, "not a checkpoint (bad magic line)"));
    }
    let mut kv: Vec<(String, String)> = Vec::new();
    let mut meta = Vec::new();
    let mut shapes: Vec<(String, usize, usize)> = Vec::new();
    for (n, line) in lines {
        let bad = |m: &str| Error::parse(path, n + 1, m);
        if let Some(rest) = line.strip_prefix("tensor ") {
            let f: Vec<&str> = rest.split_whitespace().collect();
            let [name, r, c] = f.as_slice() else {
                return Err(bad("expected `tensor name rows cols`"));
            };
            shapes.push((
                name.to_string(),
                r.parse().map_err(|_| bad("bad rows"))?,
                c.parse().map_err(|_| bad("bad cols"))?,
            ));
        } else if let Some(m) = line.strip_prefix("meta ") {
            meta.push(m.to_owned());
        } else {
            let (k, v) = line.split_once('=').ok_or_else(|| bad("expected key=value"))?;
            kv.push((k.to_owned(), v.to_owned()));
        }
    }
    let get = |k: &str| {
        kv.iter()
            .find(|(key, _)| key == k)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::parse(path, 0, format!("missing `{k}`")))
    };
    let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| Error::parse(path, 0, format!("bad `{k}`"))) };
    let uint = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| Error::parse(path, 0, format!("bad `{k}`"))) };
    if get("scalar")? != T::NAME {
        return Err(Error::invalid(format!(
            "checkpoint stores {} parameters, requested {}",
            get("scalar")?,
            T::NAME
        )));
    }
    let hidden = match get("model.hidden")? {
        "" => Vec::new(),
        s => s
            .split(',')
            .map(|x| x.parse().map_err(|_| Error::parse(path, 0, "bad `model.hidden`")))
            .collect::<Result<_>>()?,
    };
    let config = ModelConfig {
        input_dim: uint("model.input_dim")?,
        repr_dim: uint("model.repr_dim")?,
        hidden,
        head: get("model.head")?.parse::<HeadKind>()?,
        trainable_inputs: get("model.trainable_inputs")? == "true",
    };

    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let total: usize = shapes.iter().map(|s| s.1 * s.2).sum();
    let has_opt = kv.iter().any(|(k, _)| k == "adam.step");
    let expected = total * if has_opt { 3 } else { 1 };
    if payload.len() != expected * 8 {
        return Err(Error::parse(path, 0, format!("payload holds {} bytes, expected {}", payload.len(), expected * 8)));
    }
    let read = |values: &mut dyn Iterator<Item = f64>| -> Result<Vec<Matrix<T>>> {
        shapes
            .iter()
            .map(|(_, r, c)| Matrix::from_vec(*r, *c, values.take(r * c).map(T::of).collect()))
            .collect()
    };
    let tensors = read(&mut values)?;
    let names = shapes.iter().map(|s| s.0.clone()).collect();
    let model = Model::from_parameters(config, ModelParameters { names, tensors })?;
    let optimizer = if has_opt {
        let config = AdamConfig {
            lr: num("adam.lr")?,
            beta1: num("adam.beta1")?,
            beta2: num("adam.beta2")?,
            epsilon: num("adam.epsilon")?,
            l2: num("adam.l2")?,
        };
        let step = uint("adam.step")? as u64;
        let m = read(&mut values)?;
        let v = read(&mut values)?;
        Some(AdamState { config, step, m, v })
    } else {
        None
    };
    Ok(Checkpoint { model, optimizer, meta })
}

/// Reads only the `meta` lines of a checkpoint header.
pub fn checkpoint_meta(path: &Path) -> Result<Vec<String>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let end = bytes
        .windows(SEPARATOR.len())
        .position(|w| w == SEPARATOR)
        .ok_or_else(|| Error::parse(path, 0, "missing `---` separator"))?;
    let header = String::from_utf8_lossy(&bytes[..end]);
    Ok(header
        .lines()
        .filter_map(|l| l.strip_prefix("meta ").map(str::to_owned))
        .collect())
}
