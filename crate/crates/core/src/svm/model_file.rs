//! Versioned text serialization for [`SvmModel`].
//!
//! ```text
//! iqdeg-svm-model 1
//! feature_order signed-moments-v1
//! feature_names intensity_mean_pos,...
//! labels clean,soiled
//! meta <key> <value>
//! standardizer_mean <f64> ...
//! standardizer_scale <f64> ...
//! machines <count>
//! machine <pos> <neg>
//! params <C> <gamma>
//! bounds <C+> <C->
//! bias <f64>
//! solver <iterations> <converged>
//! support_vectors <count>
//! <train index> <alpha*y> <f64> ...
//! end
//! ```
//!
//! Reals are written in scientific notation with 17 significant digits so a
//! save/load cycle reproduces every value bit for bit.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::binary::{BinarySvm, RbfParams};
use super::multiclass::{PairMachine, SvmModel};
use crate::error::{Error, Result};
use crate::features::Standardizer;

pub const MODEL_MAGIC: &str = "iqdeg-svm-model";
pub const MODEL_VERSION: u32 = 1;

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn join_f64(values: &[f64]) -> String {
    values.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(" ")
}

pub fn model_to_string(model: &SvmModel) -> Result<String> {
    for l in &model.labels {
        if l.is_empty() || l.contains(',') || l.contains(char::is_whitespace) {
            return Err(Error::InvalidParameter(format!("label '{l}' cannot be serialized")));
        }
    }
    let mut s = String::new();
    let _ = writeln!(s, "{MODEL_MAGIC} {MODEL_VERSION}");
    let _ = writeln!(s, "feature_order {}", model.feature_order);
    let _ = writeln!(s, "feature_names {}", model.feature_names.join(","));
    let _ = writeln!(s, "labels {}", model.labels.join(","));
    for (k, v) in &model.meta {
        if k.contains(char::is_whitespace) || v.contains('\n') {
            return Err(Error::InvalidParameter(format!("meta entry '{k}' cannot be serialized")));
        }
        let _ = writeln!(s, "meta {k} {v}");
    }
    let _ = writeln!(s, "standardizer_mean {}", join_f64(model.standardizer.mean()));
    let _ = writeln!(s, "standardizer_scale {}", join_f64(model.standardizer.scale()));
    let _ = writeln!(s, "machines {}", model.machines.len());
    for m in &model.machines {
        let svm = &m.svm;
        let _ = writeln!(s, "machine {} {}", m.pos, m.neg);
        let _ = writeln!(s, "params {} {}", fmt_f64(svm.params.c), fmt_f64(svm.params.gamma));
        let _ = writeln!(s, "bounds {} {}", fmt_f64(svm.bounds.0), fmt_f64(svm.bounds.1));
        let _ = writeln!(s, "bias {}", fmt_f64(svm.bias));
        let _ = writeln!(s, "solver {} {}", svm.iterations, svm.converged);
        let _ = writeln!(s, "support_vectors {}", svm.support_vectors.len());
        for ((idx, coef), sv) in svm
            .support_indices
            .iter()
            .zip(&svm.dual_coef)
            .zip(&svm.support_vectors)
        {
            let _ = writeln!(s, "{idx} {} {}", fmt_f64(*coef), join_f64(sv));
        }
    }
    s.push_str("end\n");
    Ok(s)
}

pub fn save_model(model: &SvmModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model_to_string(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SvmModel> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    parse_model(&text, path)
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
    path: PathBuf,
    line: u64,
}

impl<'a> Lines<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line: self.line,
            message: message.into(),
        }
    }

    fn next_line(&mut self) -> Result<&'a str> {
        match self.iter.next() {
            Some((n, l)) => {
                self.line = n as u64 + 1;
                Ok(l)
            }
            None => Err(self.err("unexpected end of model file")),
        }
    }

    /// Next line, which must start with `key`; returns the remainder.
    fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next_line()?;
        match line.split_once(' ') {
            Some((k, rest)) if k == key => Ok(rest),
            _ if line == key => Ok(""),
            _ => Err(self.err(format!("expected '{key}', found '{line}'"))),
        }
    }

    fn floats(&self, s: &str) -> Result<Vec<f64>> {
        s.split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| self.err(format!("invalid number '{t}'"))))
            .collect()
    }

    fn parse<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.trim().parse::<T>().map_err(|_| self.err(format!("invalid value '{s}'")))
    }

    fn keyed_floats(&mut self, key: &str) -> Result<Vec<f64>> {
        let rest = self.keyed(key)?;
        self.floats(rest)
    }

    fn keyed_parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let rest = self.keyed(key)?;
        self.parse(rest)
    }
}

pub fn parse_model(text: &str, path: &Path) -> Result<SvmModel> {
    let mut lines = Lines {
        iter: text.lines().enumerate(),
        path: path.to_path_buf(),
        line: 0,
    };
    let header = lines.keyed(MODEL_MAGIC).map_err(|_| lines.err("not a model file"))?;
    let version: u32 = lines.parse(header)?;
    if version != MODEL_VERSION {
        return Err(lines.err(format!("unsupported model version {version}")));
    }
    let feature_order = lines.keyed("feature_order")?.to_string();
    let feature_names: Vec<String> = lines
        .keyed("feature_names")?
        .split(',')
        .map(str::to_string)
        .collect();
    let labels: Vec<String> = lines.keyed("labels")?.split(',').map(str::to_string).collect();

    let mut meta = Vec::new();
    let mut line = lines.next_line()?;
    while let Some(rest) = line.strip_prefix("meta ") {
        let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
        meta.push((k.to_string(), v.to_string()));
        line = lines.next_line()?;
    }
    let mean = match line.strip_prefix("standardizer_mean") {
        Some(rest) => lines.floats(rest)?,
        None => return Err(lines.err(format!("expected 'standardizer_mean', found '{line}'"))),
    };
    let scale = lines.keyed_floats("standardizer_scale")?;
    if mean.len() != feature_names.len() {
        return Err(lines.err(format!(
            "standardizer has {} dimensions but {} feature names",
            mean.len(),
            feature_names.len()
        )));
    }
    let standardizer = Standardizer::from_parts(mean, scale).map_err(|e| lines.err(e.to_string()))?;
    let dim = standardizer.dim();

    let count: usize = lines.keyed_parse("machines")?;
    let k = labels.len();
    if count != k * k.saturating_sub(1) / 2 {
        return Err(lines.err(format!("{count} machines for {k} classes")));
    }
    let mut machines = Vec::with_capacity(count);
    for _ in 0..count {
        let pair = lines.keyed("machine")?;
        let ids: Vec<usize> = pair
            .split_whitespace()
            .map(|t| lines.parse(t))
            .collect::<Result<_>>()?;
        let [pos, neg] = ids[..] else {
            return Err(lines.err("machine line needs two class indices"));
        };
        if pos >= k || neg >= k || pos == neg {
            return Err(lines.err(format!("invalid class pair {pos} {neg}")));
        }
        let p = lines.keyed_floats("params")?;
        let b = lines.keyed_floats("bounds")?;
        if p.len() != 2 || b.len() != 2 {
            return Err(lines.err("params and bounds need two values"));
        }
        let params = RbfParams::new(p[0], p[1]).map_err(|e| lines.err(e.to_string()))?;
        let bias_v = lines.keyed_floats("bias")?;
        let [bias] = bias_v[..] else {
            return Err(lines.err("bias needs one value"));
        };
        let solver = lines.keyed("solver")?;
        let (iters, conv) = solver
            .split_once(' ')
            .ok_or_else(|| lines.err("solver line needs iterations and status"))?;
        let iterations: usize = lines.parse(iters)?;
        let converged: bool = lines.parse(conv)?;
        let n_sv: usize = lines.keyed_parse("support_vectors")?;
        let mut support_vectors = Vec::with_capacity(n_sv);
        let mut dual_coef = Vec::with_capacity(n_sv);
        let mut support_indices = Vec::with_capacity(n_sv);
        for _ in 0..n_sv {
            let l = lines.next_line()?;
            let (idx, rest) = l
                .split_once(' ')
                .ok_or_else(|| lines.err("malformed support vector line"))?;
            support_indices.push(lines.parse(idx)?);
            let vals = lines.floats(rest)?;
            if vals.len() != dim + 1 {
                return Err(lines.err(format!(
                    "support vector has {} values, expected {}",
                    vals.len().saturating_sub(1),
                    dim
                )));
            }
            dual_coef.push(vals[0]);
            support_vectors.push(vals[1..].to_vec());
        }
        machines.push(PairMachine {
            pos,
            neg,
            svm: BinarySvm {
                support_vectors,
                dual_coef,
                support_indices,
                bias,
                params,
                bounds: (b[0], b[1]),
                iterations,
                converged,
            },
        });
    }
    let tail = lines.next_line()?;
    if tail != "end" {
        return Err(lines.err(format!("expected 'end', found '{tail}'")));
    }
    Ok(SvmModel {
        labels,
        feature_order,
        feature_names,
        standardizer,
        machines,
        meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svm::{train_multiclass, SmoOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trained() -> (SvmModel, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for t in 0..45 {
            let c = t % 3;
            let v: Vec<f64> = (0..20).map(|d| rng.gen::<f64>() + if d == c { 2.0 } else { 0.0 }).collect();
            x.push(v);
            y.push(c);
        }
        let refs: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
        let labels: Vec<String> = ["clean", "soiled", "blur"].iter().map(|s| s.to_string()).collect();
        let mut m = train_multiclass(&refs, &y, &labels, RbfParams::new(1.0, 0.1).unwrap(), &SmoOptions::default())
            .unwrap();
        m.set_meta("split_seed", "42");
        m.set_meta("note", "two words");
        (m, x)
    }

    #[test]
    fn save_load_is_bit_exact() {
        let (m, probes) = trained();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.txt");
        save_model(&m, &p).unwrap();
        let back = load_model(&p).unwrap();
        assert_eq!(back, m);
        for x in &probes {
            let a = m.predict(x).unwrap();
            let b = back.predict(x).unwrap();
            for (da, db) in a.pair_decisions.iter().zip(&b.pair_decisions) {
                assert_eq!(da.2.to_bits(), db.2.to_bits());
            }
        }
        assert_eq!(model_to_string(&back).unwrap(), std::fs::read_to_string(&p).unwrap());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let (m, _) = trained();
        let text = model_to_string(&m).unwrap();
        let broken = text.replacen("bias ", "bias x", 1);
        let err = parse_model(&broken, Path::new("m.txt")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert!(line > 5),
            other => panic!("unexpected error {other:?}"),
        }
        assert!(parse_model("hello\n", Path::new("m.txt")).is_err());
        let truncated: String = text.lines().take(12).collect::<Vec<_>>().join("\n");
        assert!(parse_model(&truncated, Path::new("m.txt")).is_err());
        assert!(matches!(load_model("/no/such/model.txt"), Err(Error::FileNotFound(_))));
    }

    #[test]
    fn float_format_has_17_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        for v in [0.1, -3.25e-300, 1.0 / 3.0, f64::MAX, 5e-324] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
}
