//! Versioned text serialization shared by SVM and label-propagation models.
//!
//! ```text
//! mrpred-model 1
//! kind svm | labelprop
//! <key> <value>          (one parameter per line, fixed order)
//! ...
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so loading a saved
//! model reproduces it bit for bit (the SVM dual trace is not stored).

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::labelprop::{Kernel, LabelPropModel, LabelPropParams};
use crate::numerics::DenseMatrix;
use crate::svm::{SvmModel, SvmParams};

pub const HEADER: &str = "mrpred-model 1";

#[derive(Debug, Clone, PartialEq)]
pub enum SavedModel {
    Svm(SvmModel),
    LabelProp(LabelPropModel),
}

fn floats(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
}

pub fn svm_to_text(model: &SvmModel) -> String {
    let p = &model.params;
    let mut s = String::new();
    writeln!(s, "{HEADER}").unwrap();
    writeln!(s, "kind svm").unwrap();
    writeln!(s, "c {:?}", p.c).unwrap();
    writeln!(s, "max_iter {}", p.max_iter).unwrap();
    writeln!(s, "tol {:?}", p.tol).unwrap();
    writeln!(s, "seed {}", p.seed).unwrap();
    writeln!(s, "bias {:?}", model.bias).unwrap();
    writeln!(s, "final_objective {:?}", model.final_objective).unwrap();
    writeln!(s, "converged {}", model.converged).unwrap();
    writeln!(s, "weights {} {}", model.weights.len(), floats(&model.weights)).unwrap();
    s
}

pub fn labelprop_to_text(model: &LabelPropModel) -> String {
    let p = &model.params;
    let mut s = String::new();
    writeln!(s, "{HEADER}").unwrap();
    writeln!(s, "kind labelprop").unwrap();
    match p.kernel {
        Kernel::Knn { n_neighbors } => {
            writeln!(s, "kernel knn").unwrap();
            writeln!(s, "n_neighbors {n_neighbors}").unwrap();
        }
        Kernel::Rbf { gamma } => {
            writeln!(s, "kernel rbf").unwrap();
            writeln!(s, "gamma {gamma:?}").unwrap();
        }
    }
    writeln!(s, "max_iter {}", p.max_iter).unwrap();
    writeln!(s, "tol {:?}", p.tol).unwrap();
    writeln!(s, "iterations_run {}", model.iterations_run).unwrap();
    writeln!(s, "converged {}", model.converged).unwrap();
    let pts = &model.training_points;
    writeln!(s, "points {} {}", pts.rows(), pts.cols()).unwrap();
    for i in 0..pts.rows() {
        let dist = model.label_distributions.row(i);
        let mut line = format!("row {} {}", u8::from(model.labeled_mask[i]), floats(dist));
        if pts.cols() > 0 {
            line.push(' ');
            line.push_str(&floats(pts.row(i)));
        }
        writeln!(s, "{line}").unwrap();
    }
    s
}

pub fn to_text(model: &SavedModel) -> String {
    match model {
        SavedModel::Svm(m) => svm_to_text(m),
        SavedModel::LabelProp(m) => labelprop_to_text(m),
    }
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

fn bad(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::ModelFormat(format!("line {line}: {msg}"))
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<&'a str> {
        let (n, l) = self
            .inner
            .next()
            .ok_or_else(|| bad(self.line + 1, "unexpected end of file"))?;
        self.line = n + 1;
        Ok(l)
    }

    /// Returns the tokens after `key` on the next line.
    fn field(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let l = self.next_line()?;
        let mut toks = l.split_whitespace();
        match toks.next() {
            Some(k) if k == key => Ok(toks.collect()),
            _ => Err(bad(self.line, format!("expected `{key}`"))),
        }
    }

    fn value<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let toks = self.field(key)?;
        match toks.as_slice() {
            [v] => v.parse().map_err(|_| bad(self.line, format!("bad value for `{key}`"))),
            _ => Err(bad(self.line, format!("expected one value for `{key}`"))),
        }
    }
}

fn parse_all<T: FromStr>(toks: &[&str], line: usize) -> Result<Vec<T>> {
    toks.iter()
        .map(|t| t.parse().map_err(|_| bad(line, format!("bad number {t:?}"))))
        .collect()
}

pub fn from_text(text: &str) -> Result<SavedModel> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    if lines.next_line()? != HEADER {
        return Err(bad(1, format!("expected header `{HEADER}`")));
    }
    let kind: String = lines.value("kind")?;
    let model = match kind.as_str() {
        "svm" => SavedModel::Svm(read_svm(&mut lines)?),
        "labelprop" => SavedModel::LabelProp(read_labelprop(&mut lines)?),
        other => return Err(bad(lines.line, format!("unknown model kind {other:?}"))),
    };
    if let Some((n, extra)) = lines.inner.find(|(_, l)| !l.trim().is_empty()) {
        return Err(bad(n + 1, format!("trailing content {extra:?}")));
    }
    Ok(model)
}

fn read_svm(lines: &mut Lines<'_>) -> Result<SvmModel> {
    let params = SvmParams {
        c: lines.value("c")?,
        max_iter: lines.value("max_iter")?,
        tol: lines.value("tol")?,
        seed: lines.value("seed")?,
    };
    let bias = lines.value("bias")?;
    let final_objective = lines.value("final_objective")?;
    let converged = lines.value("converged")?;
    let toks = lines.field("weights")?;
    let (count, rest) = toks.split_first().ok_or_else(|| bad(lines.line, "missing weight count"))?;
    let count: usize = count.parse().map_err(|_| bad(lines.line, "bad weight count"))?;
    let weights: Vec<f64> = parse_all(rest, lines.line)?;
    if weights.len() != count {
        return Err(bad(lines.line, format!("expected {count} weights, found {}", weights.len())));
    }
    Ok(SvmModel {
        weights,
        bias,
        params,
        final_objective,
        dual_trace: Vec::new(),
        converged,
    })
}

fn read_labelprop(lines: &mut Lines<'_>) -> Result<LabelPropModel> {
    let kernel_name: String = lines.value("kernel")?;
    let kernel = match kernel_name.as_str() {
        "knn" => Kernel::Knn {
            n_neighbors: lines.value("n_neighbors")?,
        },
        "rbf" => Kernel::Rbf {
            gamma: lines.value("gamma")?,
        },
        other => return Err(bad(lines.line, format!("unknown kernel {other:?}"))),
    };
    let params = LabelPropParams {
        kernel,
        max_iter: lines.value("max_iter")?,
        tol: lines.value("tol")?,
    };
    let iterations_run = lines.value("iterations_run")?;
    let converged = lines.value("converged")?;
    let dims = lines.field("points")?;
    let dims: Vec<usize> = parse_all(&dims, lines.line)?;
    let [rows, cols] = dims[..] else {
        return Err(bad(lines.line, "expected `points <rows> <cols>`"));
    };
    let mut mask = Vec::with_capacity(rows);
    let mut dist = Vec::with_capacity(rows * 2);
    let mut pts = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let toks = lines.field("row")?;
        if toks.len() != 3 + cols {
            return Err(bad(lines.line, format!("expected {} values", 3 + cols)));
        }
        mask.push(match toks[0] {
            "1" => true,
            "0" => false,
            _ => return Err(bad(lines.line, "mask flag must be 0 or 1")),
        });
        dist.extend(parse_all::<f64>(&toks[1..3], lines.line)?);
        pts.extend(parse_all::<f64>(&toks[3..], lines.line)?);
    }
    Ok(LabelPropModel {
        training_points: DenseMatrix::from_flat(rows, cols, pts)?,
        label_distributions: DenseMatrix::from_flat(rows, 2, dist)?,
        labeled_mask: mask,
        params,
        iterations_run,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{labelprop, svm};
    use proptest::prelude::*;

    #[test]
    fn rejects_wrong_header_and_kind() {
        assert!(from_text("mrpred-model 2\nkind svm\n").is_err());
        assert!(from_text("mrpred-model 1\nkind tree\n").is_err());
        assert!(from_text("").is_err());
    }

    #[test]
    fn svm_text_layout() {
        let x = DenseMatrix::from_rows(&[vec![-1.0], vec![1.0]]).unwrap();
        let m = svm::fit(&x, &[0, 1], &SvmParams::default()).unwrap();
        let text = svm_to_text(&m);
        assert!(text.starts_with("mrpred-model 1\nkind svm\nc 1.0\nmax_iter 1000\ntol 0.0001\nseed 0\n"));
        match from_text(&text).unwrap() {
            SavedModel::Svm(back) => {
                assert_eq!(back.weights, m.weights);
                assert_eq!(back.bias.to_bits(), m.bias.to_bits());
                assert_eq!(back.params, m.params);
            }
            other => panic!("wrong kind {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn labelprop_round_trip(
            labeled in prop::collection::vec((prop::collection::vec(-5.0f64..5.0, 2), 0u8..2), 1..5),
            unlabeled in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 1..5),
            rbf in any::<bool>(),
        ) {
            let xl = DenseMatrix::from_rows(&labeled.iter().map(|(r, _)| r.clone()).collect::<Vec<_>>()).unwrap();
            let yl: Vec<u8> = labeled.iter().map(|(_, y)| *y).collect();
            let xu = DenseMatrix::from_rows(&unlabeled).unwrap();
            let params = if rbf {
                LabelPropParams::rbf(0.3, 20, 1e-10)
            } else {
                LabelPropParams::knn(1, 20, 1e-10)
            };
            let model = labelprop::fit(&xl, &yl, &xu, &params).unwrap();
            let saved = SavedModel::LabelProp(model);
            prop_assert_eq!(from_text(&to_text(&saved)).unwrap(), saved);
        }
    }
}
