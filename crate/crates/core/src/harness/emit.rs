use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::dimred::Embedding2D;
use crate::metrics::EvalReport;
use crate::preprocess::CorrelationMatrix;
use crate::{Error, Result};

const SVG_SIZE: f64 = 600.0;
const SVG_MARGIN: f64 = 0.05;
const CLASS_COLORS: [&str; 2] = ["#1f77b4", "#d62728"];

/// Self-contained scatter plot, one `<circle>` per point, classed and coloured by label.
pub fn scatter_svg(emb: &Embedding2D) -> Result<String> {
    let n = emb.n_points();
    if n == 0 {
        return Err(Error::invalid("cannot plot an empty embedding"));
    }
    if !emb.points.is_finite() {
        return Err(Error::NonFinite("embedding coordinates".into()));
    }
    let bounds = |c: usize| {
        let v = emb.points.column(c);
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        (lo - SVG_MARGIN * span, span * (1.0 + 2.0 * SVG_MARGIN))
    };
    let (x0, xw) = bounds(0);
    let (y0, yw) = bounds(1);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_SIZE}" height="{SVG_SIZE}" viewBox="0 0 {SVG_SIZE} {SVG_SIZE}">"#
    );
    let _ = writeln!(s, "<title>{} embedding ({} points)</title>", emb.method.name(), n);
    let _ = writeln!(
        s,
        "<style>circle {{ fill-opacity: 0.6; }} .class-0 {{ fill: {}; }} .class-1 {{ fill: {}; }}</style>",
        CLASS_COLORS[0], CLASS_COLORS[1]
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for i in 0..n {
        let cx = (emb.points[(i, 0)] - x0) / xw * SVG_SIZE;
        // SVG y grows downward
        let cy = SVG_SIZE - (emb.points[(i, 1)] - y0) / yw * SVG_SIZE;
        let _ = writeln!(
            s,
            r#"<circle class="class-{}" cx="{cx:.2}" cy="{cy:.2}" r="3"/>"#,
            emb.labels[i]
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Writes `path` (SVG) and a companion `x,y,label` CSV next to it.
pub fn emit_scatter_svg(emb: &Embedding2D, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let svg = scatter_svg(emb)?;
    write_file(path, svg)?;
    write_file(&path.with_extension("csv"), emb.to_csv())
}

pub fn emit_correlation_csv(cm: &CorrelationMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), cm.to_csv())
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub const METRICS_HEADER: &str = "model,threshold,precision_macro,recall_macro,f1_macro,\
precision_weighted,recall_weighted,f1_weighted,precision_legit,recall_legit,f1_legit,\
precision_fraud,recall_fraud,f1_fraud,roc_auc,tp,fp,tn,fn,n_pos,n_neg,standardized";

/// One metrics CSV row. Reals are written in shortest round-trip form.
pub fn metrics_row(model: &str, r: &EvalReport, standardized: bool) -> String {
    let c = &r.confusion;
    format!(
        "{model},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.threshold,
        r.macro_avg.precision,
        r.macro_avg.recall,
        r.macro_avg.f1,
        r.weighted_avg.precision,
        r.weighted_avg.recall,
        r.weighted_avg.f1,
        r.legit.precision,
        r.legit.recall,
        r.legit.f1,
        r.fraud.precision,
        r.fraud.recall,
        r.fraud.f1,
        r.roc_auc,
        c.tp,
        c.fp,
        c.tn,
        c.fn_,
        r.n_pos(),
        r.n_neg(),
        standardized
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dimred::Method;
    use crate::numerics::Matrix;
    use std::collections::BTreeMap;

    fn emb(points: &[[f64; 2]], labels: Vec<u8>) -> Embedding2D {
        Embedding2D {
            points: if points.is_empty() {
                Matrix::zeros(0, 2)
            } else {
                Matrix::from_rows(points).unwrap()
            },
            labels,
            method: Method::Pca,
            diagnostics: BTreeMap::new(),
            components: None,
        }
    }

    #[test]
    fn two_points_two_circles() {
        let svg = scatter_svg(&emb(&[[0.0, 0.0], [1.0, 1.0]], vec![0, 1])).unwrap();
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(svg.contains(r#"class="class-0""#) && svg.contains(r#"class="class-1""#));
    }

    #[test]
    fn empty_embedding_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.svg");
        assert!(emit_scatter_svg(&emb(&[], vec![]), &path).is_err());
        assert!(!path.exists());
        assert!(!dir.path().join("e.csv").exists());
    }

    #[test]
    fn points_stay_inside_the_margin() {
        let svg = scatter_svg(&emb(&[[-5.0, 2.0], [5.0, 4.0], [0.0, 3.0]], vec![0, 1, 0])).unwrap();
        for cap in svg.split("cx=\"").skip(1) {
            let x: f64 = cap.split('"').next().unwrap().parse().unwrap();
            assert!((SVG_SIZE * 0.04..=SVG_SIZE * 0.96).contains(&x), "{x}");
        }
    }
}
