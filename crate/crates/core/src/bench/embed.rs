use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::WindowBatch;
use crate::error::{Error, Result};
use crate::model::Forecaster;
use crate::params::to_f64_vec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    /// Encoder output over the whole prompt, before truncation.
    RawText,
    /// Truncated and scaled text rows.
    ScaledText,
    /// Patch embeddings mapped to the encoder width.
    Time,
}

impl EmbeddingKind {
    pub const ALL: [EmbeddingKind; 3] = [EmbeddingKind::RawText, EmbeddingKind::ScaledText, EmbeddingKind::Time];

    fn as_str(self) -> &'static str {
        match self {
            EmbeddingKind::RawText => "raw_text",
            EmbeddingKind::ScaledText => "scaled_text",
            EmbeddingKind::Time => "time",
        }
    }

    fn color(self) -> &'static str {
        match self {
            EmbeddingKind::RawText => "#d62728",
            EmbeddingKind::ScaledText => "#ff7f0e",
            EmbeddingKind::Time => "#1f77b4",
        }
    }
}

impl std::str::FromStr for EmbeddingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EmbeddingKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Data(format!("unknown embedding kind {s:?}")))
    }
}

/// One pooled embedding of one instance, plus the population std of the
/// instance's full token matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub kind: EmbeddingKind,
    pub instance: usize,
    pub std: f64,
    pub pooled: Vec<f64>,
}

fn mean_and_std(rows: &[f64], d: usize) -> (Vec<f64>, f64) {
    let n = rows.len() / d;
    let mut pooled = vec![0.0; d];
    for row in rows.chunks(d) {
        for (p, v) in pooled.iter_mut().zip(row) {
            *p += v;
        }
    }
    pooled.iter_mut().for_each(|p| *p /= n as f64);
    let mean = rows.iter().sum::<f64>() / rows.len() as f64;
    let var = rows.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rows.len() as f64;
    (pooled, var.sqrt())
}

/// Runs a forward pass and writes raw text, scaled text and time-series
/// embeddings as CSV: `kind,instance,std,v0..v{d-1}`. Raw text rows cover
/// only the real (unpadded) prompt positions.
pub fn export_embeddings(model: &Forecaster, batch: &WindowBatch, path: impl AsRef<Path>) -> Result<Vec<EmbeddingRow>> {
    let out = model.forward(batch)?;
    let d = model.encoder().d_llm();
    let k = out.prompt_lengths.len();
    let text = to_f64_vec(&out.text_embedding)?;
    let t_max = out.text_embedding.dims()[1];
    let scaled = to_f64_vec(&out.scaled_text)?;
    let n_e = out.scaled_text.dims()[1];
    let time = to_f64_vec(&out.time_embedding)?;
    let n_p = out.time_embedding.dims()[1];

    let mut rows = Vec::with_capacity(3 * k);
    for (i, &len) in out.prompt_lengths.iter().enumerate() {
        let raw = &text[i * t_max * d..(i * t_max + len) * d];
        let (pooled, std) = mean_and_std(raw, d);
        rows.push(EmbeddingRow { kind: EmbeddingKind::RawText, instance: i, std, pooled });
    }
    for (i, &n) in out.text_rows.iter().enumerate() {
        let (pooled, std) = mean_and_std(&scaled[((i + 1) * n_e - n) * d..(i + 1) * n_e * d], d);
        rows.push(EmbeddingRow { kind: EmbeddingKind::ScaledText, instance: i, std, pooled });
    }
    for i in 0..k {
        let (pooled, std) = mean_and_std(&time[i * n_p * d..(i + 1) * n_p * d], d);
        rows.push(EmbeddingRow { kind: EmbeddingKind::Time, instance: i, std, pooled });
    }
    write_embeddings(&rows, d, path.as_ref())?;
    Ok(rows)
}

fn write_embeddings(rows: &[EmbeddingRow], d: usize, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let csv_err = |e: csv::Error| Error::Data(e.to_string());
    let mut header = vec!["kind".to_string(), "instance".into(), "std".into()];
    header.extend((0..d).map(|j| format!("v{j}")));
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![r.kind.as_str().to_string(), r.instance.to_string(), format!("{:e}", r.std)];
        rec.extend(r.pooled.iter().map(|v| format!("{v:e}")));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::file(path, e))
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<Vec<EmbeddingRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let parse_err = |m: String| Error::Parse { row: line + 1, message: m };
        let rec = rec.map_err(|e| parse_err(e.to_string()))?;
        if rec.len() < 4 {
            return Err(parse_err("too few columns".into()));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| parse_err(format!("{s:?}: {e}")));
        rows.push(EmbeddingRow {
            kind: rec[0].parse()?,
            instance: rec[1].parse().map_err(|e| parse_err(format!("instance: {e}")))?,
            std: num(&rec[2])?,
            pooled: rec.iter().skip(3).map(num).collect::<Result<_>>()?,
        });
    }
    Ok(rows)
}

/// Projects points onto their first two principal components. Component
/// signs are fixed so the largest-magnitude loading is positive.
pub fn pca_2d(points: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
    let n = points.len();
    let d = points.first().map_or(0, Vec::len);
    if n == 0 || d == 0 || points.iter().any(|p| p.len() != d) {
        return Err(Error::Data("PCA needs a non-empty set of equal-length points".into()));
    }
    let mut x = DMatrix::from_fn(n, d, |i, j| points[i][j]);
    for j in 0..d {
        let mean = x.column(j).mean();
        x.column_mut(j).add_scalar_mut(-mean);
    }
    let svd = x.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut axes = Vec::with_capacity(2);
    for c in 0..2 {
        let mut axis = vec![0.0; d];
        if let Some(&r) = order.get(c) {
            axis = v_t.row(r).iter().copied().collect();
            let pivot = axis.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            if pivot < 0.0 {
                axis.iter_mut().for_each(|v| *v = -*v);
            }
        }
        axes.push(axis);
    }
    Ok((0..n)
        .map(|i| {
            let row = x.row(i);
            let proj = |a: &[f64]| row.iter().zip(a).map(|(x, a)| x * a).sum::<f64>();
            [proj(&axes[0]), proj(&axes[1])]
        })
        .collect())
}

/// Reads an embedding export, projects all kinds onto shared principal
/// axes and writes an SVG scatter plot.
pub fn plot_pca(embeddings: impl AsRef<Path>, out: impl AsRef<Path>) -> Result<()> {
    let rows = read_embeddings(embeddings)?;
    let points: Vec<Vec<f64>> = rows.iter().map(|r| r.pooled.clone()).collect();
    let proj = pca_2d(&points)?;
    let svg = render_scatter(&rows, &proj);
    let out = out.as_ref();
    std::fs::write(out, svg).map_err(|e| Error::file(out, e))
}

fn render_scatter(rows: &[EmbeddingRow], proj: &[[f64; 2]]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const M: f64 = 48.0;
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in proj {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let span = |a: usize| if hi[a] > lo[a] { hi[a] - lo[a] } else { 1.0 };
    let sx = |v: f64| M + (v - lo[0]) / span(0) * (W - 2.0 * M);
    let sy = |v: f64| H - M - (v - lo[1]) / span(1) * (H - 2.0 * M);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r##"<rect x="{M}" y="{M}" width="{}" height="{}" fill="none" stroke="#888"/>"##,
        W - 2.0 * M,
        H - 2.0 * M
    );
    let _ = writeln!(svg, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">PC1</text>"#, W / 2.0, H - 14.0);
    let _ = writeln!(svg, r#"<text x="14" y="{}" font-size="12" transform="rotate(-90 14 {})" text-anchor="middle">PC2</text>"#, H / 2.0, H / 2.0);
    for (r, p) in rows.iter().zip(proj) {
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}" fill-opacity="0.7"/>"#,
            sx(p[0]),
            sy(p[1]),
            r.kind.color()
        );
    }
    for (i, kind) in EmbeddingKind::ALL.iter().enumerate() {
        let y = M + 14.0 + 16.0 * i as f64;
        let _ = writeln!(svg, r#"<circle cx="{}" cy="{}" r="4" fill="{}"/>"#, W - M - 110.0, y - 4.0, kind.color());
        let _ = writeln!(svg, r#"<text x="{}" y="{y}" font-size="12">{}</text>"#, W - M - 100.0, kind.as_str());
    }
    svg.push_str("</svg>\n");
    svg
}
