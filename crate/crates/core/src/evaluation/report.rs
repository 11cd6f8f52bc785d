//! Report files. Data files are comma-separated with a header row; numbers
//! use round-trip formatting so reruns are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use super::plot::{self, Panel, Series};
use super::protocol::{DiversityReport, MetricReport, UncertaintyReport};
use crate::error::{NuqError, Result};
use crate::kv::fmt_f64;

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const BEST_OF_K_FILE: &str = "best_of_k.csv";
pub const INTRA_FILE: &str = "intra_ssim.csv";
pub const UNCERTAINTY_FILE: &str = "uncertainty.csv";
pub const UNCERTAINTY_SUMMARY_FILE: &str = "uncertainty_summary.csv";
pub const BEST_OF_K_PLOT: &str = "best_of_k.png";
pub const INTRA_PLOT: &str = "intra_ssim.png";
pub const UNCERTAINTY_PLOT: &str = "uncertainty.png";

/// Sequences drawn in the uncertainty plot.
const PLOTTED_SEQUENCES: usize = 4;

#[derive(Debug, Clone, Default)]
pub struct Reports {
    pub metrics: Option<MetricReport>,
    pub diversity: Option<DiversityReport>,
    pub uncertainty: Option<UncertaintyReport>,
}

impl Reports {
    pub fn is_empty(&self) -> bool {
        self.metrics.is_none() && self.diversity.is_none() && self.uncertainty.is_none()
    }
}

fn write(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| NuqError::io(&path, e))?;
    Ok(path)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), fmt_f64)
}

/// Writes data files for every present report, then renders the plots.
/// Returns the written paths; an empty `Reports` writes nothing.
pub fn emit_reports(reports: &Reports, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if reports.is_empty() {
        log::warn!("no reports to emit; nothing written to {}", out_dir.display());
        return Ok(Vec::new());
    }
    fs::create_dir_all(out_dir).map_err(|e| NuqError::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut summary = String::new();
    if let Some(m) = &reports.metrics {
        let mut csv = String::from("video,frame,ssim,psnr\n");
        for v in &m.videos {
            for (j, (s, p)) in v.ssim.iter().zip(&v.psnr).enumerate() {
                csv.push_str(&format!("{},{},{},{}\n", v.video, m.context + j, fmt_f64(*s), fmt_f64(*p)));
            }
        }
        csv.push_str(&format!("all,all,{},{}\n", fmt_f64(m.mean_ssim()), fmt_f64(m.mean_psnr())));
        written.push(write(out_dir, METRICS_FILE, &csv)?);
        summary.push_str(&format!(
            "k={}\nselection={}\nvideos={}\nmean_ssim={}\nmean_psnr={}\n",
            m.k,
            m.selection,
            m.videos.len(),
            fmt_f64(m.mean_ssim()),
            fmt_f64(m.mean_psnr())
        ));
    }
    if let Some(d) = &reports.diversity {
        let mut csv = String::from("k,best_score\n");
        for (k, s) in d.k_grid.iter().zip(&d.best_of_k) {
            csv.push_str(&format!("{k},{}\n", fmt_f64(*s)));
        }
        written.push(write(out_dir, BEST_OF_K_FILE, &csv)?);
        let mut csv = String::from("step,intra_ssim\n");
        for (j, s) in d.intra_ssim.iter().enumerate() {
            csv.push_str(&format!("{j},{}\n", fmt_f64(*s)));
        }
        written.push(write(out_dir, INTRA_FILE, &csv)?);
    }
    if let Some(u) = &reports.uncertainty {
        let mut csv = String::from("video,step,frame,s,u,near_bounce\n");
        let mut sum = String::from("video,near_mean,far_mean\n");
        for q in &u.sequences {
            for j in 0..q.s.len() {
                csv.push_str(&format!(
                    "{},{j},{},{},{},{}\n",
                    q.video,
                    u.context + j,
                    fmt_f64(q.s[j]),
                    fmt_f64(q.u[j]),
                    u8::from(q.near_bounce[j])
                ));
            }
            sum.push_str(&format!("{},{},{}\n", q.video, opt(q.near_mean), opt(q.far_mean)));
        }
        sum.push_str(&format!("pooled,{},{}\n", opt(u.pooled_near), opt(u.pooled_far)));
        written.push(write(out_dir, UNCERTAINTY_FILE, &csv)?);
        written.push(write(out_dir, UNCERTAINTY_SUMMARY_FILE, &sum)?);
        summary.push_str(&format!("pooled_near={}\npooled_far={}\n", opt(u.pooled_near), opt(u.pooled_far)));
        if let Some(t) = &u.sign_test {
            summary.push_str(&format!(
                "sign_positive={}\nsign_negative={}\nsign_ties={}\nsign_p={}\n",
                t.positive,
                t.negative,
                t.ties,
                fmt_f64(t.p_value)
            ));
        }
    }
    if !summary.is_empty() {
        written.push(write(out_dir, SUMMARY_FILE, &summary)?);
    }
    written.extend(render_plots(out_dir, out_dir)?);
    Ok(written)
}

fn read_csv(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).map_err(|e| NuqError::io(path, e))?;
    Ok(text
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect())
}

fn num(path: &Path, row: usize, s: &str) -> Result<f64> {
    s.parse().map_err(|_| NuqError::format(path, format!("row {}: `{s}` is not a number", row + 2)))
}

fn xy(path: &Path, rows: &[Vec<String>]) -> Result<Vec<(f64, f64)>> {
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            if r.len() < 2 {
                return Err(NuqError::format(path, format!("row {}: expected 2 columns", i + 2)));
            }
            Ok((num(path, i, &r[0])?, num(path, i, &r[1])?))
        })
        .collect()
}

fn save_png(img: &image::RgbImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| NuqError::Image { path: path.to_path_buf(), source })
}

/// Renders every plot whose data file exists in `in_dir` into `out_dir`.
pub fn render_plots(in_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| NuqError::io(out_dir, e))?;
    let mut written = Vec::new();
    for (data, png) in [(BEST_OF_K_FILE, BEST_OF_K_PLOT), (INTRA_FILE, INTRA_PLOT)] {
        let path = in_dir.join(data);
        if !path.exists() {
            continue;
        }
        let points = xy(&path, &read_csv(&path)?)?;
        let panel = Panel { series: vec![Series { points, color: plot::BLUE }], ..Panel::default() };
        let out = out_dir.join(png);
        save_png(&plot::render(&[panel], 480, 300), &out)?;
        written.push(out);
    }
    let path = in_dir.join(UNCERTAINTY_FILE);
    if path.exists() {
        let rows = read_csv(&path)?;
        let mut panels: Vec<(String, Panel)> = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != 6 {
                return Err(NuqError::format(&path, format!("row {}: expected 6 columns", i + 2)));
            }
            if panels.last().map(|p| &p.0) != Some(&r[0]) {
                if panels.len() == PLOTTED_SEQUENCES {
                    break;
                }
                panels.push((
                    r[0].clone(),
                    Panel {
                        series: vec![Series { points: Vec::new(), color: plot::ORANGE }],
                        markers: Vec::new(),
                        y_range: Some((0.0, 1.0)),
                    },
                ));
            }
            let panel = &mut panels.last_mut().unwrap().1;
            let frame = num(&path, i, &r[2])?;
            panel.series[0].points.push((frame, num(&path, i, &r[4])?));
            if r[5] == "1" {
                panel.markers.push(frame);
            }
        }
        let panels: Vec<Panel> = panels.into_iter().map(|p| p.1).collect();
        let out = out_dir.join(UNCERTAINTY_PLOT);
        save_png(&plot::render(&panels, 480, 160), &out)?;
        written.push(out);
    }
    Ok(written)
}
