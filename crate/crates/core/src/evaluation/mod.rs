//! Frame metrics, the best-of-K protocol, diversity and uncertainty
//! analyses, and report files.

mod metrics;
pub mod plot;
mod protocol;
mod report;

pub use metrics::{psnr, ssim, PSNR_CAP, SSIM_SIGMA, SSIM_WINDOW};
pub use protocol::{
    best_of_k, best_of_k_eval, best_traces, diversity_report, generate_and_score, intra_set_ssim, minmax_normalize,
    score_futures, sign_test, uncertainty_report, DiversityReport, EvalSetup, MetricReport, ScoredFutures, Selection,
    SeqTrace, SeqUncertainty, SignTest, UncertaintyReport, VideoMetrics,
};
pub use report::{
    emit_reports, render_plots, Reports, BEST_OF_K_FILE, BEST_OF_K_PLOT, INTRA_FILE, INTRA_PLOT, METRICS_FILE,
    SUMMARY_FILE, UNCERTAINTY_FILE, UNCERTAINTY_PLOT, UNCERTAINTY_SUMMARY_FILE,
};

#[cfg(test)]
mod tests;
