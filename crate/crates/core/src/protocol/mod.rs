//! The exchange contract between coordinator and data partners.

pub mod exchange;
pub mod layout;
pub mod params;
pub mod relay;
pub mod transport;

pub use exchange::{
    check_dir, drain, read_manifest, signal_terminal, terminal_state, watch_dir, watch_for_trigger,
    write_exchange, Arrival, Bundle, Outcome, PollPolicy, ARCHIVE_DIR, FAIL_REASON_FILE, JOB_DONE_FILE,
    JOB_FAIL_FILE, MANIFEST_FILE, TRIGGER_FILE,
};
pub use layout::RequestLayout;
pub use params::{ParamSet, PARAMS_FILE};
pub use relay::FileRelay;
pub use transport::{
    memory_links, CoordinatorLink, FsCoordinatorLink, FsWorkerLink, MemoryCoordinatorLink, MemoryWorkerLink,
    WorkerLink,
};

/// Coefficient vector file sent with every broadcast.
pub const BETA_FILE: &str = "beta.csv";
/// Payload file names returned by partners.
pub const SSCP_FILE: &str = "sscp.csv";
pub const SITE_STATS_FILE: &str = "site_stats.csv";
pub const ROBUST_SSCP_FILE: &str = "robust_sscp.csv";
pub const SITE_STATS_FINAL_FILE: &str = "site_stats_final.csv";
pub const BINS_FILE: &str = "resid_sum_by_pct.csv";
pub const BINS_FINE_FILE: &str = "resid_sum_by_pct2.csv";
