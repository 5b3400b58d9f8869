use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("integration blew up at site {site} (x = {x}) at t = {t}")]
    Blowup { site: usize, x: f64, t: f64 },

    #[error("front reached the window edge at t = {t} before a shift was possible")]
    WindowOverrun { t: f64 },

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("shooting did not converge: {0}")]
    NonConvergence(String),

    #[error("inversion error: {0}")]
    Inversion(String),

    #[error("profile error: {0}")]
    Profile(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
