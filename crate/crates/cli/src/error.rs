use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Lib(#[from] mvlstm::Error),
    #[error("{0}")]
    Usage(String),
    #[error("cannot parse {path}: {message}")]
    ConfigParse { path: PathBuf, message: String },
    #[error("gradient check failed: max relative error {0:e} exceeds 1e-4")]
    GradCheck(f64),
    #[error("no column could be tested: {0}")]
    GrangerAllFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Lib(e) if e.is_internal() => 2,
            _ => 1,
        }
    }

    /// Short machine-parsable category used in the `error[...]` prefix.
    pub fn kind(&self) -> &'static str {
        use mvlstm::Error as E;
        match self {
            CliError::Lib(e) => match e {
                E::Linalg(_) | E::Shape(_) => "internal",
                E::NonFiniteStep { .. } | E::Divergence { .. } | E::NonFiniteProbe { .. } | E::Unstable { .. } => {
                    "numeric"
                }
                E::Config(_) => "config",
                E::InsufficientData(_)
                | E::ConstantColumn(_)
                | E::MissingColumn(_)
                | E::RankDeficient { .. }
                | E::Parse { .. } => "data",
                E::SchemaMismatch { .. } => "schema",
                E::ModelFormat(_) => "model",
                E::Io { .. } => "io",
            },
            CliError::Usage(_) | CliError::ConfigParse { .. } => "config",
            CliError::GradCheck(_) => "gradcheck",
            CliError::GrangerAllFailed(_) => "data",
        }
    }

    /// One line: `error[kind]: message`.
    pub fn render(&self) -> String {
        let mut msg = self.to_string();
        let mut source = std::error::Error::source(self);
        while let Some(s) = source {
            let text = s.to_string();
            if !msg.contains(&text) {
                msg.push_str(": ");
                msg.push_str(&text);
            }
            source = s.source();
        }
        let flat: Vec<&str> = msg.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        format!("error[{}]: {}", self.kind(), flat.join("; "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_is_single_line() {
        let e = CliError::Usage("first\nsecond".into());
        assert_eq!(e.render(), "error[config]: first; second");
        assert_eq!(e.exit_code(), 1);
        let internal = CliError::Lib(mvlstm::Error::Shape("bad".into()));
        assert_eq!(internal.exit_code(), 2);
        assert!(internal.render().starts_with("error[internal]: "));
    }
}
