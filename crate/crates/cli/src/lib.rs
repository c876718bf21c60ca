//! Configuration, file formats, caching and pipelines behind the `fput`
//! command-line tool.

pub mod cache;
pub mod config;
pub mod fieldfile;
pub mod manifest;
pub mod pipeline;
pub mod statsfile;
pub mod svg;

use std::path::Path;

use fput::{Error, Result};

/// Read a file, naming it in the error.
pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Read a UTF-8 file, naming it in the error.
pub fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read_bytes(path)?).map_err(|_| Error::Format(format!("{} is not UTF-8", path.display())))
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidParams(_) | Error::Format(_) => 2,
        Error::Numerical(_) | Error::Domain(_) | Error::GridMismatch(_) => 3,
        Error::Io(_) => 4,
    }
}

/// Single-line error report: `fput-error kind=<kind> code=<code> message=<text>`.
pub fn error_line(e: &Error) -> String {
    let msg = e.to_string().replace(['\n', '\r'], " ");
    format!("fput-error kind={} code={} message={msg}", e.kind(), exit_code(e))
}
