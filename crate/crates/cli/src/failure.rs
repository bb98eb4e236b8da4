use std::fmt;
use std::path::Path;

/// Command failure, split by exit code: 2 for bad input, 3 for numerics.
#[derive(Debug)]
pub enum Failure {
    Input(String),
    Numerical(String),
}

impl Failure {
    pub fn input(msg: impl Into<String>) -> Self {
        Failure::Input(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Input(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(m) => write!(f, "error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<bimf::Error> for Failure {
    fn from(e: bimf::Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}

pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    std::fs::write(path, contents)
        .map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))
}

pub fn create_dir(path: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(path)
        .map_err(|e| Failure::input(format!("cannot create {}: {e}", path.display())))
}
