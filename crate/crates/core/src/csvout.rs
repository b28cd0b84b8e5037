use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// A CSV writer that reports failures against its path.
pub(crate) struct CsvOut {
    inner: csv::Writer<std::fs::File>,
    path: PathBuf,
}

impl CsvOut {
    pub(crate) fn create<I, T>(path: &Path, header: I) -> Result<Self>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        let inner = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
        let mut out = CsvOut {
            inner,
            path: path.to_path_buf(),
        };
        out.row(header)?;
        Ok(out)
    }

    pub(crate) fn row<I, T>(&mut self, record: I) -> Result<()>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        self.inner
            .write_record(record)
            .map_err(|e| Error::io(&self.path, e.into()))
    }

    pub(crate) fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::io(&self.path, e))
    }
}
