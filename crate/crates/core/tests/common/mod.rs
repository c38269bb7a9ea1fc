#![allow(dead_code)]

use std::path::PathBuf;

/// Location of MovieLens-100k `u.data`, from `FEDGRAPH_ML100K` or the default path.
pub fn ml100k_path() -> PathBuf {
    let path = PathBuf::from(std::env::var("FEDGRAPH_ML100K").unwrap_or_else(|_| "/root/data/ml-100k/u.data".into()));
    assert!(path.exists(), "ML-100k u.data not found at {}; set FEDGRAPH_ML100K", path.display());
    path
}
