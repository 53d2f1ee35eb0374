use std::path::{Path, PathBuf};

use ecflow_core::fixtures;
use ecflow_core::urdf::{parse_urdf, KinematicChain};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{read_text, CliError};

/// The robot named by `--urdf`, or the bundled seven-joint arm.
pub fn load_chain(cfg: &RunConfig) -> Result<KinematicChain, CliError> {
    match cfg.optional_path("urdf") {
        None => Ok(fixtures::arm7()),
        Some(path) => {
            let text = read_text(&path)?;
            parse_urdf(&text).map_err(|e| CliError::format(&path, e))
        }
    }
}

/// Maps `f` over `items` on `jobs` threads; results keep input order.
pub fn parallel_map<T, R, F>(jobs: usize, items: &[T], f: F) -> Result<Vec<R>, CliError>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> Result<R, CliError> + Sync + Send,
{
    if jobs <= 1 {
        return items.iter().enumerate().map(|(k, t)| f(k, t)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {jobs} worker threads: {e}")))?;
    pool.install(|| items.par_iter().enumerate().map(|(k, t)| f(k, t)).collect())
}

pub fn jobs(cfg: &RunConfig) -> Result<usize, CliError> {
    let jobs: usize = cfg.parse("jobs")?;
    if jobs == 0 {
        return Err(CliError::Usage("`jobs` must be at least 1".into()));
    }
    Ok(jobs)
}

/// Creates the output directory and writes the resolved snapshot into it.
pub fn prepare_output(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let out = cfg.required_path("out")?;
    crate::error::create_dir(&out)?;
    cfg.write_snapshot(&out)?;
    Ok(out)
}

pub fn scene_dir(root: &Path, scene: usize) -> PathBuf {
    root.join(format!("scene_{scene}"))
}

/// Splits `a=x,b=y` (or bare `x`, labelled by position) into pairs.
pub fn labelled_list(raw: &str) -> Vec<(String, String)> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .enumerate()
        .map(|(k, item)| match item.split_once('=') {
            Some((label, value)) => (label.trim().to_string(), value.trim().to_string()),
            None => (k.to_string(), item.to_string()),
        })
        .collect()
}

/// Reads a CSV with a header row into (header, rows).
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| CliError::format(path, "empty CSV"))?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let row: Vec<String> = line.split(',').map(str::to_string).collect();
        if row.len() != header.len() {
            return Err(CliError::format(path, format!("row {} has {} fields, header has {}", n + 1, row.len(), header.len())));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// Column `name` of a parsed CSV as numbers.
pub fn csv_column(path: &Path, header: &[String], rows: &[Vec<String>], name: &str) -> Result<Vec<f64>, CliError> {
    let idx = header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::format(path, format!("no `{name}` column")))?;
    rows.iter()
        .map(|r| r[idx].parse::<f64>().map_err(|_| CliError::format(path, format!("bad number `{}`", r[idx]))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labelled_lists() {
        assert_eq!(
            labelled_list("full=a, eef-only=b"),
            vec![("full".into(), "a".into()), ("eef-only".into(), "b".into())]
        );
        assert_eq!(labelled_list("x,,y"), vec![("0".into(), "x".into()), ("1".into(), "y".into())]);
        assert!(labelled_list("").is_empty());
    }

    #[test]
    fn parallel_map_keeps_order() {
        let items: Vec<usize> = (0..50).collect();
        let one = parallel_map(1, &items, |k, v| Ok(k * 100 + v)).unwrap();
        let four = parallel_map(4, &items, |k, v| Ok(k * 100 + v)).unwrap();
        assert_eq!(one, four);
    }
}
