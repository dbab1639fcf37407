//! CSV/text output helpers. Every table can carry a leading timestamp
//! comment line; `--no-timestamp` drops it so outputs are byte-stable
//! for fixed seeds.

use std::path::Path;

use crate::AppError;

#[derive(Debug, Clone, Copy)]
pub struct ReportOpts {
    pub timestamp: bool,
}

pub fn write_table(
    path: &Path,
    header: &str,
    rows: &[String],
    opts: ReportOpts,
) -> Result<(), AppError> {
    let mut out = String::new();
    if opts.timestamp {
        out.push_str(&format!("# generated {}\n", chrono::Utc::now().to_rfc3339()));
    }
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(row);
        out.push('\n');
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<(), AppError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Mean and standard error of a sample.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_se_basics() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0]);
        assert!((m - 2.0).abs() < 1e-12);
        assert!((se - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
        let (m1, se1) = mean_se(&[5.0]);
        assert_eq!((m1, se1), (5.0, 0.0));
    }

    #[test]
    fn timestamp_toggle() {
        let dir = std::env::temp_dir().join("msrl_report_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.csv");
        write_table(&path, "a,b", &["1,2".into()], ReportOpts { timestamp: false }).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "a,b\n1,2\n");
        write_table(&path, "a,b", &["1,2".into()], ReportOpts { timestamp: true }).unwrap();
        let text2 = std::fs::read_to_string(&path).unwrap();
        assert!(text2.starts_with("# generated "));
    }
}
